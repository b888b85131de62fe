#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xfer/probe_set.hpp"

namespace xfer::synthetic {

// Portable draws: identical on every standard library for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double normal();
  std::uint64_t below(std::uint64_t n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  std::mt19937_64 engine_;
};

struct BlobSpec {
  int classes = 3;
  int samples_per_class = 60;
  int dim = 8;
  double separation = 2.0;  // distance of each class mean from the origin, in noise sd units
  int source_classes = 10;  // |Z|; 0 writes no source outputs
  double head_strength = 2.0;
  std::uint64_t seed = 0;
};

// Gaussian class blobs with unit isotropic noise. Class c's mean lies along a
// random unit direction. Source logits put head_strength on z = c mod |Z|
// plus unit noise.
ProbeSet make_blobs(const BlobSpec& spec);

struct TaskSpec {
  std::string task = "synthetic";
  std::vector<double> separations = {3.0, 2.0, 1.0};  // one checkpoint each
  int classes = 3;
  int samples_per_class = 60;
  int dim = 8;
  int source_classes = 10;
  double performance_noise = 0.005;
  std::uint64_t seed = 0;
};

// Writes one probe directory per checkpoint and split ("train", "test_ood")
// plus manifest.json. Recorded performances rise with separation, plus
// Gaussian noise of sd performance_noise. Returns the manifest path.
std::filesystem::path write_task(const TaskSpec& spec, const std::filesystem::path& directory);

}  // namespace xfer::synthetic
