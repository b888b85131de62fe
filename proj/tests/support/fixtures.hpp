#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "xfer/probe_set.hpp"
#include "xfer/synthetic.hpp"

namespace xfer::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("xfer_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Labels covering every class in [0, classes), shuffled.
inline std::vector<int> random_labels(synthetic::Rng& rng, int n, int classes) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i < classes ? i : static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  for (int i = n - 1; i > 0; --i) std::swap(labels[static_cast<std::size_t>(i)], labels[rng.below(static_cast<std::uint64_t>(i + 1))]);
  return labels;
}

// Random probe set with class-dependent feature shifts and logits.
inline ProbeSet random_probe(std::uint64_t seed, int n, int d, int classes, int source_classes) {
  synthetic::Rng rng(seed);
  auto labels = random_labels(rng, n, classes);
  Eigen::MatrixXd shifts = rng.normal_matrix(classes, d);
  Eigen::MatrixXd features = rng.normal_matrix(n, d);
  for (int i = 0; i < n; ++i) features.row(i) += shifts.row(labels[static_cast<std::size_t>(i)]);
  std::optional<SourceOutputs> outputs;
  if (source_classes > 0) {
    Eigen::MatrixXd logits = 1.5 * rng.normal_matrix(n, source_classes);
    for (int i = 0; i < n; ++i) logits(i, labels[static_cast<std::size_t>(i)] % source_classes) += 1.0;
    outputs = SourceOutputs{logits, OutputsKind::kLogits};
  }
  return ProbeSet::make(std::move(features), std::move(labels), classes, outputs);
}

}  // namespace xfer::testing
