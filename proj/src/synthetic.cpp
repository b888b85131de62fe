#include "xfer/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "xfer/file_util.hpp"

namespace xfer::synthetic {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
  }
  return m;
}

ProbeSet make_blobs(const BlobSpec& spec) {
  Rng rng(spec.seed);
  const int n = spec.classes * spec.samples_per_class;
  Eigen::MatrixXd directions = rng.normal_matrix(spec.classes, spec.dim);
  for (int c = 0; c < spec.classes; ++c) directions.row(c).normalize();

  Eigen::MatrixXd features = rng.normal_matrix(n, spec.dim);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i % spec.classes;
    labels[static_cast<std::size_t>(i)] = c;
    features.row(i) += spec.separation * directions.row(c);
  }

  std::optional<SourceOutputs> outputs;
  if (spec.source_classes > 0) {
    Eigen::MatrixXd logits = rng.normal_matrix(n, spec.source_classes);
    for (int i = 0; i < n; ++i) logits(i, labels[static_cast<std::size_t>(i)] % spec.source_classes) += spec.head_strength;
    outputs = SourceOutputs{std::move(logits), OutputsKind::kLogits};
  }
  return ProbeSet::make(std::move(features), std::move(labels), spec.classes, std::move(outputs));
}

std::filesystem::path write_task(const TaskSpec& spec, const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);

  const auto [lo_it, hi_it] = std::minmax_element(spec.separations.begin(), spec.separations.end());
  const double lo = *lo_it;
  const double span = std::max(*hi_it - lo, 1e-12);

  TaskManifest manifest;
  manifest.task = spec.task;
  manifest.outputs_kind = OutputsKind::kLogits;
  for (std::size_t k = 0; k < spec.separations.size(); ++k) {
    const double sep = spec.separations[k];
    CheckpointRecord record;
    char id[32];
    std::snprintf(id, sizeof(id), "ckpt_%02zu", k);
    record.id = id;
    record.architecture = "synthetic-" + std::to_string(k);

    const char* splits[] = {"train", "test_ood"};
    for (int s = 0; s < 2; ++s) {
      BlobSpec blob{spec.classes,        spec.samples_per_class,  spec.dim, sep, spec.source_classes,
                    1.0 + sep,           spec.seed * 1000 + k * 2 + static_cast<std::uint64_t>(s)};
      if (s == 1) blob.separation = 0.7 * sep;  // shifted, harder split
      const fs::path rel = fs::path(record.id) / splits[s];
      save_probe_set(make_blobs(blob), directory / rel);
      record.probe_paths.emplace(splits[s], rel);
    }
    const double base = 0.55 + 0.4 * (sep - lo) / span;
    record.performance["test_id"] = std::clamp(base + spec.performance_noise * rng.normal(), 0.0, 1.0);
    record.performance["test_ood"] = std::clamp(base - 0.1 + spec.performance_noise * rng.normal(), 0.0, 1.0);
    manifest.checkpoints.push_back(std::move(record));
  }
  const fs::path path = directory / "manifest.json";
  write_file_atomic(path, manifest_to_json(manifest));
  return path;
}

}  // namespace xfer::synthetic
