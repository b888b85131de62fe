#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace xfer {

enum class OutputsKind { kLogits, kProbabilities };

std::string_view to_string(OutputsKind kind);
OutputsKind parse_outputs_kind(std::string_view text);

struct SourceOutputs {
  Eigen::MatrixXd values;  // n x |Z|
  OutputsKind kind = OutputsKind::kLogits;
};

// One checkpoint's view of one dataset split. Immutable once built; every
// invariant is checked in make().
class ProbeSet {
 public:
  // Throws DataError when:
  //  - features rows, labels length and output rows disagree
  //  - a label falls outside [0, class_count) or a class has no sample
  //  - a probability row is negative or does not sum to 1 within 1e-5
  //  - any value is NaN/Inf
  static ProbeSet make(Eigen::MatrixXd features, std::vector<int> labels, int class_count,
                       std::optional<SourceOutputs> outputs = std::nullopt);

  // class_count inferred as max(label) + 1.
  static ProbeSet make(Eigen::MatrixXd features, std::vector<int> labels,
                       std::optional<SourceOutputs> outputs = std::nullopt);

  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  int class_count() const { return class_count_; }
  const std::optional<SourceOutputs>& source_outputs() const { return outputs_; }
  Eigen::Index sample_count() const { return features_.rows(); }
  Eigen::Index feature_dim() const { return features_.cols(); }

  // Source outputs as probabilities (softmaxed when stored as logits).
  // Throws DataError if there are no outputs.
  Eigen::MatrixXd source_probabilities() const;

  ProbeSet with_features(Eigen::MatrixXd features) const;

 private:
  ProbeSet() = default;

  Eigen::MatrixXd features_;
  std::vector<int> labels_;
  int class_count_ = 0;
  std::optional<SourceOutputs> outputs_;
};

// mapping[c] is the new class of old class c. Must cover [0, C) and its image
// must be exactly [0, C') for some C' >= 1.
ProbeSet remap_labels(const ProbeSet& probe, std::span<const int> mapping);

struct CheckpointRecord {
  std::string id;
  std::string architecture;
  std::map<std::string, std::filesystem::path> probe_paths;  // split -> directory
  std::map<std::string, double> performance;                 // split -> balanced accuracy
};

struct TaskManifest {
  std::string task;
  OutputsKind outputs_kind = OutputsKind::kLogits;
  std::vector<CheckpointRecord> checkpoints;
  std::filesystem::path base_dir;  // relative probe paths resolve against this

  const CheckpointRecord& checkpoint(std::string_view id) const;
};

// Parses manifest JSON and checks record-level invariants (unique nonempty ids,
// performances in [0, 1], at least one checkpoint). Paths are not touched.
TaskManifest parse_manifest(std::string_view json_text, std::filesystem::path base_dir = {});
TaskManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const TaskManifest& manifest);

// File names inside a probe directory.
inline constexpr const char* kFeaturesFile = "features.npy";
inline constexpr const char* kLabelsFile = "labels.npy";
inline constexpr const char* kLogitsFile = "logits.npy";
inline constexpr const char* kProbabilitiesFile = "probabilities.npy";

std::filesystem::path probe_directory(const TaskManifest& manifest, const CheckpointRecord& record,
                                      const std::string& split);

// Reads features, labels and (if the file exists) source outputs for `split`.
// Logits are kept as logits. Errors name the checkpoint and split.
ProbeSet load_probe_set(const TaskManifest& manifest, const CheckpointRecord& record, const std::string& split);

// Writes a probe set in the directory layout load_probe_set expects.
void save_probe_set(const ProbeSet& probe, const std::filesystem::path& directory);

}  // namespace xfer
