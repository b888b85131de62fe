#include "xfer/probe_set.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xfer/array_io.hpp"
#include "xfer/error.hpp"
#include "xfer/file_util.hpp"
#include "xfer/numerics.hpp"

namespace xfer {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kProbabilitySumTolerance = 1e-5;

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) {
        throw DataError(std::string(what) + " has a non-finite value at row " + std::to_string(i) + ", column " +
                        std::to_string(j));
      }
    }
  }
}

std::vector<int> labels_from_array(const Array& array) {
  if (array.shape().size() == 2 && array.cols() != 1) {
    throw DataError("labels must be a vector or an (n, 1) column, got " + std::to_string(array.cols()) + " columns");
  }
  const auto raw = array.to_integers();
  std::vector<int> labels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] < 0 || raw[i] > std::numeric_limits<int>::max()) {
      throw DataError("label " + std::to_string(raw[i]) + " at index " + std::to_string(i) + " is out of range");
    }
    labels[i] = static_cast<int>(raw[i]);
  }
  return labels;
}

}  // namespace

std::string_view to_string(OutputsKind kind) {
  return kind == OutputsKind::kLogits ? "logits" : "probabilities";
}

OutputsKind parse_outputs_kind(std::string_view text) {
  if (text == "logits") return OutputsKind::kLogits;
  if (text == "probabilities") return OutputsKind::kProbabilities;
  throw DataError("outputs_kind must be \"logits\" or \"probabilities\", got \"" + std::string(text) + "\"");
}

ProbeSet ProbeSet::make(Eigen::MatrixXd features, std::vector<int> labels, int class_count,
                        std::optional<SourceOutputs> outputs) {
  const auto n = features.rows();
  if (n == 0 || features.cols() == 0) throw DataError("features must be a nonempty matrix");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw DataError("shape mismatch: features have " + std::to_string(n) + " rows but labels have " +
                    std::to_string(labels.size()) + " entries");
  }
  if (class_count < 1) throw DataError("class_count must be positive");
  require_finite(features, "features");

  std::vector<int> seen(static_cast<std::size_t>(class_count), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw DataError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) + " is outside [0, " +
                      std::to_string(class_count) + ")");
    }
    seen[static_cast<std::size_t>(labels[i])] = 1;
  }
  for (int c = 0; c < class_count; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) throw DataError("class " + std::to_string(c) + " has no samples");
  }

  if (outputs) {
    const auto& v = outputs->values;
    if (v.rows() != n) {
      throw DataError("shape mismatch: features have " + std::to_string(n) + " rows but source outputs have " +
                      std::to_string(v.rows()));
    }
    if (v.cols() == 0) throw DataError("source outputs have no columns");
    require_finite(v, "source outputs");
    if (outputs->kind == OutputsKind::kProbabilities) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if ((v.row(i).array() < 0.0).any()) {
          throw DataError("probability row " + std::to_string(i) + " has a negative entry");
        }
        const double sum = v.row(i).sum();
        if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
          throw DataError("probability row " + std::to_string(i) + " sums to " + format_double(sum));
        }
      }
    }
  }

  ProbeSet ps;
  ps.features_ = std::move(features);
  ps.labels_ = std::move(labels);
  ps.class_count_ = class_count;
  ps.outputs_ = std::move(outputs);
  return ps;
}

ProbeSet ProbeSet::make(Eigen::MatrixXd features, std::vector<int> labels, std::optional<SourceOutputs> outputs) {
  if (labels.empty()) throw DataError("labels are empty");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  return make(std::move(features), std::move(labels), std::max(max_label + 1, 1), std::move(outputs));
}

Eigen::MatrixXd ProbeSet::source_probabilities() const {
  if (!outputs_) throw DataError("probe set has no source outputs");
  if (outputs_->kind == OutputsKind::kProbabilities) return outputs_->values;
  return softmax_rows(outputs_->values);
}

ProbeSet ProbeSet::with_features(Eigen::MatrixXd features) const {
  return make(std::move(features), labels_, class_count_, outputs_);
}

ProbeSet remap_labels(const ProbeSet& probe, std::span<const int> mapping) {
  const int c = probe.class_count();
  if (static_cast<int>(mapping.size()) != c) {
    throw DataError("label mapping covers " + std::to_string(mapping.size()) + " classes, expected " +
                    std::to_string(c));
  }
  std::set<int> image(mapping.begin(), mapping.end());
  if (*image.begin() != 0 || *image.rbegin() != static_cast<int>(image.size()) - 1) {
    throw DataError("label mapping image must be contiguous from 0");
  }
  std::vector<int> labels(probe.labels().size());
  std::transform(probe.labels().begin(), probe.labels().end(), labels.begin(),
                 [&](int y) { return mapping[static_cast<std::size_t>(y)]; });
  return ProbeSet::make(probe.features(), std::move(labels), static_cast<int>(image.size()),
                        probe.source_outputs());
}

const CheckpointRecord& TaskManifest::checkpoint(std::string_view id) const {
  for (const auto& record : checkpoints) {
    if (record.id == id) return record;
  }
  throw DataError("checkpoint \"" + std::string(id) + "\" is not in the manifest");
}

TaskManifest parse_manifest(std::string_view json_text, fs::path base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    TaskManifest manifest;
    manifest.base_dir = std::move(base_dir);
    manifest.task = doc.at("task").get<std::string>();
    manifest.outputs_kind = parse_outputs_kind(doc.at("outputs_kind").get<std::string>());
    const auto& records = doc.at("checkpoints");
    if (!records.is_array() || records.empty()) throw DataError("manifest lists no checkpoints");

    std::set<std::string> ids;
    for (const auto& item : records) {
      CheckpointRecord record;
      record.id = item.at("id").get<std::string>();
      if (record.id.empty()) throw DataError("checkpoint id is empty");
      if (!ids.insert(record.id).second) throw DataError("duplicate checkpoint id \"" + record.id + "\"");
      record.architecture = item.value("architecture", std::string{});
      if (item.contains("outputs_kind") &&
          parse_outputs_kind(item["outputs_kind"].get<std::string>()) != manifest.outputs_kind) {
        throw DataError("checkpoint \"" + record.id + "\" declares a different outputs_kind than the manifest");
      }
      for (const auto& [split, path] : item.at("probe_paths").items()) {
        record.probe_paths.emplace(split, path.get<std::string>());
      }
      if (item.contains("performance")) {
        for (const auto& [split, value] : item["performance"].items()) {
          const double p = value.get<double>();
          if (!(p >= 0.0 && p <= 1.0)) {
            throw DataError("checkpoint \"" + record.id + "\" performance for split \"" + split +
                            "\" is outside [0, 1]");
          }
          record.performance.emplace(split, p);
        }
      }
      manifest.checkpoints.push_back(std::move(record));
    }
    return manifest;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

TaskManifest load_manifest(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                          path.parent_path());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string manifest_to_json(const TaskManifest& manifest) {
  json doc;
  doc["task"] = manifest.task;
  doc["outputs_kind"] = std::string(to_string(manifest.outputs_kind));
  doc["checkpoints"] = json::array();
  for (const auto& record : manifest.checkpoints) {
    json item;
    item["id"] = record.id;
    item["architecture"] = record.architecture;
    item["probe_paths"] = json::object();
    for (const auto& [split, path] : record.probe_paths) item["probe_paths"][split] = path.generic_string();
    if (!record.performance.empty()) {
      item["performance"] = json::object();
      for (const auto& [split, p] : record.performance) item["performance"][split] = p;
    }
    doc["checkpoints"].push_back(std::move(item));
  }
  return doc.dump(2) + "\n";
}

fs::path probe_directory(const TaskManifest& manifest, const CheckpointRecord& record, const std::string& split) {
  const auto it = record.probe_paths.find(split);
  if (it == record.probe_paths.end()) {
    throw DataError("checkpoint \"" + record.id + "\" has no probe path for split \"" + split + "\"");
  }
  return it->second.is_absolute() ? it->second : manifest.base_dir / it->second;
}

ProbeSet load_probe_set(const TaskManifest& manifest, const CheckpointRecord& record, const std::string& split) {
  const fs::path dir = probe_directory(manifest, record, split);
  try {
    auto features = read_array(dir / kFeaturesFile).to_matrix();
    auto labels = labels_from_array(read_array(dir / kLabelsFile));
    const fs::path outputs_path =
        dir / (manifest.outputs_kind == OutputsKind::kLogits ? kLogitsFile : kProbabilitiesFile);
    std::optional<SourceOutputs> outputs;
    if (fs::exists(outputs_path)) {
      outputs = SourceOutputs{read_array(outputs_path).to_matrix(), manifest.outputs_kind};
    }
    return ProbeSet::make(std::move(features), std::move(labels), std::move(outputs));
  } catch (const DataError& e) {
    throw DataError("checkpoint \"" + record.id + "\", split \"" + split + "\": " + e.what());
  }
}

void save_probe_set(const ProbeSet& probe, const fs::path& directory) {
  fs::create_directories(directory);
  write_array(Array::from_matrix(probe.features()), directory / kFeaturesFile);
  write_array(Array::from_labels(probe.labels()), directory / kLabelsFile);
  if (const auto& outputs = probe.source_outputs()) {
    const char* name = outputs->kind == OutputsKind::kLogits ? kLogitsFile : kProbabilitiesFile;
    write_array(Array::from_matrix(outputs->values), directory / name);
  }
}

}  // namespace xfer
