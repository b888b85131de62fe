#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xfer/probe_set.hpp"

namespace xfer {

enum class ScorerId { kHScore, kNce, kLeep, kNLeep, kLogMe, kRegHScore, kGbc };

enum class ScorerCategory { kFeatureBased, kLabelBased };

// Canonical column order.
inline constexpr std::array<ScorerId, 7> kAllScorers = {ScorerId::kHScore, ScorerId::kNce,      ScorerId::kLeep,
                                                        ScorerId::kNLeep,  ScorerId::kLogMe,    ScorerId::kRegHScore,
                                                        ScorerId::kGbc};

std::string_view to_string(ScorerId id);
std::optional<ScorerId> parse_scorer_id(std::string_view text);
ScorerCategory category(ScorerId id);

// Parses "all" or a comma-separated list of scorer ids. Throws std::invalid_argument.
std::vector<ScorerId> parse_scorer_list(std::string_view text);

struct ScorerOptions {
  double nleep_variance_fraction = 0.8;
  int nleep_components = 0;  // 0 means one component per target class
  std::uint64_t seed = 0;
  int gbc_pca_dims = 64;
  // z-score features before every feature-based scorer
  bool standardize = false;
  // Replaces the estimated Ledoit-Wolf intensity in reg_h_score.
  std::optional<double> reg_h_shrinkage;
};

// tr(pinv(cov(F)) * cov(G)), G_i = class mean of sample i's class.
double h_score(const ProbeSet& probe);

// H-score with a Ledoit-Wolf estimate of the feature covariance, computed on
// standardized features (zero-variance dimensions dropped).
double reg_h_score(const ProbeSet& probe, std::optional<double> fixed_shrinkage = std::nullopt);

// Negative conditional entropy of target labels given the source-head argmax.
double nce(const ProbeSet& probe);

// Log expected empirical prediction.
double leep(const ProbeSet& probe);

// LEEP over a given n x |Z| matrix of soft source assignments.
double leep_from_probabilities(const Eigen::MatrixXd& theta, std::span<const int> labels, int class_count);

double nleep(const ProbeSet& probe, double variance_fraction = 0.8, int components = 0, std::uint64_t seed = 0);

double logme(const ProbeSet& probe);

// Maximized log evidence (not divided by n) of one target vector under a
// Bayesian linear model on `features`, plus the maximizing precisions.
struct EvidenceFit {
  double log_evidence = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
  int iterations = 0;
};
EvidenceFit logme_evidence(const Eigen::MatrixXd& features, const Eigen::VectorXd& target);

// Per class, the one-vs-rest maximized log evidence (not divided by n).
std::vector<EvidenceFit> logme_class_evidence(const ProbeSet& probe);

double gbc(const ProbeSet& probe, int pca_dims = 64);

// Dispatch through the options above. Throws DataError when the scorer's
// inputs are missing.
double compute_score(ScorerId id, const ProbeSet& probe, const ScorerOptions& options = {});

enum class SplitKind { kInDistribution, kOutOfDistribution };
std::string_view to_string(SplitKind kind);
// Split names containing "ood" are out-of-distribution.
SplitKind split_kind_of(std::string_view split);

class ScoreTable {
 public:
  ScoreTable(std::string task, std::string split) : task_(std::move(task)), split_(std::move(split)) {}

  const std::string& task() const { return task_; }
  const std::string& split() const { return split_; }
  SplitKind kind() const { return split_kind_of(split_); }

  // Throws DataError on non-finite values.
  void set(const std::string& checkpoint, ScorerId scorer, double value);
  std::optional<double> get(std::string_view checkpoint, ScorerId scorer) const;

  // Insertion order.
  const std::vector<std::string>& checkpoints() const { return checkpoints_; }
  // Scorers present in any row, in publication order.
  std::vector<ScorerId> scorers() const;
  std::size_t entry_count() const;

  bool operator==(const ScoreTable& other) const = default;

 private:
  std::string task_;
  std::string split_;
  std::vector<std::string> checkpoints_;
  std::map<std::string, std::map<ScorerId, double>, std::less<>> scores_;
};

// {"task": ..., "split": ..., "scores": {checkpoint: {scorer: value}}} with
// values printed to 17 significant digits.
std::string score_table_to_json(const ScoreTable& table);
ScoreTable score_table_from_json(std::string_view text);
ScoreTable load_score_table(const std::filesystem::path& path);

struct ScoreAllOptions {
  ScorerOptions scorer;
  unsigned threads = 1;
};

// Scores every checkpoint of the manifest on `split`. Cells are independent
// and may run concurrently; the result does not depend on the schedule.
// The first failing cell aborts with a DataError naming checkpoint, scorer
// and cause.
ScoreTable score_all(const TaskManifest& manifest, const std::string& split, std::span<const ScorerId> scorers,
                     const ScoreAllOptions& options = {});

}  // namespace xfer
