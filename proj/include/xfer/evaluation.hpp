#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xfer/probe_set.hpp"
#include "xfer/scorers.hpp"

namespace xfer {

// Mean per-class recall. Every class in [0, class_count) must occur in `truth`.
double balanced_accuracy(std::span<const int> truth, std::span<const int> predicted, int class_count);

// Kendall tau-b. std::nullopt when either vector is constant (tau undefined).
// Throws std::invalid_argument for mismatched lengths or fewer than 2 items.
std::optional<double> kendall_tau(std::span<const double> scores, std::span<const double> performances);

// Weighted tau with additive hyperbolic weights: pair (i, j) weighs
// 1/(r_i + 1) + 1/(r_j + 1), where r is the 0-based rank by decreasing
// performance (ties share their average rank). Tie handling as in tau-b.
std::optional<double> weighted_kendall_tau(std::span<const double> scores, std::span<const double> performances);

// Ranks used for the weighted tau: 0 for the best performer, ties averaged.
std::vector<double> importance_ranks(std::span<const double> performances);

enum class CorrelationMethod { kTauB, kWeightedTau };
std::string_view to_string(CorrelationMethod method);
// Accepts "tau"/"tau-b" and "wtau"/"weighted-tau".
CorrelationMethod parse_correlation_method(std::string_view text);

std::optional<double> correlation(CorrelationMethod method, std::span<const double> scores,
                                  std::span<const double> performances);

// Descending score; equal scores ordered by checkpoint id.
std::vector<std::string> rank_checkpoints(const ScoreTable& table, ScorerId scorer);

struct CorrelationRow {
  std::string split;
  ScorerId scorer;
  std::optional<double> tau;  // nullopt: degenerate input, printed as "n/a"
  std::size_t pairs = 0;
};

struct CorrelationReport {
  std::string task;
  CorrelationMethod method = CorrelationMethod::kWeightedTau;
  std::vector<CorrelationRow> rows;
};

// Pairs every scorer column of `table` with the manifest's recorded
// performance for `split`. Checkpoints lacking either value are left out.
// Throws DataError if fewer than two checkpoints have both.
CorrelationReport correlate(const ScoreTable& table, const TaskManifest& manifest, const std::string& split,
                            CorrelationMethod method);

std::string report_to_json(const CorrelationReport& report);
CorrelationReport report_from_json(std::string_view text);

// Aligned text table: one line per (task, split), one column per scorer.
std::string format_report_table(std::span<const CorrelationReport> reports);

// checkpoint_id,architecture,scorer,score,performance; one row per
// (checkpoint, scorer). A missing performance is an empty field.
std::string plot_data_csv(const ScoreTable& table, const TaskManifest& manifest, const std::string& split);
void emit_plot_data(const ScoreTable& table, const TaskManifest& manifest, const std::string& split,
                    const std::filesystem::path& path);

}  // namespace xfer
