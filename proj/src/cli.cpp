#include "xfer/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>
#include <thread>

#include <CLI11.hpp>

#include "xfer/error.hpp"
#include "xfer/evaluation.hpp"
#include "xfer/file_util.hpp"
#include "xfer/hpo_plan.hpp"
#include "xfer/probe_set.hpp"
#include "xfer/scorers.hpp"

namespace xfer {

namespace {

namespace fs = std::filesystem;

struct ScoreArgs {
  std::string manifest;
  std::string split;
  std::string scorers = "all";
  std::string out;
  std::uint64_t seed = 0;
  bool standardize = false;
  double nleep_variance = 0.8;
  int nleep_components = 0;
  int gbc_dims = 64;
  unsigned threads = 1;
};

struct CorrelateArgs {
  std::string scores;
  std::string manifest;
  std::string split;
  std::string method = "wtau";
  std::string out;
};

int cmd_validate(const std::string& manifest_path, const std::vector<std::string>& only_splits, std::ostream& out) {
  const auto manifest = load_manifest(manifest_path);
  std::size_t probes = 0;
  for (const auto& record : manifest.checkpoints) {
    for (const auto& [split, _] : record.probe_paths) {
      if (!only_splits.empty() && std::find(only_splits.begin(), only_splits.end(), split) == only_splits.end()) {
        continue;
      }
      const auto ps = load_probe_set(manifest, record, split);
      out << record.id << "/" << split << ": n=" << ps.sample_count() << " d=" << ps.feature_dim()
          << " classes=" << ps.class_count();
      if (const auto& o = ps.source_outputs()) out << " outputs=" << o->values.cols() << " " << to_string(o->kind);
      out << "\n";
      ++probes;
    }
  }
  out << "ok: " << manifest.checkpoints.size() << " checkpoint(s), " << probes << " probe set(s) valid\n";
  return kExitOk;
}

int cmd_score(const ScoreArgs& args, std::ostream& out) {
  const auto manifest = load_manifest(args.manifest);
  const auto scorers = parse_scorer_list(args.scorers);
  ScoreAllOptions options;
  options.scorer.seed = args.seed;
  options.scorer.standardize = args.standardize;
  options.scorer.nleep_variance_fraction = args.nleep_variance;
  options.scorer.nleep_components = args.nleep_components;
  options.scorer.gbc_pca_dims = args.gbc_dims;
  options.threads = args.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : args.threads;
  const auto table = score_all(manifest, args.split, scorers, options);
  write_file_atomic(args.out, score_table_to_json(table));
  out << "wrote " << table.entry_count() << " scores for " << table.checkpoints().size() << " checkpoint(s) to "
      << args.out << "\n";
  return kExitOk;
}

int cmd_rank(const std::string& scores_path, const std::string& scorer_name, std::ostream& out) {
  const auto scorer = parse_scorer_id(scorer_name);
  if (!scorer) throw std::invalid_argument("unknown scorer \"" + scorer_name + "\"");
  const auto table = load_score_table(scores_path);
  for (const auto& id : rank_checkpoints(table, *scorer)) out << id << "\n";
  return kExitOk;
}

int cmd_correlate(const CorrelateArgs& args, std::ostream& out) {
  const auto table = load_score_table(args.scores);
  const auto manifest = load_manifest(args.manifest);
  const auto report = correlate(table, manifest, args.split, parse_correlation_method(args.method));
  write_file_atomic(args.out, report_to_json(report));
  out << format_report_table(std::span(&report, 1));
  return kExitOk;
}

int cmd_plot_data(const CorrelateArgs& args, std::ostream& out) {
  const auto table = load_score_table(args.scores);
  const auto manifest = load_manifest(args.manifest);
  emit_plot_data(table, manifest, args.split, args.out);
  out << "wrote plot data to " << args.out << "\n";
  return kExitOk;
}

int cmd_plan(const PlanOptions& options, const std::string& dir, std::ostream& out) {
  const auto configs = plan(options);
  write_plan(configs, options, dir);
  out << "wrote " << configs.size() << " configs to " << dir << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transferability scoring and checkpoint ranking toolkit", "xferbench"};
  app.set_version_flag("--version", std::string("xferbench ") + kToolVersion + " (" + kFormatVersions + ")");
  app.require_subcommand(1);

  std::string validate_manifest;
  std::vector<std::string> validate_splits;
  auto* validate = app.add_subcommand("validate", "Check a manifest and every probe set it references");
  validate->add_option("--manifest", validate_manifest, "Task manifest JSON")->required();
  validate->add_option("--split", validate_splits, "Only validate these splits");

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Compute transferability scores for every checkpoint");
  score->add_option("--manifest", score_args.manifest, "Task manifest JSON")->required();
  score->add_option("--split", score_args.split, "Probe split to score, e.g. train or test_ood")->required();
  score->add_option("--scorers", score_args.scorers, "Comma-separated scorer ids or 'all'")->capture_default_str();
  score->add_option("--out", score_args.out, "Output score table JSON")->required();
  score->add_option("--seed", score_args.seed, "Seed for the N-LEEP mixture fit")->capture_default_str();
  score->add_flag("--standardize", score_args.standardize, "z-score features before feature-based scorers");
  score->add_option("--nleep-variance", score_args.nleep_variance, "PCA variance fraction kept by N-LEEP")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  score->add_option("--nleep-components", score_args.nleep_components,
                    "Mixture components for N-LEEP (0: number of classes)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  score->add_option("--gbc-dims", score_args.gbc_dims, "PCA dimensions for GBC")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  score->add_option("--threads", score_args.threads, "Worker threads (0: all cores)")->capture_default_str();

  std::string rank_scores;
  std::string rank_scorer;
  auto* rank = app.add_subcommand("rank", "Print checkpoints in descending score order");
  rank->add_option("--scores", rank_scores, "Score table JSON")->required();
  rank->add_option("--scorer", rank_scorer, "Scorer id")->required();

  CorrelateArgs corr_args;
  auto* corr = app.add_subcommand("correlate", "Rank-correlate scores with measured performance");
  corr->add_option("--scores", corr_args.scores, "Score table JSON")->required();
  corr->add_option("--manifest", corr_args.manifest, "Task manifest JSON with performances")->required();
  corr->add_option("--split", corr_args.split, "Performance split, e.g. test_id or test_ood")->required();
  corr->add_option("--method", corr_args.method, "wtau (weighted tau) or tau (tau-b)")
      ->capture_default_str()
      ->check(CLI::IsMember({"wtau", "tau", "weighted-tau", "tau-b"}));
  corr->add_option("--out", corr_args.out, "Output report JSON")->required();

  CorrelateArgs plot_args;
  auto* plot_cmd = app.add_subcommand("plot-data", "Write score/performance scatter data as CSV");
  plot_cmd->add_option("--scores", plot_args.scores, "Score table JSON")->required();
  plot_cmd->add_option("--manifest", plot_args.manifest, "Task manifest JSON")->required();
  plot_cmd->add_option("--split", plot_args.split, "Performance split")->required();
  plot_cmd->add_option("--out", plot_args.out, "Output CSV")->required();

  PlanOptions plan_options;
  std::string plan_dir;
  auto* plan_cmd = app.add_subcommand("plan-hpo", "Write a quasi-random learning-rate/weight-decay search plan");
  plan_cmd->add_option("--n", plan_options.count, "Number of configurations")->capture_default_str();
  plan_cmd->add_option("--lr-min", plan_options.learning_rate.low)->capture_default_str();
  plan_cmd->add_option("--lr-max", plan_options.learning_rate.high)->capture_default_str();
  plan_cmd->add_option("--wd-min", plan_options.weight_decay.low)->capture_default_str();
  plan_cmd->add_option("--wd-max", plan_options.weight_decay.high)->capture_default_str();
  plan_cmd->add_option("--skip", plan_options.skip, "Leading Halton points to skip")->capture_default_str();
  plan_cmd->add_option("--out", plan_dir, "Output directory")->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(validate_manifest, validate_splits, out);
    if (score->parsed()) return cmd_score(score_args, out);
    if (rank->parsed()) return cmd_rank(rank_scores, rank_scorer, out);
    if (corr->parsed()) return cmd_correlate(corr_args, out);
    if (plot_cmd->parsed()) return cmd_plot_data(plot_args, out);
    if (plan_cmd->parsed()) return cmd_plan(plan_options, plan_dir, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  return kExitUsage;
}

}  // namespace xfer
