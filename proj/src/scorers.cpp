#include "xfer/scorers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "xfer/error.hpp"
#include "xfer/file_util.hpp"
#include "xfer/numerics.hpp"

namespace xfer {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void require_two_classes(const ProbeSet& probe, const char* scorer) {
  if (probe.class_count() < 2) throw DataError(std::string(scorer) + " needs at least two target classes");
}

const MatrixXd& require_outputs(const ProbeSet& probe, const char* scorer) {
  if (!probe.source_outputs()) throw DataError(std::string(scorer) + " requires source outputs");
  return probe.source_outputs()->values;
}

// Rows of the class-mean matrix G, centered: b_i = mu_{y_i} - mean(F).
MatrixXd centered_class_means(const MatrixXd& features, const std::vector<int>& labels, int class_count) {
  MatrixXd means = MatrixXd::Zero(class_count, features.cols());
  VectorXd counts = VectorXd::Zero(class_count);
  for (Index i = 0; i < features.rows(); ++i) {
    means.row(labels[static_cast<std::size_t>(i)]) += features.row(i);
    counts(labels[static_cast<std::size_t>(i)]) += 1.0;
  }
  for (int c = 0; c < class_count; ++c) means.row(c) /= counts(c);
  const Eigen::RowVectorXd grand = features.colwise().mean();
  MatrixXd g(features.rows(), features.cols());
  for (Index i = 0; i < features.rows(); ++i) g.row(i) = means.row(labels[static_cast<std::size_t>(i)]) - grand;
  return g;
}

// tr(pinv(cov_f) * B'B / n) for a PSD cov_f, evaluated as a sum of squares so
// the result is never negative. Eigenvalues below 1e-10 * max are dropped.
double trace_pinv_product(const MatrixXd& cov_f, const MatrixXd& centered_g) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov_f);
  const VectorXd& lambda = eig.eigenvalues();
  const double max_abs = lambda.cwiseAbs().maxCoeff();
  if (!(max_abs > 0.0)) return 0.0;
  VectorXd scale = VectorXd::Zero(lambda.size());
  for (Index j = 0; j < lambda.size(); ++j) {
    if (lambda(j) >= 1e-10 * max_abs) scale(j) = 1.0 / std::sqrt(lambda(j));
  }
  const MatrixXd w = (centered_g * eig.eigenvectors()) * scale.asDiagonal();
  return w.squaredNorm() / static_cast<double>(centered_g.rows());
}

MatrixXd feature_view(const ProbeSet& probe, const ScorerOptions& options) {
  return options.standardize ? standardize_columns(probe.features()) : probe.features();
}

}  // namespace

std::string_view to_string(ScorerId id) {
  switch (id) {
    case ScorerId::kHScore: return "h_score";
    case ScorerId::kNce: return "nce";
    case ScorerId::kLeep: return "leep";
    case ScorerId::kNLeep: return "nleep";
    case ScorerId::kLogMe: return "logme";
    case ScorerId::kRegHScore: return "reg_h_score";
    case ScorerId::kGbc: return "gbc";
  }
  return "?";
}

std::optional<ScorerId> parse_scorer_id(std::string_view text) {
  for (auto id : kAllScorers) {
    if (to_string(id) == text) return id;
  }
  return std::nullopt;
}

ScorerCategory category(ScorerId id) {
  return (id == ScorerId::kNce || id == ScorerId::kLeep) ? ScorerCategory::kLabelBased
                                                          : ScorerCategory::kFeatureBased;
}

std::vector<ScorerId> parse_scorer_list(std::string_view text) {
  if (text == "all") return {kAllScorers.begin(), kAllScorers.end()};
  std::vector<ScorerId> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const auto token = text.substr(start, end - start);
    const auto id = parse_scorer_id(token);
    if (!id) throw std::invalid_argument("unknown scorer \"" + std::string(token) + "\"");
    if (std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
    start = end + 1;
  }
  return out;
}

double h_score(const ProbeSet& probe) {
  require_two_classes(probe, "h_score");
  const MatrixXd& f = probe.features();
  return trace_pinv_product(sample_covariance(f), centered_class_means(f, probe.labels(), probe.class_count()));
}

double reg_h_score(const ProbeSet& probe, std::optional<double> fixed_shrinkage) {
  require_two_classes(probe, "reg_h_score");
  const MatrixXd z = standardize_columns(probe.features());
  if (z.cols() == 0) throw DataError("reg_h_score: every feature dimension is constant");
  const auto shrunk = ledoit_wolf(z, fixed_shrinkage);
  return trace_pinv_product(shrunk.covariance, centered_class_means(z, probe.labels(), probe.class_count()));
}

double nce(const ProbeSet& probe) {
  const MatrixXd& outputs = require_outputs(probe, "nce");
  const Index n = outputs.rows();
  const Index z_count = outputs.cols();
  const int c_count = probe.class_count();
  MatrixXd joint = MatrixXd::Zero(c_count, z_count);
  for (Index i = 0; i < n; ++i) {
    Index z = 0;
    for (Index j = 1; j < z_count; ++j) {
      if (outputs(i, j) > outputs(i, z)) z = j;
    }
    joint(probe.labels()[static_cast<std::size_t>(i)], z) += 1.0;
  }
  const VectorXd z_counts = joint.colwise().sum().transpose();
  double total = 0.0;
  for (Index z = 0; z < z_count; ++z) {
    for (int y = 0; y < c_count; ++y) {
      const double count = joint(y, z);
      if (count > 0.0) total += count * std::log(count / z_counts(z));
    }
  }
  return total / static_cast<double>(n);
}

double leep_from_probabilities(const MatrixXd& theta, std::span<const int> labels, int class_count) {
  const Index n = theta.rows();
  if (static_cast<Index>(labels.size()) != n) throw std::invalid_argument("leep: label count differs from rows");
  MatrixXd joint = MatrixXd::Zero(class_count, theta.cols());
  for (Index i = 0; i < n; ++i) joint.row(labels[static_cast<std::size_t>(i)]) += theta.row(i);
  joint /= static_cast<double>(n);
  const Eigen::RowVectorXd marginal = joint.colwise().sum();
  MatrixXd conditional = MatrixXd::Zero(class_count, theta.cols());
  for (Index z = 0; z < theta.cols(); ++z) {
    if (marginal(z) > 0.0) conditional.col(z) = joint.col(z) / marginal(z);
  }
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    total += std::log(theta.row(i).dot(conditional.row(labels[static_cast<std::size_t>(i)])));
  }
  return total / static_cast<double>(n);
}

double leep(const ProbeSet& probe) {
  require_outputs(probe, "leep");
  return leep_from_probabilities(probe.source_probabilities(), probe.labels(), probe.class_count());
}

double nleep(const ProbeSet& probe, double variance_fraction, int components, std::uint64_t seed) {
  const int k = components > 0 ? components : probe.class_count();
  if (k > probe.sample_count()) {
    throw DataError("nleep: " + std::to_string(k) + " mixture components exceed " +
                    std::to_string(probe.sample_count()) + " samples");
  }
  const auto pca = pca_fit(probe.features(), PcaCriterion::fraction(variance_fraction));
  const MatrixXd reduced = pca.transform(probe.features());
  const auto fit = gmm_fit(reduced, k, seed);
  return leep_from_probabilities(gmm_posteriors(fit.mixture, reduced), probe.labels(), probe.class_count());
}

namespace {

// Singular-value view of the features shared by every target vector.
struct EvidenceBasis {
  MatrixXd u;       // n x r
  VectorXd sigma;   // r squared singular values
  Index n = 0;
  Index d = 0;
};

EvidenceBasis make_basis(const MatrixXd& features) {
  Eigen::BDCSVD<MatrixXd> svd(features, Eigen::ComputeThinU);
  return {svd.matrixU(), svd.singularValues().array().square(), features.rows(), features.cols()};
}

EvidenceFit maximize_evidence(const EvidenceBasis& basis, const VectorXd& y) {
  const double n = static_cast<double>(basis.n);
  const double d = static_cast<double>(basis.d);
  const Index r = basis.sigma.size();
  const VectorXd proj = basis.u.transpose() * y;
  const VectorXd proj2 = proj.array().square();
  const double outside = std::max(0.0, y.squaredNorm() - proj2.sum());
  const double log_2pi = std::log(2.0 * std::numbers::pi);

  struct Terms {
    double gamma, m2, res2;
  };
  auto terms = [&](double alpha, double beta) {
    const double t = alpha / beta;
    const auto denom = (basis.sigma.array() + t);
    return Terms{(basis.sigma.array() / denom).sum(), (basis.sigma.array() * proj2.array() / denom.square()).sum(),
                 (proj2.array() * t * t / denom.square()).sum() + outside};
  };
  auto evidence = [&](double alpha, double beta) {
    const Terms tm = terms(alpha, beta);
    const double log_det = (alpha + beta * basis.sigma.array()).log().sum() + (d - static_cast<double>(r)) * std::log(alpha);
    return 0.5 * n * std::log(beta) + 0.5 * d * std::log(alpha) - 0.5 * n * log_2pi - 0.5 * beta * tm.res2 -
           0.5 * alpha * tm.m2 - 0.5 * log_det;
  };

  constexpr double kMin = 1e-12;
  constexpr double kMax = 1e12;
  EvidenceFit fit;
  fit.log_evidence = evidence(fit.alpha, fit.beta);
  for (int it = 1; it <= 100; ++it) {
    const Terms tm = terms(fit.alpha, fit.beta);
    const double alpha = std::clamp(tm.gamma / std::max(tm.m2, 1e-300), kMin, kMax);
    const double beta = std::clamp((n - tm.gamma) / std::max(tm.res2, 1e-300), kMin, kMax);
    const double next = evidence(alpha, beta);
    const double change = std::abs(next - fit.log_evidence);
    fit.alpha = alpha;
    fit.beta = beta;
    fit.log_evidence = next;
    fit.iterations = it;
    if (change < 1e-6) break;
  }
  return fit;
}

}  // namespace

EvidenceFit logme_evidence(const MatrixXd& features, const VectorXd& target) {
  if (features.rows() != target.size()) throw std::invalid_argument("logme: target length differs from rows");
  return maximize_evidence(make_basis(features), target);
}

std::vector<EvidenceFit> logme_class_evidence(const ProbeSet& probe) {
  require_two_classes(probe, "logme");
  const auto basis = make_basis(probe.features());
  std::vector<EvidenceFit> out;
  for (int c = 0; c < probe.class_count(); ++c) {
    VectorXd y(probe.sample_count());
    for (Index i = 0; i < y.size(); ++i) y(i) = probe.labels()[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
    out.push_back(maximize_evidence(basis, y));
  }
  return out;
}

double logme(const ProbeSet& probe) {
  const auto per_class = logme_class_evidence(probe);
  double total = 0.0;
  for (const auto& fit : per_class) total += fit.log_evidence;
  return total / static_cast<double>(per_class.size()) / static_cast<double>(probe.sample_count());
}

double gbc(const ProbeSet& probe, int pca_dims) {
  require_two_classes(probe, "gbc");
  if (pca_dims < 1) throw std::invalid_argument("gbc: pca_dims must be positive");
  const int c_count = probe.class_count();
  std::vector<Index> counts(static_cast<std::size_t>(c_count), 0);
  for (int y : probe.labels()) ++counts[static_cast<std::size_t>(y)];
  for (int c = 0; c < c_count; ++c) {
    if (counts[static_cast<std::size_t>(c)] < 2) {
      throw DataError("gbc: class " + std::to_string(c) + " has fewer than 2 samples");
    }
  }

  const MatrixXd& f = probe.features();
  const auto pca = pca_fit(f, PcaCriterion::fixed(pca_dims));
  const MatrixXd z = pca.transform(f);
  const Index k = z.cols();

  MatrixXd means = MatrixXd::Zero(c_count, k);
  MatrixXd vars = MatrixXd::Zero(c_count, k);
  for (Index i = 0; i < z.rows(); ++i) means.row(probe.labels()[static_cast<std::size_t>(i)]) += z.row(i);
  for (int c = 0; c < c_count; ++c) means.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  for (Index i = 0; i < z.rows(); ++i) {
    const int c = probe.labels()[static_cast<std::size_t>(i)];
    vars.row(c) += (z.row(i) - means.row(c)).array().square().matrix();
  }
  for (int c = 0; c < c_count; ++c) {
    vars.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    vars.row(c) = vars.row(c).cwiseMax(1e-8);
  }

  double total = 0.0;
  for (int a = 0; a < c_count; ++a) {
    for (int b = a + 1; b < c_count; ++b) {
      const Eigen::ArrayXd pooled = 0.5 * (vars.row(a) + vars.row(b)).array();
      const Eigen::ArrayXd diff = (means.row(a) - means.row(b)).array();
      const double distance = 0.125 * (diff.square() / pooled).sum() +
                              0.5 * (pooled.log() - 0.5 * (vars.row(a).array().log() + vars.row(b).array().log())).sum();
      total += std::exp(-distance);
    }
  }
  return -total;
}

double compute_score(ScorerId id, const ProbeSet& probe, const ScorerOptions& options) {
  const bool restandardize = options.standardize && category(id) == ScorerCategory::kFeatureBased &&
                             id != ScorerId::kRegHScore;
  const ProbeSet view = restandardize ? probe.with_features(feature_view(probe, options)) : probe;
  switch (id) {
    case ScorerId::kHScore: return h_score(view);
    case ScorerId::kRegHScore: return reg_h_score(view, options.reg_h_shrinkage);
    case ScorerId::kNce: return nce(view);
    case ScorerId::kLeep: return leep(view);
    case ScorerId::kNLeep:
      return nleep(view, options.nleep_variance_fraction, options.nleep_components, options.seed);
    case ScorerId::kLogMe: return logme(view);
    case ScorerId::kGbc: return gbc(view, options.gbc_pca_dims);
  }
  throw std::logic_error("unhandled scorer");
}

std::string_view to_string(SplitKind kind) {
  return kind == SplitKind::kInDistribution ? "in-distribution" : "out-of-distribution";
}

SplitKind split_kind_of(std::string_view split) {
  return split.find("ood") != std::string_view::npos ? SplitKind::kOutOfDistribution : SplitKind::kInDistribution;
}

void ScoreTable::set(const std::string& checkpoint, ScorerId scorer, double value) {
  if (!std::isfinite(value)) {
    throw DataError("score for checkpoint \"" + checkpoint + "\", scorer " + std::string(to_string(scorer)) +
                    " is not finite");
  }
  auto it = scores_.find(checkpoint);
  if (it == scores_.end()) {
    checkpoints_.push_back(checkpoint);
    it = scores_.emplace(checkpoint, std::map<ScorerId, double>{}).first;
  }
  it->second[scorer] = value;
}

std::optional<double> ScoreTable::get(std::string_view checkpoint, ScorerId scorer) const {
  const auto it = scores_.find(checkpoint);
  if (it == scores_.end()) return std::nullopt;
  const auto jt = it->second.find(scorer);
  if (jt == it->second.end()) return std::nullopt;
  return jt->second;
}

std::vector<ScorerId> ScoreTable::scorers() const {
  std::vector<ScorerId> out;
  for (auto id : kAllScorers) {
    for (const auto& [_, row] : scores_) {
      if (row.contains(id)) {
        out.push_back(id);
        break;
      }
    }
  }
  return out;
}

std::size_t ScoreTable::entry_count() const {
  std::size_t total = 0;
  for (const auto& [_, row] : scores_) total += row.size();
  return total;
}

std::string score_table_to_json(const ScoreTable& table) {
  using json = nlohmann::json;
  std::ostringstream out;
  out << "{\n  \"task\": " << json(table.task()).dump() << ",\n  \"split\": " << json(table.split()).dump()
      << ",\n  \"scores\": {";
  const auto scorers = table.scorers();
  bool first_row = true;
  for (const auto& checkpoint : table.checkpoints()) {
    out << (first_row ? "\n" : ",\n") << "    " << json(checkpoint).dump() << ": {";
    first_row = false;
    bool first = true;
    for (auto id : scorers) {
      const auto value = table.get(checkpoint, id);
      if (!value) continue;
      out << (first ? "" : ", ") << '"' << to_string(id) << "\": " << format_double(*value);
      first = false;
    }
    out << "}";
  }
  out << (first_row ? "}\n}\n" : "\n  }\n}\n");
  return out.str();
}

ScoreTable score_table_from_json(std::string_view text) {
  using json = nlohmann::ordered_json;
  try {
    const auto doc = json::parse(text);
    ScoreTable table(doc.at("task").get<std::string>(), doc.at("split").get<std::string>());
    for (const auto& [checkpoint, row] : doc.at("scores").items()) {
      for (const auto& [name, value] : row.items()) {
        const auto id = parse_scorer_id(name);
        if (!id) throw DataError("score table names unknown scorer \"" + name + "\"");
        table.set(checkpoint, *id, value.get<double>());
      }
    }
    return table;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed score table: ") + e.what());
  }
}

ScoreTable load_score_table(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return score_table_from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

ScoreTable score_all(const TaskManifest& manifest, const std::string& split, std::span<const ScorerId> scorers,
                     const ScoreAllOptions& options) {
  if (scorers.empty()) throw DataError("no scorers requested");
  const std::size_t n_ckpt = manifest.checkpoints.size();
  const std::size_t n_cells = n_ckpt * scorers.size();

  std::vector<std::optional<ProbeSet>> probes(n_ckpt);
  std::vector<double> values(n_cells, 0.0);
  std::vector<std::string> errors(n_ckpt + n_cells);
  std::vector<std::once_flag> loaded(n_ckpt);

  auto probe_for = [&](std::size_t c) -> const ProbeSet* {
    std::call_once(loaded[c], [&] {
      try {
        probes[c] = load_probe_set(manifest, manifest.checkpoints[c], split);
      } catch (const std::exception& e) {
        errors[c] = e.what();
      }
    });
    return probes[c] ? &*probes[c] : nullptr;
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t cell = next++; cell < n_cells; cell = next++) {
      const std::size_t c = cell / scorers.size();
      const ScorerId id = scorers[cell % scorers.size()];
      const ProbeSet* probe = probe_for(c);
      if (!probe) continue;
      try {
        values[cell] = compute_score(id, *probe, options.scorer);
        if (!std::isfinite(values[cell])) throw DataError("score is not finite");
      } catch (const std::exception& e) {
        errors[n_ckpt + cell] = e.what();
      }
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n_cells)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  // Report failures in manifest order regardless of the schedule.
  for (std::size_t c = 0; c < n_ckpt; ++c) {
    if (!errors[c].empty()) throw DataError(errors[c]);
    for (std::size_t s = 0; s < scorers.size(); ++s) {
      const auto& err = errors[n_ckpt + c * scorers.size() + s];
      if (!err.empty()) {
        throw DataError("checkpoint \"" + manifest.checkpoints[c].id + "\", scorer " +
                        std::string(to_string(scorers[s])) + ": " + err);
      }
    }
  }

  ScoreTable table(manifest.task, split);
  for (std::size_t c = 0; c < n_ckpt; ++c) {
    for (std::size_t s = 0; s < scorers.size(); ++s) {
      table.set(manifest.checkpoints[c].id, scorers[s], values[c * scorers.size() + s]);
    }
  }
  return table;
}

}  // namespace xfer
