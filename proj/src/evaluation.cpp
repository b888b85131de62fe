#include "xfer/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xfer/error.hpp"
#include "xfer/file_util.hpp"

namespace xfer {

namespace {

void check_pair_input(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("rank correlation: vectors have lengths " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
  }
  if (a.size() < 2) throw std::invalid_argument("rank correlation needs at least two items");
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Sum over pairs inside each group of equal keys of (w_i + w_j), i.e.
// sum over groups of (|G| - 1) * sum_{i in G} w_i. `order` must sort the keys.
template <typename Equal>
double tied_pair_weight(const std::vector<std::size_t>& order, std::span<const double> w, Equal equal) {
  double total = 0.0;
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    double group_w = w[order[start]];
    while (end < order.size() && equal(order[start], order[end])) group_w += w[order[end++]];
    total += static_cast<double>(end - start - 1) * group_w;
    start = end;
  }
  return total;
}

// Weighted count of strict inversions in `y` (pairs p < q with y_p > y_q),
// each inversion weighing w_p + w_q. Merge sort, O(n log n).
double weighted_inversions(std::vector<double> y, std::vector<double> w) {
  const std::size_t n = y.size();
  std::vector<double> y_buf(n);
  std::vector<double> w_buf(n);
  double total = 0.0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      double left_w = 0.0;
      for (std::size_t i = lo; i < mid; ++i) left_w += w[i];
      std::size_t i = lo;
      std::size_t j = mid;
      std::size_t out = lo;
      while (i < mid && j < hi) {
        if (y[i] <= y[j]) {
          left_w -= w[i];
          y_buf[out] = y[i];
          w_buf[out++] = w[i++];
        } else {
          total += static_cast<double>(mid - i) * w[j] + left_w;
          y_buf[out] = y[j];
          w_buf[out++] = w[j++];
        }
      }
      while (i < mid) {
        y_buf[out] = y[i];
        w_buf[out++] = w[i++];
      }
      while (j < hi) {
        y_buf[out] = y[j];
        w_buf[out++] = w[j++];
      }
    }
    std::swap(y, y_buf);
    std::swap(w, w_buf);
  }
  return total;
}

// Tie-corrected tau where pair (i, j) carries weight w_i + w_j.
std::optional<double> additive_weighted_tau(std::span<const double> x, std::span<const double> y,
                                            std::span<const double> w) {
  if (is_constant(x) || is_constant(y)) return std::nullopt;
  const std::size_t n = x.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
  });

  const double all_pairs = static_cast<double>(n - 1) * std::accumulate(w.begin(), w.end(), 0.0);
  const double tied_x = tied_pair_weight(order, w, [&](std::size_t a, std::size_t b) { return x[a] == x[b]; });
  const double tied_xy =
      tied_pair_weight(order, w, [&](std::size_t a, std::size_t b) { return x[a] == x[b] && y[a] == y[b]; });
  std::vector<std::size_t> order_y(n);
  std::iota(order_y.begin(), order_y.end(), 0);
  std::sort(order_y.begin(), order_y.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  const double tied_y = tied_pair_weight(order_y, w, [&](std::size_t a, std::size_t b) { return y[a] == y[b]; });

  std::vector<double> y_seq(n);
  std::vector<double> w_seq(n);
  for (std::size_t k = 0; k < n; ++k) {
    y_seq[k] = y[order[k]];
    w_seq[k] = w[order[k]];
  }
  const double discordant = weighted_inversions(std::move(y_seq), std::move(w_seq));
  const double concordant = all_pairs - tied_x - tied_y + tied_xy - discordant;
  const double denom = std::sqrt((all_pairs - tied_x) * (all_pairs - tied_y));
  return std::clamp((concordant - discordant) / denom, -1.0, 1.0);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

double balanced_accuracy(std::span<const int> truth, std::span<const int> predicted, int class_count) {
  if (truth.size() != predicted.size()) {
    throw DataError("balanced_accuracy: " + std::to_string(truth.size()) + " labels vs " +
                    std::to_string(predicted.size()) + " predictions");
  }
  if (class_count < 1) throw DataError("balanced_accuracy: class_count must be positive");
  std::vector<double> hits(static_cast<std::size_t>(class_count), 0.0);
  std::vector<double> totals(static_cast<std::size_t>(class_count), 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= class_count || predicted[i] < 0 || predicted[i] >= class_count) {
      throw DataError("balanced_accuracy: label out of range at index " + std::to_string(i));
    }
    totals[static_cast<std::size_t>(truth[i])] += 1.0;
    if (truth[i] == predicted[i]) hits[static_cast<std::size_t>(truth[i])] += 1.0;
  }
  double sum = 0.0;
  for (int c = 0; c < class_count; ++c) {
    if (totals[static_cast<std::size_t>(c)] == 0.0) {
      throw DataError("balanced_accuracy: class " + std::to_string(c) + " is absent from the true labels");
    }
    sum += hits[static_cast<std::size_t>(c)] / totals[static_cast<std::size_t>(c)];
  }
  return sum / static_cast<double>(class_count);
}

std::optional<double> kendall_tau(std::span<const double> scores, std::span<const double> performances) {
  check_pair_input(scores, performances);
  const std::vector<double> half(scores.size(), 0.5);
  return additive_weighted_tau(scores, performances, half);
}

std::vector<double> importance_ranks(std::span<const double> performances) {
  const std::size_t n = performances.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return performances[a] > performances[b]; });
  std::vector<double> ranks(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && performances[order[end]] == performances[order[start]]) ++end;
    const double avg = 0.5 * static_cast<double>(start + end - 1);
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = avg;
    start = end;
  }
  return ranks;
}

std::optional<double> weighted_kendall_tau(std::span<const double> scores, std::span<const double> performances) {
  check_pair_input(scores, performances);
  const auto ranks = importance_ranks(performances);
  std::vector<double> w(ranks.size());
  std::transform(ranks.begin(), ranks.end(), w.begin(), [](double r) { return 1.0 / (r + 1.0); });
  return additive_weighted_tau(scores, performances, w);
}

std::string_view to_string(CorrelationMethod method) {
  return method == CorrelationMethod::kTauB ? "tau-b" : "weighted-tau";
}

CorrelationMethod parse_correlation_method(std::string_view text) {
  if (text == "tau" || text == "tau-b") return CorrelationMethod::kTauB;
  if (text == "wtau" || text == "weighted-tau") return CorrelationMethod::kWeightedTau;
  throw std::invalid_argument("unknown correlation method \"" + std::string(text) + "\"");
}

std::optional<double> correlation(CorrelationMethod method, std::span<const double> scores,
                                  std::span<const double> performances) {
  return method == CorrelationMethod::kTauB ? kendall_tau(scores, performances)
                                            : weighted_kendall_tau(scores, performances);
}

std::vector<std::string> rank_checkpoints(const ScoreTable& table, ScorerId scorer) {
  std::vector<std::pair<double, std::string>> entries;
  for (const auto& id : table.checkpoints()) {
    if (auto v = table.get(id, scorer)) entries.emplace_back(*v, id);
  }
  if (entries.empty()) throw DataError("score table has no " + std::string(to_string(scorer)) + " scores");
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (auto& e : entries) out.push_back(std::move(e.second));
  return out;
}

CorrelationReport correlate(const ScoreTable& table, const TaskManifest& manifest, const std::string& split,
                            CorrelationMethod method) {
  std::vector<std::pair<std::string, double>> measured;
  for (const auto& id : table.checkpoints()) {
    const auto& record = manifest.checkpoint(id);
    if (auto it = record.performance.find(split); it != record.performance.end()) {
      measured.emplace_back(id, it->second);
    }
  }
  if (measured.size() < 2) {
    throw DataError("split \"" + split + "\": only " + std::to_string(measured.size()) +
                    " scored checkpoint(s) have a recorded performance; need at least 2");
  }

  CorrelationReport report{manifest.task, method, {}};
  for (auto scorer : table.scorers()) {
    std::vector<double> s;
    std::vector<double> p;
    for (const auto& [id, perf] : measured) {
      if (auto v = table.get(id, scorer)) {
        s.push_back(*v);
        p.push_back(perf);
      }
    }
    CorrelationRow row{split, scorer, std::nullopt, s.size()};
    if (s.size() >= 2) row.tau = correlation(method, s, p);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string report_to_json(const CorrelationReport& report) {
  nlohmann::ordered_json doc;
  doc["task"] = report.task;
  doc["method"] = std::string(to_string(report.method));
  doc["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json item;
    item["split"] = row.split;
    item["split_kind"] = std::string(to_string(split_kind_of(row.split)));
    item["scorer"] = std::string(to_string(row.scorer));
    item["tau"] = row.tau ? nlohmann::ordered_json(*row.tau) : nlohmann::ordered_json(nullptr);
    item["pairs"] = row.pairs;
    item["status"] = row.tau ? "ok" : "n/a";
    doc["rows"].push_back(std::move(item));
  }
  return doc.dump(2) + "\n";
}

CorrelationReport report_from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    CorrelationReport report;
    report.task = doc.at("task").get<std::string>();
    report.method = parse_correlation_method(doc.at("method").get<std::string>());
    for (const auto& item : doc.at("rows")) {
      const auto scorer = parse_scorer_id(item.at("scorer").get<std::string>());
      if (!scorer) throw DataError("report names an unknown scorer");
      CorrelationRow row{item.at("split").get<std::string>(), *scorer, std::nullopt,
                         item.at("pairs").get<std::size_t>()};
      if (!item.at("tau").is_null()) row.tau = item.at("tau").get<double>();
      report.rows.push_back(std::move(row));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed correlation report: ") + e.what());
  }
}

std::string format_report_table(std::span<const CorrelationReport> reports) {
  std::vector<ScorerId> columns;
  for (auto id : kAllScorers) {
    for (const auto& r : reports) {
      if (std::any_of(r.rows.begin(), r.rows.end(), [&](const auto& row) { return row.scorer == id; })) {
        columns.push_back(id);
        break;
      }
    }
  }

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"task", "split", "method"};
  for (auto id : columns) header.emplace_back(to_string(id));
  cells.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> splits;
    for (const auto& row : r.rows) {
      if (std::find(splits.begin(), splits.end(), row.split) == splits.end()) splits.push_back(row.split);
    }
    for (const auto& split : splits) {
      std::vector<std::string> line = {r.task, split, std::string(to_string(r.method))};
      for (auto id : columns) {
        std::string cell = "-";
        for (const auto& row : r.rows) {
          if (row.split != split || row.scorer != id) continue;
          if (row.tau) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.3f", *row.tau);
            cell = buf;
          } else {
            cell = "n/a";
          }
        }
        line.push_back(cell);
      }
      cells.push_back(std::move(line));
    }
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t j = 0; j < line.size(); ++j) width[j] = std::max(width[j], line[j].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = 0; j < cells[i].size(); ++j) {
      const auto& cell = cells[i][j];
      const std::string pad(width[j] - cell.size(), ' ');
      // text columns left-aligned, numbers right-aligned
      out << (j < 3 ? cell + pad : pad + cell) << (j + 1 < cells[i].size() ? "  " : "");
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

std::string plot_data_csv(const ScoreTable& table, const TaskManifest& manifest, const std::string& split) {
  std::ostringstream out;
  out << "checkpoint_id,architecture,scorer,score,performance\n";
  const auto scorers = table.scorers();
  for (const auto& id : table.checkpoints()) {
    const auto& record = manifest.checkpoint(id);
    const auto perf = record.performance.find(split);
    for (auto scorer : scorers) {
      const auto value = table.get(id, scorer);
      if (!value) continue;
      out << csv_field(id) << ',' << csv_field(record.architecture) << ',' << to_string(scorer) << ','
          << format_double(*value) << ',';
      if (perf != record.performance.end()) out << format_double(perf->second);
      out << '\n';
    }
  }
  return out.str();
}

void emit_plot_data(const ScoreTable& table, const TaskManifest& manifest, const std::string& split,
                    const std::filesystem::path& path) {
  write_file_atomic(path, plot_data_csv(table, manifest, split));
}

}  // namespace xfer
