#include "xfer/hpo_plan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xfer/file_util.hpp"

namespace xfer {

namespace {

constexpr unsigned kLearningRateBase = 2;
constexpr unsigned kWeightDecayBase = 3;

void check_range(Range r, const char* name) {
  if (!(r.low > 0.0 && r.high > r.low && std::isfinite(r.high))) {
    throw std::invalid_argument(std::string(name) + " range must satisfy 0 < low < high");
  }
}

nlohmann::ordered_json config_json(const HpoConfig& c) {
  nlohmann::ordered_json doc;
  doc["index"] = c.index;
  doc["learning_rate"] = c.learning_rate;
  doc["weight_decay"] = c.weight_decay;
  doc["optimizer"] = c.optimizer;
  doc["scheduler"] = c.scheduler;
  doc["epochs"] = c.epochs;
  doc["batch_size"] = c.batch_size;
  return doc;
}

}  // namespace

bool is_prime(unsigned n) {
  if (n < 2) return false;
  for (unsigned d = 2; d * d <= n; ++d) {
    if (n % d == 0) return false;
  }
  return true;
}

double halton(std::uint64_t index, unsigned base) {
  if (index == 0) throw std::invalid_argument("halton: index must be at least 1");
  if (!is_prime(base)) throw std::invalid_argument("halton: base " + std::to_string(base) + " is not prime");
  double result = 0.0;
  double scale = 1.0 / base;
  while (index > 0) {
    result += static_cast<double>(index % base) * scale;
    index /= base;
    scale /= base;
  }
  return result;
}

double log_uniform(double u, Range range) {
  const double lo = std::log10(range.low);
  const double hi = std::log10(range.high);
  if (u <= 0.0) return range.low;
  if (u >= 1.0) return range.high;
  return std::clamp(std::pow(10.0, lo + u * (hi - lo)), range.low, range.high);
}

std::vector<HpoConfig> plan(const PlanOptions& options) {
  if (options.count < 1) throw std::invalid_argument("plan: count must be at least 1");
  if (options.skip < 0) throw std::invalid_argument("plan: skip must be nonnegative");
  check_range(options.learning_rate, "learning rate");
  check_range(options.weight_decay, "weight decay");

  std::vector<HpoConfig> out;
  out.reserve(static_cast<std::size_t>(options.count));
  for (int k = 1; k <= options.count; ++k) {
    const auto index = static_cast<std::uint64_t>(k + options.skip);
    HpoConfig config;
    config.index = k;
    config.learning_rate = log_uniform(halton(index, kLearningRateBase), options.learning_rate);
    config.weight_decay = log_uniform(halton(index, kWeightDecayBase), options.weight_decay);
    out.push_back(config);
  }
  return out;
}

std::string config_to_json(const HpoConfig& config) { return config_json(config).dump(); }

std::string plan_metadata_json(const PlanOptions& options) {
  nlohmann::ordered_json doc;
  doc["count"] = options.count;
  doc["skip"] = options.skip;
  doc["learning_rate_range"] = {options.learning_rate.low, options.learning_rate.high};
  doc["weight_decay_range"] = {options.weight_decay.low, options.weight_decay.high};
  doc["sequence"] = "halton";
  doc["bases"] = {{"learning_rate", kLearningRateBase}, {"weight_decay", kWeightDecayBase}};
  doc["mapping"] = "log-uniform";
  doc["assumptions"] = {
      "Halton bases 2 (learning rate) and 3 (weight decay) are a choice of this tool",
      "the first " + std::to_string(options.skip) + " Halton points are skipped",
      "both hyperparameters are sampled uniformly in log10 space",
  };
  return doc.dump(2) + "\n";
}

void write_plan(const std::vector<HpoConfig>& configs, const PlanOptions& options,
                const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  std::string lines;
  for (const auto& c : configs) {
    char name[32];
    std::snprintf(name, sizeof(name), "config_%03d.json", c.index);
    write_file_atomic(directory / name, config_json(c).dump(2) + "\n");
    lines += config_to_json(c) + "\n";
  }
  write_file_atomic(directory / "plan.jsonl", lines);
  write_file_atomic(directory / "plan_meta.json", plan_metadata_json(options));
}

}  // namespace xfer
