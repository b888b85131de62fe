#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace xfer {

// Radical inverse of `index` (>= 1) in a prime `base`.
double halton(std::uint64_t index, unsigned base);

bool is_prime(unsigned n);

struct Range {
  double low;
  double high;
};

// 10^(log10(low) + u * (log10(high) - log10(low))); u = 0 gives low, u = 1 gives high.
double log_uniform(double u, Range range);

struct HpoConfig {
  int index = 0;  // 1-based position in the plan
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  std::string optimizer = "SGD";
  std::string scheduler = "cosine";
  int epochs = 100;
  int batch_size = 128;

  bool operator==(const HpoConfig&) const = default;
};

struct PlanOptions {
  int count = 75;
  Range learning_rate{1e-4, 1e-1};
  Range weight_decay{1e-6, 1e-4};
  int skip = 20;
};

// Config k (k = 1..count) takes the Halton point at index k + skip, base 2
// for the learning rate and base 3 for weight decay, both mapped log-uniformly.
std::vector<HpoConfig> plan(const PlanOptions& options = {});

std::string config_to_json(const HpoConfig& config);
std::string plan_metadata_json(const PlanOptions& options);

// Writes config_NNN.json per entry, plan.jsonl with one config per line,
// and plan_meta.json recording the sampling assumptions.
void write_plan(const std::vector<HpoConfig>& configs, const PlanOptions& options,
                const std::filesystem::path& directory);

}  // namespace xfer
