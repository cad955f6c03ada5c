#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "himosa/model.hpp"

namespace himosa {

enum class Optimizer { adam_like, sgd_momentum };

std::string optimizer_name(Optimizer o);
Optimizer optimizer_from_name(const std::string& name);

struct TrainConfig {
  int64_t total_iters = 2000;
  int64_t warmup_iters = 100;
  double base_lr = 5e-4;
  std::vector<int64_t> decay_points{};
  double decay_factor = 0.5;
  int64_t batch_size = 16;
  int64_t patch = 64;
  uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam_like;
  int64_t checkpoint_every = 500;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Flat `key = value` text, one pair per line, `#` starts a comment, lists are
// comma-separated. Keys are exactly the field names. Unknown or duplicate
// keys throw ConfigError. Parsing validates both sections.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical form: every key in declaration order. serialize(parse(x)) is a
// fixed point, which keeps checkpoint config blobs byte-stable.
std::string serialize_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

}  // namespace himosa
