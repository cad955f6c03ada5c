#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "himosa/config.hpp"

using namespace himosa;

TEST_CASE("defaults serialize and re-parse as a fixed point") {
  RunConfig cfg;
  cfg.model.expert_dim = 48;
  cfg.model.cab_reduction = 12;
  cfg.model.validate();
  cfg.train.validate();
  std::string text = serialize_config(cfg);
  RunConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.model.n_blocks == 4);
  CHECK(back.model.ratios == std::vector<double>{0.5, 1, 2, 4, 6, 8});
  CHECK(back.model.expert_dim == 48);
  CHECK(back.train.optimizer == Optimizer::adam_like);
}

TEST_CASE("comments, spacing, and partial keys parse against defaults") {
  RunConfig cfg = parse_config(
      "# training overrides\n"
      "channels=16   # inline comment\n"
      "  cab_reduction =4\n"
      "ratios = 1,2\n"
      "sparsity = 1, 2\n"
      "n_layers = 2\n"
      "expert_dim = 8\n"
      "seed = 99\n"
      "optimizer = sgd_momentum\n");
  CHECK(cfg.model.channels == 16);
  CHECK(cfg.model.cab_reduction == 4);
  CHECK(cfg.model.n_layers == 2);
  CHECK(cfg.train.seed == 99);
  CHECK(cfg.train.optimizer == Optimizer::sgd_momentum);
  CHECK(cfg.train.base_lr == 5e-4);  // untouched default
}

TEST_CASE("unknown, duplicate, and malformed keys are config errors") {
  CHECK_THROWS_WITH_AS(parse_config("banana = 3\n"),
                       doctest::Contains("banana"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("channels = 16\nchannels = 17\n"),
                       doctest::Contains("duplicate"), ConfigError);
  CHECK_THROWS_AS(parse_config("channels\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("channels = soup\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("use_norm = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("optimizer = sgd\n"), ConfigError);
}

TEST_CASE("semantic violations surface from validate") {
  // Ratio list shorter than n_layers.
  CHECK_THROWS_AS(parse_config("ratios = 1, 2\n"), ConfigError);
  // Decay points out of order.
  CHECK_THROWS_AS(
      parse_config("expert_dim = 48\ncab_reduction = 12\n"
                   "decay_points = 500, 400\n"),
      ConfigError);
  // Warmup at or past the end.
  CHECK_THROWS_AS(
      parse_config("expert_dim = 48\ncab_reduction = 12\n"
                   "total_iters = 100\nwarmup_iters = 100\n"),
      ConfigError);
  // Decay point past the end.
  CHECK_THROWS_AS(
      parse_config("expert_dim = 48\ncab_reduction = 12\n"
                   "total_iters = 100\ndecay_points = 150\n"),
      ConfigError);
}

TEST_CASE("train config invariants hold for the defaults") {
  TrainConfig t;
  t.validate();
  CHECK(t.total_iters == 2000);
  CHECK(t.warmup_iters < t.total_iters);
}

TEST_CASE("file round-trip preserves the canonical text") {
  RunConfig cfg;
  cfg.model.channels = 16;
  cfg.model.cab_reduction = 8;
  cfg.model.expert_dim = 12;
  cfg.model.selection_strategy = Selection::random;
  cfg.train.decay_points = {800, 1200};
  cfg.model.validate();
  cfg.train.validate();
  std::string path =
      (std::string(HIMOSA_TEST_DIR) + "/../build/cfg_roundtrip.cfg");
  save_config(cfg, path);
  RunConfig back = load_config(path);
  CHECK(serialize_config(back) == serialize_config(cfg));
  CHECK(back.model.selection_strategy == Selection::random);
  CHECK(back.train.decay_points == std::vector<int64_t>{800, 1200});
}

TEST_CASE("missing config files are I/O errors") {
  CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), IoError);
}
