#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "himosa/config.hpp"
#include "himosa/data.hpp"
#include "himosa/model.hpp"

namespace himosa {

// Mean absolute error over all elements. The subgradient at exact ties is 0.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

// Linear ramp 0 → base_lr across [0, warmup_iters], then
// base_lr · decay_factor^(number of decay points ≤ t).
double lr_at(const TrainConfig& cfg, int64_t t);

// Per-parameter moment buffers, aligned with named_params order. The
// adaptive optimizer uses both; momentum-SGD uses only m.
struct OptState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

struct TrainState {
  RunConfig cfg;
  HimosaWeights weights;
  OptState opt;
  int64_t iter = 0;
};

// Fresh weights (seeded by cfg.train.seed) and zeroed moments.
TrainState init_train_state(const RunConfig& cfg);

struct Batch {
  std::vector<Tensor> lr, hr;
};

// Pure function of (cfg.train.seed, iter): element b derives its generator
// from mix(mix(seed, iter), b), picks a record, samples an aligned patch,
// and applies one shared dihedral augmentation to both members.
Batch make_batch(const std::vector<LoadedPair>& data, const RunConfig& cfg,
                 int64_t iter);

// Global-norm gradient clip (clip <= 0 disables) followed by one optimizer
// update at learning rate `lr`. Adaptive moments are bias-corrected by the
// post-update iteration count. Exposed separately so tests can drive it.
void apply_gradients(TrainState& st, double lr, double clip = 1.0);

// Zero grads → forward → L1 → backward → apply_gradients(lr_at(iter)),
// then advance the iteration counter. Returns the loss value. A non-finite
// loss aborts with the first offending parameter named.
double train_step(TrainState& st, const Batch& batch);

// Binary snapshot: magic, version, canonical config text, every parameter
// and optimizer moment, the iteration counter, and a trailing CRC32.
// Loading rebuilds the state from the embedded config, or from *expect when
// given (first mismatching tensor name/shape reported). Bit-exact
// round-trip: save → load → save produces identical bytes.
void save_checkpoint(const TrainState& st, const std::string& path);
TrainState load_checkpoint(const std::string& path,
                           const RunConfig* expect = nullptr);

// Runs the loop from st.iter to total_iters. Appends one
// `iter<TAB>loss<TAB>lr` line per step to `log`, checkpoints into
// out_dir/ckpt_<iter>.himo every checkpoint_every steps (0 = never) and
// always writes out_dir/last.himo at the end. Returns the loss sequence.
std::vector<double> train(TrainState& st, const std::vector<LoadedPair>& data,
                          const std::string& out_dir, std::ostream& log);

}  // namespace himosa
