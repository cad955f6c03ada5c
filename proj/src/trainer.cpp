#include "himosa/trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <span>

#include "himosa/rng.hpp"

namespace himosa {

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ContractError("l1_loss: prediction and target shapes differ");
  }
  return mean(abs(sub(pred, target)));
}

double lr_at(const TrainConfig& cfg, int64_t t) {
  if (cfg.warmup_iters > 0 && t < cfg.warmup_iters) {
    return cfg.base_lr * static_cast<double>(t) /
           static_cast<double>(cfg.warmup_iters);
  }
  int64_t decays = 0;
  for (int64_t p : cfg.decay_points) {
    if (p <= t) ++decays;
  }
  return cfg.base_lr * std::pow(cfg.decay_factor, decays);
}

TrainState init_train_state(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.model.validate();
  cfg.train.validate();
  TrainState st;
  st.cfg = cfg;
  st.weights = init_weights(cfg.model, cfg.train.seed);
  const auto params = st.weights.named_params();
  st.opt.m.resize(params.size());
  st.opt.v.resize(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    st.opt.m[i].assign(static_cast<size_t>(params[i].second.numel()), 0.0);
    st.opt.v[i].assign(static_cast<size_t>(params[i].second.numel()), 0.0);
  }
  return st;
}

Batch make_batch(const std::vector<LoadedPair>& data, const RunConfig& cfg,
                 int64_t iter) {
  if (data.empty()) throw ContractError("make_batch: empty dataset");
  Batch batch;
  const uint64_t iter_seed =
      mix_seed(cfg.train.seed, static_cast<uint64_t>(iter));
  for (int64_t b = 0; b < cfg.train.batch_size; ++b) {
    std::mt19937_64 g(mix_seed(iter_seed, static_cast<uint64_t>(b)));
    const size_t idx = static_cast<size_t>(rng_below(g, data.size()));
    SampledPatch patch = sample_patch(data[idx].hr, data[idx].lr,
                                      cfg.train.patch, cfg.model.scale, g);
    patch = augment(std::move(patch), g);
    batch.lr.push_back(image_to_tensor(patch.lr));
    batch.hr.push_back(image_to_tensor(patch.hr));
  }
  return batch;
}

void apply_gradients(TrainState& st, double lr, double clip) {
  const auto params = st.weights.named_params();
  double sq_norm = 0.0;
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq_norm += g * g;
  }
  const double norm = std::sqrt(sq_norm);
  const double shrink = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;

  const bool adaptive = st.cfg.train.optimizer == Optimizer::adam_like;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.99, kEps = 1e-8, kMu = 0.9;
  const double step = static_cast<double>(st.iter + 1);
  const double corr1 = 1.0 - std::pow(kBeta1, step);
  const double corr2 = 1.0 - std::pow(kBeta2, step);

  for (size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p].second;
    if (!t.has_grad()) continue;
    const auto gv = t.grad();
    auto w = t.mutable_values();
    auto& m = st.opt.m[p];
    auto& v = st.opt.v[p];
    for (size_t i = 0; i < w.size(); ++i) {
      const double g = gv[i] * shrink;
      if (adaptive) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
        const double mhat = m[i] / corr1;
        const double vhat = v[i] / corr2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
      } else {
        m[i] = kMu * m[i] + g;
        w[i] -= lr * m[i];
      }
    }
  }
}

namespace {

// Diagnostic for a non-finite loss: the first parameter (then gradient)
// holding a non-finite value, or a note that all parameters are finite.
std::string first_non_finite(const HimosaWeights& w) {
  for (const auto& [name, t] : w.named_params()) {
    for (double v : t.values()) {
      if (!std::isfinite(v)) return "parameter " + name;
    }
  }
  for (const auto& [name, t] : w.named_params()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) return "gradient of " + name;
    }
  }
  return "all parameters finite (bad input batch?)";
}

}  // namespace

double train_step(TrainState& st, const Batch& batch) {
  if (batch.lr.empty() || batch.lr.size() != batch.hr.size()) {
    throw ContractError("train_step: malformed batch");
  }
  for (const auto& [name, t] : st.weights.named_params()) {
    Tensor(t).zero_grad();
  }
  const uint64_t run_seed =
      mix_seed(st.cfg.train.seed, static_cast<uint64_t>(st.iter));
  Tensor total;
  for (size_t i = 0; i < batch.lr.size(); ++i) {
    Tensor pred = himosa_forward(batch.lr[i], st.weights, run_seed);
    Tensor li = l1_loss(pred, batch.hr[i]);
    total = total.defined() ? add(total, li) : li;
  }
  Tensor loss = scale(total, 1.0 / static_cast<double>(batch.lr.size()));
  const double value = loss.values()[0];
  if (!std::isfinite(value)) {
    throw ContractError("non-finite loss at iteration " +
                        std::to_string(st.iter) + "; first offender: " +
                        first_non_finite(st.weights));
  }
  backward(loss);
  apply_gradients(st, lr_at(st.cfg.train, st.iter));
  ++st.iter;
  return value;
}

namespace {

constexpr char kMagic[4] = {'H', 'I', 'M', 'O'};
constexpr uint32_t kVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double d) {
  put_u64(out, std::bit_cast<uint64_t>(d));
}

struct Reader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) const {
    if (pos + n > bytes.size()) {
      throw IoError("checkpoint truncated: " + path);
    }
  }
  uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(bytes[pos++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

void put_tensor_record(std::vector<uint8_t>& out, const std::string& name,
                       const Shape& shape, std::span<const double> payload) {
  put_u32(out, uint32_t(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  out.push_back(0);  // dtype 0 = f64
  out.push_back(uint8_t(shape.size()));
  for (int64_t e : shape) put_u64(out, uint64_t(e));
  for (double d : payload) put_f64(out, d);
}

}  // namespace

void save_checkpoint(const TrainState& st, const std::string& path) {
  const auto params = st.weights.named_params();
  const bool adaptive = st.cfg.train.optimizer == Optimizer::adam_like;

  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  const std::string cfg_text = serialize_config(st.cfg);
  put_u32(out, uint32_t(cfg_text.size()));
  out.insert(out.end(), cfg_text.begin(), cfg_text.end());

  const uint32_t n_tensors =
      uint32_t(params.size() * (adaptive ? 3 : 2) + 1);
  put_u32(out, n_tensors);
  for (const auto& [name, t] : params) {
    put_tensor_record(out, name, t.shape(), t.values());
  }
  for (size_t p = 0; p < params.size(); ++p) {
    put_tensor_record(out, "opt.m/" + params[p].first,
                      params[p].second.shape(), st.opt.m[p]);
  }
  if (adaptive) {
    for (size_t p = 0; p < params.size(); ++p) {
      put_tensor_record(out, "opt.v/" + params[p].first,
                        params[p].second.shape(), st.opt.v[p]);
    }
  }
  const double iter_value = static_cast<double>(st.iter);
  put_tensor_record(out, "state.iter", Shape{1}, std::span(&iter_value, 1));

  const uint32_t crc =
      uint32_t(crc32(0L, out.data(), uInt(out.size())) & 0xFFFFFFFFu);
  put_u32(out, crc);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f.good()) throw IoError("cannot write checkpoint: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          std::streamsize(out.size()));
  f.flush();
  if (!f.good()) throw IoError("short write on checkpoint: " + path);
}

TrainState load_checkpoint(const std::string& path, const RunConfig* expect) {
  std::ifstream f(path, std::ios::binary);
  if (!f.good()) throw IoError("cannot open checkpoint: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw IoError("checkpoint truncated: " + path);

  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) {
    stored |= uint32_t(bytes[bytes.size() - 4 + size_t(i)]) << (8 * i);
  }
  const uint32_t actual = uint32_t(
      crc32(0L, bytes.data(), uInt(bytes.size() - 4)) & 0xFFFFFFFFu);
  if (stored != actual) {
    throw IoError("checkpoint CRC mismatch (corrupt file): " + path);
  }

  Reader r{bytes, 0, path};
  if (r.str(4) != std::string(kMagic, 4)) {
    throw IoError("not a checkpoint file: " + path);
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " +
                  std::to_string(version) + ": " + path);
  }
  const uint32_t cfg_len = r.u32();
  const std::string cfg_text = r.str(cfg_len);
  const RunConfig cfg = expect ? *expect : parse_config(cfg_text);

  TrainState st = init_train_state(cfg);
  const auto params = st.weights.named_params();
  std::vector<bool> seen(params.size(), false);
  auto find_param = [&](const std::string& name) -> int64_t {
    for (size_t i = 0; i < params.size(); ++i) {
      if (params[i].first == name) return int64_t(i);
    }
    return -1;
  };

  const uint32_t n_tensors = r.u32();
  bool saw_iter = false;
  for (uint32_t ti = 0; ti < n_tensors; ++ti) {
    const uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const uint8_t dtype = r.u8();
    if (dtype != 0) {
      throw IoError("checkpoint tensor " + name + " has unknown dtype " +
                    std::to_string(dtype));
    }
    const uint8_t rank = r.u8();
    Shape shape(rank);
    int64_t n = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      shape[d] = int64_t(r.u64());
      n *= shape[d];
    }
    std::vector<double> payload(static_cast<size_t>(n));
    for (double& v : payload) v = r.f64();

    if (name == "state.iter") {
      if (n != 1) throw ContractError("checkpoint state.iter is not scalar");
      st.iter = int64_t(std::llround(payload[0]));
      saw_iter = true;
      continue;
    }
    std::string base = name;
    std::vector<double>* moments = nullptr;
    if (name.starts_with("opt.m/")) {
      base = name.substr(6);
    } else if (name.starts_with("opt.v/")) {
      base = name.substr(6);
    }
    const int64_t pi = find_param(base);
    if (pi < 0) {
      throw ContractError("checkpoint tensor " + name +
                          " does not exist in the configured model");
    }
    const Tensor& dest = params[size_t(pi)].second;
    if (dest.shape() != shape) {
      std::string got, want;
      for (int64_t e : shape) got += std::to_string(e) + " ";
      for (int64_t e : dest.shape()) want += std::to_string(e) + " ";
      throw ContractError("checkpoint tensor " + name + " has shape [ " +
                          got + "] but the configured model expects [ " +
                          want + "]");
    }
    if (name.starts_with("opt.m/")) {
      moments = &st.opt.m[size_t(pi)];
    } else if (name.starts_with("opt.v/")) {
      moments = &st.opt.v[size_t(pi)];
    }
    if (moments) {
      *moments = std::move(payload);
    } else {
      Tensor t = dest;
      std::copy(payload.begin(), payload.end(), t.mutable_values().begin());
      seen[size_t(pi)] = true;
    }
  }
  if (r.pos != bytes.size() - 4) {
    throw IoError("checkpoint has trailing bytes: " + path);
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (!seen[i]) {
      throw ContractError("checkpoint is missing tensor " + params[i].first);
    }
  }
  if (!saw_iter) throw ContractError("checkpoint is missing state.iter");
  return st;
}

std::vector<double> train(TrainState& st, const std::vector<LoadedPair>& data,
                          const std::string& out_dir, std::ostream& log) {
  std::filesystem::create_directories(out_dir);
  std::vector<double> losses;
  const int64_t total = st.cfg.train.total_iters;
  while (st.iter < total) {
    const int64_t t = st.iter;
    const double lr = lr_at(st.cfg.train, t);
    const Batch batch = make_batch(data, st.cfg, t);
    const double loss = train_step(st, batch);
    char line[96];
    std::snprintf(line, sizeof(line), "%lld\t%.17g\t%.17g\n",
                  static_cast<long long>(t), loss, lr);
    log << line;
    losses.push_back(loss);
    if (st.cfg.train.checkpoint_every > 0 &&
        st.iter % st.cfg.train.checkpoint_every == 0 && st.iter < total) {
      save_checkpoint(st, out_dir + "/ckpt_" + std::to_string(st.iter) +
                              ".himo");
    }
  }
  save_checkpoint(st, out_dir + "/last.himo");
  return losses;
}

}  // namespace himosa
