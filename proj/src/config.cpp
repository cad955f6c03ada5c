#include "himosa/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace himosa {

std::string optimizer_name(Optimizer o) {
  switch (o) {
    case Optimizer::adam_like: return "adam_like";
    case Optimizer::sgd_momentum: return "sgd_momentum";
  }
  throw ContractError("unknown optimizer");
}

Optimizer optimizer_from_name(const std::string& name) {
  if (name == "adam_like") return Optimizer::adam_like;
  if (name == "sgd_momentum") return Optimizer::sgd_momentum;
  throw ConfigError("optimizer must be adam_like or sgd_momentum; got '" +
                    name + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (total_iters < 1) fail("total_iters must be >= 1");
  if (warmup_iters < 0) fail("warmup_iters must be >= 0");
  if (warmup_iters >= total_iters) fail("warmup_iters must be < total_iters");
  for (size_t i = 0; i < decay_points.size(); ++i) {
    if (decay_points[i] >= total_iters) {
      fail("decay_points must be < total_iters");
    }
    if (i > 0 && decay_points[i] <= decay_points[i - 1]) {
      fail("decay_points must be strictly ascending");
    }
  }
  if (!(base_lr > 0)) fail("base_lr must be > 0");
  if (!(decay_factor > 0)) fail("decay_factor must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (patch < 1) fail("patch must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0 (0 = never)");
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(trim(cur));
  return out;
}

int64_t parse_int(const std::string& key, const std::string& s) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError(key + ": expected an integer, got '" + s + "'");
  }
  return v;
}

uint64_t parse_uint(const std::string& key, const std::string& s) {
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + s +
                      "'");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    }
    if (!kv.emplace(key, value).second) {
      throw ConfigError("duplicate config key '" + key + "'");
    }
  }

  RunConfig cfg;
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::string();
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto set_int = [&](const char* key, int64_t& field) {
    if (std::string v = take(key); !v.empty()) field = parse_int(key, v);
  };
  auto set_double = [&](const char* key, double& field) {
    if (std::string v = take(key); !v.empty()) field = parse_double(key, v);
  };
  auto set_bool = [&](const char* key, bool& field) {
    if (std::string v = take(key); !v.empty()) field = parse_bool(key, v);
  };

  set_int("n_blocks", cfg.model.n_blocks);
  set_int("n_layers", cfg.model.n_layers);
  set_int("channels", cfg.model.channels);
  set_int("base_window", cfg.model.base_window);
  if (std::string v = take("ratios"); !v.empty()) {
    cfg.model.ratios.clear();
    for (const std::string& item : split_list(v)) {
      cfg.model.ratios.push_back(parse_double("ratios", item));
    }
  }
  if (std::string v = take("sparsity"); !v.empty()) {
    cfg.model.sparsity.clear();
    for (const std::string& item : split_list(v)) {
      cfg.model.sparsity.push_back(parse_int("sparsity", item));
    }
  }
  set_int("n_experts", cfg.model.n_experts);
  set_int("expert_dim", cfg.model.expert_dim);
  set_int("scale", cfg.model.scale);
  set_bool("use_norm", cfg.model.use_norm);
  set_bool("use_gate", cfg.model.use_gate);
  set_double("glu_expand", cfg.model.glu_expand);
  set_int("cab_reduction", cfg.model.cab_reduction);
  if (std::string v = take("selection_strategy"); !v.empty()) {
    cfg.model.selection_strategy = selection_from_name(v);
  }

  set_int("total_iters", cfg.train.total_iters);
  set_int("warmup_iters", cfg.train.warmup_iters);
  set_double("base_lr", cfg.train.base_lr);
  if (std::string v = take("decay_points"); !v.empty()) {
    cfg.train.decay_points.clear();
    for (const std::string& item : split_list(v)) {
      cfg.train.decay_points.push_back(parse_int("decay_points", item));
    }
  }
  set_double("decay_factor", cfg.train.decay_factor);
  set_int("batch_size", cfg.train.batch_size);
  set_int("patch", cfg.train.patch);
  if (std::string v = take("seed"); !v.empty()) {
    cfg.train.seed = parse_uint("seed", v);
  }
  if (std::string v = take("optimizer"); !v.empty()) {
    cfg.train.optimizer = optimizer_from_name(v);
  }
  set_int("checkpoint_every", cfg.train.checkpoint_every);

  if (!kv.empty()) {
    throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  auto list_d = [](const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += format_double(v[i]);
    }
    return s;
  };
  auto list_i = [](const std::vector<int64_t>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(v[i]);
    }
    return s;
  };
  out << "n_blocks = " << cfg.model.n_blocks << '\n';
  out << "n_layers = " << cfg.model.n_layers << '\n';
  out << "channels = " << cfg.model.channels << '\n';
  out << "base_window = " << cfg.model.base_window << '\n';
  out << "ratios = " << list_d(cfg.model.ratios) << '\n';
  out << "sparsity = " << list_i(cfg.model.sparsity) << '\n';
  out << "n_experts = " << cfg.model.n_experts << '\n';
  out << "expert_dim = " << cfg.model.expert_dim << '\n';
  out << "scale = " << cfg.model.scale << '\n';
  out << "use_norm = " << (cfg.model.use_norm ? "true" : "false") << '\n';
  out << "use_gate = " << (cfg.model.use_gate ? "true" : "false") << '\n';
  out << "glu_expand = " << format_double(cfg.model.glu_expand) << '\n';
  out << "cab_reduction = " << cfg.model.cab_reduction << '\n';
  out << "selection_strategy = " << selection_name(cfg.model.selection_strategy)
      << '\n';
  out << "total_iters = " << cfg.train.total_iters << '\n';
  out << "warmup_iters = " << cfg.train.warmup_iters << '\n';
  out << "base_lr = " << format_double(cfg.train.base_lr) << '\n';
  out << "decay_points = " << list_i(cfg.train.decay_points) << '\n';
  out << "decay_factor = " << format_double(cfg.train.decay_factor) << '\n';
  out << "batch_size = " << cfg.train.batch_size << '\n';
  out << "patch = " << cfg.train.patch << '\n';
  out << "seed = " << cfg.train.seed << '\n';
  out << "optimizer = " << optimizer_name(cfg.train.optimizer) << '\n';
  out << "checkpoint_every = " << cfg.train.checkpoint_every << '\n';
  return out.str();
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config file: " + path);
  out << serialize_config(cfg);
  if (!out) throw IoError("failed writing config file: " + path);
}

}  // namespace himosa
