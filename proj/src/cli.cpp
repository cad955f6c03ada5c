#include "himosa/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "himosa/checks.hpp"
#include "himosa/common.hpp"
#include "himosa/config.hpp"
#include "himosa/data.hpp"
#include "himosa/image.hpp"
#include "himosa/metrics.hpp"
#include "himosa/model.hpp"
#include "himosa/tensor.hpp"
#include "himosa/trainer.hpp"

namespace himosa {
namespace {

namespace fs = std::filesystem;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::pair<int64_t, int64_t> parse_size(const std::string& s) {
  const auto cut = s.find('x');
  const auto bad = [&]() -> ConfigError {
    return ConfigError("size must be HxW with positive integers, got: " + s);
  };
  if (cut == std::string::npos || cut == 0 || cut + 1 >= s.size()) throw bad();
  const auto number = [&](size_t lo, size_t hi) {
    int64_t v = 0;
    const char* last = s.data() + hi;
    const auto [p, ec] = std::from_chars(s.data() + lo, last, v);
    if (ec != std::errc() || p != last || v < 1) throw bad();
    return v;
  };
  return {number(0, cut), number(cut + 1, s.size())};
}

uint8_t luma8(const ImageBuffer& img, int64_t y, int64_t x) {
  const double l = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                   0.114 * img.at(y, x, 2);
  return static_cast<uint8_t>(std::clamp<long long>(std::llround(l), 0, 255));
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::string& resume,
              std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  const DatasetManifest manifest = load_manifest(data_path);
  const std::vector<LoadedPair> data = load_dataset(manifest, cfg.model.scale);
  TrainState st =
      resume.empty() ? init_train_state(cfg) : load_checkpoint(resume, &cfg);
  fs::create_directories(out_dir);
  const std::string log_path = (fs::path(out_dir) / "train.log").string();
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log.good()) throw IoError("cannot open log for writing: " + log_path);
  const std::vector<double> losses = train(st, data, out_dir, log);
  out << "iters\t" << st.iter << "\n";
  if (!losses.empty()) {
    out << "final_loss\t" << fmt("%.6g", losses.back()) << "\n";
  }
  out << "checkpoint\t" << (fs::path(out_dir) / "last.himo").string() << "\n";
  return 0;
}

int cmd_sr(const std::string& config_path, const std::string& ckpt,
           const std::string& in_path, const std::string& out_path,
           int64_t scale, std::ostream& out) {
  RunConfig cfg = load_config(config_path);
  if (scale != 0) {
    cfg.model.scale = scale;
    cfg.model.validate();
  }
  const TrainState st = load_checkpoint(ckpt, &cfg);
  const ImageBuffer lr = load_image(in_path);
  NoGradGuard guard;
  const ImageBuffer sr =
      tensor_to_image(himosa_forward(image_to_tensor(lr), st.weights));
  save_image(sr, out_path);
  out << "wrote\t" << out_path << "\t" << sr.width << "x" << sr.height << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt,
             const std::string& data_path, std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  const TrainState st = load_checkpoint(ckpt, &cfg);
  const DatasetManifest manifest = load_manifest(data_path);
  const std::vector<LoadedPair> data = load_dataset(manifest, cfg.model.scale);
  if (data.empty()) throw IoError("manifest has no records: " + data_path);
  const int64_t border = cfg.model.scale;
  NoGradGuard guard;
  out << "image\tpsnr\tssim\n";
  double sum_psnr = 0.0, sum_ssim = 0.0;
  for (size_t i = 0; i < data.size(); ++i) {
    const ImageBuffer sr = tensor_to_image(
        himosa_forward(image_to_tensor(data[i].lr), st.weights));
    const double p = psnr(sr, data[i].hr, border);
    const double s = ssim(sr, data[i].hr, border);
    sum_psnr += p;
    sum_ssim += s;
    out << fs::path(manifest.records[i].hr_path).filename().string() << "\t"
        << format_psnr(p) << "\t" << fmt("%.4f", s) << "\n";
  }
  const double n = static_cast<double>(data.size());
  out << "mean\t" << format_psnr(sum_psnr / n) << "\t"
      << fmt("%.4f", sum_ssim / n) << "\n";
  return 0;
}

int cmd_flops(const std::string& config_path, const std::string& size,
              std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  const auto [h, w] = parse_size(size);
  out << "input\t" << h << "x" << w << "\n";
  out << count_flops(cfg.model, h, w).text();
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& sweep,
               const std::string& data_path, std::ostream& out) {
  const RunConfig base = load_config(config_path);
  const DatasetManifest manifest = load_manifest(data_path);
  const std::vector<LoadedPair> data = load_dataset(manifest, base.model.scale);
  if (data.empty()) throw IoError("manifest has no records: " + data_path);

  struct Variant {
    std::string name;
    RunConfig cfg;
  };
  std::vector<Variant> variants;
  if (sweep == "selection") {
    for (Selection s : {Selection::content_aware, Selection::random,
                        Selection::sequential}) {
      RunConfig cfg = base;
      cfg.model.selection_strategy = s;
      variants.push_back({selection_name(s), std::move(cfg)});
    }
  } else if (sweep == "sparsity") {
    for (int64_t mult : {1, 2, 4}) {
      RunConfig cfg = base;
      for (int64_t& rho : cfg.model.sparsity) rho *= mult;
      variants.push_back({"rho_x" + std::to_string(mult), std::move(cfg)});
    }
  } else {  // experts
    std::vector<int64_t> counts{1, 2, 4, 8, base.model.n_experts};
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    for (int64_t m : counts) {
      RunConfig cfg = base;
      cfg.model.n_experts = m;
      variants.push_back({"m" + std::to_string(m), std::move(cfg)});
    }
  }

  out << "variant\tparams\tflops64\tloss\tpsnr\tssim\n";
  for (Variant& v : variants) {
    v.cfg.model.validate();
    v.cfg.train.checkpoint_every = 0;
    TrainState st = init_train_state(v.cfg);
    double last_loss = 0.0;
    while (st.iter < v.cfg.train.total_iters) {
      last_loss = train_step(st, make_batch(data, v.cfg, st.iter));
    }
    double sum_psnr = 0.0, sum_ssim = 0.0;
    {
      NoGradGuard guard;
      for (const LoadedPair& pair : data) {
        const ImageBuffer sr = tensor_to_image(
            himosa_forward(image_to_tensor(pair.lr), st.weights));
        sum_psnr += psnr(sr, pair.hr, v.cfg.model.scale);
        sum_ssim += ssim(sr, pair.hr, v.cfg.model.scale);
      }
    }
    const double n = static_cast<double>(data.size());
    const CostReport cost = count_flops(v.cfg.model, 64, 64);
    out << v.name << "\t" << cost.total_params << "\t" << cost.total_flops
        << "\t" << fmt("%.6g", last_loss) << "\t" << format_psnr(sum_psnr / n)
        << "\t" << fmt("%.4f", sum_ssim / n) << "\n";
  }
  if (sweep == "selection") {
    out << "# full-scale reference ordering (x4): content_aware 30.80 dB > "
           "random 30.74 dB > sequential 30.73 dB\n";
  }
  return 0;
}

int cmd_check(const std::string& suite, std::ostream& out) {
  std::vector<OracleReport> reports;
  if (suite == "grad" || suite == "all") {
    std::vector<OracleReport> g = run_grad_suite();
    reports.insert(reports.end(), g.begin(), g.end());
  }
  if (suite == "oracle" || suite == "all") {
    std::vector<OracleReport> o = run_oracle_suite();
    reports.insert(reports.end(), o.begin(), o.end());
  }
  int64_t passed = 0;
  for (const OracleReport& r : reports) {
    out << r.line() << "\n";
    if (r.pass) ++passed;
  }
  out << passed << "/" << reports.size() << " passed\n";
  return passed == static_cast<int64_t>(reports.size()) ? 0 : 1;
}

int cmd_routes(const std::string& config_path, const std::string& ckpt,
               const std::string& in_path, const std::string& out_dir,
               std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  const TrainState st = load_checkpoint(ckpt, &cfg);
  const ImageBuffer lr = load_image(in_path);
  RoutingTrace trace;
  {
    NoGradGuard guard;
    himosa_forward(image_to_tensor(lr), st.weights, 0, &trace);
  }
  fs::create_directories(out_dir);
  int64_t written = 0;
  for (const LayerTrace& lt : trace.layers) {
    const WindowLayout& lay = lt.layout;
    for (int64_t e = 0; e < cfg.model.n_experts; ++e) {
      // Selection flags over the layer's padded grid; the image itself
      // occupies the top-left orig_h x orig_w corner of it.
      std::vector<uint8_t> sel(
          static_cast<size_t>(lay.padded_h * lay.padded_w), 0);
      for (int64_t wi = 0; wi < lay.windows(); ++wi) {
        const int64_t base_y = (wi / lay.grid_w) * lay.ws;
        const int64_t base_x = (wi % lay.grid_w) * lay.ws;
        for (int64_t t : lt.selected[static_cast<size_t>(wi)]
                                    [static_cast<size_t>(e)]) {
          const int64_t y = base_y + t / lay.ws;
          const int64_t x = base_x + t % lay.ws;
          sel[static_cast<size_t>(y * lay.padded_w + x)] = 1;
        }
      }
      ImageBuffer mask = make_image(lr.width, lr.height);
      for (int64_t y = 0; y < lr.height; ++y) {
        for (int64_t x = 0; x < lr.width; ++x) {
          const uint8_t g = luma8(lr, y, x);
          if (sel[static_cast<size_t>(y * lay.padded_w + x)]) {
            mask.at(y, x, 0) = static_cast<uint8_t>(g / 2 + 128);
            mask.at(y, x, 1) = static_cast<uint8_t>(g / 2);
            mask.at(y, x, 2) = static_cast<uint8_t>(g / 2);
          } else {
            mask.at(y, x, 0) = g;
            mask.at(y, x, 1) = g;
            mask.at(y, x, 2) = g;
          }
        }
      }
      const std::string name = "b" + std::to_string(lt.block) + "_l" +
                               std::to_string(lt.layer) + "_e" +
                               std::to_string(e) + ".png";
      save_image(mask, (fs::path(out_dir) / name).string());
      ++written;
    }
  }
  out << "wrote\t" << written << "\tmasks to " << out_dir << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"HIMOSA single-image super-resolution toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir, resume, ckpt, in_path,
      out_path;
  std::string size = "256x256", sweep, suite = "all";
  int64_t scale = 0;

  CLI::App* train_cmd = app.add_subcommand(
      "train", "Fit a model; writes checkpoints and a loss log");
  train_cmd->add_option("--config", config_path, "run configuration file")
      ->required();
  train_cmd->add_option("--data", data_path, "dataset manifest")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");

  CLI::App* sr_cmd = app.add_subcommand("sr", "Super-resolve one image");
  sr_cmd->add_option("--config", config_path, "run configuration file")
      ->required();
  sr_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  sr_cmd->add_option("--in", in_path, "input image")->required();
  sr_cmd->add_option("--out", out_path, "output image")->required();
  sr_cmd->add_option("--scale", scale, "override the configured scale");

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "PSNR/SSIM table over a manifest");
  eval_cmd->add_option("--config", config_path, "run configuration file")
      ->required();
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_path, "dataset manifest")->required();

  CLI::App* flops_cmd =
      app.add_subcommand("flops", "Analytic parameter and FLOP report");
  flops_cmd->add_option("--config", config_path, "run configuration file")
      ->required();
  flops_cmd->add_option("--size", size, "input extent as HxW (default 256x256)");

  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "Train and score a sweep of config variants");
  ablate_cmd->add_option("--config", config_path, "run configuration file")
      ->required();
  ablate_cmd
      ->add_option("--sweep", sweep, "sparsity, experts, or selection")
      ->required()
      ->check(CLI::IsMember({"sparsity", "experts", "selection"}));
  ablate_cmd->add_option("--data", data_path, "dataset manifest")->required();

  CLI::App* check_cmd =
      app.add_subcommand("check", "Run the verification suites");
  check_cmd->add_option("--suite", suite, "grad, oracle, or all")
      ->check(CLI::IsMember({"grad", "oracle", "all"}));

  CLI::App* routes_cmd = app.add_subcommand(
      "routes", "Render per-expert token selection masks");
  routes_cmd->add_option("--config", config_path, "run configuration file")
      ->required();
  routes_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  routes_cmd->add_option("--in", in_path, "input image")->required();
  routes_cmd->add_option("--out", out_dir, "output directory")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (train_cmd->parsed()) {
      return cmd_train(config_path, data_path, out_dir, resume, out);
    }
    if (sr_cmd->parsed()) {
      return cmd_sr(config_path, ckpt, in_path, out_path, scale, out);
    }
    if (eval_cmd->parsed()) return cmd_eval(config_path, ckpt, data_path, out);
    if (flops_cmd->parsed()) return cmd_flops(config_path, size, out);
    if (ablate_cmd->parsed()) {
      return cmd_ablate(config_path, sweep, data_path, out);
    }
    if (check_cmd->parsed()) return cmd_check(suite, out);
    if (routes_cmd->parsed()) {
      return cmd_routes(config_path, ckpt, in_path, out_dir, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace himosa
