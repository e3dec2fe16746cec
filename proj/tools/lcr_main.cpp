// lcr: train / eval / bench / oracle / params / edges for the LCR video model.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lcr/harness.hpp"
#include "lcr/key_value.hpp"
#include "lcr/model.hpp"

namespace {

using KeyValues = std::map<std::string, std::string>;

const std::set<std::string> kModelKeys = {
    "name",     "frame_height",     "frame_width", "in_channels", "patch",     "depth",
    "hidden",   "heads",            "num_classes", "frames",      "tube_mask_ratio",
    "wkv_mode", "cell_clamp",       "cell_clamp_limit",           "position",  "edge_every_layer",
    "conv_kernel", "hidden_ratio"};

struct RunSetup {
  lcr::ModelConfig model;
  lcr::TrainConfig train;
  lcr::SyntheticVideoSpec data;
  std::uint64_t model_seed = 0;
};

// Config file first, then --set overrides, then dedicated flags.
RunSetup resolve(const std::string& config_path, const std::string& preset, const std::vector<std::string>& sets,
                 const KeyValues& flags) {
  KeyValues kv;
  if (!config_path.empty()) kv = lcr::read_key_value_file(config_path);
  for (const auto& s : sets) {
    for (const auto& [k, v] : lcr::parse_key_values(s)) kv[k] = v;
  }
  for (const auto& [k, v] : flags) kv[k] = v;

  std::string base = preset;
  if (auto it = kv.find("preset"); it != kv.end()) {
    if (base.empty()) base = it->second;
    kv.erase(it);
  }
  RunSetup setup;
  setup.model = lcr::ModelConfig::preset(base.empty() ? "tiny" : base);
  // harness default: clamp the cell for stability
  setup.model.cell_clamp = true;
  KeyValues model_kv, train_kv;
  for (const auto& [k, v] : kv) {
    if (kModelKeys.count(k)) model_kv[k] = v;
    else if (k == "samples") setup.data.samples = lcr::kv_size(k, v);
    else if (k == "noise") setup.data.noise = lcr::kv_double(k, v);
    else if (k == "data_seed") setup.data.seed = lcr::kv_size(k, v);
    else if (k == "model_seed") setup.model_seed = lcr::kv_size(k, v);
    else train_kv[k] = v;
  }
  setup.model = lcr::ModelConfig::from_key_values(model_kv, setup.model);
  setup.model.validate();
  setup.train = lcr::TrainConfig::from_key_values(train_kv, setup.train);
  setup.data.num_classes = setup.model.num_classes;
  setup.data.frames = setup.model.frames;
  setup.data.height = setup.model.frame_height;
  setup.data.width = setup.model.frame_width;
  return setup;
}

struct CommonOptions {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  KeyValues flags;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "key = value config file");
  cmd->add_option("-p,--preset", o.preset, "model preset (default tiny)");
  cmd->add_option("--set", o.sets, "override, e.g. --set lr=1e-3 (repeatable)");
}

// Registers --name as a string flag that lands in o.flags under `key`.
void add_flag_value(CLI::App* cmd, CommonOptions& o, const std::string& name, const std::string& key,
                    const std::string& help) {
  cmd->add_option_function<std::string>(
      "--" + name, [&o, key](const std::string& v) { o.flags[key] = v; }, help);
}

void print_row(const lcr::MetricsRow& r) {
  std::printf("step %6zu  loss %.4f  train_acc %.3f  val_acc %.3f\n", r.step, r.loss, r.train_acc, r.val_acc);
  std::fflush(stdout);
}

int cmd_train(const CommonOptions& o) {
  RunSetup s = resolve(o.config, o.preset, o.sets, o.flags);
  std::printf("model %s: %zu parameters, %zu tokens/frame, %zu frames\n", s.model.name.c_str(),
              lcr::param_count(s.model), s.model.tokens(), s.model.frames);
  const lcr::Dataset data = lcr::generate_dataset(s.data);
  std::printf("data: %zu train / %zu val clips\n", data.train.size(), data.val.size());
  lcr::LcrModel model = lcr::LcrModel::create(s.model, s.model_seed);
  const lcr::TrainResult r = lcr::train(model, s.train, data, print_row);
  std::printf("best val_acc %.3f at step %zu; final train_acc %.3f val_acc %.3f\n", r.best_val_acc, r.best_step,
              r.final_train_acc, r.final_val_acc);
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint) {
  RunSetup s = resolve(o.config, o.preset, o.sets, o.flags);
  const lcr::LcrModel model = lcr::load_checkpoint(checkpoint);
  s.data.num_classes = model.config.num_classes;
  s.data.frames = model.config.frames;
  s.data.height = model.config.frame_height;
  s.data.width = model.config.frame_width;
  const lcr::Dataset data = lcr::generate_dataset(s.data);
  std::printf("train_acc %.6f\nval_acc %.6f\n", lcr::evaluate(model, data.train), lcr::evaluate(model, data.val));
  return 0;
}

int cmd_bench(const std::vector<std::size_t>& lengths, std::size_t heads, std::size_t dim, std::size_t repeats) {
  const auto rows = lcr::bench_wkv(lengths, heads, dim, repeats);
  std::printf("%8s %14s %14s\n", "T", "recurrent_s", "bruteforce_s");
  for (const auto& r : rows) std::printf("%8zu %14.6f %14.6f\n", r.tokens, r.recurrent_seconds, r.bruteforce_seconds);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::printf("ratio T=%zu/T=%zu: recurrent %.2f, bruteforce %.2f\n", rows[i].tokens, rows[i - 1].tokens,
                rows[i].recurrent_seconds / rows[i - 1].recurrent_seconds,
                rows[i].bruteforce_seconds / rows[i - 1].bruteforce_seconds);
  }
  return 0;
}

int cmd_oracle(std::uint64_t seed) {
  int failures = 0;
  for (const auto& r : lcr::run_oracles(seed)) {
    std::printf("[%s] %s (%s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    failures += r.passed ? 0 : 1;
  }
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}

int cmd_params(const std::string& only, bool breakdown) {
  std::printf("%-12s %14s %10s %10s %8s %12s %10s\n", "preset", "params", "M", "table M", "diff", "TFLOPs",
              "table T");
  for (const auto& ref : lcr::reference_variants()) {
    if (!only.empty() && only != ref.preset) continue;
    const lcr::ModelConfig cfg = lcr::ModelConfig::preset(ref.preset);
    const std::size_t n = lcr::param_count(cfg);
    const double m = static_cast<double>(n) / 1e6;
    const double tflops = static_cast<double>(lcr::flops_estimate(cfg).flops_per_video()) / 1e12;
    std::printf("%-12s %14zu %10.2f %10.2f %+7.1f%% %12.4f %10.3f\n", ref.preset.c_str(), n, m,
                ref.params_millions, 100.0 * (m - ref.params_millions) / ref.params_millions, tflops,
                ref.flops_tera);
    if (breakdown) {
      for (const auto& [name, count] : lcr::param_breakdown(cfg).modules) {
        std::printf("    %-16s %12zu\n", name.c_str(), count);
      }
    }
  }
  return 0;
}

int cmd_edges(const CommonOptions& o, const std::string& out_dir, std::size_t motion) {
  RunSetup s = resolve(o.config, o.preset, o.sets, o.flags);
  if (motion >= 4) throw lcr::ConfigError("motion class must be 0..3");
  const lcr::VideoSample clip = lcr::render_video(static_cast<lcr::MotionClass>(motion), s.data, s.data.seed);
  std::filesystem::create_directories(out_dir);
  for (std::size_t t = 0; t < clip.frames; ++t) {
    const std::string path = out_dir + "/edges_" + std::to_string(t) + ".pgm";
    lcr::write_pgm(clip.edges[t], path);
    std::printf("%s: %zu edge pixels\n", path.c_str(), clip.edges[t].count());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSTM-CrossRWKV video model"};
  app.require_subcommand(1);

  CommonOptions train_opts;
  auto* train = app.add_subcommand("train", "train on the synthetic motion dataset");
  add_common(train, train_opts);
  add_flag_value(train, train_opts, "steps", "steps", "optimizer steps");
  add_flag_value(train, train_opts, "batch", "batch", "clips per step");
  add_flag_value(train, train_opts, "lr", "lr", "Adam learning rate");
  add_flag_value(train, train_opts, "seed", "seed", "training seed");
  add_flag_value(train, train_opts, "samples", "samples", "synthetic clips in total");
  add_flag_value(train, train_opts, "metrics", "metrics_path", "metrics log (step,loss,train_acc,val_acc)");
  add_flag_value(train, train_opts, "checkpoint", "checkpoint_path", "best checkpoint path");
  add_flag_value(train, train_opts, "eval-every", "eval_every", "evaluation interval");

  CommonOptions eval_opts;
  std::string eval_ckpt;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_opts);
  eval->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
  add_flag_value(eval, eval_opts, "samples", "samples", "synthetic clips in total");

  std::vector<std::size_t> lengths{1024, 2048};
  std::size_t bench_heads = 4, bench_dim = 16, repeats = 7;
  auto* bench = app.add_subcommand("bench", "time recurrent vs brute-force WKV");
  bench->add_option("--lengths", lengths, "token counts")->delimiter(',');
  bench->add_option("--heads", bench_heads);
  bench->add_option("--dim", bench_dim, "head dimension");
  bench->add_option("--repeats", repeats);

  std::uint64_t oracle_seed = 0;
  auto* oracle = app.add_subcommand("oracle", "run equivalence and gradient oracles");
  oracle->add_option("--seed", oracle_seed);

  std::string params_preset;
  bool breakdown = false;
  auto* params = app.add_subcommand("params", "parameter / FLOP accounting against the reference table");
  params->add_option("--preset", params_preset, "only this preset");
  params->add_flag("--breakdown", breakdown, "per-module counts");

  CommonOptions edge_opts;
  std::string out_dir = "edges";
  std::size_t motion = 0;
  auto* edges = app.add_subcommand("edges", "dump edge maps of a synthetic clip as PGM files");
  add_common(edges, edge_opts);
  edges->add_option("-o,--out", out_dir, "output directory");
  edges->add_option("--motion", motion, "0 left, 1 right, 2 rotate, 3 scale");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_opts);
    if (*eval) return cmd_eval(eval_opts, eval_ckpt);
    if (*bench) return cmd_bench(lengths, bench_heads, bench_dim, repeats);
    if (*oracle) return cmd_oracle(oracle_seed);
    if (*params) return cmd_params(params_preset, breakdown);
    if (*edges) return cmd_edges(edge_opts, out_dir, motion);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
