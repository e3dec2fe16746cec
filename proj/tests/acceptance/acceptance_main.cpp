// Runs the eight acceptance checks and prints one PASS/FAIL line for each.
// Exit status is the number of failed checks. Criterion numbers given on the
// command line restrict the run to those checks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lcr/cross_rwkv.hpp"
#include "lcr/edge_prompt.hpp"
#include "lcr/grad_check.hpp"
#include "lcr/harness.hpp"
#include "lcr/lcr_cell.hpp"
#include "lcr/model.hpp"
#include "lcr/ops.hpp"
#include "lcr/token_shift.hpp"
#include "lcr/wkv.hpp"

using namespace lcr;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void randomize(Tensor t, Rng& rng, double lo, double hi) {
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
}

// ---- 1 ------------------------------------------------------------------

Outcome wkv_equivalence() {
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng.index(32), H = 1 + rng.index(4), D = 1 + rng.index(16);
    const Tensor k = rng.uniform_tensor({T, H, D}, -1, 1), v = rng.uniform_tensor({T, H, D}, -1, 1);
    const Tensor w = decay_from_omega(rng.uniform_tensor({H, D}, -3, 1));
    const Tensor u = rng.uniform_tensor({H, D}, -1, 1);
    worst = std::max(worst, max_abs_diff(wkv_recurrent(k, v, w, u).data(), wkv_bruteforce(k, v, w, u).data()));
  }
  return {worst < 1e-10, "200 instances, max abs diff " + fmt("%.3g", worst)};
}

// ---- 2 ------------------------------------------------------------------

struct GradCase {
  std::string name;
  std::vector<Shape> shapes;
  std::function<Tensor(const std::vector<Tensor>&)> fn;
  double lo = -1.0, hi = 1.0;
};

std::vector<GradCase> op_cases() {
  const GridGeometry g{2, 2, true};
  return {
      {"matmul", {{3, 4}, {2, 4, 5}}, [](auto& x) { return matmul(x[0], x[1]); }},
      {"sigmoid", {{4, 5}}, [](auto& x) { return sigmoid(x[0]); }},
      {"tanh", {{4, 5}}, [](auto& x) { return tanh(x[0]); }},
      {"relu", {{4, 5}}, [](auto& x) { return relu(x[0]); }, 0.1, 1.0},
      {"silu", {{4, 5}}, [](auto& x) { return silu(x[0]); }},
      {"exp", {{4, 5}}, [](auto& x) { return exp(x[0]); }},
      {"square", {{4, 5}}, [](auto& x) { return square(x[0]); }},
      {"add_sub_mul", {{3, 4}, {4}}, [](auto& x) { return (x[0] + x[1]) * (x[0] - x[1]); }},
      {"scale_add_scalar", {{3, 4}}, [](auto& x) { return add_scalar(scale(x[0], -1.3), 0.2); }},
      {"layer_norm", {{5, 8}, {8}, {8}}, [](auto& x) { return layer_norm(x[0], x[1], x[2]); }},
      {"grouped_layer_norm", {{3, 16}, {16}, {16}}, [](auto& x) { return grouped_layer_norm(x[0], 4, x[1], x[2]); }},
      {"sum_mean", {{3, 4}}, [](auto& x) { return scale(sum(x[0]), 0.5) + mean(square(x[0])); }},
      {"mean_axis", {{2, 5, 4}}, [](auto& x) { return mean_axis(x[0], 1); }},
      {"clamp", {{4, 5}}, [](auto& x) { return clamp(x[0], -0.5, 0.5); }},
      {"log_softmax", {{3, 6}}, [](auto& x) { return log_softmax(x[0]); }},
      {"concat_slice_reshape", {{3, 4}, {2, 4}},
       [](auto& x) { return reshape(slice(concat({x[0], x[1]}, 0), 0, 1, 4), {4, 3}); }},
      {"expand", {{3, 4}}, [](auto& x) { return expand(x[0], {2}); }},
      {"replace_rows", {{5, 4}, {4}}, [](auto& x) { return replace_rows(x[0], {1, 0, 0, 1, 0}, x[1]); }},
      {"patchify", {{2, 4, 4}}, [](auto& x) { return patchify(x[0], 2); }},
      {"wkv_recurrent", {{6, 2, 3}, {6, 2, 3}, {2, 3}, {2, 3}},
       [](auto& x) { return wkv_recurrent(x[0], x[1], decay_from_omega(x[2]), x[3]); }},
      {"wkv_bruteforce", {{6, 2, 3}, {6, 2, 3}, {2, 3}, {2, 3}},
       [](auto& x) { return wkv_bruteforce(x[0], x[1], decay_from_omega(x[2]), x[3]); }},
      {"wkv_bidirectional", {{6, 2, 3}, {6, 2, 3}, {2, 3}, {2, 3}},
       [](auto& x) { return wkv_bidirectional(x[0], x[1], decay_from_omega(x[2]), x[3]); }},
      {"apply_receptance", {{4, 2, 3}, {4, 2, 3, 3}}, [](auto& x) { return apply_receptance(x[0], x[1]); }},
      {"q_shift", {{5, 8}, {8}}, [g](auto& x) { return q_shift(x[0], g, x[1]); }},
      {"causal_depthwise_conv", {{5, 4}, {3, 4}, {4}},
       [](auto& x) { return causal_depthwise_conv(x[0], x[1], x[2]); }},
      {"rotary_embed", {{5, 4}, {2}}, [](auto& x) { return rotary_embed(x[0], x[1]); }},
      {"cell_step", {{3, 4}, {3, 4}, {3, 4}},
       [](auto& x) {
         RecurrentState s = RecurrentState::zeros({3, 4});
         s.cell = x[2];
         const CellOutput out = cell_step(x[0], x[1], s);
         return out.output + out.state.cell;
       }},
      {"smoothed_ce", {{3, 4}}, [](auto& x) { return smoothed_ce(x[0], {0, 3, 1}, 0.1); }},
  };
}

GradCheckReport check_case(const GradCase& c, Rng& rng) {
  std::vector<Tensor> xs;
  std::vector<NamedParam> params;
  for (std::size_t i = 0; i < c.shapes.size(); ++i) {
    xs.push_back(rng.uniform_tensor(c.shapes[i], c.lo, c.hi, true));
    params.push_back({"x" + std::to_string(i), xs.back()});
  }
  const Tensor w = rng.uniform_tensor(c.fn(xs).shape(), -1.5, 1.5);
  return grad_check([&] { return sum(c.fn(xs) * w); }, params);
}

// Every parameter gets signal, including the zero-initialized ones.
void randomize_params(const std::vector<NamedParam>& params, Rng& rng, double spread) {
  for (const auto& p : params) {
    if (p.name.find("mix_") != std::string::npos) randomize(p.tensor, rng, 0.05, 0.95);
    else if (p.name.find("wkv_omega") != std::string::npos) randomize(p.tensor, rng, -2.0, 0.0);
    else if (p.name.find("gain") != std::string::npos) randomize(p.tensor, rng, 0.5, 1.5);
    else randomize(p.tensor, rng, -spread, spread);
  }
}

ModelConfig gradient_model_config() {
  ModelConfig c;
  c.frame_height = c.frame_width = 16;
  c.patch = 8;
  c.hidden = 16;
  c.heads = 4;
  c.depth = 1;
  c.num_classes = 3;
  c.frames = 3;
  return c;
}

GradCheckReport full_model_check(std::uint64_t seed) {
  const ModelConfig cfg = gradient_model_config();
  Rng rng(seed);
  const LcrModel m = LcrModel::create(cfg, 12);
  randomize_params(m.parameters(), rng, 0.4);
  std::vector<Tensor> frames;
  std::vector<EdgeMap> edges;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    frames.push_back(rng.uniform_tensor({cfg.in_channels, cfg.frame_height, cfg.frame_width}, 0, 1));
    EdgeMap e;
    e.height = cfg.frame_height;
    e.width = cfg.frame_width;
    e.pixels.resize(e.height * e.width);
    for (auto& p : e.pixels) p = rng.uniform() < 0.25 ? 1 : 0;
    edges.push_back(std::move(e));
  }
  const Tensor w = rng.uniform_tensor({cfg.num_classes}, -1, 1);
  StreamOptions opts;
  opts.masks = {make_tube_mask(cfg.patches(), 0.5, 3)};
  return grad_check(
      [&] {
        FrameStream s(m, 1, opts);
        for (std::size_t t = 0; t < cfg.frames; ++t) s.push(frames[t], std::span<const EdgeMap>(&edges[t], 1));
        return sum(s.logits() * w);
      },
      m.parameters(), 1e-5, 8);
}

Outcome gradient_suite() {
  Rng rng(2);
  double worst_op = 0.0;
  std::string worst_name;
  std::size_t probes = 0;
  for (const auto& c : op_cases()) {
    const GradCheckReport r = check_case(c, rng);
    probes += r.probes;
    if (r.max_rel_error >= worst_op) {
      worst_op = r.max_rel_error;
      worst_name = c.name + ": " + r.describe();
    }
  }
  const GradCheckReport model = full_model_check(12);
  std::ostringstream os;
  os << probes << " op probes, worst " << fmt("%.2e", worst_op) << " (" << worst_name << "); full model "
     << model.probes << " probes, worst " << fmt("%.2e", model.max_rel_error) << " (" << model.describe() << ")";
  return {worst_op < 1e-6 && model.max_rel_error < 1e-5, os.str()};
}

// ---- 3 ------------------------------------------------------------------

Outcome linear_scan() {
  const auto rows = bench_wkv({1024, 2048}, 4, 16, 7);
  const double rec = rows[1].recurrent_seconds / rows[0].recurrent_seconds;
  const double brute = rows[1].bruteforce_seconds / rows[0].bruteforce_seconds;
  return {rec <= 2.5 && brute >= 3.0,
          "recurrent 2T/T " + fmt("%.2f", rec) + ", brute force 2T/T " + fmt("%.2f", brute)};
}

// ---- 4 ------------------------------------------------------------------

Outcome accounting() {
  bool ok = true;
  std::ostringstream os;
  for (const auto& ref : reference_variants()) {
    const ModelConfig cfg = ModelConfig::preset(ref.preset);
    const ParamBreakdown b = param_breakdown(cfg);
    const double m = static_cast<double>(b.total) / 1e6;
    ok = ok && b.total == param_count(cfg) && b.total == LcrModel::create(cfg, 0).parameter_count();
    std::printf("  %-11s %10zu params (%.2fM, table %.2fM, %+.1f%%):", ref.preset.c_str(), b.total, m,
                ref.params_millions, 100.0 * (m / ref.params_millions - 1.0));
    for (const auto& [name, count] : b.modules) std::printf(" %s=%zu", name.c_str(), count);
    std::printf("\n");
    if (ref.preset == "LCR-S" || ref.preset == "LCR-224") {
      const bool within = std::abs(m / ref.params_millions - 1.0) <= 0.30;
      ok = ok && within;
      os << ref.preset << " " << fmt("%.2fM", m) << (within ? " within" : " outside") << " 30% of "
         << fmt("%.2fM", ref.params_millions) << "; ";
    }
  }
  return {ok, os.str() + "counts agree with instantiated models"};
}

// ---- 5 ------------------------------------------------------------------

std::size_t exhaustive_otsu(const Histogram256& hist) {
  std::size_t best = 0;
  double best_var = -1.0;
  for (std::size_t t = 0; t < 256; ++t) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (std::size_t i = 0; i < 256; ++i) {
      const double c = static_cast<double>(hist[i]);
      (i < t ? n0 : n1) += c;
      (i < t ? s0 : s1) += c * static_cast<double>(i);
    }
    const double n = n0 + n1;
    const double var = n0 > 0 && n1 > 0 ? (n0 / n) * (n1 / n) * std::pow(s0 / n0 - s1 / n1, 2) : 0.0;
    if (var > best_var) {
      best_var = var;
      best = t;
    }
  }
  return best;
}

Outcome edge_invariants() {
  Rng rng(5);
  std::size_t otsu_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Histogram256 hist{};
    const std::size_t filled = 1 + rng.index(256);
    for (std::size_t i = 0; i < filled; ++i) hist[rng.index(256)] += 1 + rng.index(1000);
    otsu_mismatch += otsu_threshold(hist) == exhaustive_otsu(hist) ? 0 : 1;
  }

  const ModelConfig cfg = ModelConfig::preset("tiny");
  std::size_t nonzero = 0, edge_pixels = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const LcrModel model = LcrModel::create(cfg, 100 + trial);
    Image frame(3, cfg.frame_height, cfg.frame_width);
    for (double& p : frame.pixels) p = rng.uniform();
    edge_pixels += adaptive_canny(frame).count();
    const Tensor tokens = edge_prompt(frame, model.edge_embed, cfg.geometry());
    nonzero += static_cast<std::size_t>(std::count_if(tokens.data().begin(), tokens.data().end(),
                                                      [](double x) { return x != 0.0; }));
  }

  const Shape s{cfg.tokens(), cfg.hidden};
  RecurrentState state = RecurrentState::zeros(s);
  state.cell = rng.uniform_tensor(s, -3, 3);
  const std::vector<double> start(state.cell.data().begin(), state.cell.data().end());
  bool frozen = true;
  for (int t = 0; t < 10; ++t) {
    state = cell_step(rng.uniform_tensor(s, -4, 4), Tensor::zeros(s), state).state;
    frozen = frozen && std::equal(start.begin(), start.end(), state.cell.data().begin());
  }

  std::ostringstream os;
  os << "otsu mismatches " << otsu_mismatch << "/1000; nonzero prompt values " << nonzero << " over 20 frames ("
     << edge_pixels << " edge pixels); cell frozen over 10 frames: " << (frozen ? "yes" : "no");
  return {otsu_mismatch == 0 && nonzero == 0 && edge_pixels > 0 && frozen, os.str()};
}

// ---- 6 ------------------------------------------------------------------

Outcome tube_masks() {
  Rng rng(6);
  bool ok = true;
  std::size_t checked = 0;
  for (const char* preset : {"tiny", "LCR-S", "LCR-224"}) {
    const ModelConfig cfg = ModelConfig::preset(preset);
    const std::size_t L = cfg.patches(), C = 8;
    const Tensor token = Tensor::full({C}, 7.5);
    for (double ratio : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<Tensor> frames;
        for (int t = 0; t < 4; ++t) frames.push_back(rng.uniform_tensor({L + 1, C}, -1, 1));
        const auto [masked, mask] = tube_mask(frames, ratio, seed, token);
        const auto again = make_tube_mask(L, ratio, seed);
        ok = ok && mask.masked_count() == static_cast<std::size_t>(std::floor(ratio * static_cast<double>(L)));
        ok = ok && mask.patches == again.patches && mask.patches.size() == L;
        for (std::size_t t = 0; t < frames.size(); ++t) {
          for (std::size_t n = 0; n <= L; ++n) {
            const bool hit = n < L && mask.patches[n] != 0;
            for (std::size_t c = 0; c < C; ++c) {
              const double want = hit ? 7.5 : frames[t].at(n * C + c);
              ok = ok && masked[t].at(n * C + c) == want;
            }
          }
        }
        ++checked;
      }
    }
  }
  // different seeds give different sets
  ok = ok && make_tube_mask(196, 0.5, 1).patches != make_tube_mask(196, 0.5, 2).patches;
  return {ok, std::to_string(checked) + " masks over L in {16, 196}, 4 frames each"};
}

// ---- 7 ------------------------------------------------------------------

Outcome learning() {
  const Dataset data = generate_dataset(SyntheticVideoSpec{});
  ModelConfig cfg = ModelConfig::preset("tiny");
  cfg.cell_clamp = true;
  LcrModel model = LcrModel::create(cfg, 0);
  const TrainConfig tc;
  const TrainResult r = train(model, tc, data, [](const MetricsRow& row) {
    std::printf("  step %4zu loss %.4f train_acc %.3f val_acc %.3f\n", row.step, row.loss, row.train_acc,
                row.val_acc);
    std::fflush(stdout);
  });
  std::ostringstream os;
  os << tc.steps << " steps, train_acc " << fmt("%.3f", r.final_train_acc) << ", val_acc "
     << fmt("%.3f", r.final_val_acc) << " (best " << fmt("%.3f", r.best_val_acc) << " at step " << r.best_step << ")";
  return {r.final_train_acc >= 0.90 && r.final_val_acc >= 0.70, os.str()};
}

// ---- 8 ------------------------------------------------------------------

Outcome streaming() {
  const ModelConfig cfg = ModelConfig::preset("tiny");
  const LcrModel model = LcrModel::create(cfg, 3);
  const std::size_t one_state = RecurrentState::zeros({cfg.tokens(), cfg.hidden}).bytes();
  Rng rng(8);
  FrameStream stream(model, 1);
  bool ok = true;
  std::size_t peak = 0;
  for (std::size_t t = 0; t < 64; ++t) {
    // frames are produced one at a time; no [T, ...] tensor exists
    stream.push(rng.uniform_tensor({cfg.in_channels, cfg.frame_height, cfg.frame_width}, 0, 1));
    peak = std::max(peak, stream.retained_bytes());
    ok = ok && stream.frames_seen() == t + 1 && stream.retained_bytes() == one_state;
  }
  for (double v : stream.logits().data()) ok = ok && std::isfinite(v);
  return {ok && peak == one_state, "64 frames, peak retained " + std::to_string(peak) + " bytes, one state " +
                                       std::to_string(one_state) + " bytes"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  struct Criterion {
    const char* name;
    double budget_seconds;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"wkv-equivalence", 10, wkv_equivalence}, {"gradient-suite", 120, gradient_suite},
      {"linear-scan", 300, linear_scan},        {"param-accounting", 10, accounting},
      {"edge-invariants", 30, edge_invariants}, {"tube-mask", 10, tube_masks},
      {"learning", 900, learning},              {"streaming-memory", 60, streaming},
  };
  int failed = 0, index = 0;
  for (const auto& c : criteria) {
    ++index;
    if (!only.empty() && !only.contains(index)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = out.passed && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s %d %s: %s [%.1fs, budget %.0fs%s]\n", pass ? "PASS" : "FAIL", index, c.name,
                out.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed;
}
