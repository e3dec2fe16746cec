#include "lcr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "lcr/key_value.hpp"
#include "lcr/ops.hpp"
#include "lcr/random.hpp"
#include "lcr/wkv.hpp"

namespace lcr {

// ---- synthetic motion videos -------------------------------------------

const char* motion_name(MotionClass motion) {
  switch (motion) {
    case MotionClass::kTranslateLeft: return "translate-left";
    case MotionClass::kTranslateRight: return "translate-right";
    case MotionClass::kRotate: return "rotate";
    case MotionClass::kScale: return "scale";
  }
  return "?";
}

std::span<const double> VideoSample::frame(std::size_t t) const {
  const std::size_t n = channels * height * width;
  return std::span<const double>(pixels).subspan(t * n, n);
}

Image VideoSample::frame_image(std::size_t t) const {
  Image img(channels, height, width);
  const auto f = frame(t);
  std::copy(f.begin(), f.end(), img.pixels.begin());
  return img;
}

Tensor VideoSample::video_tensor() const {
  Tensor out({channels, frames, height, width});
  auto od = out.mutable_data();
  const std::size_t hw = height * width;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(pixels.begin() + static_cast<long>((t * channels + c) * hw), hw,
                  od.begin() + static_cast<long>((c * frames + t) * hw));
  return out;
}

namespace {

struct Pose {
  double cx, cy, angle, size;
};

bool inside(ShapeKind shape, double size, double u, double v) {
  switch (shape) {
    case ShapeKind::kRectangle:
      return std::abs(u) <= size && std::abs(v) <= 0.5 * size;
    case ShapeKind::kDisk: {
      // elongated so that rotation is visible
      const double a = u / size, b = v / (0.55 * size);
      return a * a + b * b <= 1.0;
    }
    case ShapeKind::kTriangle: {
      const double x0 = size, y0 = 0.0;
      const double x1 = -0.6 * size, y1 = 0.7 * size;
      const double x2 = -0.6 * size, y2 = -0.7 * size;
      auto side = [&](double ax, double ay, double bx, double by) {
        return (bx - ax) * (v - ay) - (by - ay) * (u - ax);
      };
      const double s0 = side(x0, y0, x1, y1), s1 = side(x1, y1, x2, y2), s2 = side(x2, y2, x0, y0);
      return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
    }
  }
  return false;
}

// 2x2 supersampled coverage of pixel (x, y).
double coverage(ShapeKind shape, const Pose& p, std::size_t x, std::size_t y) {
  const double c = std::cos(p.angle), s = std::sin(p.angle);
  int hits = 0;
  for (double oy : {0.25, 0.75})
    for (double ox : {0.25, 0.75}) {
      const double dx = static_cast<double>(x) + ox - p.cx;
      const double dy = static_cast<double>(y) + oy - p.cy;
      if (inside(shape, p.size, c * dx + s * dy, -s * dx + c * dy)) ++hits;
    }
  return hits / 4.0;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

VideoSample render_video(MotionClass motion, const SyntheticVideoSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  VideoSample sample;
  sample.label = static_cast<std::size_t>(motion);
  sample.shape = static_cast<ShapeKind>(rng.index(3));
  sample.frames = spec.frames;
  sample.height = spec.height;
  sample.width = spec.width;

  double bg[3], fg[3];
  for (double& b : bg) b = rng.uniform(0.05, 0.35);
  for (double& f : fg) f = rng.uniform(0.6, 0.95);
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
  const double margin = 0.34 * std::min(w, h);
  Pose mid{rng.uniform(margin, w - margin), rng.uniform(margin, h - margin),
           rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.14, 0.2) * std::min(w, h)};
  const double speed = rng.uniform(2.0, 3.0);
  const double spin = rng.uniform(0.25, 0.4) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  const double growth = rng.uniform(0.1, 0.14) * (rng.uniform() < 0.5 ? -1.0 : 1.0);

  const std::size_t hw = spec.height * spec.width;
  sample.pixels.assign(spec.frames * 3 * hw, 0.0);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    // poses are centered on the middle frame so every class shares it
    const double dt = static_cast<double>(t) - 0.5 * static_cast<double>(spec.frames - 1);
    Pose p = mid;
    switch (motion) {
      case MotionClass::kTranslateLeft: p.cx -= speed * dt; break;
      case MotionClass::kTranslateRight: p.cx += speed * dt; break;
      case MotionClass::kRotate: p.angle += spin * dt; break;
      case MotionClass::kScale: p.size *= std::exp(growth * dt); break;
    }
    for (std::size_t y = 0; y < spec.height; ++y)
      for (std::size_t x = 0; x < spec.width; ++x) {
        const double a = coverage(sample.shape, p, x, y);
        for (std::size_t c = 0; c < 3; ++c) {
          const double value = bg[c] * (1.0 - a) + fg[c] * a + rng.normal(0.0, spec.noise);
          sample.pixels[(t * 3 + c) * hw + y * spec.width + x] = std::clamp(value, 0.0, 1.0);
        }
      }
  }
  for (std::size_t t = 0; t < spec.frames; ++t) sample.edges.push_back(adaptive_canny(sample.frame_image(t), t));
  return sample;
}

Dataset generate_dataset(const SyntheticVideoSpec& spec) {
  if (spec.num_classes < 2 || spec.num_classes > 4) {
    throw ConfigError("synthetic data supports 2 to 4 motion classes, got " + std::to_string(spec.num_classes));
  }
  if (spec.frames < 2) throw ConfigError("synthetic clips need at least 2 frames");
  if (spec.samples < 2 * spec.num_classes) throw ConfigError("too few samples for a train/val split");
  Dataset data;
  std::size_t index = 0;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const std::size_t count = spec.samples / spec.num_classes + (k < spec.samples % spec.num_classes ? 1 : 0);
    const std::size_t n_train = std::max<std::size_t>(1, (count * 4 + 2) / 5);
    for (std::size_t i = 0; i < count; ++i, ++index) {
      VideoSample s = render_video(static_cast<MotionClass>(k), spec, mix_seed(spec.seed, index));
      (i < n_train ? data.train : data.val).push_back(std::move(s));
    }
  }
  return data;
}

MotionClass motion_oracle(const VideoSample& sample) {
  const std::size_t hw = sample.height * sample.width;
  std::vector<double> cx, log_area;
  for (std::size_t t = 0; t < sample.frames; ++t) {
    const auto f = sample.frame(t);
    double sx = 0.0, n = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double luma = 0.299 * f[i] + 0.587 * f[hw + i] + 0.114 * f[2 * hw + i];
      if (luma > 0.475) {
        sx += static_cast<double>(i % sample.width);
        n += 1.0;
      }
    }
    cx.push_back(n > 0 ? sx / n : 0.5 * static_cast<double>(sample.width));
    log_area.push_back(std::log(n + 1.0));
  }
  auto slope = [](const std::vector<double>& y) {
    const double n = static_cast<double>(y.size());
    const double tm = (n - 1.0) / 2.0;
    const double ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      num += (static_cast<double>(t) - tm) * (y[t] - ym);
      den += (static_cast<double>(t) - tm) * (static_cast<double>(t) - tm);
    }
    return num / den;
  };
  const double drift = slope(cx);
  if (drift < -1.0) return MotionClass::kTranslateLeft;
  if (drift > 1.0) return MotionClass::kTranslateRight;
  if (std::abs(slope(log_area)) > 0.1) return MotionClass::kScale;
  return MotionClass::kRotate;
}

VideoSample reorder_frames(const VideoSample& sample, const std::vector<std::size_t>& order) {
  if (order.size() != sample.frames) throw DimensionError("reorder_frames: order must list every frame");
  VideoSample out = sample;
  const std::size_t n = sample.channels * sample.height * sample.width;
  for (std::size_t t = 0; t < order.size(); ++t) {
    const auto src = sample.frame(order[t]);
    std::copy(src.begin(), src.end(), out.pixels.begin() + static_cast<long>(t * n));
    out.edges[t] = sample.edges[order[t]];
    out.edges[t].frame_id = t;
  }
  return out;
}

// ---- loss & optimization -----------------------------------------------

Tensor smoothed_ce(const Tensor& logits, const std::vector<std::size_t>& labels, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("label smoothing must lie in [0, 1)");
  const std::size_t k = logits.extent(-1);
  const std::size_t batch = logits.rank() == 1 ? 1 : logits.numel() / k;
  if (labels.size() != batch) {
    throw DimensionError("smoothed_ce: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch) + " rows");
  }
  if (k < 2 && eps > 0.0) throw ConfigError("label smoothing needs at least two classes");
  Tensor target({batch, k});
  auto td = target.mutable_data();
  const double off = k > 1 ? eps / static_cast<double>(k - 1) : 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= k) {
      throw std::out_of_range("smoothed_ce: label " + std::to_string(labels[b]) + " outside " +
                              std::to_string(k) + " classes");
    }
    for (std::size_t c = 0; c < k; ++c) td[b * k + c] = c == labels[b] ? 1.0 - eps : off;
  }
  const Tensor lp = log_softmax(reshape(logits, {batch, k}));
  return scale(sum(lp * target), -1.0 / static_cast<double>(batch));
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("smoothing must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
}

std::map<std::string, std::string> TrainConfig::to_key_values() const {
  std::ostringstream lr_s, b1, b2, e, sm, cn;
  lr_s << lr;
  b1 << beta1;
  b2 << beta2;
  e << adam_eps;
  sm << smoothing;
  cn << clip_norm;
  return {{"lr", lr_s.str()},
          {"beta1", b1.str()},
          {"beta2", b2.str()},
          {"adam_eps", e.str()},
          {"batch", std::to_string(batch)},
          {"steps", std::to_string(steps)},
          {"smoothing", sm.str()},
          {"clip_norm", cn.str()},
          {"eval_every", std::to_string(eval_every)},
          {"seed", std::to_string(seed)},
          {"mask_training", mask_training ? "true" : "false"},
          {"metrics_path", metrics_path},
          {"checkpoint_path", checkpoint_path}};
}

TrainConfig TrainConfig::from_key_values(const std::map<std::string, std::string>& kv, const TrainConfig& base) {
  TrainConfig c = base;
  for (const auto& [key, value] : kv) {
    if (key == "lr") c.lr = kv_double(key, value);
    else if (key == "beta1") c.beta1 = kv_double(key, value);
    else if (key == "beta2") c.beta2 = kv_double(key, value);
    else if (key == "adam_eps") c.adam_eps = kv_double(key, value);
    else if (key == "batch") c.batch = kv_size(key, value);
    else if (key == "steps") c.steps = kv_size(key, value);
    else if (key == "smoothing") c.smoothing = kv_double(key, value);
    else if (key == "clip_norm") c.clip_norm = kv_double(key, value);
    else if (key == "eval_every") c.eval_every = kv_size(key, value);
    else if (key == "seed") c.seed = kv_size(key, value);
    else if (key == "mask_training") c.mask_training = kv_bool(key, value);
    else if (key == "metrics_path") c.metrics_path = value;
    else if (key == "checkpoint_path") c.checkpoint_path = value;
    else throw ConfigError("unknown train config key '" + key + "'");
  }
  return c;
}

Adam::Adam(std::vector<NamedParam> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto d = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < d.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      d[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

double clip_grad_norm(const std::vector<NamedParam>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / (norm + 1e-12);
    for (const auto& p : params)
      if (p.tensor.has_grad())
        for (double& g : p.tensor.grad_buffer()) g *= f;
  }
  return norm;
}

std::optional<std::string> first_non_finite(const std::vector<NamedParam>& params) {
  auto finite = [](std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
  };
  for (const auto& p : params)
    if (!finite(p.tensor.data())) return p.name;
  for (const auto& p : params)
    if (!finite(p.tensor.grad())) return p.name + ".grad";
  return std::nullopt;
}

Tensor batch_logits(const LcrModel& model, const std::vector<const VideoSample*>& batch,
                    const StreamOptions& options) {
  if (batch.empty()) throw DimensionError("batch_logits: empty batch");
  const VideoSample& first = *batch.front();
  const std::size_t frame_size = first.channels * first.height * first.width;
  FrameStream stream(model, batch.size(), options);
  std::vector<EdgeMap> edges(batch.size());
  for (std::size_t t = 0; t < first.frames; ++t) {
    Tensor frames({batch.size(), first.channels, first.height, first.width});
    auto fd = frames.mutable_data();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto src = batch[b]->frame(t);
      std::copy(src.begin(), src.end(), fd.begin() + static_cast<long>(b * frame_size));
      edges[b] = batch[b]->edges[t];
    }
    stream.push(frames, edges);
  }
  return stream.logits();
}

double evaluate(const LcrModel& model, const std::vector<VideoSample>& set, std::size_t batch) {
  if (set.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < set.size(); start += batch) {
    std::vector<const VideoSample*> chunk;
    for (std::size_t i = start; i < std::min(set.size(), start + batch); ++i) chunk.push_back(&set[i]);
    const auto pred = predict_batch(batch_logits(model, chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) correct += pred[i] == chunk[i]->label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

TrainResult train(LcrModel& model, const TrainConfig& config, const Dataset& data, const ProgressFn& progress) {
  config.validate();
  if (data.train.empty()) throw ConfigError("training set is empty");
  const auto params = model.parameters();
  Adam adam(params, config.lr, config.beta1, config.beta2, config.adam_eps);
  Rng rng(config.seed);

  std::ofstream log;
  if (!config.metrics_path.empty()) {
    const bool fresh = !std::ifstream(config.metrics_path).good() ||
                       std::ifstream(config.metrics_path, std::ios::ate).tellg() == 0;
    log.open(config.metrics_path, std::ios::app);
    if (!log) throw std::runtime_error("cannot open metrics log " + config.metrics_path);
    if (fresh) log << "step,loss,train_acc,val_acc\n";
  }

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  const std::size_t patches = model.config.patches();
  const bool masking = config.mask_training && model.config.tube_mask_ratio > 0.0;

  TrainResult result;
  double window_loss = 0.0;
  std::size_t window_steps = 0;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<const VideoSample*> batch;
    std::vector<std::size_t> labels;
    StreamOptions options;
    for (std::size_t b = 0; b < config.batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        cursor = 0;
      }
      const VideoSample& s = data.train[order[cursor++]];
      batch.push_back(&s);
      labels.push_back(s.label);
      if (masking) options.masks.push_back(make_tube_mask(patches, model.config.tube_mask_ratio, rng.next()));
    }

    for (const auto& p : params) p.tensor.zero_grad();
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = smoothed_ce(batch_logits(model, batch, options), labels, config.smoothing);
    }
    if (!std::isfinite(loss.item())) {
      const auto bad = first_non_finite(params);
      throw NonFiniteError("non-finite loss at step " + std::to_string(step) + "; first non-finite tensor: " +
                           bad.value_or("logits"));
    }
    tape.backward(loss);
    tape.clear();
    if (const auto bad = first_non_finite(params)) {
      throw NonFiniteError("non-finite gradient at step " + std::to_string(step) + "; first non-finite tensor: " +
                           *bad);
    }
    clip_grad_norm(params, config.clip_norm);
    adam.step();
    window_loss += loss.item();
    ++window_steps;

    if (step % config.eval_every == 0 || step == config.steps) {
      // evaluate the float32 snapshot that a checkpoint would hold
      LcrModel snapshot = model.clone();
      round_to_float32(snapshot);
      MetricsRow row;
      row.step = step;
      row.loss = window_loss / static_cast<double>(window_steps);
      row.train_acc = evaluate(snapshot, data.train);
      row.val_acc = evaluate(snapshot, data.val);
      window_loss = 0.0;
      window_steps = 0;
      result.log.push_back(row);
      if (log.is_open()) {
        log << row.step << ',' << row.loss << ',' << row.train_acc << ',' << row.val_acc << '\n';
        log.flush();
      }
      if (row.val_acc > result.best_val_acc) {
        result.best_val_acc = row.val_acc;
        result.best_step = step;
        if (!config.checkpoint_path.empty()) save_checkpoint(snapshot, config.checkpoint_path);
      }
      result.final_train_acc = row.train_acc;
      result.final_val_acc = row.val_acc;
      if (progress) progress(row);
    }
  }
  return result;
}

// ---- benchmarks & oracles ------------------------------------------------

namespace {

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

template <typename F>
double time_median(F&& f, std::size_t repeats) {
  std::vector<double> times;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    f();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return median(times);
}

// Decays kept in [0.9, 0.999] so long powers stay clear of subnormals.
Tensor bench_decay(std::size_t heads, std::size_t dim, Rng& rng) {
  return rng.uniform_tensor({heads, dim}, 0.9, 0.999);
}

}  // namespace

std::vector<BenchRow> bench_wkv(const std::vector<std::size_t>& lengths, std::size_t heads, std::size_t head_dim,
                                std::size_t repeats, std::uint64_t seed) {
  Rng rng(seed);
  Tape::Pause pause;
  std::vector<BenchRow> rows;
  for (std::size_t t : lengths) {
    const Tensor k = rng.uniform_tensor({t, heads, head_dim}, -1.0, 1.0);
    const Tensor v = rng.uniform_tensor({t, heads, head_dim}, -1.0, 1.0);
    const Tensor w = bench_decay(heads, head_dim, rng);
    const Tensor u = rng.uniform_tensor({heads, head_dim}, -0.5, 0.5);
    BenchRow row;
    row.tokens = t;
    double sink = 0.0;
    row.recurrent_seconds = time_median([&] { sink += wkv_recurrent(k, v, w, u).at(0); }, repeats);
    row.bruteforce_seconds = time_median([&] { sink += wkv_bruteforce(k, v, w, u).at(0); }, repeats);
    if (std::isnan(sink)) row.recurrent_seconds = -1.0;  // keeps the calls observable
    rows.push_back(row);
  }
  return rows;
}

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

// Independent triple-loop evaluation of the causal sum.
std::vector<double> causal_sum_reference(const Tensor& k, const Tensor& v, const Tensor& w, const Tensor& u) {
  const std::size_t T = k.extent(0), H = k.extent(1), D = k.extent(2);
  std::vector<double> out(T * H * D * D, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t a = 0; a < D; ++a)
        for (std::size_t c = 0; c < D; ++c) {
          double acc = u.at(h * D + a) * k.at((t * H + h) * D + a) * v.at((t * H + h) * D + c);
          for (std::size_t i = 0; i < t; ++i) {
            double p = 1.0;
            for (std::size_t e = 0; e + 1 + i < t; ++e) p *= w.at(h * D + a);
            acc += p * k.at((i * H + h) * D + a) * v.at((i * H + h) * D + c);
          }
          out[((t * H + h) * D + a) * D + c] = acc;
        }
  return out;
}

}  // namespace

std::vector<OracleResult> run_oracles(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<OracleResult> results;

  {
    double worst_rec = 0.0, worst_ref = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t T = 1 + rng.index(32), H = 1 + rng.index(4), D = 1 + rng.index(16);
      const Tensor k = rng.uniform_tensor({T, H, D}, -1.0, 1.0);
      const Tensor v = rng.uniform_tensor({T, H, D}, -1.0, 1.0);
      const Tensor w = decay_from_omega(rng.uniform_tensor({H, D}, -3.0, 1.0));
      const Tensor u = rng.uniform_tensor({H, D}, -1.0, 1.0);
      const Tensor brute = wkv_bruteforce(k, v, w, u);
      worst_rec = std::max(worst_rec, max_abs_diff(wkv_recurrent(k, v, w, u).data(), brute.data()));
      if (trial < 20) worst_ref = std::max(worst_ref, max_abs_diff(causal_sum_reference(k, v, w, u), brute.data()));
    }
    results.push_back({"wkv recurrent == bruteforce (200 instances)", worst_rec < 1e-10,
                       "max abs diff " + fmt(worst_rec)});
    results.push_back({"wkv bruteforce == loop reference", worst_ref < 1e-12, "max abs diff " + fmt(worst_ref)});
  }

  {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t T = 1 + rng.index(12), H = 1 + rng.index(3), D = 1 + rng.index(6);
      const Tensor k = rng.uniform_tensor({T, H, D}, -1.0, 1.0);
      const Tensor v = rng.uniform_tensor({T, H, D}, -1.0, 1.0);
      const Tensor w = rng.uniform_tensor({H, D}, 0.05, 0.95);
      const Tensor u = rng.uniform_tensor({H, D}, -1.0, 1.0);
      std::vector<double> ref(T * H * D * D, 0.0);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < T; ++i)
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t a = 0; a < D; ++a) {
              const std::size_t dist = t > i ? t - i : i - t;
              const double f = i == t ? u.at(h * D + a) : std::pow(w.at(h * D + a), static_cast<double>(dist - 1));
              for (std::size_t c = 0; c < D; ++c)
                ref[((t * H + h) * D + a) * D + c] += f * k.at((i * H + h) * D + a) * v.at((i * H + h) * D + c);
            }
      worst = std::max(worst, max_abs_diff(wkv_bidirectional(k, v, w, u).data(), ref));
    }
    results.push_back({"wkv bidirectional == explicit distance sum", worst < 1e-10, "max abs diff " + fmt(worst)});
  }

  {
    bool exact = true;
    for (int trial = 0; trial < 1000 && exact; ++trial) {
      Histogram256 hist{};
      const std::size_t nonzero = 1 + rng.index(256);
      for (std::size_t i = 0; i < nonzero; ++i) hist[rng.index(256)] += 1 + rng.index(1000);
      std::size_t best = 0;
      double best_var = -1.0;
      for (std::size_t t = 0; t < 256; ++t) {
        double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (std::size_t i = 0; i < 256; ++i) {
          (i < t ? n0 : n1) += static_cast<double>(hist[i]);
          (i < t ? s0 : s1) += static_cast<double>(i * hist[i]);
        }
        const double n = n0 + n1;
        const double var = (n0 > 0 && n1 > 0) ? (n0 / n) * (n1 / n) * std::pow(s0 / n0 - s1 / n1, 2) : 0.0;
        if (var > best_var) {
          best_var = var;
          best = t;
        }
      }
      exact = otsu_threshold(hist) == best;
    }
    results.push_back({"otsu == exhaustive search (1000 histograms)", exact, exact ? "exact" : "mismatch"});
  }

  {
    const ModelConfig cfg = ModelConfig::preset("tiny");
    const LcrModel model = LcrModel::create(cfg, seed);
    bool zero = true;
    for (int trial = 0; trial < 20; ++trial) {
      Image frame(3, cfg.frame_height, cfg.frame_width);
      for (double& p : frame.pixels) p = rng.uniform();
      const Tensor tokens = edge_prompt(frame, model.edge_embed, cfg.geometry());
      zero = zero && std::all_of(tokens.data().begin(), tokens.data().end(), [](double x) { return x == 0.0; });
    }
    results.push_back({"edge prompt is zero at initialization", zero, "20 random frames"});

    const Shape s{cfg.tokens(), cfg.hidden};
    RecurrentState state = RecurrentState::zeros(s);
    state.cell = rng.uniform_tensor(s, -3.0, 3.0);
    const CellOutput out = cell_step(rng.uniform_tensor(s, -2.0, 2.0), Tensor::zeros(s), state);
    const bool frozen = std::equal(out.state.cell.data().begin(), out.state.cell.data().end(),
                                   state.cell.data().begin());
    results.push_back({"zero edge tokens freeze the cell state", frozen, "bit-exact comparison"});
  }

  {
    const Tensor a = rng.uniform_tensor({3, 4}, -1.0, 1.0, true);
    const Tensor b = rng.uniform_tensor({4, 5}, -1.0, 1.0, true);
    const Tensor g = rng.uniform_tensor({5}, 0.5, 1.5, true);
    const Tensor bias = rng.uniform_tensor({5}, -0.5, 0.5, true);
    const auto report = grad_check(
        [&] { return sum(square(silu(layer_norm(tanh(matmul(a, b)), g, bias)))); },
        {{"a", a}, {"b", b}, {"gain", g}, {"bias", bias}});
    results.push_back({"op chain gradients vs central differences", report.passed(1e-6), report.describe()});

    const Tensor k = rng.uniform_tensor({5, 2, 3}, -1.0, 1.0, true);
    const Tensor v = rng.uniform_tensor({5, 2, 3}, -1.0, 1.0, true);
    const Tensor omega = rng.uniform_tensor({2, 3}, -2.0, 0.5, true);
    const Tensor u = rng.uniform_tensor({2, 3}, -1.0, 1.0, true);
    const Tensor r = rng.uniform_tensor({5, 2, 3}, -1.0, 1.0, true);
    const auto wkv_report = grad_check(
        [&] {
          return sum(square(apply_receptance(r, wkv_bidirectional(k, v, decay_from_omega(omega), u))));
        },
        {{"k", k}, {"v", v}, {"omega", omega}, {"u", u}, {"r", r}});
    results.push_back({"wkv gradients vs central differences", wkv_report.passed(1e-6), wkv_report.describe()});
  }

  {
    bool ok = true;
    const std::size_t L = 196;
    for (double ratio : {0.0, 0.25, 0.5, 0.75, 0.9}) {
      const TubeMask m1 = make_tube_mask(L, ratio, 11), m2 = make_tube_mask(L, ratio, 11);
      ok = ok && m1.masked_count() == static_cast<std::size_t>(std::floor(ratio * L)) && m1.patches == m2.patches;
    }
    results.push_back({"tube mask count and determinism", ok, "L = 196"});
  }
  return results;
}

}  // namespace lcr
