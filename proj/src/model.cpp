#include "lcr/model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "lcr/key_value.hpp"
#include "lcr/ops.hpp"
#include "lcr/random.hpp"

namespace lcr {

// ---- configuration ----------------------------------------------------

void ModelConfig::validate() const {
  if (patch == 0 || frame_height % patch != 0 || frame_width % patch != 0) {
    throw ConfigError("frame " + std::to_string(frame_height) + "x" + std::to_string(frame_width) +
                      " is not divisible by patch size " + std::to_string(patch));
  }
  if (heads == 0 || hidden % (4 * heads) != 0) {
    throw ConfigError("hidden width " + std::to_string(hidden) + " must be divisible by 4 * heads (" +
                      std::to_string(4 * heads) + ")");
  }
  if (depth == 0) throw ConfigError("depth must be at least 1");
  if (num_classes == 0) throw ConfigError("num_classes must be at least 1");
  if (in_channels == 0) throw ConfigError("in_channels must be at least 1");
  if (!(tube_mask_ratio >= 0.0 && tube_mask_ratio < 1.0)) {
    throw ConfigError("tube_mask_ratio must lie in [0, 1)");
  }
  if (conv_kernel == 0 || hidden_ratio == 0) throw ConfigError("conv_kernel and hidden_ratio must be >= 1");
}

GridGeometry ModelConfig::geometry() const {
  return GridGeometry{frame_height / patch, frame_width / patch, true};
}

CrossRwkvConfig ModelConfig::block_config() const {
  CrossRwkvConfig c;
  c.channels = hidden;
  c.heads = heads;
  c.conv_kernel = conv_kernel;
  c.hidden_ratio = hidden_ratio;
  c.mode = wkv_mode;
  c.rotary = position == PositionEncoding::kRotary;
  return c;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_key_values() const {
  return {
      {"name", name},
      {"frame_height", std::to_string(frame_height)},
      {"frame_width", std::to_string(frame_width)},
      {"in_channels", std::to_string(in_channels)},
      {"patch", std::to_string(patch)},
      {"depth", std::to_string(depth)},
      {"hidden", std::to_string(hidden)},
      {"heads", std::to_string(heads)},
      {"num_classes", std::to_string(num_classes)},
      {"frames", std::to_string(frames)},
      {"tube_mask_ratio", format_double(tube_mask_ratio)},
      {"wkv_mode", wkv_mode == WkvMode::kCausal ? "causal" : "bidirectional"},
      {"cell_clamp", cell_clamp ? "true" : "false"},
      {"cell_clamp_limit", format_double(cell_clamp_limit)},
      {"position", position == PositionEncoding::kRotary ? "rotary" : "additive"},
      {"edge_every_layer", edge_every_layer ? "true" : "false"},
      {"conv_kernel", std::to_string(conv_kernel)},
      {"hidden_ratio", std::to_string(hidden_ratio)},
  };
}

ModelConfig ModelConfig::from_key_values(const std::map<std::string, std::string>& kv,
                                         const ModelConfig& base) {
  ModelConfig c = base;
  for (const auto& [key, value] : kv) {
    if (key == "name") c.name = value;
    else if (key == "frame_height") c.frame_height = kv_size(key, value);
    else if (key == "frame_width") c.frame_width = kv_size(key, value);
    else if (key == "in_channels") c.in_channels = kv_size(key, value);
    else if (key == "patch") c.patch = kv_size(key, value);
    else if (key == "depth") c.depth = kv_size(key, value);
    else if (key == "hidden") c.hidden = kv_size(key, value);
    else if (key == "heads") c.heads = kv_size(key, value);
    else if (key == "num_classes") c.num_classes = kv_size(key, value);
    else if (key == "frames") c.frames = kv_size(key, value);
    else if (key == "tube_mask_ratio") c.tube_mask_ratio = kv_double(key, value);
    else if (key == "wkv_mode") {
      if (value == "causal") c.wkv_mode = WkvMode::kCausal;
      else if (value == "bidirectional") c.wkv_mode = WkvMode::kBidirectional;
      else throw ConfigError("wkv_mode must be 'causal' or 'bidirectional', got '" + value + "'");
    } else if (key == "cell_clamp") c.cell_clamp = kv_bool(key, value);
    else if (key == "cell_clamp_limit") c.cell_clamp_limit = kv_double(key, value);
    else if (key == "position") {
      if (value == "additive") c.position = PositionEncoding::kAdditive;
      else if (value == "rotary") c.position = PositionEncoding::kRotary;
      else throw ConfigError("position must be 'additive' or 'rotary', got '" + value + "'");
    } else if (key == "edge_every_layer") c.edge_every_layer = kv_bool(key, value);
    else if (key == "conv_kernel") c.conv_kernel = kv_size(key, value);
    else if (key == "hidden_ratio") c.hidden_ratio = kv_size(key, value);
    else throw ConfigError("unknown model config key '" + key + "'");
  }
  return c;
}

ModelConfig ModelConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  return from_key_values(kv, ModelConfig{});
}

ModelConfig ModelConfig::preset(const std::string& preset_name) {
  ModelConfig c;
  c.name = preset_name;
  auto jester = [&](std::size_t depth, std::size_t hidden) {
    c.frame_height = c.frame_width = 112;
    c.patch = 8;
    c.depth = depth;
    c.hidden = hidden;
    c.heads = 4;
    c.num_classes = 27;
    c.frames = 32;
  };
  auto kinetics = [&](std::size_t depth) {
    c.frame_height = c.frame_width = 224;
    c.patch = 16;
    c.depth = depth;
    c.hidden = 768;
    c.heads = 12;
    c.num_classes = 400;
    c.frames = 16;
  };
  if (preset_name == "LCR-S") jester(1, 192);
  else if (preset_name == "LCR") jester(2, 384);
  else if (preset_name == "LCR-L") jester(4, 384);
  else if (preset_name == "LCR-224") kinetics(4);
  else if (preset_name == "LCR-L-224") kinetics(8);
  else if (preset_name == "LCR-XL-224") kinetics(12);
  else if (preset_name == "tiny") {
    c.frame_height = c.frame_width = 32;
    c.patch = 8;
    c.depth = 1;
    c.hidden = 64;
    c.heads = 4;
    c.num_classes = 4;
    c.frames = 8;
  } else {
    throw ConfigError("unknown preset '" + preset_name + "'");
  }
  return c;
}

std::vector<std::string> ModelConfig::preset_names() {
  return {"LCR-S", "LCR", "LCR-L", "LCR-224", "LCR-L-224", "LCR-XL-224", "tiny"};
}

const std::vector<ReferenceVariant>& reference_variants() {
  static const std::vector<ReferenceVariant> rows = {
      {"LCR-S", 0.82, 0.003},   {"LCR", 5.14, 0.022},      {"LCR-L", 9.97, 0.041},
      {"LCR-224", 37.62, 0.16}, {"LCR-L-224", 74.62, 0.31}, {"LCR-XL-224", 111.63, 0.47},
  };
  return rows;
}

// ---- construction -----------------------------------------------------

LcrModel LcrModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t c = config.hidden;
  const std::size_t patch_len = config.in_channels * config.patch * config.patch;
  LcrModel m;
  m.config = config;
  const double bound = 1.0 / std::sqrt(static_cast<double>(patch_len));
  m.patch_weight = rng.uniform_tensor({patch_len, c}, -bound, bound, true);
  m.patch_bias = Tensor::zeros({c}, true);
  m.cls_token = Tensor({c}, true);
  for (double& v : m.cls_token.mutable_data()) v = rng.normal(0.0, 0.02);
  if (config.position == PositionEncoding::kAdditive) {
    m.position = Tensor({config.tokens(), c}, true);
    for (double& v : m.position.mutable_data()) v = rng.normal(0.0, 0.02);
  }
  m.mask_token = Tensor::zeros({c}, true);
  m.edge_embed = ZeroEmbed::create(config.patch, c);
  for (std::size_t i = 0; i < config.depth; ++i) {
    m.blocks.push_back(CrossRwkvBlock::create(config.block_config(), rng));
  }
  m.head = ClassifierHead::create(c, config.num_classes, rng);
  return m;
}

std::vector<NamedParam> LcrModel::parameters() const {
  std::vector<NamedParam> p{{"patch_weight", patch_weight},
                            {"patch_bias", patch_bias},
                            {"cls_token", cls_token}};
  if (config.position == PositionEncoding::kAdditive) p.push_back({"position", position});
  p.push_back({"mask_token", mask_token});
  for (auto& e : edge_embed.parameters("edge_embed.")) p.push_back(std::move(e));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (auto& e : blocks[i].parameters("block" + std::to_string(i) + ".")) p.push_back(std::move(e));
  }
  for (auto& e : head.parameters("head.")) p.push_back(std::move(e));
  return p;
}

std::size_t LcrModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

LcrModel LcrModel::clone() const {
  LcrModel m = *this;
  m.patch_weight = patch_weight.clone();
  m.patch_bias = patch_bias.clone();
  m.cls_token = cls_token.clone();
  if (config.position == PositionEncoding::kAdditive) m.position = position.clone();
  m.mask_token = mask_token.clone();
  m.edge_embed.weight = edge_embed.weight.clone();
  m.edge_embed.bias = edge_embed.bias.clone();
  for (auto& b : m.blocks) {
    for (Tensor* t : {&b.ln1_gain, &b.ln1_bias, &b.ln2_gain, &b.ln2_bias, &b.conv_kernel, &b.conv_bias,
                      &b.conv_proj, &b.conv_proj_bias, &b.mix_r, &b.mix_g, &b.mix_k, &b.mix_v, &b.w_r,
                      &b.w_g, &b.w_k, &b.w_v, &b.w_a, &b.wkv.omega, &b.wkv.u, &b.head_ln_gain,
                      &b.head_ln_bias, &b.mix_rc, &b.mix_kc, &b.w_rc, &b.w_kc, &b.w_vc, &b.rotary_freqs}) {
      *t = t->clone();
    }
  }
  m.head.ln_gain = head.ln_gain.clone();
  m.head.ln_bias = head.ln_bias.clone();
  m.head.weight = head.weight.clone();
  return m;
}

// ---- accounting -------------------------------------------------------

ParamBreakdown param_breakdown(const ModelConfig& config) {
  config.validate();
  const std::size_t c = config.hidden;
  const std::size_t pp = config.patch * config.patch;
  ParamBreakdown b;
  b.modules.emplace_back("patch_embed", config.in_channels * pp * c + c);
  b.modules.emplace_back("cls_token", c);
  if (config.position == PositionEncoding::kAdditive) b.modules.emplace_back("position", config.tokens() * c);
  b.modules.emplace_back("mask_token", c);
  b.modules.emplace_back("edge_embed", pp * c + c);
  const std::size_t block = CrossRwkvBlock::parameter_count(
      c, config.heads, config.conv_kernel, config.hidden_ratio,
      config.position == PositionEncoding::kRotary);
  for (std::size_t i = 0; i < config.depth; ++i) b.modules.emplace_back("block" + std::to_string(i), block);
  b.modules.emplace_back("classifier", 4 * c + 2 * c * config.num_classes);
  for (const auto& m : b.modules) b.total += m.second;
  return b;
}

std::size_t param_count(const ModelConfig& config) { return param_breakdown(config).total; }

FlopEstimate flops_estimate(const ModelConfig& config) {
  config.validate();
  const std::uint64_t c = config.hidden, n = config.tokens(), l = config.patches();
  const std::uint64_t pp = config.patch * config.patch;
  const std::uint64_t h = config.heads, d = c / config.heads;
  const std::uint64_t dirs = config.wkv_mode == WkvMode::kBidirectional ? 2 : 1;
  const std::uint64_t r = config.hidden_ratio;

  std::uint64_t frame = l * config.in_channels * pp * c + l * pp * c;  // patch + edge embed
  std::uint64_t block = 0;
  block += n * 2 * c * config.conv_kernel + n * 2 * c * c;  // causal conv
  block += 4 * n * c * c;                                   // R, G, K, V
  block += n * h * d * d * (2 * dirs + 2);                  // scans, bonus, receptance
  block += n * c * c;                                       // W_a
  block += n * c * c + 2 * n * c * r * c;                   // channel mix
  frame += config.depth * block;

  FlopEstimate f;
  f.macs_per_frame = frame;
  f.macs_per_video = frame * config.frames + 2 * c * config.num_classes;
  return f;
}

// ---- embedding & masking ----------------------------------------------

Tensor embed_frame(const Tensor& frames, const LcrModel& model) {
  const ModelConfig& cfg = model.config;
  if (frames.rank() != 4 || frames.extent(1) != cfg.in_channels || frames.extent(2) != cfg.frame_height ||
      frames.extent(3) != cfg.frame_width) {
    throw DimensionError("embed_frame: expected [B, " + std::to_string(cfg.in_channels) + ", " +
                         std::to_string(cfg.frame_height) + ", " + std::to_string(cfg.frame_width) +
                         "], got " + shape_string(frames.shape()));
  }
  const std::size_t batch = frames.extent(0);
  const Tensor patches = matmul(patchify(frames, cfg.patch), model.patch_weight) + model.patch_bias;
  const Tensor cls = expand(reshape(model.cls_token, {1, cfg.hidden}), {batch});
  Tensor tokens = concat({patches, cls}, 1);
  if (cfg.position == PositionEncoding::kAdditive) tokens = tokens + model.position;
  return tokens;
}

std::vector<Tensor> patch_embed(const Tensor& video, const LcrModel& model) {
  const ModelConfig& cfg = model.config;
  if (cfg.frame_height % cfg.patch != 0 || cfg.frame_width % cfg.patch != 0) {
    throw ConfigError("patch_embed: frame size not divisible by patch");
  }
  if (video.rank() != 4 || video.extent(0) != cfg.in_channels || video.extent(2) != cfg.frame_height ||
      video.extent(3) != cfg.frame_width) {
    throw DimensionError("patch_embed: expected video [channels, T, H, W] matching the config, got " +
                         shape_string(video.shape()));
  }
  std::vector<Tensor> grids;
  for (std::size_t t = 0; t < video.extent(1); ++t) {
    const Tensor frame = reshape(slice(video, 1, t, t + 1),
                                 {1, cfg.in_channels, cfg.frame_height, cfg.frame_width});
    const Tensor tokens = embed_frame(frame, model);
    grids.push_back(reshape(tokens, {cfg.tokens(), cfg.hidden}));
  }
  return grids;
}

std::size_t TubeMask::masked_count() const {
  return static_cast<std::size_t>(std::count(patches.begin(), patches.end(), std::uint8_t{1}));
}

TubeMask make_tube_mask(std::size_t patches, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ConfigError("tube mask ratio must lie in [0, 1), got " + format_double(ratio));
  }
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(patches)));
  std::vector<std::size_t> order(patches);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  TubeMask mask;
  mask.patches.assign(patches, 0);
  for (std::size_t i = 0; i < count; ++i) mask.patches[order[i]] = 1;
  return mask;
}

Tensor apply_tube_mask(const Tensor& tokens, std::span<const TubeMask> masks, const Tensor& token) {
  const std::size_t n = tokens.extent(-2);
  const std::size_t grids = tokens.numel() / (n * tokens.extent(-1));
  if (masks.size() != grids) {
    throw DimensionError("apply_tube_mask: " + std::to_string(masks.size()) + " masks for " +
                         std::to_string(grids) + " token grids");
  }
  std::vector<std::uint8_t> rows(grids * n, 0);
  for (std::size_t b = 0; b < grids; ++b) {
    if (masks[b].patches.size() + 1 != n) {
      throw DimensionError("apply_tube_mask: mask over " + std::to_string(masks[b].patches.size()) +
                           " patches does not fit " + std::to_string(n) + " tokens");
    }
    std::copy(masks[b].patches.begin(), masks[b].patches.end(), rows.begin() + static_cast<long>(b * n));
  }
  return replace_rows(tokens, rows, token);
}

std::pair<std::vector<Tensor>, TubeMask> tube_mask(const std::vector<Tensor>& sequence, double ratio,
                                                   std::uint64_t seed, const Tensor& mask_token) {
  if (sequence.empty()) throw DimensionError("tube_mask: empty sequence");
  TubeMask mask = make_tube_mask(sequence.front().extent(-2) - 1, ratio, seed);
  std::vector<Tensor> out;
  for (const auto& grid : sequence) {
    out.push_back(mask.empty() ? grid : apply_tube_mask(grid, std::span<const TubeMask>(&mask, 1), mask_token));
  }
  return {std::move(out), std::move(mask)};
}

// ---- forward ----------------------------------------------------------

Image frame_image(const Tensor& frames, std::size_t b) {
  const std::size_t ch = frames.extent(-3), h = frames.extent(-2), w = frames.extent(-1);
  Image img(ch, h, w);
  const auto d = frames.data().subspan(b * ch * h * w, ch * h * w);
  std::copy(d.begin(), d.end(), img.pixels.begin());
  return img;
}

FrameStream::FrameStream(const LcrModel& model, std::size_t batch, StreamOptions options)
    : model_(model), batch_(batch), options_(std::move(options)), geom_(model.config.geometry()) {
  if (!options_.masks.empty() && options_.masks.size() != batch) {
    throw DimensionError("FrameStream: need one tube mask per batch element");
  }
  if (options_.tail_average && options_.expected_frames == 0) {
    throw ConfigError("tail averaging needs the expected frame count");
  }
  state_ = RecurrentState::zeros({batch, model.config.tokens(), model.config.hidden});
  last_output_ = state_.hidden;
}

void FrameStream::push(const Tensor& frames, std::span<const EdgeMap> edges) {
  const ModelConfig& cfg = model_.config;
  const Tensor batched =
      frames.rank() == 3 ? reshape(frames, {1, frames.extent(0), frames.extent(1), frames.extent(2)}) : frames;
  if (batched.extent(0) != batch_) {
    throw DimensionError("FrameStream::push: batch " + std::to_string(batched.extent(0)) +
                         " vs stream batch " + std::to_string(batch_));
  }
  Tensor tokens = embed_frame(batched, model_);
  if (!options_.masks.empty()) tokens = apply_tube_mask(tokens, options_.masks, model_.mask_token);

  std::vector<EdgeMap> computed;
  if (edges.empty()) {
    for (std::size_t b = 0; b < batch_; ++b) computed.push_back(adaptive_canny(frame_image(batched, b), state_.frame));
    edges = computed;
  } else if (edges.size() != batch_) {
    throw DimensionError("FrameStream::push: need one edge map per batch element");
  }
  const Tensor edge_tokens = embed_edges(edge_maps_tensor(edges), model_.edge_embed, geom_);
  const Tensor no_edges = cfg.edge_every_layer ? Tensor() : Tensor::zeros(edge_tokens.shape());

  Tensor x = tokens;
  for (std::size_t l = 0; l < model_.blocks.size(); ++l) {
    const Tensor& e = (l == 0 || cfg.edge_every_layer) ? edge_tokens : no_edges;
    x = cross_rwkv_forward(x, state_.hidden, e, model_.blocks[l], geom_);
  }
  CellOutput out = cell_step(x, edge_tokens, state_, CellOptions{cfg.cell_clamp, cfg.cell_clamp_limit});
  state_ = std::move(out.state);
  last_output_ = std::move(out.output);

  if (options_.tail_average) {
    const std::size_t tail = (options_.expected_frames + 2) / 3;
    if (state_.frame + tail > options_.expected_frames) {
      const Tensor logits = classify(last_output_, state_.cell, model_.head, geom_);
      tail_sum_ = tail_sum_ ? *tail_sum_ + logits : logits;
      ++tail_count_;
    }
  }
}

Tensor FrameStream::logits() const {
  if (options_.tail_average && tail_sum_) {
    return scale(*tail_sum_, 1.0 / static_cast<double>(tail_count_));
  }
  return classify(last_output_, state_.cell, model_.head, geom_);
}

Tensor forward_video(const Tensor& video, const LcrModel& model, const StreamOptions& options) {
  const ModelConfig& cfg = model.config;
  const bool single = video.rank() == 4;
  if (!single && video.rank() != 5) {
    throw DimensionError("forward_video: expected [C, T, H, W] or [B, C, T, H, W], got " +
                         shape_string(video.shape()));
  }
  const std::size_t batch = single ? 1 : video.extent(0);
  const std::size_t frames = video.extent(-3);
  const int time_axis = single ? 1 : 2;
  FrameStream stream(model, batch, options);
  for (std::size_t t = 0; t < frames; ++t) {
    stream.push(reshape(slice(video, time_axis, t, t + 1),
                        {batch, cfg.in_channels, video.extent(-2), video.extent(-1)}));
  }
  const Tensor logits = stream.logits();
  return single ? reshape(logits, {cfg.num_classes}) : logits;
}

// ---- checkpoints ------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'C', 'R', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const LcrModel& model) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string config = format_key_values(model.config.to_key_values());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
  out.insert(out.end(), config.begin(), config.end());
  const auto params = model.parameters();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t e : p.tensor.shape()) put_le<std::uint64_t>(out, e);
    for (double v : p.tensor.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

LcrModel deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (in.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw std::runtime_error("not an LCR checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto config_len = in.get<std::uint32_t>();
  const ModelConfig config = ModelConfig::from_key_values(parse_key_values(in.str(config_len)));
  LcrModel model = LcrModel::create(config, 0);
  auto params = model.parameters();
  const auto count = in.get<std::uint32_t>();
  if (count != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                             std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::string name = in.str(in.get<std::uint32_t>());
    if (name != p.name) throw std::runtime_error("checkpoint tensor '" + name + "', expected '" + p.name + "'");
    Shape shape(in.get<std::uint32_t>());
    for (auto& e : shape) e = in.get<std::uint64_t>();
    if (shape != p.tensor.shape()) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + shape_string(shape) +
                               ", expected " + shape_string(p.tensor.shape()));
    }
    auto d = p.tensor.mutable_data();
    for (double& v : d) v = static_cast<double>(std::bit_cast<float>(in.get<std::uint32_t>()));
  }
  if (!in.done()) throw std::runtime_error("trailing bytes after checkpoint tensors");
  return model;
}

void save_checkpoint(const LcrModel& model, const std::string& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LcrModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void round_to_float32(LcrModel& model) {
  for (auto& p : model.parameters()) {
    Tensor t = p.tensor;
    for (double& v : t.mutable_data()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace lcr
