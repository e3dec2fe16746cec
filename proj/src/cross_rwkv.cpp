#include "lcr/cross_rwkv.hpp"

#include <cmath>

#include "lcr/ops.hpp"

namespace lcr {

namespace {

Tensor fan_in_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng.uniform_tensor({fan_in, fan_out}, -bound, bound, true);
}

Tensor ones(std::size_t n) { return Tensor::full({n}, 1.0, true); }
Tensor zeros(Shape s) { return Tensor::zeros(std::move(s), true); }

Tensor split_heads(const Tensor& x, std::size_t heads) {
  Shape s = x.shape();
  const std::size_t c = s.back();
  s.back() = heads;
  s.push_back(c / heads);
  return reshape(x, s);
}

Tensor merge_heads(const Tensor& x) {
  Shape s(x.shape().begin(), x.shape().end() - 1);
  s.back() *= x.extent(-1);
  return reshape(x, s);
}

}  // namespace

CrossRwkvBlock CrossRwkvBlock::create(const CrossRwkvConfig& config, Rng& rng) {
  const std::size_t c = config.channels;
  if (config.heads == 0 || c % config.heads != 0) {
    throw ConfigError("channels " + std::to_string(c) + " not divisible by heads " +
                      std::to_string(config.heads));
  }
  if (config.conv_kernel == 0) throw ConfigError("causal conv kernel must be >= 1");
  CrossRwkvBlock b;
  b.config = config;
  b.ln1_gain = ones(c);
  b.ln1_bias = zeros({c});
  b.ln2_gain = ones(c);
  b.ln2_bias = zeros({c});

  // identity depthwise filter: tap 0 passes the current token through
  b.conv_kernel = zeros({config.conv_kernel, 2 * c});
  auto kd = b.conv_kernel.mutable_data();
  for (std::size_t ch = 0; ch < 2 * c; ++ch) kd[ch] = 1.0;
  b.conv_bias = zeros({2 * c});
  b.conv_proj = fan_in_uniform(rng, 2 * c, c);
  b.conv_proj_bias = zeros({c});

  for (Tensor* mix : {&b.mix_r, &b.mix_g, &b.mix_k, &b.mix_v, &b.mix_rc, &b.mix_kc}) {
    *mix = Tensor::full({c}, 0.5, true);
  }
  b.w_r = fan_in_uniform(rng, c, c);
  b.w_g = fan_in_uniform(rng, c, c);
  b.w_k = fan_in_uniform(rng, c, c);
  b.w_v = fan_in_uniform(rng, c, c);
  b.w_a = zeros({c, c});
  b.wkv = WkvParams::create(config.heads, c / config.heads, rng);
  b.head_ln_gain = ones(c);
  b.head_ln_bias = zeros({c});

  b.w_rc = fan_in_uniform(rng, c, c);
  b.w_kc = fan_in_uniform(rng, c, config.hidden_ratio * c);
  b.w_vc = zeros({config.hidden_ratio * c, c});
  if (config.rotary) {
    if (c % 2 != 0) throw ConfigError("rotary encoding needs an even channel count");
    b.rotary_freqs = Tensor({c / 2}, true);
    auto fd = b.rotary_freqs.mutable_data();
    for (std::size_t p = 0; p < c / 2; ++p) {
      fd[p] = std::pow(100.0, -2.0 * static_cast<double>(p) / static_cast<double>(c));
    }
  }
  return b;
}

std::vector<NamedParam> CrossRwkvBlock::parameters(const std::string& prefix) const {
  std::vector<NamedParam> params{
      {prefix + "ln1_gain", ln1_gain},   {prefix + "ln1_bias", ln1_bias},
      {prefix + "ln2_gain", ln2_gain},   {prefix + "ln2_bias", ln2_bias},
      {prefix + "conv_kernel", conv_kernel}, {prefix + "conv_bias", conv_bias},
      {prefix + "conv_proj", conv_proj}, {prefix + "conv_proj_bias", conv_proj_bias},
      {prefix + "mix_r", mix_r},         {prefix + "mix_g", mix_g},
      {prefix + "mix_k", mix_k},         {prefix + "mix_v", mix_v},
      {prefix + "w_r", w_r},             {prefix + "w_g", w_g},
      {prefix + "w_k", w_k},             {prefix + "w_v", w_v},
      {prefix + "w_a", w_a},             {prefix + "wkv_omega", wkv.omega},
      {prefix + "wkv_u", wkv.u},         {prefix + "head_ln_gain", head_ln_gain},
      {prefix + "head_ln_bias", head_ln_bias}, {prefix + "mix_rc", mix_rc},
      {prefix + "mix_kc", mix_kc},       {prefix + "w_rc", w_rc},
      {prefix + "w_kc", w_kc},           {prefix + "w_vc", w_vc},
  };
  if (config.rotary) params.push_back({prefix + "rotary_freqs", rotary_freqs});
  return params;
}

std::size_t CrossRwkvBlock::parameter_count(std::size_t channels, std::size_t heads,
                                            std::size_t conv_kernel, std::size_t hidden_ratio,
                                            bool rotary) {
  (void)heads;  // head split partitions C; omega/u/head-LN total C each regardless of h
  const std::size_t c = channels;
  const std::size_t norms = 4 * c + 2 * c;                       // ln1, ln2, head LN
  const std::size_t conv = conv_kernel * 2 * c + 2 * c + 2 * c * c + c;
  const std::size_t shifts = 6 * c;
  const std::size_t spatial = 5 * c * c + 2 * c;                 // W_R,G,K,V,a + omega, u
  const std::size_t channel = c * c + 2 * hidden_ratio * c * c;  // W_R', W_K', W_V'
  return norms + conv + shifts + spatial + channel + (rotary ? c / 2 : 0);
}

Tensor rotary_embed(const Tensor& x, const Tensor& freqs) {
  if (x.rank() < 2 || x.extent(-1) % 2 != 0 || freqs.numel() != x.extent(-1) / 2) {
    throw DimensionError("rotary_embed: input " + shape_string(x.shape()) + ", freqs " +
                         shape_string(freqs.shape()));
  }
  const std::size_t n = x.extent(-2), ch = x.extent(-1), pairs = ch / 2;
  const std::size_t batch = x.numel() / (n * ch);
  Tensor out(x.shape());
  auto od = out.mutable_data();
  const auto xd = x.data();
  const auto fd = freqs.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t p = 0; p < pairs; ++p) {
        const double angle = static_cast<double>(t) * fd[p];
        const double cs = std::cos(angle), sn = std::sin(angle);
        const std::size_t i = (b * n + t) * ch + 2 * p;
        od[i] = xd[i] * cs - xd[i + 1] * sn;
        od[i + 1] = xd[i] * sn + xd[i + 1] * cs;
      }
  if (needs_grad({&x, &freqs})) {
    Tensor y = out;
    record_op({x, freqs}, out, [x, freqs, y, n, ch, pairs, batch](std::span<const double> g) mutable {
      const auto fd = freqs.data();
      const auto yd = y.data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t p = 0; p < pairs; ++p) {
            const double pos = static_cast<double>(t);
            const double angle = pos * fd[p];
            const double cs = std::cos(angle), sn = std::sin(angle);
            const std::size_t i = (b * n + t) * ch + 2 * p;
            if (x.requires_grad()) {
              auto gx = x.grad_buffer();
              gx[i] += g[i] * cs + g[i + 1] * sn;
              gx[i + 1] += -g[i] * sn + g[i + 1] * cs;
            }
            if (freqs.requires_grad()) {
              freqs.grad_buffer()[p] += pos * (-g[i] * yd[i + 1] + g[i + 1] * yd[i]);
            }
          }
    });
  }
  return out;
}

Tensor causal_depthwise_conv(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() < 2 || kernel.rank() != 2 || kernel.extent(1) != x.extent(-1) ||
      bias.numel() != x.extent(-1)) {
    throw DimensionError("causal conv: input " + shape_string(x.shape()) + ", kernel " +
                         shape_string(kernel.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const std::size_t n = x.extent(-2), ch = x.extent(-1), taps = kernel.extent(0);
  const std::size_t batch = x.numel() / (n * ch);
  Tensor out(x.shape());
  auto od = out.mutable_data();
  const auto xd = x.data();
  const auto kd = kernel.data();
  const auto bd = bias.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = bd[c];
        for (std::size_t j = 0; j < taps && j <= t; ++j) acc += kd[j * ch + c] * xd[(b * n + t - j) * ch + c];
        od[(b * n + t) * ch + c] = acc;
      }
  if (needs_grad({&x, &kernel, &bias})) {
    record_op({x, kernel, bias}, out, [x, kernel, bias, n, ch, taps, batch](std::span<const double> g) mutable {
      const auto xd = x.data();
      const auto kd = kernel.data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t c = 0; c < ch; ++c) {
            const double gi = g[(b * n + t) * ch + c];
            if (bias.requires_grad()) bias.grad_buffer()[c] += gi;
            for (std::size_t j = 0; j < taps && j <= t; ++j) {
              const std::size_t src = (b * n + t - j) * ch + c;
              if (kernel.requires_grad()) kernel.grad_buffer()[j * ch + c] += gi * xd[src];
              if (x.requires_grad()) x.grad_buffer()[src] += gi * kd[j * ch + c];
            }
          }
    });
  }
  return out;
}

Tensor causal_aggregate(const Tensor& x, const Tensor& h_prev, const CrossRwkvBlock& block) {
  if (x.shape() != h_prev.shape()) {
    throw DimensionError("causal_aggregate: x " + shape_string(x.shape()) + " vs h_prev " +
                         shape_string(h_prev.shape()));
  }
  const Tensor joined = concat({x, h_prev}, -1);
  const Tensor mixed = causal_depthwise_conv(joined, block.conv_kernel, block.conv_bias);
  return matmul(mixed, block.conv_proj) + block.conv_proj_bias;
}

Tensor spatial_mix(const Tensor& x, const Tensor& h_prev, const Tensor& edge,
                   const CrossRwkvBlock& block, const GridGeometry& geom) {
  if (edge.shape() != x.shape()) {
    throw DimensionError("spatial_mix: edge tokens " + shape_string(edge.shape()) + " vs " +
                         shape_string(x.shape()));
  }
  const std::size_t heads = block.config.heads;
  const Tensor normed = layer_norm(x, block.ln1_gain, block.ln1_bias);
  const Tensor agg = causal_aggregate(normed, h_prev, block);
  Tensor r = matmul(q_shift(agg, geom, block.mix_r), block.w_r);
  const Tensor g = matmul(q_shift(agg, geom, block.mix_g), block.w_g);
  Tensor k = matmul(q_shift(edge, geom, block.mix_k), block.w_k);
  if (block.config.rotary) {
    r = rotary_embed(r, block.rotary_freqs);
    k = rotary_embed(k, block.rotary_freqs);
  }
  const Tensor v = matmul(q_shift(edge, geom, block.mix_v), block.w_v);

  const Tensor state = wkv(split_heads(k, heads), split_heads(v, heads), block.wkv, block.config.mode);
  const Tensor attended = merge_heads(apply_receptance(split_heads(r, heads), state));
  const Tensor normed_heads =
      grouped_layer_norm(attended, heads, block.head_ln_gain, block.head_ln_bias);
  return x + matmul(silu(g) * normed_heads, block.w_a);
}

Tensor channel_mix(const Tensor& a, const CrossRwkvBlock& block, const GridGeometry& geom) {
  const Tensor normed = layer_norm(a, block.ln2_gain, block.ln2_bias);
  const Tensor r = matmul(q_shift(normed, geom, block.mix_rc), block.w_rc);
  const Tensor k = matmul(q_shift(normed, geom, block.mix_kc), block.w_kc);
  const Tensor v = matmul(square(relu(k)), block.w_vc);
  return a + sigmoid(r) * v;
}

Tensor cross_rwkv_forward(const Tensor& x, const Tensor& h_prev, const Tensor& edge,
                          const CrossRwkvBlock& block, const GridGeometry& geom) {
  return channel_mix(spatial_mix(x, h_prev, edge, block, geom), block, geom);
}

}  // namespace lcr
