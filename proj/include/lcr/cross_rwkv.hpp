#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lcr/grad_check.hpp"
#include "lcr/random.hpp"
#include "lcr/tensor.hpp"
#include "lcr/token_shift.hpp"
#include "lcr/wkv.hpp"

namespace lcr {

struct CrossRwkvConfig {
  std::size_t channels = 64;
  std::size_t heads = 4;
  std::size_t conv_kernel = 3;
  std::size_t hidden_ratio = 4;  // channel-mix expansion
  WkvMode mode = WkvMode::kBidirectional;
  bool rotary = false;  // rotate R and K by token index with learned frequencies
};

// Parameters of one Cross-RWKV block: causal aggregation of (x_t, h_{t-1}),
// spatial mix whose keys/values come from edge tokens, and channel mix.
struct CrossRwkvBlock {
  CrossRwkvConfig config;

  Tensor ln1_gain, ln1_bias;  // before spatial mix
  Tensor ln2_gain, ln2_bias;  // before channel mix

  Tensor conv_kernel;  // [kernel, 2C] depthwise, tap j reads token n - j
  Tensor conv_bias;    // [2C]
  Tensor conv_proj;    // [2C, C] pointwise
  Tensor conv_proj_bias;  // [C]

  Tensor mix_r, mix_g, mix_k, mix_v;  // Q-Shift interpolation, [C] each
  Tensor w_r, w_g, w_k, w_v, w_a;     // [C, C]
  WkvParams wkv;
  Tensor head_ln_gain, head_ln_bias;  // [C], normalized per head

  Tensor mix_rc, mix_kc;  // channel-mix shifts
  Tensor w_rc;            // [C, C]
  Tensor w_kc;            // [C, ratio*C]
  Tensor w_vc;            // [ratio*C, C]

  Tensor rotary_freqs;  // [C / 2], only with config.rotary

  static CrossRwkvBlock create(const CrossRwkvConfig& config, Rng& rng);

  std::vector<NamedParam> parameters(const std::string& prefix) const;

  // Closed form of the block's parameter count.
  static std::size_t parameter_count(std::size_t channels, std::size_t heads,
                                     std::size_t conv_kernel, std::size_t hidden_ratio = 4,
                                     bool rotary = false);
};

// Rotates channel pairs (2p, 2p + 1) of token n by the angle n * freqs[p].
Tensor rotary_embed(const Tensor& x, const Tensor& freqs);

// y[n, c] = bias[c] + sum_j kernel[j, c] * x[n - j, c] over the token axis,
// positions before the first token read as zero.
Tensor causal_depthwise_conv(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Cauconv(x_t, h_{t-1}): channel concat, causal depthwise conv, pointwise
// projection back to C channels.
Tensor causal_aggregate(const Tensor& x, const Tensor& h_prev, const CrossRwkvBlock& block);

// a_t = x + W_a( SiLU(G) * HeadLN(R . wkv(K, V)) ) where
//   R = QShift_R(Cauconv(LN1(x), h_prev)) W_R, G likewise with W_G,
//   K = QShift_K(edge) W_K,                    V = QShift_V(edge) W_V.
Tensor spatial_mix(const Tensor& x, const Tensor& h_prev, const Tensor& edge,
                   const CrossRwkvBlock& block, const GridGeometry& geom);

// A_t = a + sigmoid(R') * (ReLU(K')^2 W_V') with R', K' from Q-Shifted LN2(a).
Tensor channel_mix(const Tensor& a, const CrossRwkvBlock& block, const GridGeometry& geom);

// channel_mix(spatial_mix(...)).
Tensor cross_rwkv_forward(const Tensor& x, const Tensor& h_prev, const Tensor& edge,
                          const CrossRwkvBlock& block, const GridGeometry& geom);

}  // namespace lcr
