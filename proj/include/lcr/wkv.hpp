#pragma once

#include <cstddef>

#include "lcr/random.hpp"
#include "lcr/tensor.hpp"

// Linear-complexity WKV attention: per head, a decayed sum of key/value
// outer products plus a bonus term for the current token.
//
//   wkv_t = diag(u) K_t^T V_t + sum_{i<t} diag(w)^(t-1-i) K_i^T V_i
//
// with w = exp(-exp(omega)). The state is matrix valued (no normalizing
// denominator). Key tensors are [..., T, heads, head_dim]; outputs are
// [..., T, heads, head_dim, head_dim] indexed (key channel, value channel).
namespace lcr {

enum class WkvMode { kCausal, kBidirectional };

struct WkvParams {
  Tensor omega;  // [heads, head_dim]
  Tensor u;      // [heads, head_dim]
  std::size_t heads = 0;
  std::size_t head_dim = 0;

  static WkvParams create(std::size_t heads, std::size_t head_dim, Rng& rng);
};

// exp(-exp(omega)); every entry lies in (0, 1) for finite omega.
Tensor decay_from_omega(const Tensor& omega);

// Literal O(T^2) double sum. Serves as the reference for the scans.
Tensor wkv_bruteforce(const Tensor& k, const Tensor& v, const Tensor& decay, const Tensor& u);

// O(T) scan: S_0 = 0, S_t = diag(w) S_{t-1} + K_{t-1}^T V_{t-1},
// out_t = diag(u) K_t^T V_t + S_t.
Tensor wkv_recurrent(const Tensor& k, const Tensor& v, const Tensor& decay, const Tensor& u);

// Causal scan plus the mirrored anti-causal scan
//   sum_{i>t} diag(w)^(i-t-1) K_i^T V_i,
// with the current token counted once through the bonus. With
// include_backward = false this is wkv_recurrent.
Tensor wkv_bidirectional(const Tensor& k, const Tensor& v, const Tensor& decay, const Tensor& u,
                         bool include_backward = true);

Tensor wkv(const Tensor& k, const Tensor& v, const WkvParams& params, WkvMode mode);
Tensor wkv_bruteforce(const Tensor& k, const Tensor& v, const WkvParams& params);
Tensor wkv_recurrent(const Tensor& k, const Tensor& v, const WkvParams& params);
Tensor wkv_bidirectional(const Tensor& k, const Tensor& v, const WkvParams& params);

// Row vector times matrix per token and head: out[.., t, h, :] = R[.., t, h, :] . wkv[.., t, h].
Tensor apply_receptance(const Tensor& r, const Tensor& wkv);

}  // namespace lcr
