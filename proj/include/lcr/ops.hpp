#pragma once

#include <cstdint>
#include <vector>

#include "lcr/tensor.hpp"

// Differentiable tensor operations. Every op records a backward rule on the
// active tape when any input requires a gradient.
//
// Broadcasting is restricted to leading batch axes: a binary operand may
// have a shape that is a suffix of the other's shape, and is then repeated
// over the remaining leading axes.
namespace lcr {

enum class Activation { kSigmoid, kTanh, kRelu, kSilu, kExp, kSquare };

// [..., m, k] x [..., k, n]. Either side may omit the batch axes.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor activation(const Tensor& x, Activation kind);
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::kSigmoid); }
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::kTanh); }
inline Tensor relu(const Tensor& x) { return activation(x, Activation::kRelu); }
inline Tensor silu(const Tensor& x) { return activation(x, Activation::kSilu); }
inline Tensor exp(const Tensor& x) { return activation(x, Activation::kExp); }
inline Tensor square(const Tensor& x) { return activation(x, Activation::kSquare); }

// Normalizes the last axis to zero mean / unit variance, then applies the
// per-channel affine map.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// layer_norm applied independently to `groups` equal slices of the last axis.
// gain and bias span the whole last axis.
Tensor grouped_layer_norm(const Tensor& x, std::size_t groups, const Tensor& gain,
                          const Tensor& bias, double eps = 1e-5);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over `axis`, keeping it with extent 1.
Tensor mean_axis(const Tensor& x, int axis);

// Elementwise clamp; the gradient is zero where the input was clipped.
Tensor clamp(const Tensor& x, double lo, double hi);

// Row-wise log-softmax over the last axis.
Tensor log_softmax(const Tensor& x);

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

// Prepends `lead` axes, repeating x along them.
Tensor expand(const Tensor& x, const Shape& lead);

// Rows of x ([..., N, C], viewed as R rows of C) flagged in `mask` (length R)
// are replaced by `token` ([C]).
Tensor replace_rows(const Tensor& x, const std::vector<std::uint8_t>& mask,
                    const Tensor& token);

// Non-overlapping P x P patches of [..., channels, H, W], returned as
// [..., (H/P)*(W/P), channels*P*P] in row-major patch order. Within a patch
// values are ordered (channel, row, col).
Tensor patchify(const Tensor& image, std::size_t patch);

}  // namespace lcr
