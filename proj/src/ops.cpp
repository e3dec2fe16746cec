#include "lcr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace lcr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<long>(small.size()));
}

Shape broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a.shape()) +
                       " with " + shape_string(b.shape()));
}

// Accumulates a gradient of the broadcast output shape into an operand that
// repeats every `n` elements.
void accumulate_broadcast(const Tensor& operand, std::span<const double> grad_out,
                          const std::vector<double>& factor) {
  auto g = operand.grad_buffer();
  const std::size_t n = g.size();
  if (factor.empty()) {
    for (std::size_t i = 0; i < grad_out.size(); ++i) g[i % n] += grad_out[i];
  } else {
    for (std::size_t i = 0; i < grad_out.size(); ++i) g[i % n] += grad_out[i] * factor[i];
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.extent(-2), k = a.extent(-1);
  const std::size_t kb = b.extent(-2), n = b.extent(-1);
  const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  if (k != kb || (!lead_a.empty() && !lead_b.empty() && lead_a != lead_b)) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const bool shared_b = lead_b.empty();
  const bool shared_a = !shared_b && lead_a.empty();
  Shape out_shape = shared_b ? lead_a : lead_b;
  const std::size_t batch = shape_numel(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  auto od = out.mutable_data();

  if (shared_b) {
    const auto rows = static_cast<Eigen::Index>(batch * m);
    MutMap(od.data(), rows, n).noalias() =
        ConstMap(a.data().data(), rows, k) * ConstMap(b.data().data(), k, n);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      const double* ap = a.data().data() + (shared_a ? 0 : i * m * k);
      MutMap(od.data() + i * m * n, m, n).noalias() =
          ConstMap(ap, m, k) * ConstMap(b.data().data() + i * k * n, k, n);
    }
  }

  if (needs_grad({&a, &b})) {
    record_op({a, b}, out, [a, b, m, k, n, batch, shared_a, shared_b](std::span<const double> g) mutable {
      if (shared_b) {
        const auto rows = static_cast<Eigen::Index>(batch * m);
        ConstMap gm(g.data(), rows, n);
        if (a.requires_grad()) {
          MutMap(a.grad_buffer().data(), rows, k).noalias() +=
              gm * ConstMap(b.data().data(), k, n).transpose();
        }
        if (b.requires_grad()) {
          MutMap(b.grad_buffer().data(), k, n).noalias() +=
              ConstMap(a.data().data(), rows, k).transpose() * gm;
        }
        return;
      }
      for (std::size_t i = 0; i < batch; ++i) {
        ConstMap gm(g.data() + i * m * n, m, n);
        const std::size_t a_off = shared_a ? 0 : i * m * k;
        if (a.requires_grad()) {
          MutMap(a.grad_buffer().data() + a_off, m, k).noalias() +=
              gm * ConstMap(b.data().data() + i * k * n, k, n).transpose();
        }
        if (b.requires_grad()) {
          MutMap(b.grad_buffer().data() + i * k * n, k, n).noalias() +=
              ConstMap(a.data().data() + a_off, m, k).transpose() * gm;
        }
      }
    });
  }
  return out;
}

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out(x.shape());
  auto od = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double v = xd[i];
    switch (kind) {
      case Activation::kSigmoid: od[i] = stable_sigmoid(v); break;
      case Activation::kTanh: od[i] = std::tanh(v); break;
      case Activation::kRelu: od[i] = v > 0.0 ? v : 0.0; break;
      case Activation::kSilu: od[i] = v * stable_sigmoid(v); break;
      case Activation::kExp: od[i] = std::exp(v); break;
      case Activation::kSquare: od[i] = v * v; break;
    }
  }
  if (needs_grad({&x})) {
    Tensor y = out;
    record_op({x}, out, [x, y, kind](std::span<const double> g) mutable {
      auto gx = x.grad_buffer();
      const auto xd = x.data();
      const auto yd = y.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = 0.0;
        switch (kind) {
          case Activation::kSigmoid: d = yd[i] * (1.0 - yd[i]); break;
          case Activation::kTanh: d = 1.0 - yd[i] * yd[i]; break;
          case Activation::kRelu: d = xd[i] > 0.0 ? 1.0 : 0.0; break;
          case Activation::kSilu: {
            const double s = stable_sigmoid(xd[i]);
            d = s + xd[i] * s * (1.0 - s);
            break;
          }
          case Activation::kExp: d = yd[i]; break;
          case Activation::kSquare: d = 2.0 * xd[i]; break;
        }
        gx[i] += g[i] * d;
      }
    });
  }
  return out;
}

Tensor grouped_layer_norm(const Tensor& x, std::size_t groups, const Tensor& gain,
                          const Tensor& bias, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm on a scalar");
  const std::size_t width = x.extent(-1);
  if (groups == 0 || width % groups != 0) {
    throw ConfigError("layer_norm: width " + std::to_string(width) +
                      " not divisible into " + std::to_string(groups) + " groups");
  }
  if (gain.numel() != width || bias.numel() != width) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) +
                         " do not match input " + shape_string(x.shape()));
  }
  const std::size_t gsize = width / groups;
  const std::size_t rows = x.numel() / width;
  Tensor out(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows * groups);
  auto od = out.mutable_data();
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      const std::size_t base = r * width + grp * gsize;
      double mu = 0.0;
      for (std::size_t j = 0; j < gsize; ++j) mu += xd[base + j];
      mu /= static_cast<double>(gsize);
      double var = 0.0;
      for (std::size_t j = 0; j < gsize; ++j) {
        const double c = xd[base + j] - mu;
        var += c * c;
      }
      var /= static_cast<double>(gsize);
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[r * groups + grp] = inv;
      for (std::size_t j = 0; j < gsize; ++j) {
        const std::size_t c = grp * gsize + j;
        const double h = (xd[base + j] - mu) * inv;
        xhat[base + j] = h;
        od[base + j] = h * gd[c] + bd[c];
      }
    }
  }
  if (needs_grad({&x, &gain, &bias})) {
    record_op({x, gain, bias}, out,
              [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
               groups, gsize, width](std::span<const double> g) mutable {
                const auto gd = gain.data();
                if (gain.requires_grad() || bias.requires_grad()) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < width; ++c) {
                      const std::size_t i = r * width + c;
                      if (gain.requires_grad()) gain.grad_buffer()[c] += g[i] * xhat[i];
                      if (bias.requires_grad()) bias.grad_buffer()[c] += g[i];
                    }
                  }
                }
                if (!x.requires_grad()) return;
                auto gx = x.grad_buffer();
                const double n = static_cast<double>(gsize);
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t grp = 0; grp < groups; ++grp) {
                    const std::size_t base = r * width + grp * gsize;
                    double mean_d = 0.0, mean_dh = 0.0;
                    for (std::size_t j = 0; j < gsize; ++j) {
                      const double d = g[base + j] * gd[grp * gsize + j];
                      mean_d += d;
                      mean_dh += d * xhat[base + j];
                    }
                    mean_d /= n;
                    mean_dh /= n;
                    const double inv = inv_std[r * groups + grp];
                    for (std::size_t j = 0; j < gsize; ++j) {
                      const double d = g[base + j] * gd[grp * gsize + j];
                      gx[base + j] += inv * (d - mean_d - xhat[base + j] * mean_dh);
                    }
                  }
                }
              });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  return grouped_layer_norm(x, 1, gain, bias, eps);
}

namespace {

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary(const char* name, const Tensor& a, const Tensor& b, BinaryKind kind) {
  Tensor out(broadcast_shape(name, a, b));
  auto od = out.mutable_data();
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t na = ad.size(), nb = bd.size();
  for (std::size_t i = 0; i < od.size(); ++i) {
    const double x = ad[i % na], y = bd[i % nb];
    od[i] = kind == BinaryKind::kAdd ? x + y : kind == BinaryKind::kSub ? x - y : x * y;
  }
  if (needs_grad({&a, &b})) {
    record_op({a, b}, out, [a, b, kind](std::span<const double> g) mutable {
      const std::size_t n = g.size();
      if (a.requires_grad()) {
        std::vector<double> factor;
        if (kind == BinaryKind::kMul) {
          factor.resize(n);
          const auto bd = b.data();
          for (std::size_t i = 0; i < n; ++i) factor[i] = bd[i % bd.size()];
        }
        accumulate_broadcast(a, g, factor);
      }
      if (b.requires_grad()) {
        std::vector<double> factor;
        if (kind == BinaryKind::kMul) {
          factor.resize(n);
          const auto ad = a.data();
          for (std::size_t i = 0; i < n; ++i) factor[i] = ad[i % ad.size()];
        } else if (kind == BinaryKind::kSub) {
          factor.assign(n, -1.0);
        }
        accumulate_broadcast(b, g, factor);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", a, b, BinaryKind::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", a, b, BinaryKind::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", a, b, BinaryKind::kMul); }

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape());
  auto od = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] * factor;
  if (needs_grad({&x})) {
    record_op({x}, out, [x, factor](std::span<const double> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, double value) {
  Tensor out(x.shape());
  auto od = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] + value;
  if (needs_grad({&x})) {
    record_op({x}, out, [x](std::span<const double> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (needs_grad({&x})) {
    record_op({x}, out, [x](std::span<const double> g) mutable {
      for (double& v : x.grad_buffer()) v += g[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_axis(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const Shape& s = x.shape();
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + static_cast<long>(ax)));
  const std::size_t ext = s[ax];
  const std::size_t inner = shape_numel(Shape(s.begin() + static_cast<long>(ax) + 1, s.end()));
  Shape out_shape = s;
  out_shape[ax] = 1;
  Tensor out(out_shape);
  auto od = out.mutable_data();
  const auto xd = x.data();
  const double inv = 1.0 / static_cast<double>(ext);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t e = 0; e < ext; ++e) {
      for (std::size_t i = 0; i < inner; ++i) od[o * inner + i] += xd[(o * ext + e) * inner + i];
    }
  }
  for (double& v : od) v *= inv;
  if (needs_grad({&x})) {
    record_op({x}, out, [x, outer, ext, inner, inv](std::span<const double> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t e = 0; e < ext; ++e) {
          for (std::size_t i = 0; i < inner; ++i) {
            gx[(o * ext + e) * inner + i] += g[o * inner + i] * inv;
          }
        }
      }
    });
  }
  return out;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  Tensor out(x.shape());
  auto od = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = std::clamp(xd[i], lo, hi);
  if (needs_grad({&x})) {
    record_op({x}, out, [x, lo, hi](std::span<const double> g) mutable {
      auto gx = x.grad_buffer();
      const auto xd = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xd[i] >= lo && xd[i] <= hi) gx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("log_softmax on a scalar");
  const std::size_t width = x.extent(-1);
  const std::size_t rows = x.numel() / width;
  Tensor out(x.shape());
  auto od = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < width; ++j) od[r * width + j] = row[j] - lse;
  }
  if (needs_grad({&x})) {
    Tensor y = out;
    record_op({x}, out, [x, y, rows, width](std::span<const double> g) mutable {
      auto gx = x.grad_buffer();
      const auto yd = y.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t j = 0; j < width; ++j) gs += g[r * width + j];
        for (std::size_t j = 0; j < width; ++j) {
          const std::size_t i = r * width + j;
          gx[i] += g[i] - std::exp(yd[i]) * gs;
        }
      }
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw DimensionError("concat of an empty list");
  const Shape& s0 = xs.front().shape();
  const std::size_t ax = normalize_axis(axis, s0.size());
  Shape out_shape = s0;
  out_shape[ax] = 0;
  std::vector<std::size_t> chunk(xs.size());
  const std::size_t outer = shape_numel(Shape(s0.begin(), s0.begin() + static_cast<long>(ax)));
  const std::size_t inner = shape_numel(Shape(s0.begin() + static_cast<long>(ax) + 1, s0.end()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Shape& si = xs[i].shape();
    bool ok = si.size() == s0.size();
    for (std::size_t d = 0; ok && d < si.size(); ++d) ok = d == ax || si[d] == s0[d];
    if (!ok) {
      throw DimensionError("concat: " + shape_string(si) + " incompatible with " +
                           shape_string(s0) + " on axis " + std::to_string(axis));
    }
    out_shape[ax] += si[ax];
    chunk[i] = si[ax] * inner;
  }
  Tensor out(out_shape);
  auto od = out.mutable_data();
  const std::size_t row = out_shape[ax] * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t off = o * row;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double* src = xs[i].data().data() + o * chunk[i];
      std::copy(src, src + chunk[i], od.begin() + static_cast<long>(off));
      off += chunk[i];
    }
  }
  if (needs_grad(xs)) {
    record_op(xs, out, [xs, chunk, outer, row](std::span<const double> g) mutable {
      for (std::size_t o = 0; o < outer; ++o) {
        std::size_t off = o * row;
        for (std::size_t i = 0; i < xs.size(); ++i) {
          if (xs[i].requires_grad()) {
            auto gi = xs[i].grad_buffer();
            for (std::size_t j = 0; j < chunk[i]; ++j) gi[o * chunk[i] + j] += g[off + j];
          }
          off += chunk[i];
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size());
  if (begin > end || end > s[ax]) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for axis of extent " + std::to_string(s[ax]));
  }
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + static_cast<long>(ax)));
  const std::size_t inner = shape_numel(Shape(s.begin() + static_cast<long>(ax) + 1, s.end()));
  Shape out_shape = s;
  out_shape[ax] = end - begin;
  Tensor out(out_shape);
  auto od = out.mutable_data();
  const std::size_t src_row = s[ax] * inner, dst_row = (end - begin) * inner;
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(xd.begin() + static_cast<long>(o * src_row + begin * inner),
              xd.begin() + static_cast<long>(o * src_row + end * inner),
              od.begin() + static_cast<long>(o * dst_row));
  }
  if (needs_grad({&x})) {
    record_op({x}, out, [x, outer, src_row, dst_row, begin, inner](std::span<const double> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < dst_row; ++j) gx[o * src_row + begin * inner + j] += g[o * dst_row + j];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (needs_grad({&x})) {
    record_op({x}, out, [x](std::span<const double> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor expand(const Tensor& x, const Shape& lead) {
  Shape out_shape = lead;
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  Tensor out(out_shape);
  auto od = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i % xd.size()];
  if (needs_grad({&x})) {
    record_op({x}, out, [x](std::span<const double> g) mutable {
      accumulate_broadcast(x, g, {});
    });
  }
  return out;
}

Tensor replace_rows(const Tensor& x, const std::vector<std::uint8_t>& mask, const Tensor& token) {
  const std::size_t width = x.extent(-1);
  const std::size_t rows = x.numel() / width;
  if (token.numel() != width || mask.size() != rows) {
    throw DimensionError("replace_rows: token " + shape_string(token.shape()) + " / mask of " +
                         std::to_string(mask.size()) + " rows vs input " +
                         shape_string(x.shape()));
  }
  Tensor out(x.shape());
  auto od = out.mutable_data();
  const auto xd = x.data();
  const auto td = token.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      od[r * width + c] = mask[r] ? td[c] : xd[r * width + c];
    }
  }
  if (needs_grad({&x, &token})) {
    record_op({x, token}, out, [x, token, mask, rows, width](std::span<const double> g) mutable {
      for (std::size_t r = 0; r < rows; ++r) {
        if (mask[r] && token.requires_grad()) {
          auto gt = token.grad_buffer();
          for (std::size_t c = 0; c < width; ++c) gt[c] += g[r * width + c];
        } else if (!mask[r] && x.requires_grad()) {
          auto gx = x.grad_buffer();
          for (std::size_t c = 0; c < width; ++c) gx[r * width + c] += g[r * width + c];
        }
      }
    });
  }
  return out;
}

Tensor patchify(const Tensor& image, std::size_t patch) {
  if (image.rank() < 3) {
    throw DimensionError("patchify expects [..., channels, H, W], got " +
                         shape_string(image.shape()));
  }
  const std::size_t channels = image.extent(-3), height = image.extent(-2),
                    width = image.extent(-1);
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw DimensionError("patchify: frame " + std::to_string(height) + "x" +
                         std::to_string(width) + " not divisible by patch " +
                         std::to_string(patch));
  }
  const std::size_t rows = height / patch, cols = width / patch;
  const std::size_t patch_len = channels * patch * patch;
  const std::size_t frame_len = channels * height * width;
  const std::size_t batch = image.numel() / frame_len;
  Shape out_shape(image.shape().begin(), image.shape().end() - 3);
  out_shape.push_back(rows * cols);
  out_shape.push_back(patch_len);

  // index[k] = source offset (within a frame) of output element k (within a frame)
  std::vector<std::size_t> index(frame_len);
  for (std::size_t pr = 0; pr < rows; ++pr) {
    for (std::size_t pc = 0; pc < cols; ++pc) {
      const std::size_t token = pr * cols + pc;
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < patch; ++y) {
          for (std::size_t x = 0; x < patch; ++x) {
            index[token * patch_len + (c * patch + y) * patch + x] =
                (c * height + pr * patch + y) * width + pc * patch + x;
          }
        }
      }
    }
  }
  Tensor out(out_shape);
  auto od = out.mutable_data();
  const auto id = image.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < frame_len; ++k) od[b * frame_len + k] = id[b * frame_len + index[k]];
  }
  if (needs_grad({&image})) {
    record_op({image}, out, [image, index = std::move(index), batch, frame_len](std::span<const double> g) mutable {
      auto gi = image.grad_buffer();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < frame_len; ++k) gi[b * frame_len + index[k]] += g[b * frame_len + k];
      }
    });
  }
  return out;
}

}  // namespace lcr
