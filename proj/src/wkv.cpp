#include "lcr/wkv.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "lcr/ops.hpp"

namespace lcr {

namespace {

struct Layout {
  std::size_t batch = 0, steps = 0, heads = 0, dim = 0;

  std::size_t kv(std::size_t b, std::size_t t, std::size_t h) const {
    return ((b * steps + t) * heads + h) * dim;
  }
  std::size_t state(std::size_t b, std::size_t t, std::size_t h) const {
    return kv(b, t, h) * dim;
  }
};

Layout check_layout(const char* op, const Tensor& k, const Tensor& v, const Tensor& decay,
                    const Tensor& u) {
  if (k.rank() < 3 || k.shape() != v.shape()) {
    throw DimensionError(std::string(op) + ": keys " + shape_string(k.shape()) + " and values " +
                         shape_string(v.shape()) + " must share shape [..., T, heads, dim]");
  }
  Layout l;
  l.steps = k.extent(-3);
  l.heads = k.extent(-2);
  l.dim = k.extent(-1);
  const Shape head_shape{l.heads, l.dim};
  if (decay.shape() != head_shape || u.shape() != head_shape) {
    throw DimensionError(std::string(op) + ": decay " + shape_string(decay.shape()) + " / bonus " +
                         shape_string(u.shape()) + " must be " + shape_string(head_shape));
  }
  if (l.steps == 0) throw DimensionError(std::string(op) + ": empty token sequence");
  l.batch = k.numel() / (l.steps * l.heads * l.dim);
  return l;
}

Shape state_shape(const Tensor& k) {
  Shape s = k.shape();
  s.push_back(k.extent(-1));
  return s;
}

void add_bonus(const Layout& l, const double* k, const double* v, const double* u, double* out) {
  for (std::size_t b = 0; b < l.batch; ++b)
    for (std::size_t t = 0; t < l.steps; ++t)
      for (std::size_t h = 0; h < l.heads; ++h) {
        const double* kt = k + l.kv(b, t, h);
        const double* vt = v + l.kv(b, t, h);
        double* o = out + l.state(b, t, h);
        for (std::size_t j = 0; j < l.dim; ++j) {
          const double a = u[h * l.dim + j] * kt[j];
          for (std::size_t c = 0; c < l.dim; ++c) o[j * l.dim + c] += a * vt[c];
        }
      }
}

void bonus_backward(const Layout& l, const Tensor& k, const Tensor& v, const Tensor& u, std::span<const double> g) {
  const auto kd = k.data();
  const auto vd = v.data();
  const auto ud = u.data();
  for (std::size_t b = 0; b < l.batch; ++b)
    for (std::size_t t = 0; t < l.steps; ++t)
      for (std::size_t h = 0; h < l.heads; ++h) {
        const std::size_t base = l.kv(b, t, h);
        const double* gt = g.data() + l.state(b, t, h);
        for (std::size_t j = 0; j < l.dim; ++j) {
          double gv = 0.0;
          for (std::size_t c = 0; c < l.dim; ++c) gv += gt[j * l.dim + c] * vd[base + c];
          if (u.requires_grad()) u.grad_buffer()[h * l.dim + j] += gv * kd[base + j];
          if (k.requires_grad()) k.grad_buffer()[base + j] += gv * ud[h * l.dim + j];
          if (v.requires_grad()) {
            auto gvv = v.grad_buffer();
            const double a = ud[h * l.dim + j] * kd[base + j];
            for (std::size_t c = 0; c < l.dim; ++c) gvv[base + c] += a * gt[j * l.dim + c];
          }
        }
      }
}

// Adds the decayed sum over tokens preceding t (in scan order) to out_t.
// Reverse order realizes the anti-causal half.
void scan(const Layout& l, const double* k, const double* v, const double* w, bool reverse,
          double* out) {
  const std::size_t dd = l.dim * l.dim;
  std::vector<double> s(dd);
  for (std::size_t b = 0; b < l.batch; ++b)
    for (std::size_t h = 0; h < l.heads; ++h) {
      std::fill(s.begin(), s.end(), 0.0);
      const double* wh = w + h * l.dim;
      for (std::size_t step = 0; step < l.steps; ++step) {
        const std::size_t t = reverse ? l.steps - 1 - step : step;
        double* o = out + l.state(b, t, h);
        for (std::size_t i = 0; i < dd; ++i) o[i] += s[i];
        const double* kt = k + l.kv(b, t, h);
        const double* vt = v + l.kv(b, t, h);
        for (std::size_t j = 0; j < l.dim; ++j) {
          double* row = s.data() + j * l.dim;
          for (std::size_t c = 0; c < l.dim; ++c) row[c] = wh[j] * row[c] + kt[j] * vt[c];
        }
      }
    }
}

void scan_backward(const Layout& l, const Tensor& k, const Tensor& v, const Tensor& decay, bool reverse,
                   std::span<const double> g) {
  const std::size_t dd = l.dim * l.dim;
  const auto kd = k.data();
  const auto vd = v.data();
  const auto wd = decay.data();
  std::vector<double> states(l.steps * dd);
  std::vector<double> lam(dd);
  for (std::size_t b = 0; b < l.batch; ++b)
    for (std::size_t h = 0; h < l.heads; ++h) {
      const double* wh = wd.data() + h * l.dim;
      // states[step] is the state seen by the token at that scan step
      std::fill(states.begin(), states.begin() + static_cast<long>(dd), 0.0);
      for (std::size_t step = 0; step + 1 < l.steps; ++step) {
        const std::size_t t = reverse ? l.steps - 1 - step : step;
        const double* kt = kd.data() + l.kv(b, t, h);
        const double* vt = vd.data() + l.kv(b, t, h);
        const double* cur = states.data() + step * dd;
        double* nxt = states.data() + (step + 1) * dd;
        for (std::size_t j = 0; j < l.dim; ++j)
          for (std::size_t c = 0; c < l.dim; ++c)
            nxt[j * l.dim + c] = wh[j] * cur[j * l.dim + c] + kt[j] * vt[c];
      }
      std::fill(lam.begin(), lam.end(), 0.0);
      for (std::size_t step = l.steps; step-- > 0;) {
        const std::size_t t = reverse ? l.steps - 1 - step : step;
        const std::size_t base = l.kv(b, t, h);
        const double* cur = states.data() + step * dd;
        // lam holds d/dS at step+1, where S_{step+1} = w S_step + K_t^T V_t
        for (std::size_t j = 0; j < l.dim; ++j) {
          const double* lr = lam.data() + j * l.dim;
          double dw = 0.0, dk = 0.0;
          for (std::size_t c = 0; c < l.dim; ++c) {
            dw += lr[c] * cur[j * l.dim + c];
            dk += lr[c] * vd[base + c];
          }
          if (decay.requires_grad()) decay.grad_buffer()[h * l.dim + j] += dw;
          if (k.requires_grad()) k.grad_buffer()[base + j] += dk;
          if (v.requires_grad()) {
            auto gv = v.grad_buffer();
            for (std::size_t c = 0; c < l.dim; ++c) gv[base + c] += lr[c] * kd[base + j];
          }
        }
        const double* gt = g.data() + l.state(b, t, h);
        for (std::size_t j = 0; j < l.dim; ++j)
          for (std::size_t c = 0; c < l.dim; ++c)
            lam[j * l.dim + c] = gt[j * l.dim + c] + wh[j] * lam[j * l.dim + c];
      }
    }
}

Tensor scan_op(const char* name, const Tensor& k, const Tensor& v, const Tensor& decay,
               const Tensor& u, bool backward_half) {
  const Layout l = check_layout(name, k, v, decay, u);
  Tensor out(state_shape(k));
  auto od = out.mutable_data();
  add_bonus(l, k.data().data(), v.data().data(), u.data().data(), od.data());
  scan(l, k.data().data(), v.data().data(), decay.data().data(), false, od.data());
  if (backward_half) scan(l, k.data().data(), v.data().data(), decay.data().data(), true, od.data());
  if (needs_grad({&k, &v, &decay, &u})) {
    record_op({k, v, decay, u}, out, [k, v, decay, u, l, backward_half](std::span<const double> g) mutable {
      bonus_backward(l, k, v, u, g);
      scan_backward(l, k, v, decay, false, g);
      if (backward_half) scan_backward(l, k, v, decay, true, g);
    });
  }
  return out;
}

}  // namespace

WkvParams WkvParams::create(std::size_t heads, std::size_t head_dim, Rng& rng) {
  WkvParams p;
  p.heads = heads;
  p.head_dim = head_dim;
  p.omega = Tensor({heads, head_dim}, true);
  p.u = Tensor({heads, head_dim}, true);
  auto om = p.omega.mutable_data();
  auto ud = p.u.mutable_data();
  // decay rates spread from slow (w ~ 0.98) to moderate (w ~ 0.55) within each head
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t j = 0; j < head_dim; ++j) {
      const double frac = head_dim > 1 ? static_cast<double>(j) / static_cast<double>(head_dim - 1) : 0.5;
      om[h * head_dim + j] = -4.0 + 3.5 * frac;
      ud[h * head_dim + j] = rng.uniform(-0.5, 0.5);
    }
  }
  return p;
}

Tensor decay_from_omega(const Tensor& omega) { return exp(scale(exp(omega), -1.0)); }

Tensor wkv_bruteforce(const Tensor& k, const Tensor& v, const Tensor& decay, const Tensor& u) {
  const Layout l = check_layout("wkv_bruteforce", k, v, decay, u);
  Tensor out(state_shape(k));
  auto od = out.mutable_data();
  const auto kd = k.data();
  const auto vd = v.data();
  const auto wd = decay.data();
  const auto ud = u.data();
  std::vector<double> wpow(l.dim);
  for (std::size_t b = 0; b < l.batch; ++b)
    for (std::size_t t = 0; t < l.steps; ++t)
      for (std::size_t h = 0; h < l.heads; ++h) {
        double* o = od.data() + l.state(b, t, h);
        const std::size_t bt = l.kv(b, t, h);
        for (std::size_t j = 0; j < l.dim; ++j)
          for (std::size_t c = 0; c < l.dim; ++c)
            o[j * l.dim + c] = ud[h * l.dim + j] * kd[bt + j] * vd[bt + c];
        for (std::size_t i = 0; i < t; ++i) {
          const double exponent = static_cast<double>(t - 1 - i);
          for (std::size_t j = 0; j < l.dim; ++j) wpow[j] = std::pow(wd[h * l.dim + j], exponent);
          const std::size_t bi = l.kv(b, i, h);
          for (std::size_t j = 0; j < l.dim; ++j) {
            const double a = wpow[j] * kd[bi + j];
            for (std::size_t c = 0; c < l.dim; ++c) o[j * l.dim + c] += a * vd[bi + c];
          }
        }
      }
  if (needs_grad({&k, &v, &decay, &u})) {
    record_op({k, v, decay, u}, out, [k, v, decay, u, l](std::span<const double> g) mutable {
      bonus_backward(l, k, v, u, g);
      const auto kd = k.data();
      const auto vd = v.data();
      const auto wd = decay.data();
      for (std::size_t b = 0; b < l.batch; ++b)
        for (std::size_t t = 0; t < l.steps; ++t)
          for (std::size_t h = 0; h < l.heads; ++h) {
            const double* gt = g.data() + l.state(b, t, h);
            for (std::size_t i = 0; i < t; ++i) {
              const std::size_t n = t - 1 - i;
              const std::size_t bi = l.kv(b, i, h);
              for (std::size_t j = 0; j < l.dim; ++j) {
                const double w = wd[h * l.dim + j];
                const double p = std::pow(w, static_cast<double>(n));
                double gv = 0.0;
                for (std::size_t c = 0; c < l.dim; ++c) gv += gt[j * l.dim + c] * vd[bi + c];
                if (k.requires_grad()) k.grad_buffer()[bi + j] += p * gv;
                if (decay.requires_grad() && n > 0) {
                  decay.grad_buffer()[h * l.dim + j] +=
                      static_cast<double>(n) * std::pow(w, static_cast<double>(n - 1)) * kd[bi + j] * gv;
                }
                if (v.requires_grad()) {
                  auto gvv = v.grad_buffer();
                  const double a = p * kd[bi + j];
                  for (std::size_t c = 0; c < l.dim; ++c) gvv[bi + c] += a * gt[j * l.dim + c];
                }
              }
            }
          }
    });
  }
  return out;
}

Tensor wkv_recurrent(const Tensor& k, const Tensor& v, const Tensor& decay, const Tensor& u) {
  return scan_op("wkv_recurrent", k, v, decay, u, false);
}

Tensor wkv_bidirectional(const Tensor& k, const Tensor& v, const Tensor& decay, const Tensor& u,
                         bool include_backward) {
  return scan_op("wkv_bidirectional", k, v, decay, u, include_backward);
}

Tensor wkv(const Tensor& k, const Tensor& v, const WkvParams& params, WkvMode mode) {
  const Tensor decay = decay_from_omega(params.omega);
  return scan_op("wkv", k, v, decay, params.u, mode == WkvMode::kBidirectional);
}

Tensor wkv_bruteforce(const Tensor& k, const Tensor& v, const WkvParams& params) {
  return wkv_bruteforce(k, v, decay_from_omega(params.omega), params.u);
}

Tensor wkv_recurrent(const Tensor& k, const Tensor& v, const WkvParams& params) {
  return wkv_recurrent(k, v, decay_from_omega(params.omega), params.u);
}

Tensor wkv_bidirectional(const Tensor& k, const Tensor& v, const WkvParams& params) {
  return wkv_bidirectional(k, v, decay_from_omega(params.omega), params.u, true);
}

Tensor apply_receptance(const Tensor& r, const Tensor& wkv) {
  if (r.rank() < 1 || wkv.rank() != r.rank() + 1 ||
      !std::equal(r.shape().begin(), r.shape().end(), wkv.shape().begin()) ||
      wkv.extent(-1) != r.extent(-1)) {
    throw DimensionError("apply_receptance: receptance " + shape_string(r.shape()) +
                         " incompatible with wkv " + shape_string(wkv.shape()));
  }
  const std::size_t dim = r.extent(-1);
  const std::size_t rows = r.numel() / dim;
  Tensor out(r.shape());
  auto od = out.mutable_data();
  const auto rd = r.data();
  const auto wd = wkv.data();
  for (std::size_t n = 0; n < rows; ++n) {
    const double* rr = rd.data() + n * dim;
    const double* m = wd.data() + n * dim * dim;
    double* o = od.data() + n * dim;
    for (std::size_t j = 0; j < dim; ++j)
      for (std::size_t c = 0; c < dim; ++c) o[c] += rr[j] * m[j * dim + c];
  }
  if (needs_grad({&r, &wkv})) {
    record_op({r, wkv}, out, [r, wkv, rows, dim](std::span<const double> g) mutable {
      const auto rd = r.data();
      const auto wd = wkv.data();
      for (std::size_t n = 0; n < rows; ++n) {
        const double* gn = g.data() + n * dim;
        if (r.requires_grad()) {
          auto gr = r.grad_buffer();
          for (std::size_t j = 0; j < dim; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < dim; ++c) acc += wd[n * dim * dim + j * dim + c] * gn[c];
            gr[n * dim + j] += acc;
          }
        }
        if (wkv.requires_grad()) {
          auto gw = wkv.grad_buffer();
          for (std::size_t j = 0; j < dim; ++j)
            for (std::size_t c = 0; c < dim; ++c) gw[n * dim * dim + j * dim + c] += rd[n * dim + j] * gn[c];
        }
      }
    });
  }
  return out;
}

}  // namespace lcr
