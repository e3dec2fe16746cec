#include "lcr/token_shift.hpp"

#include <string>
#include <vector>

#include "lcr/ops.hpp"

namespace lcr {

void GridGeometry::check(std::size_t count) const {
  if (count != tokens()) {
    throw DimensionError("token count " + std::to_string(count) + " does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " grid" +
                         (has_cls ? " + CLS" : ""));
  }
}

std::array<std::size_t, 4> quarter_sizes(std::size_t channels) {
  std::array<std::size_t, 4> q{};
  for (std::size_t i = 0; i < 4; ++i) q[i] = channels / 4 + (i < channels % 4 ? 1 : 0);
  return q;
}

namespace {

// Source token for every (token, channel) pair, or -1 for zero padding.
std::vector<long> shift_sources(const GridGeometry& geom, std::size_t channels) {
  const auto q = quarter_sizes(channels);
  std::vector<int> direction(channels);
  std::size_t c = 0;
  for (int d = 0; d < 4; ++d)
    for (std::size_t i = 0; i < q[static_cast<std::size_t>(d)]; ++i) direction[c++] = d;

  const std::size_t n = geom.tokens();
  std::vector<long> src(n * channels, -1);
  for (std::size_t r = 0; r < geom.rows; ++r) {
    for (std::size_t col = 0; col < geom.cols; ++col) {
      const std::size_t t = r * geom.cols + col;
      for (std::size_t ch = 0; ch < channels; ++ch) {
        long s = -1;
        switch (direction[ch]) {
          case 0: if (col > 0) s = static_cast<long>(t - 1); break;
          case 1: if (col + 1 < geom.cols) s = static_cast<long>(t + 1); break;
          case 2: if (r > 0) s = static_cast<long>(t - geom.cols); break;
          case 3: if (r + 1 < geom.rows) s = static_cast<long>(t + geom.cols); break;
        }
        src[t * channels + ch] = s;
      }
    }
  }
  if (geom.has_cls) {
    const std::size_t cls = n - 1;
    for (std::size_t ch = 0; ch < channels; ++ch) src[cls * channels + ch] = static_cast<long>(cls);
  }
  return src;
}

}  // namespace

Tensor grid_shift(const Tensor& tokens, const GridGeometry& geom) {
  if (tokens.rank() < 2) {
    throw DimensionError("grid_shift expects [..., tokens, channels], got " +
                         shape_string(tokens.shape()));
  }
  geom.check(tokens.extent(-2));
  const std::size_t channels = tokens.extent(-1);
  const std::size_t frame = geom.tokens() * channels;
  const std::size_t batch = tokens.numel() / frame;
  const std::vector<long> src = shift_sources(geom, channels);

  Tensor out(tokens.shape());
  auto od = out.mutable_data();
  const auto td = tokens.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < frame; ++i) {
      const long s = src[i];
      if (s >= 0) od[b * frame + i] = td[b * frame + static_cast<std::size_t>(s) * channels + i % channels];
    }
  }
  if (needs_grad({&tokens})) {
    record_op({tokens}, out, [tokens, src, frame, batch, channels](std::span<const double> g) mutable {
      auto gt = tokens.grad_buffer();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < frame; ++i) {
          const long s = src[i];
          if (s >= 0) gt[b * frame + static_cast<std::size_t>(s) * channels + i % channels] += g[b * frame + i];
        }
      }
    });
  }
  return out;
}

Tensor q_shift(const Tensor& tokens, const GridGeometry& geom, const Tensor& mix) {
  if (mix.numel() != tokens.extent(-1)) {
    throw DimensionError("q_shift: mix " + shape_string(mix.shape()) + " vs tokens " +
                         shape_string(tokens.shape()));
  }
  const Tensor m = clamp(mix, 0.0, 1.0);
  return tokens + m * (grid_shift(tokens, geom) - tokens);
}

}  // namespace lcr
