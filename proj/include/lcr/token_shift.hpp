#pragma once

#include <array>
#include <cstddef>

#include "lcr/tensor.hpp"

namespace lcr {

// Patch grid of one frame. Tokens are laid out row-major, CLS (if any) last.
struct GridGeometry {
  std::size_t rows = 1;
  std::size_t cols = 1;
  bool has_cls = true;

  std::size_t patches() const { return rows * cols; }
  std::size_t tokens() const { return patches() + (has_cls ? 1 : 0); }
  // Throws DimensionError when `count` tokens cannot live on this grid.
  void check(std::size_t count) const;
};

// Channel counts of the four shift directions (left, right, up, down). The
// first C % 4 quarters receive one extra channel.
std::array<std::size_t, 4> quarter_sizes(std::size_t channels);

// Each token takes channel quarter 1 from its left neighbor, quarter 2 from
// the right, quarter 3 from above and quarter 4 from below. Out-of-grid
// neighbors read as zero; the CLS token keeps its own values.
Tensor grid_shift(const Tensor& tokens, const GridGeometry& geom);

// (1 - m) * tokens + m * grid_shift(tokens), m = clamp(mix, 0, 1) per channel.
Tensor q_shift(const Tensor& tokens, const GridGeometry& geom, const Tensor& mix);

}  // namespace lcr
