#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lcr/grad_check.hpp"
#include "lcr/random.hpp"
#include "lcr/tensor.hpp"
#include "lcr/token_shift.hpp"

namespace lcr {

// (H_t, C_t) carried from frame to frame.
struct RecurrentState {
  Tensor hidden;
  Tensor cell;
  std::size_t frame = 0;

  static RecurrentState zeros(const Shape& token_shape);
  std::size_t bytes() const { return (hidden.numel() + cell.numel()) * sizeof(double); }
};

struct CellOptions {
  // Clamp C_t to [-limit, limit]. Off by default so the cell follows the
  // recurrence literally.
  bool clamp_cell = false;
  double clamp_limit = 10.0;
};

struct CellOutput {
  Tensor output;  // O_t (equal to H_t)
  RecurrentState state;
};

// C_t = e * (tanh(A_t) + C_{t-1}) + C_{t-1}
// O_t = H_t = tanh(C_t) * sigmoid(A_t)
CellOutput cell_step(const Tensor& gate, const Tensor& edge, const RecurrentState& state,
                     const CellOptions& options = {});

struct ClassifierHead {
  Tensor ln_gain;  // [2C]
  Tensor ln_bias;  // [2C]
  Tensor weight;   // [2C, classes]

  static ClassifierHead create(std::size_t channels, std::size_t classes, Rng& rng);
  std::size_t classes() const { return weight.extent(1); }
  std::vector<NamedParam> parameters(const std::string& prefix) const;
};

// logits = LN(concat(O_T[cls], C_T[cls])) W_class, shape [..., classes].
Tensor classify(const Tensor& output, const Tensor& cell, const ClassifierHead& head,
                const GridGeometry& geom);

// Argmax with ties resolved toward the lowest class index.
std::size_t predict(std::span<const double> logits);
std::vector<std::size_t> predict_batch(const Tensor& logits);

}  // namespace lcr
