#include "lcr/lcr_cell.hpp"

#include <cmath>

#include "lcr/ops.hpp"

namespace lcr {

RecurrentState RecurrentState::zeros(const Shape& token_shape) {
  RecurrentState s;
  s.hidden = Tensor::zeros(token_shape);
  s.cell = Tensor::zeros(token_shape);
  return s;
}

CellOutput cell_step(const Tensor& gate, const Tensor& edge, const RecurrentState& state,
                     const CellOptions& options) {
  if (gate.shape() != edge.shape() || gate.shape() != state.cell.shape()) {
    throw DimensionError("cell_step: gate " + shape_string(gate.shape()) + ", edge " +
                         shape_string(edge.shape()) + ", state " + shape_string(state.cell.shape()));
  }
  Tensor cell = edge * (tanh(gate) + state.cell) + state.cell;
  if (options.clamp_cell) cell = clamp(cell, -options.clamp_limit, options.clamp_limit);
  Tensor hidden = tanh(cell) * sigmoid(gate);
  CellOutput out;
  out.output = hidden;
  out.state.hidden = hidden;
  out.state.cell = cell;
  out.state.frame = state.frame + 1;
  return out;
}

ClassifierHead ClassifierHead::create(std::size_t channels, std::size_t classes, Rng& rng) {
  ClassifierHead h;
  h.ln_gain = Tensor::full({2 * channels}, 1.0, true);
  h.ln_bias = Tensor::zeros({2 * channels}, true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(2 * channels));
  h.weight = rng.uniform_tensor({2 * channels, classes}, -bound, bound, true);
  return h;
}

std::vector<NamedParam> ClassifierHead::parameters(const std::string& prefix) const {
  return {{prefix + "ln_gain", ln_gain}, {prefix + "ln_bias", ln_bias}, {prefix + "weight", weight}};
}

namespace {

Tensor cls_token(const Tensor& tokens, const GridGeometry& geom) {
  geom.check(tokens.extent(-2));
  const std::size_t last = tokens.extent(-2) - 1;
  const Tensor row = slice(tokens, -2, last, last + 1);
  Shape s(tokens.shape().begin(), tokens.shape().end() - 2);
  s.push_back(tokens.extent(-1));
  return reshape(row, s);
}

}  // namespace

Tensor classify(const Tensor& output, const Tensor& cell, const ClassifierHead& head,
                const GridGeometry& geom) {
  if (!geom.has_cls) throw ConfigError("classify: token grid has no CLS token");
  const Tensor features = concat({cls_token(output, geom), cls_token(cell, geom)}, -1);
  const Tensor normed = layer_norm(features, head.ln_gain, head.ln_bias);
  if (normed.rank() == 1) {
    return reshape(matmul(reshape(normed, {1, normed.numel()}), head.weight), {head.classes()});
  }
  return matmul(normed, head.weight);
}

std::size_t predict(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> predict_batch(const Tensor& logits) {
  const std::size_t k = logits.extent(-1);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < logits.numel() / k; ++r) out.push_back(predict(logits.data().subspan(r * k, k)));
  return out;
}

}  // namespace lcr
