#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lcr/tensor.hpp"

namespace lcr {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t probes = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
  std::string describe() const;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Compares tape gradients of the scalar `loss` against central differences
// (f(θ+eps) - f(θ-eps)) / (2 eps), coordinate by coordinate. `loss` must read
// the parameters through the handles in `params`. With max_probes_per_param
// > 0 an evenly strided subset of coordinates is probed.
GradCheckReport grad_check(const std::function<Tensor()>& loss, const std::vector<NamedParam>& params,
                           double eps = 1e-5, std::size_t max_probes_per_param = 0);

}  // namespace lcr
