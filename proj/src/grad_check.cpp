#include "lcr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lcr {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

std::string GradCheckReport::describe() const {
  std::ostringstream out;
  out << "max relative error " << max_rel_error << " at " << worst_param << "[" << worst_index
      << "] (analytic " << analytic << ", numeric " << numeric << ", " << probes << " probes)";
  return out.str();
}

GradCheckReport grad_check(const std::function<Tensor()>& loss, const std::vector<NamedParam>& params,
                           double eps, std::size_t max_probes_per_param) {
  std::vector<Tensor> handles;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(true);
    t.zero_grad();
    handles.push_back(t);
  }

  std::vector<std::vector<double>> analytic(params.size());
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor value = loss();
    tape.backward(value);
  }
  for (std::size_t i = 0; i < handles.size(); ++i) {
    const auto g = handles[i].grad();
    analytic[i] = g.empty() ? std::vector<double>(handles[i].numel(), 0.0)
                            : std::vector<double>(g.begin(), g.end());
  }

  GradCheckReport report;
  Tape::Pause pause;
  for (std::size_t i = 0; i < handles.size(); ++i) {
    const std::size_t n = handles[i].numel();
    const std::size_t stride =
        max_probes_per_param == 0 || n <= max_probes_per_param ? 1 : n / max_probes_per_param;
    for (std::size_t j = 0; j < n; j += stride) {
      const double original = handles[i].data()[j];
      handles[i].mutable_data()[j] = original + eps;
      const double plus = loss().item();
      handles[i].mutable_data()[j] = original - eps;
      const double minus = loss().item();
      handles[i].mutable_data()[j] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = relative_error(analytic[i][j], numeric);
      ++report.probes;
      if (report.probes == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = params[i].name;
        report.worst_index = j;
        report.analytic = analytic[i][j];
        report.numeric = numeric;
      }
    }
  }
  for (auto& h : handles) h.zero_grad();
  return report;
}

}  // namespace lcr
