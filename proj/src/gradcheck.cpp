#include "sdcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sdcn {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

double evaluate(const LossFn& fn, const std::vector<GradInput>& inputs,
                const std::string& op) {
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& in : inputs) vars.push_back(Var::constant(in.value));
  const double v = fn(vars).item();
  if (!std::isfinite(v)) {
    throw std::runtime_error("grad_check(" + op + "): non-finite loss");
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::string& op, const LossFn& loss_fn,
                           std::vector<GradInput> inputs, double step,
                           bool measure_stability) {
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& in : inputs) vars.push_back(Var::input(in.value));
  const Var loss = loss_fn(vars);
  if (!std::isfinite(loss.item())) {
    throw std::runtime_error("grad_check(" + op + "): non-finite loss");
  }
  backward(loss);

  GradCheckReport report;
  report.op = op;
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    const Tensor analytic = vars[j].grad();
    InputGradError err;
    err.name = inputs[j].name;
    err.elements = inputs[j].value.size();
    for (std::size_t i = 0; i < inputs[j].value.size(); ++i) {
      const double orig = inputs[j].value[i];
      inputs[j].value[i] = orig + step;
      const double up = evaluate(loss_fn, inputs, op);
      inputs[j].value[i] = orig - step;
      const double down = evaluate(loss_fn, inputs, op);
      inputs[j].value[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      if (measure_stability) {
        inputs[j].value[i] = orig + 2.0 * step;
        const double up2 = evaluate(loss_fn, inputs, op);
        inputs[j].value[i] = orig - 2.0 * step;
        const double down2 = evaluate(loss_fn, inputs, op);
        inputs[j].value[i] = orig;
        const double wide = (up2 - down2) / (4.0 * step);
        report.max_step_disagreement =
            std::max(report.max_step_disagreement, relative_error(numeric, wide));
      }
      const double rel = relative_error(analytic[i], numeric);
      if (rel > err.max_rel_error || i == 0) {
        err.max_rel_error = std::max(err.max_rel_error, rel);
        err.worst_index = i;
        err.analytic = analytic[i];
        err.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
    report.per_input.push_back(std::move(err));
  }
  return report;
}

}  // namespace sdcn
