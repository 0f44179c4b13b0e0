#ifndef SDCN_GRADCHECK_HPP_
#define SDCN_GRADCHECK_HPP_

#include <functional>
#include <string>
#include <vector>

#include "sdcn/autograd.hpp"

namespace sdcn {

struct InputGradError {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0.0;
  // Largest relative_error between central differences at step and 2*step;
  // only measured when requested. A large value means the loss is not
  // smooth around the point (a kink or a switch within reach of the step).
  double max_step_disagreement = 0.0;
  std::vector<InputGradError> per_input;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
double relative_error(double analytic, double numeric);

struct GradInput {
  std::string name;
  Tensor value;
};

// Builds a scalar loss from leaf Vars (one per GradInput, in order). The
// function must be deterministic.
using LossFn = std::function<Var(const std::vector<Var>& inputs)>;

// Compares reverse-mode gradients with central differences of the given step
// for every element of every input. Throws std::runtime_error when the loss
// is not finite.
GradCheckReport grad_check(const std::string& op, const LossFn& loss_fn,
                           std::vector<GradInput> inputs, double step = 1e-5,
                           bool measure_stability = false);

}  // namespace sdcn

#endif  // SDCN_GRADCHECK_HPP_
