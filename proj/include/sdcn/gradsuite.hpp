#ifndef SDCN_GRADSUITE_HPP_
#define SDCN_GRADSUITE_HPP_

#include <cstdint>
#include <string>
#include <vector>

// Finite-difference verification of every differentiable op and loss,
// including the full training objective through the toy networks.
namespace sdcn {

struct GradSuiteOptions {
  int points = 20;        // accepted random points per check
  int max_draws = 100;    // draws per check before giving up
  std::uint64_t seed = 0;
  double step = 1e-5;
  // Central differences at step and 2*step must agree this closely for a
  // point to count; otherwise it sits on a kink and is redrawn.
  double smoothness_tol = 1e-5;
  // Test fixture: negate the gradient of the named check.
  std::string flip;
  // Run only these checks; empty runs all.
  std::vector<std::string> only;
};

struct GradSuiteCase {
  std::string name;
  double tolerance = 0.0;
  int accepted = 0;
  int rejected = 0;
  double max_rel_error = 0.0;
  std::string worst_input;
  bool passed = false;
};

struct GradSuiteReport {
  std::vector<GradSuiteCase> cases;
  double seconds = 0.0;

  bool passed() const;
};

// Names of all checks, in run order.
std::vector<std::string> grad_suite_names();

// Throws std::invalid_argument for an unknown name in flip or only.
GradSuiteReport run_grad_suite(const GradSuiteOptions& options = {});

}  // namespace sdcn

#endif  // SDCN_GRADSUITE_HPP_
