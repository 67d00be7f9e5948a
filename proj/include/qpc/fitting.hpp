#pragma once

#include <functional>
#include <vector>

namespace qpc {

struct LmOptions {
  int max_iterations = 200;
  double ftol = 1e-12;        // relative chi2 improvement
  double xtol = 1e-12;        // relative step size
  double lambda0 = 1e-3;      // initial damping
  double jacobian_step = 1e-6;  // relative forward-difference step
  std::vector<double> lower;  // optional per-parameter bounds (empty = none)
  std::vector<double> upper;
};

struct LmResult {
  std::vector<double> params;
  double rms = 0.0;  // sqrt(chi2 / n)
  int iterations = 0;
  bool converged = false;
  bool at_bound = false;
};

// Levenberg-Marquardt with forward-difference Jacobian and box constraints by
// clamping. residuals(p) returns one entry per data point.
LmResult levenberg_marquardt(const std::function<std::vector<double>(const std::vector<double>&)>& residuals,
                             std::vector<double> initial, const LmOptions& opt = {});

}  // namespace qpc
