#include "qpc/fitting.hpp"

#include <algorithm>
#include <cmath>

#include "qpc/errors.hpp"
#include "qpc/numeric.hpp"

namespace qpc {

namespace {

double chi2(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

void clamp_params(std::vector<double>& p, const LmOptions& opt, bool* touched) {
  if (opt.lower.size() == p.size()) {
    for (size_t i = 0; i < p.size(); ++i) {
      if (p[i] < opt.lower[i]) {
        p[i] = opt.lower[i];
        if (touched) *touched = true;
      }
    }
  }
  if (opt.upper.size() == p.size()) {
    for (size_t i = 0; i < p.size(); ++i) {
      if (p[i] > opt.upper[i]) {
        p[i] = opt.upper[i];
        if (touched) *touched = true;
      }
    }
  }
}

}  // namespace

LmResult levenberg_marquardt(
    const std::function<std::vector<double>(const std::vector<double>&)>& residuals,
    std::vector<double> initial, const LmOptions& opt) {
  const size_t np = initial.size();
  if (np == 0) throw ArgumentError("levenberg_marquardt: no parameters");
  clamp_params(initial, opt, nullptr);

  std::vector<double> p = std::move(initial);
  std::vector<double> r = residuals(p);
  const size_t nr = r.size();
  if (nr < np) throw ArgumentError("levenberg_marquardt: fewer residuals than parameters");
  double c2 = chi2(r);
  double lambda = opt.lambda0;

  LmResult out;
  out.at_bound = false;
  std::vector<double> jac(nr * np);

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    // Forward-difference Jacobian.
    for (size_t j = 0; j < np; ++j) {
      const double h = opt.jacobian_step * std::max(std::fabs(p[j]), 1e-8);
      std::vector<double> pj = p;
      pj[j] += h;
      const auto rj = residuals(pj);
      for (size_t i = 0; i < nr; ++i) jac[i * np + j] = (rj[i] - r[i]) / h;
    }
    // Normal equations (JtJ + lambda diag) dp = -Jt r.
    std::vector<double> jtj(np * np, 0.0);
    std::vector<double> jtr(np, 0.0);
    for (size_t i = 0; i < nr; ++i) {
      for (size_t a = 0; a < np; ++a) {
        jtr[a] += jac[i * np + a] * r[i];
        for (size_t b = 0; b <= a; ++b) jtj[a * np + b] += jac[i * np + a] * jac[i * np + b];
      }
    }
    for (size_t a = 0; a < np; ++a) {
      for (size_t b = a + 1; b < np; ++b) jtj[a * np + b] = jtj[b * np + a];
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 16; ++attempt) {
      std::vector<double> lhs = jtj;
      for (size_t a = 0; a < np; ++a) lhs[a * np + a] += lambda * std::max(jtj[a * np + a], 1e-12);
      std::vector<double> rhs(np);
      for (size_t a = 0; a < np; ++a) rhs[a] = -jtr[a];
      std::vector<double> dp;
      try {
        dp = solve_dense(std::move(lhs), std::move(rhs));
      } catch (const ArgumentError&) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> pn = p;
      for (size_t a = 0; a < np; ++a) pn[a] += dp[a];
      bool touched = false;
      clamp_params(pn, opt, &touched);
      const auto rn = residuals(pn);
      const double c2n = chi2(rn);
      if (c2n < c2) {
        double step_rel = 0.0;
        for (size_t a = 0; a < np; ++a) {
          step_rel = std::max(step_rel, std::fabs(pn[a] - p[a]) / std::max(std::fabs(p[a]), 1e-12));
        }
        const double improve = (c2 - c2n) / std::max(c2, 1e-300);
        p = std::move(pn);
        r = rn;
        c2 = c2n;
        out.at_bound = touched;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (improve < opt.ftol || step_rel < opt.xtol) {
          out.converged = true;
        }
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
    if (!stepped) {
      // No downhill step found at any damping: local minimum.
      out.converged = true;
      break;
    }
    if (out.converged) break;
  }

  out.params = std::move(p);
  out.rms = std::sqrt(c2 / static_cast<double>(nr));
  out.iterations = it + 1;
  return out;
}

}  // namespace qpc
