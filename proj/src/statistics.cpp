#include "qpc/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "qpc/rng.hpp"

namespace qpc::statistics {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatisticsError("pearson: length mismatch");
  const size_t n = x.size();
  if (n < 3) throw StatisticsError("pearson: need at least 3 points, got " + std::to_string(n));
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw StatisticsError("pearson: undefined correlation for constant input");
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace {

void pairwise_complete(std::span<const double> x, std::span<const double> y,
                       std::vector<double>& xs, std::vector<double>& ys) {
  if (x.size() != y.size()) throw StatisticsError("pearson: length mismatch");
  xs.clear();
  ys.clear();
  for (size_t i = 0; i < x.size(); ++i) {
    if (std::isfinite(x[i]) && std::isfinite(y[i])) {
      xs.push_back(x[i]);
      ys.push_back(y[i]);
    }
  }
}

}  // namespace

double pearson_pairwise(std::span<const double> x, std::span<const double> y) {
  std::vector<double> xs, ys;
  pairwise_complete(x, y, xs, ys);
  return pearson(xs, ys);
}

BootstrapInterval pearson_bootstrap(std::span<const double> x, std::span<const double> y,
                                    int resamples, uint64_t seed, double coverage) {
  std::vector<double> xs, ys;
  pairwise_complete(x, y, xs, ys);
  const size_t n = xs.size();
  if (n < 3) throw StatisticsError("bootstrap: need at least 3 complete pairs");
  Rng rng(seed);
  std::vector<double> rhos;
  rhos.reserve(static_cast<size_t>(resamples));
  std::vector<double> bx(n), by(n);
  for (int r = 0; r < resamples; ++r) {
    for (size_t i = 0; i < n; ++i) {
      const size_t j = static_cast<size_t>(rng.next_u64() % n);
      bx[i] = xs[j];
      by[i] = ys[j];
    }
    try {
      rhos.push_back(pearson(bx, by));
    } catch (const StatisticsError&) {
      // degenerate resample (constant); skip
    }
  }
  if (rhos.empty()) throw StatisticsError("bootstrap: all resamples degenerate");
  std::sort(rhos.begin(), rhos.end());
  const double alpha = 0.5 * (1.0 - coverage);
  const auto pick = [&](double q) {
    const double pos = q * static_cast<double>(rhos.size() - 1);
    const size_t i = static_cast<size_t>(pos);
    const double t = pos - static_cast<double>(i);
    return i + 1 < rhos.size() ? rhos[i] * (1.0 - t) + rhos[i + 1] * t : rhos.back();
  };
  return {pick(alpha), pick(1.0 - alpha), static_cast<int>(rhos.size())};
}

DeviceSummary summarize(const analysis::AnalysisResult& result, double width_um, double length_um) {
  DeviceSummary s;
  s.id = result.id;
  s.cooldown = result.cooldown;
  s.temperature_k = result.temperature_k;
  s.illuminated = result.illuminated;
  s.width_um = width_um;
  s.length_um = length_um;
  s.measured = true;
  s.good_fit = result.good_fit;
  for (const auto& f : result.forward.fits) {
    s.e_x_forward.push_back(f.converged ? f.e_x_mev : kNaN);
  }
  for (const auto& f : result.backward.fits) {
    s.e_x_backward.push_back(f.converged ? f.e_x_mev : kNaN);
  }
  if (!s.e_x_forward.empty() && result.forward.fits[0].good) s.e_x_mev = s.e_x_forward[0];
  if (result.has_delta_e) s.delta_e_mev = result.delta_e_mev;
  for (const auto& sup : result.suppression) {
    while (s.s_tc_07_by_subband.size() < static_cast<size_t>(sup.subband - 1)) {
      s.s_tc_07_by_subband.push_back(kNaN);
    }
    s.s_tc_07_by_subband.push_back(sup.found ? sup.s_tc_07 : kNaN);
    if (sup.subband == 1 && sup.found) {
      s.s_tc_07 = sup.s_tc_07;
      s.s_tc_07_sigma = sup.s_tc_07_sigma;
      s.kappa_07 = sup.kappa_07;
      s.g_07 = sup.g_07;
      s.s_g_at_fixed = sup.s_g_at_fixed;
    }
  }
  s.riser_split = result.riser_split.split;
  return s;
}

Yields yields(std::span<const DeviceSummary> rows, const StatisticsConfig& cfg) {
  if (rows.empty()) throw ArgumentError("yields: empty input");
  Yields y;
  for (const auto& r : rows) {
    if (!r.measured) continue;
    ++y.n_measured;
    if (!r.good_fit) continue;
    ++y.n_good_fit;
    if (std::isfinite(r.s_tc_07) &&
        r.s_tc_07 < 1.0 - cfg.suppression_sigma_factor * r.s_tc_07_sigma) {
      ++y.n_suppressed;
    }
    if (r.riser_split) ++y.n_riser_split;
  }
  if (y.n_good_fit > 0) {
    y.y_tc_07 = static_cast<double>(y.n_suppressed) / y.n_good_fit;
    y.y_rs_07 = static_cast<double>(y.n_riser_split) / y.n_good_fit;
  }
  return y;
}

CohortReport correlation_suite(std::span<const DeviceSummary> rows, const StatisticsConfig& cfg) {
  CohortReport rep;
  rep.fixed_kappas = cfg.fixed_kappas;
  rep.totals = yields(rows, cfg);

  std::map<int, std::vector<DeviceSummary>> by_cooldown;
  for (const auto& r : rows) by_cooldown[r.cooldown].push_back(r);
  for (const auto& [cd, group] : by_cooldown) {
    rep.cooldowns.push_back(cd);
    rep.per_cooldown.push_back(yields(group, cfg));
  }

  // Devices with a good fit and both E_x and delta_e extracted; per-figure
  // subsets are pairwise-complete (each correlation drops its own missing
  // extractions).
  std::vector<double> depth, sqrt_ue;
  const size_t nk = cfg.fixed_kappas.size();
  std::vector<std::vector<double>> sg_k(nk), ex_k(nk), inv_ue_k(nk);
  int complete = 0;
  for (const auto& r : rows) {
    if (!r.good_fit || !std::isfinite(r.e_x_mev) || !std::isfinite(r.delta_e_mev)) continue;
    if (r.delta_e_mev <= 0.0 || r.e_x_mev <= 0.0) continue;
    ++complete;
    const double u_e = r.delta_e_mev / r.e_x_mev;
    if (std::isfinite(r.s_tc_07)) {
      depth.push_back(1.0 - r.s_tc_07);
      sqrt_ue.push_back(std::sqrt(u_e));
    }
    for (size_t k = 0; k < nk; ++k) {
      const double v = k < r.s_g_at_fixed.size() ? r.s_g_at_fixed[k] : kNaN;
      if (std::isfinite(v)) {
        sg_k[k].push_back(v);
        ex_k[k].push_back(r.e_x_mev);
        inv_ue_k[k].push_back(r.e_x_mev / r.delta_e_mev);
      }
    }
  }
  if (complete < cfg.min_devices_for_correlations) {
    throw StatisticsError("correlation_suite: only " + std::to_string(complete) +
                          " devices with complete extractions, need " +
                          std::to_string(cfg.min_devices_for_correlations));
  }

  rep.rho_suppression_sqrt_ue.name = "rho(1 - S_TC^0.7, sqrt(U_E))";
  rep.rho_suppression_sqrt_ue.rho = pearson_pairwise(depth, sqrt_ue);
  rep.rho_suppression_sqrt_ue.n = static_cast<int>(depth.size());
  rep.rho_suppression_sqrt_ue.ci =
      pearson_bootstrap(depth, sqrt_ue, cfg.bootstrap_resamples, cfg.bootstrap_seed);

  for (size_t k = 0; k < nk; ++k) {
    Correlation cx, cu;
    const std::string at = " at kappa=" + std::to_string(cfg.fixed_kappas[k]);
    cx.name = "rho(S_G, E_x)" + at;
    cu.name = "rho(S_G, 1/U_E)" + at;
    cx.n = cu.n = static_cast<int>(sg_k[k].size());
    if (sg_k[k].size() >= 3) {
      try {
        cx.rho = pearson(sg_k[k], ex_k[k]);
        cx.ci = pearson_bootstrap(sg_k[k], ex_k[k], cfg.bootstrap_resamples,
                                  cfg.bootstrap_seed + 2 * k + 1);
      } catch (const StatisticsError&) {
      }
      try {
        cu.rho = pearson(sg_k[k], inv_ue_k[k]);
        cu.ci = pearson_bootstrap(sg_k[k], inv_ue_k[k], cfg.bootstrap_resamples,
                                  cfg.bootstrap_seed + 2 * k + 2);
      } catch (const StatisticsError&) {
      }
    }
    rep.rho_sg_ex.push_back(cx);
    rep.rho_sg_inv_ue.push_back(cu);
  }
  return rep;
}

}  // namespace qpc::statistics
