#include "qpc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qpc/constants.hpp"
#include "qpc/fitting.hpp"
#include "qpc/numeric.hpp"

namespace qpc::analysis {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Traces are stored in sweep order; all pipeline math runs on ascending gate
// voltage (conductance increasing).
struct Ordered {
  std::vector<double> v;
  std::vector<double> g;
};

Ordered ascending(const ConductanceTrace& t) {
  if (t.gate_v.size() != t.g_gq.size() || t.gate_v.size() < 2) {
    throw ArgumentError("trace: arrays must have equal length >= 2");
  }
  Ordered o;
  o.v = t.gate_v;
  o.g = t.g_gq;
  if (o.v.front() > o.v.back()) {
    std::reverse(o.v.begin(), o.v.end());
    std::reverse(o.g.begin(), o.g.end());
  }
  return o;
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median of empty vector");
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const auto lo = std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + *lo);
  }
  return m;
}

// Thermally broadened single-subband step vs kappa (midpoint at kappa = 0).
double thermal_step(double kappa, double e_x_mev, double temperature_k) {
  transport::SaddlePotential pot{e_x_mev, 1.0, 0.5, 0.0};
  return transport::conductance_noninteracting(transport::Kappa{kappa}, pot,
                                               {temperature_k, 0.0}, 1);
}

double thermal_step_slope(double kappa, double e_x_mev, double temperature_k) {
  transport::SaddlePotential pot{e_x_mev, 1.0, 0.5, 0.0};
  return transport::transconductance_noninteracting(transport::Kappa{kappa}, pot,
                                                    {temperature_k, 0.0}, 1);
}

// First upward crossing of `level` in the smoothed samples; linear interp.
// Returns NaN when no crossing.
double crossing_position(std::span<const double> x, std::span<const double> y, double level) {
  for (size_t i = 1; i < y.size(); ++i) {
    if (y[i - 1] < level && y[i] >= level) {
      const double t = (level - y[i - 1]) / (y[i] - y[i - 1]);
      return x[i - 1] + t * (x[i] - x[i - 1]);
    }
  }
  return kNaN;
}

// Longest contiguous run of true values; returns [begin, end) or (0,0).
std::pair<size_t, size_t> longest_run(const std::vector<char>& keep) {
  size_t best_b = 0, best_e = 0, b = 0;
  bool in = false;
  for (size_t i = 0; i <= keep.size(); ++i) {
    const bool k = i < keep.size() && keep[i];
    if (k && !in) {
      b = i;
      in = true;
    } else if (!k && in) {
      if (i - b > best_e - best_b) {
        best_b = b;
        best_e = i;
      }
      in = false;
    }
  }
  return {best_b, best_e};
}

// L2 norm of the smoothing+central-difference kernel, for noise propagation.
double tc_noise_kernel_norm(int window, int order) {
  const auto w = savgol_coefficients(window, order);
  const int h = window / 2;
  double s = 0.0;
  for (int m = -h - 1; m <= h + 1; ++m) {
    const double wm1 = (m - 1 >= -h && m - 1 <= h) ? w[static_cast<size_t>(m - 1 + h)] : 0.0;
    const double wp1 = (m + 1 >= -h && m + 1 <= h) ? w[static_cast<size_t>(m + 1 + h)] : 0.0;
    const double c = 0.5 * (wp1 - wm1);
    s += c * c;
  }
  return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------------------
std::vector<double> savgol_coefficients(int window, int order) {
  if (window < 3 || window % 2 == 0) throw ArgumentError("savgol: window must be odd >= 3");
  if (order < 1 || order >= window) throw ArgumentError("savgol: order must be in [1, window)");
  const int h = window / 2;
  const int m = order + 1;
  std::vector<double> ata(static_cast<size_t>(m * m), 0.0);
  for (int k = -h; k <= h; ++k) {
    double pi = 1.0;
    std::vector<double> pw(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j) {
      pw[static_cast<size_t>(j)] = pi;
      pi *= k;
    }
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        ata[static_cast<size_t>(a * m + b)] += pw[static_cast<size_t>(a)] * pw[static_cast<size_t>(b)];
      }
    }
  }
  std::vector<double> e0(static_cast<size_t>(m), 0.0);
  e0[0] = 1.0;
  const auto mm = solve_dense(std::move(ata), std::move(e0));
  std::vector<double> w(static_cast<size_t>(window));
  for (int k = -h; k <= h; ++k) {
    double acc = 0.0, pi = 1.0;
    for (int j = 0; j < m; ++j) {
      acc += mm[static_cast<size_t>(j)] * pi;
      pi *= k;
    }
    w[static_cast<size_t>(k + h)] = acc;
  }
  return w;
}

std::vector<double> savgol_smooth(std::span<const double> y, int window, int order) {
  const size_t n = y.size();
  if (static_cast<size_t>(window) > n) throw ArgumentError("savgol: window larger than trace");
  const auto w = savgol_coefficients(window, order);
  const int h = window / 2;
  std::vector<double> out(n);
  for (size_t i = static_cast<size_t>(h); i + static_cast<size_t>(h) < n; ++i) {
    double acc = 0.0;
    for (int k = -h; k <= h; ++k) {
      acc += w[static_cast<size_t>(k + h)] * y[static_cast<size_t>(static_cast<std::ptrdiff_t>(i) + k)];
    }
    out[i] = acc;
  }
  // Edges: polynomial fit over the first/last window, evaluated in place.
  std::vector<double> ts(static_cast<size_t>(window));
  for (int k = 0; k < window; ++k) ts[static_cast<size_t>(k)] = k;
  {
    std::vector<double> head(y.begin(), y.begin() + window);
    const auto c = polyfit(ts, head, order);
    for (int i = 0; i < h; ++i) {
      double acc = 0.0, pi = 1.0;
      for (size_t j = 0; j < c.size(); ++j) {
        acc += c[j] * pi;
        pi *= i;
      }
      out[static_cast<size_t>(i)] = acc;
    }
  }
  {
    std::vector<double> tail(y.end() - window, y.end());
    const auto c = polyfit(ts, tail, order);
    for (int i = 0; i < h; ++i) {
      const int t = window - 1 - i;
      double acc = 0.0, pi = 1.0;
      for (size_t j = 0; j < c.size(); ++j) {
        acc += c[j] * pi;
        pi *= t;
      }
      out[n - 1 - static_cast<size_t>(i)] = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
CalibrationResult calibrate_series_resistance(const ConductanceTrace& trace,
                                              const AnalysisConfig& cfg) {
  const Ordered o = ascending(trace);
  const size_t n = o.g.size();
  // Plateau detection uses a wide smoothing window of its own; the slope
  // threshold must sit above the smoothed noise floor.
  int win = static_cast<int>(std::min<size_t>(41, n / 4));
  if (win % 2 == 0) --win;
  win = std::max(win, 5);
  const auto gs = savgol_smooth(o.g, win, std::min(cfg.sg_order, win - 2));

  double max_slope = 0.0;
  std::vector<double> slope(n, 0.0);
  for (size_t i = 1; i + 1 < n; ++i) {
    slope[i] = 0.5 * (gs[i + 1] - gs[i - 1]);
    max_slope = std::max(max_slope, std::fabs(slope[i]));
  }
  if (max_slope <= 0.0) throw CalibrationError("calibration: flat trace");

  std::vector<char> keep(n, 0);
  for (size_t i = 1; i + 1 < n; ++i) {
    keep[i] = gs[i] >= cfg.plateau_band_lo && gs[i] <= cfg.plateau_band_hi &&
              std::fabs(slope[i]) < cfg.plateau_slope_fraction * max_slope;
  }
  const auto [b, e] = longest_run(keep);
  const size_t min_len = std::max<size_t>(5, n / 100);
  if (e - b < min_len) {
    throw CalibrationError("calibration: no first plateau found in raw band [" +
                           std::to_string(cfg.plateau_band_lo) + ", " +
                           std::to_string(cfg.plateau_band_hi) + "]");
  }

  // The loose slope gate lets the run bleed into the risers and, on strongly
  // suppressed devices, into the slow shoulder below the plateau. Anchor at
  // the flattest point of the run (noise on the smoothed slope sits well
  // below the flank slopes), keep the samples whose smoothed level stays
  // within 1% of that anchor, and take a trimmed mean: the contamination the
  // band admits enters from both flanks and largely cancels.
  size_t i_star = b;
  for (size_t i = b; i < e; ++i) {
    if (std::fabs(slope[i]) < std::fabs(slope[i_star])) i_star = i;
  }
  const double level = gs[i_star];
  std::vector<size_t> flat;
  for (size_t i = b; i < e; ++i) {
    if (std::fabs(gs[i] - level) < 0.01 * level) flat.push_back(i);
  }
  if (flat.size() < min_len) {
    flat.clear();
    for (size_t i = b; i < e; ++i) flat.push_back(i);
  }

  std::vector<double> plateau;
  plateau.reserve(flat.size());
  for (size_t i : flat) plateau.push_back(o.g[i]);
  CalibrationResult res;
  res.plateau_g_raw = median_of(plateau);
  if (res.plateau_g_raw <= 0.0) throw CalibrationError("calibration: nonpositive plateau level");
  res.r_s_ohm = (1.0 / res.plateau_g_raw - 1.0) / kConductanceQuantumS;

  // Robust noise estimate from detrended flat samples.
  std::vector<double> dev;
  dev.reserve(flat.size());
  for (size_t i : flat) dev.push_back(std::fabs(o.g[i] - gs[i]));
  res.noise_sigma_gq = 1.4826 * median_of(dev);

  res.corrected = trace;
  for (auto& g : res.corrected.g_gq) {
    g = g / (1.0 - res.r_s_ohm * kConductanceQuantumS * g);
  }
  return res;
}

// ---------------------------------------------------------------------------
SubbandFit fit_ex(const ConductanceTrace& corrected, int subband, const FitWindow& window,
                  double lever_arm, const AnalysisConfig& cfg) {
  window.validate();
  if (subband < 1) throw ArgumentError("fit_ex: subband must be >= 1");
  if (!(lever_arm > 0.0) || lever_arm > 1.0) throw ArgumentError("fit_ex: bad lever arm");
  const Ordered o = ascending(corrected);
  const size_t n = o.g.size();
  const auto gs = savgol_smooth(o.g, cfg.sg_window, cfg.sg_order);
  const double offset = subband - 1;

  std::vector<char> keep(n, 0);
  for (size_t i = 0; i < n; ++i) {
    const double g = gs[i] - offset;
    keep[i] = g >= window.g_low && g <= window.g_high;
  }
  const auto [b, e] = longest_run(keep);
  if (e - b < static_cast<size_t>(cfg.min_window_samples)) {
    throw FitError("fit_ex: fewer than " + std::to_string(cfg.min_window_samples) +
                   " samples in the lower-half window of subband " + std::to_string(subband));
  }

  // Initial guesses from smoothed crossings inside the run.
  std::span<const double> vs(o.v.data() + b, e - b);
  std::vector<double> gl(e - b);
  for (size_t i = b; i < e; ++i) gl[i - b] = gs[i] - offset;
  const double v_lo_cross = crossing_position(vs, gl, 0.10);
  const double v_hi_cross = crossing_position(vs, gl, 0.40);
  // kappa of the 0.10 and 0.40 levels of a logistic step
  const double k10 = std::log(0.10 / 0.90) / kTwoPi;
  const double k40 = std::log(0.40 / 0.60) / kTwoPi;
  double e_x0 = 1.0;
  if (std::isfinite(v_lo_cross) && std::isfinite(v_hi_cross) && v_hi_cross > v_lo_cross) {
    e_x0 = lever_arm * kMeVPerVolt * (v_hi_cross - v_lo_cross) / (k40 - k10);
  }
  double v0 = std::isfinite(v_hi_cross)
                  ? v_hi_cross - k40 * e_x0 / (lever_arm * kMeVPerVolt)
                  : o.v[(b + e) / 2];

  const double temperature = corrected.meta.temperature_k;
  auto residuals = [&](const std::vector<double>& p) {
    std::vector<double> r(e - b);
    for (size_t i = b; i < e; ++i) {
      const double kappa = lever_arm * kMeVPerVolt * (o.v[i] - p[1]) / p[0];
      r[i - b] = thermal_step(kappa, p[0], temperature) + offset - o.g[i];
    }
    return r;
  };

  LmOptions lm;
  lm.lower = {0.02, o.v.front() - (o.v.back() - o.v.front())};
  lm.upper = {50.0, o.v.back() + (o.v.back() - o.v.front())};
  LmResult best;
  bool have = false;
  for (const double scale : {1.0, 2.0, 0.5}) {
    const auto res = levenberg_marquardt(residuals, {e_x0 * scale, v0}, lm);
    if (res.converged && (!have || res.rms < best.rms)) {
      best = res;
      have = true;
    }
    // restarts exist to escape bad starting points; a converged fit already
    // below the good-fit gate needs none
    if (have && !best.at_bound && best.rms < cfg.good_fit_rms_gq) break;
  }
  if (!have) throw FitError("fit_ex: no convergence after bounded restarts");

  SubbandFit fit;
  fit.subband = subband;
  fit.e_x_mev = best.params[0];
  fit.v_center_volts = best.params[1];
  fit.lever_arm = lever_arm;
  fit.temperature_k = temperature;
  fit.rms_gq = best.rms;
  fit.converged = best.converged;
  fit.at_bound = best.at_bound;
  fit.good = best.converged && !best.at_bound && best.rms < cfg.good_fit_rms_gq;
  return fit;
}

double fit_g0(const SubbandFit& fit, double kappa) {
  return thermal_step(kappa - fit.kappa_center, fit.e_x_mev, fit.temperature_k);
}

double fit_tc0(const SubbandFit& fit, double kappa) {
  return thermal_step_slope(kappa - fit.kappa_center, fit.e_x_mev, fit.temperature_k);
}

// ---------------------------------------------------------------------------
KappaTrace to_kappa(const ConductanceTrace& corrected, SubbandFit& fit, const AnalysisConfig& cfg) {
  const Ordered o = ascending(corrected);
  const auto gs = savgol_smooth(o.g, cfg.sg_window, cfg.sg_order);
  const double level = (fit.subband - 1) + 0.5;
  const double v_half = crossing_position(o.v, gs, level);
  if (!std::isfinite(v_half)) {
    throw ExtractionError("to_kappa: trace never crosses " + std::to_string(level) + " G_Q");
  }
  const double scale = fit.lever_arm * kMeVPerVolt / fit.e_x_mev;

  KappaTrace kt;
  kt.temperature_k = corrected.meta.temperature_k;
  kt.v_half_volts = v_half;
  const double k_min = scale * (o.v.front() - v_half);
  const double k_max = scale * (o.v.back() - v_half);
  const size_t n = o.v.size();
  kt.dk = (k_max - k_min) / static_cast<double>(n - 1);
  kt.kappa.resize(n);
  kt.g_gq.resize(n);
  std::vector<double> kdata(n);
  for (size_t i = 0; i < n; ++i) kdata[i] = scale * (o.v[i] - v_half);
  for (size_t i = 0; i < n; ++i) {
    kt.kappa[i] = k_min + kt.dk * static_cast<double>(i);
    kt.g_gq[i] = interp_linear(kdata, o.g, kt.kappa[i]);
  }
  fit.kappa_center = scale * (fit.v_center_volts - v_half);
  return kt;
}

std::vector<double> transconductance(const KappaTrace& trace, const AnalysisConfig& cfg) {
  const size_t n = trace.g_gq.size();
  if (static_cast<size_t>(cfg.sg_window) > n) {
    throw ArgumentError("transconductance: smoothing window larger than trace");
  }
  const auto gs = savgol_smooth(trace.g_gq, cfg.sg_window, cfg.sg_order);
  std::vector<double> tc(n);
  tc[0] = (gs[1] - gs[0]) / trace.dk;
  tc[n - 1] = (gs[n - 1] - gs[n - 2]) / trace.dk;
  for (size_t i = 1; i + 1 < n; ++i) tc[i] = (gs[i + 1] - gs[i - 1]) / (2.0 * trace.dk);
  return tc;
}

// ---------------------------------------------------------------------------
SuppressionResult suppression_metrics(const KappaTrace& trace, const std::vector<double>& tc_sd,
                                      const SubbandFit& fit, double noise_sigma_gq,
                                      const AnalysisConfig& cfg,
                                      const std::vector<SubbandFit>* all_fits) {
  if (tc_sd.size() != trace.g_gq.size()) throw ArgumentError("suppression: size mismatch");
  const size_t n = trace.g_gq.size();
  const double offset = fit.subband - 1;
  const auto gs_full = savgol_smooth(trace.g_gq, cfg.sg_window, cfg.sg_order);

  // Combined noninteracting reference across all fitted subbands. Each
  // converged fit contributes its step, positioned on this trace's kappa
  // axis through its gate-voltage center.
  const double axis_scale = fit.lever_arm * kMeVPerVolt / fit.e_x_mev;
  auto g0_total = [&](double kappa) {
    if (!all_fits) return offset + fit_g0(fit, kappa);
    double total = 0.0;
    for (const auto& f : *all_fits) {
      if (!f.converged || f.e_x_mev <= 0.0) continue;
      const double center =
          fit.kappa_center + axis_scale * (f.v_center_volts - fit.v_center_volts);
      total += thermal_step((kappa - center) * fit.e_x_mev / f.e_x_mev, f.e_x_mev,
                            f.temperature_k);
    }
    return total;
  };

  // Fitted-model tables for the equal-conductance reference evaluation.
  const double tab_lo = -4.0, tab_hi = 9.0, tab_dk = 0.005;
  const int tab_n = static_cast<int>((tab_hi - tab_lo) / tab_dk) + 1;
  std::vector<double> tab_k(static_cast<size_t>(tab_n)), tab_g(static_cast<size_t>(tab_n)),
      tab_tc(static_cast<size_t>(tab_n));
  for (int i = 0; i < tab_n; ++i) {
    const double k = tab_lo + tab_dk * i;
    tab_k[static_cast<size_t>(i)] = k;
    tab_g[static_cast<size_t>(i)] = fit_g0(fit, k);
    tab_tc[static_cast<size_t>(i)] = fit_tc0(fit, k);
  }
  const double g_tab_min = tab_g.front(), g_tab_max = tab_g.back();

  std::vector<double> s_tc(n, kNaN), s_g(n, kNaN), tc0_ref(n, kNaN);
  for (size_t i = 0; i < n; ++i) {
    const double g_local_s = gs_full[i] - offset;
    if (g_local_s > g_tab_min && g_local_s < g_tab_max) {
      const double k_eq = interp_linear(tab_g, tab_k, g_local_s);  // equal-G abscissa
      const double ref = interp_linear(tab_k, tab_tc, k_eq);
      if (ref >= cfg.tc0_floor) {
        tc0_ref[i] = ref;
        s_tc[i] = tc_sd[i] / ref;
      }
    }
    if (fit.subband == 1) {
      const double g0_here = g0_total(trace.kappa[i]);
      if (g0_here > cfg.g0_floor) {
        s_g[i] = trace.g_gq[i] / g0_here;
      }
    }
  }

  SuppressionResult out;
  out.subband = fit.subband;

  // Minimum search: riser window in local kappa, sub-open conductance gate.
  double best = std::numeric_limits<double>::infinity();
  size_t best_i = 0;
  bool found = false;
  for (size_t i = 0; i < n; ++i) {
    const double k_local = trace.kappa[i] - fit.kappa_center;
    if (k_local < cfg.riser_search_lo || k_local > cfg.riser_search_hi) continue;
    const double g_local_s = gs_full[i] - offset;
    if (g_local_s < cfg.g_window_lo || g_local_s > cfg.g_window_hi) continue;
    if (!std::isfinite(s_tc[i])) continue;
    if (s_tc[i] < best) {  // strict: ties resolve to the lower kappa
      best = s_tc[i];
      best_i = i;
      found = true;
    }
  }
  out.found = found;
  if (found) {
    out.s_tc_07 = best;
    out.kappa_07 = trace.kappa[best_i] - fit.kappa_center;
    out.g_07 = gs_full[best_i] - offset;
    const double kern = tc_noise_kernel_norm(cfg.sg_window, cfg.sg_order);
    out.s_tc_07_sigma = noise_sigma_gq * kern / (trace.dk * tc0_ref[best_i]);
  }

  // Stored curves, decimated, on the local kappa axis.
  const size_t stride = std::max<size_t>(1, n / static_cast<size_t>(cfg.curve_max_points));
  for (size_t i = 0; i < n; i += stride) {
    out.kappa.push_back(trace.kappa[i] - fit.kappa_center);
    out.g.push_back(trace.g_gq[i] - offset);
    out.s_tc.push_back(s_tc[i]);
    out.s_g.push_back(s_g[i]);
  }

  // S_G at the fixed kappa positions (local axis); sampled from the smoothed
  // conductance so the exported scatter reflects devices, not single-sample
  // noise.
  out.s_g_at_fixed.assign(cfg.fixed_kappas.size(), kNaN);
  if (fit.subband == 1) {
    for (size_t j = 0; j < cfg.fixed_kappas.size(); ++j) {
      const double k_want = cfg.fixed_kappas[j] + fit.kappa_center;
      if (k_want < trace.kappa.front() || k_want > trace.kappa.back()) continue;
      const size_t i = static_cast<size_t>(std::llround((k_want - trace.kappa.front()) / trace.dk));
      if (i >= n) continue;
      const double g0_here = g0_total(trace.kappa[i]);
      if (g0_here > cfg.g0_floor) out.s_g_at_fixed[j] = gs_full[i] / g0_here;
    }
  }
  return out;
}

SplitResult detect_riser_splitting(std::span<const double> kappa, std::span<const double> tc,
                                   double prominence_fraction) {
  if (kappa.size() != tc.size() || tc.size() < 3) {
    throw ArgumentError("detect_riser_splitting: bad window");
  }
  SplitResult out;
  const size_t n = tc.size();

  // Extra smoothing for detection only: noise valleys otherwise inflate
  // prominences. Genuine split peaks sit many samples apart and survive.
  std::vector<double> smooth(tc.begin(), tc.end());
  if (n >= 31) smooth = savgol_smooth(smooth, 21, 2);
  const std::vector<double>& s = smooth;

  double window_max = s[0];
  for (double v : s) window_max = std::max(window_max, v);
  if (window_max <= 0.0) return out;
  const double threshold = prominence_fraction * window_max;

  for (size_t i = 1; i + 1 < n; ++i) {
    if (!(s[i] > s[i - 1] && s[i] >= s[i + 1])) continue;
    // Prominence: lowest point on the walk to the nearest higher ground on
    // each side (or the window edge). Valleys are floored at zero: TC^0 is
    // non-negative, so negative measured TC is pure noise and must not
    // inflate prominences.
    double left_min = s[i];
    for (size_t j = i; j-- > 0;) {
      left_min = std::min(left_min, s[j]);
      if (s[j] > s[i]) break;
    }
    double right_min = s[i];
    for (size_t j = i + 1; j < n; ++j) {
      right_min = std::min(right_min, s[j]);
      if (s[j] > s[i]) break;
    }
    const double prom = s[i] - std::max(std::max(left_min, 0.0), std::max(right_min, 0.0));
    if (prom >= threshold) {
      out.peak_kappas.push_back(kappa[i]);
      out.peak_values.push_back(s[i]);
    }
  }
  out.split = out.peak_kappas.size() >= 2;
  return out;
}

// ---------------------------------------------------------------------------
namespace {

// Family traces resampled onto the (ascending) gate grid of the reference.
std::vector<double> resample_on(const Ordered& ref, const ConductanceTrace& t) {
  const Ordered o = ascending(t);
  std::vector<double> out(ref.v.size());
  for (size_t i = 0; i < ref.v.size(); ++i) out[i] = interp_linear(o.v, o.g, ref.v[i]);
  return out;
}

}  // namespace

std::vector<double> correct_dc_bias(double v_dc_volts, const std::vector<ConductanceTrace>& family,
                                    double r_s_ohm) {
  if (family.empty()) throw ArgumentError("correct_dc_bias: empty family");
  const Ordered ref = ascending(family.front());
  const size_t n = ref.v.size();
  if (v_dc_volts == 0.0) return std::vector<double>(n, 0.0);

  // Nodes: biases of the same sign with |v| <= |v_dc|, plus zero.
  const double sgn = v_dc_volts > 0.0 ? 1.0 : -1.0;
  std::vector<std::pair<double, const ConductanceTrace*>> nodes;
  bool have_target = false;
  for (const auto& t : family) {
    const double v = t.meta.v_sd_dc_volts;
    if (v == 0.0 || (v * sgn > 0.0 && std::fabs(v) <= std::fabs(v_dc_volts) * (1.0 + 1e-12))) {
      nodes.emplace_back(std::fabs(v), &t);
      if (std::fabs(std::fabs(v) - std::fabs(v_dc_volts)) < 1e-12 * (1.0 + std::fabs(v_dc_volts))) {
        have_target = true;
      }
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (nodes.size() < 2 || nodes.front().first != 0.0 || !have_target) {
    throw ArgumentError("correct_dc_bias: family must contain the zero bias and the target bias");
  }

  std::vector<std::vector<double>> g(nodes.size());
  for (size_t k = 0; k < nodes.size(); ++k) g[k] = resample_on(ref, *nodes[k].second);

  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    double integral = 0.0;  // int G dV in (G_Q * volts)
    for (size_t k = 1; k < nodes.size(); ++k) {
      integral += 0.5 * (g[k][i] + g[k - 1][i]) * (nodes[k].first - nodes[k - 1].first);
    }
    const double gbar_s = kConductanceQuantumS * integral / std::fabs(v_dc_volts);
    out[i] = v_dc_volts * (1.0 - r_s_ohm * gbar_s);
  }
  return out;
}

double extract_subband_spacing(const std::vector<ConductanceTrace>& family, double r_s_ohm,
                               double lever_arm, const AnalysisConfig& cfg) {
  // Need the zero bias plus at least two more distinct biases to track loci.
  std::vector<const ConductanceTrace*> traces;
  const ConductanceTrace* zero = nullptr;
  for (const auto& t : family) {
    if (t.meta.v_sd_dc_volts == 0.0 && !zero) zero = &t;
    if (t.meta.v_sd_dc_volts > 0.0) traces.push_back(&t);
  }
  std::sort(traces.begin(), traces.end(), [](const ConductanceTrace* a, const ConductanceTrace* b) {
    return a->meta.v_sd_dc_volts < b->meta.v_sd_dc_volts;
  });
  if (!zero || traces.size() < 2) {
    throw ExtractionError("spectroscopy: family must span zero plus >= 2 positive biases");
  }

  auto invert_series = [&](const ConductanceTrace& t) {
    ConductanceTrace c = t;
    for (auto& gg : c.g_gq) gg = gg / (1.0 - r_s_ohm * kConductanceQuantumS * gg);
    return c;
  };

  // Riser anchors from the zero-bias trace.
  const ConductanceTrace zc = invert_series(*zero);
  SubbandFit f1 = fit_ex(zc, 1, cfg.window, lever_arm, cfg);
  SubbandFit f2 = fit_ex(zc, 2, cfg.window, lever_arm, cfg);
  KappaTrace kt0 = to_kappa(zc, f1, cfg);
  const double scale = lever_arm * kMeVPerVolt / f1.e_x_mev;
  const double kc1 = f1.kappa_center;
  const double kc2 = scale * (f2.v_center_volts - kt0.v_half_volts);
  if (!(kc2 > kc1 + 0.5)) throw ExtractionError("spectroscopy: risers 1 and 2 not separated");
  const double mid = 0.5 * (kc1 + kc2);
  const double merge_eps = std::max(0.05 * (kc2 - kc1), 2.0 * kt0.dk);

  struct Locus {
    std::vector<double> v_sd;  // corrected bias at the peak
    std::vector<double> k;     // peak position
  };
  Locus up, down;

  for (const ConductanceTrace* t : traces) {
    const ConductanceTrace c = invert_series(*t);
    // Same kappa axis as the zero-bias trace.
    const Ordered o = ascending(c);
    KappaTrace kt;
    kt.temperature_k = c.meta.temperature_k;
    kt.v_half_volts = kt0.v_half_volts;
    const size_t n = o.v.size();
    kt.kappa.resize(n);
    kt.g_gq.resize(n);
    std::vector<double> kdata(n);
    for (size_t i = 0; i < n; ++i) kdata[i] = scale * (o.v[i] - kt0.v_half_volts);
    kt.dk = (kdata.back() - kdata.front()) / static_cast<double>(n - 1);
    for (size_t i = 0; i < n; ++i) {
      kt.kappa[i] = kdata.front() + kt.dk * static_cast<double>(i);
      kt.g_gq[i] = interp_linear(kdata, o.g, kt.kappa[i]);
    }
    const auto tc = transconductance(kt, cfg);

    // Peaks within the (riser1, riser2) neighbourhood.
    const double lo = kc1 - 1.0, hi = kc2 + 1.0;
    std::vector<double> wk, wt;
    for (size_t i = 0; i < n; ++i) {
      if (kt.kappa[i] >= lo && kt.kappa[i] <= hi) {
        wk.push_back(kt.kappa[i]);
        wt.push_back(tc[i]);
      }
    }
    if (wk.size() < 5) continue;
    const auto peaks = detect_riser_splitting(wk, wt, cfg.spectroscopy_prominence_fraction);
    if (peaks.peak_kappas.empty()) continue;
    double window_peak = 0.0;
    for (double v : peaks.peak_values) window_peak = std::max(window_peak, v);

    // Corrected V_SD on the common gate grid for this applied bias.
    const auto v_sd_grid = correct_dc_bias(t->meta.v_sd_dc_volts, family, r_s_ohm);
    const Ordered ref = ascending(family.front());
    auto v_sd_at_kappa = [&](double kappa) {
      const double v_gate = kt0.v_half_volts + kappa / scale;
      return interp_linear(ref.v, v_sd_grid, v_gate);
    };

    // Branch positions move as +-e V_SD / (2 E_x) from the zero-bias risers;
    // each locus takes the qualifying peak nearest its predicted position.
    // Tracking stops at the merge: past the crossing the branches reappear
    // swapped and must not extend the loci.
    const double v_mid = v_sd_at_kappa(mid);
    const double up_pred = kc1 + 0.5 * kMeVPerVolt * v_mid / f1.e_x_mev;
    const double down_pred = kc2 - 0.5 * kMeVPerVolt * v_mid / f1.e_x_mev;
    if (up_pred > mid - merge_eps || down_pred < mid + merge_eps) break;  // merged
    const double tol = 0.35;
    const double value_floor = 0.2 * window_peak;
    double best_up = kNaN, best_down = kNaN;
    for (size_t p = 0; p < peaks.peak_kappas.size(); ++p) {
      const double pk = peaks.peak_kappas[p];
      if (peaks.peak_values[p] < value_floor) continue;
      if (pk < mid - merge_eps && std::fabs(pk - up_pred) < tol) {
        if (!std::isfinite(best_up) || std::fabs(pk - up_pred) < std::fabs(best_up - up_pred)) {
          best_up = pk;
        }
      }
      if (pk > mid + merge_eps && std::fabs(pk - down_pred) < tol) {
        if (!std::isfinite(best_down) ||
            std::fabs(pk - down_pred) < std::fabs(best_down - down_pred)) {
          best_down = pk;
        }
      }
    }
    if (!std::isfinite(best_up) || !std::isfinite(best_down)) continue;
    if (!up.k.empty() && !(best_up > up.k.back() && best_down < down.k.back())) continue;
    up.v_sd.push_back(v_sd_at_kappa(best_up));
    up.k.push_back(best_up);
    down.v_sd.push_back(v_sd_at_kappa(best_down));
    down.k.push_back(best_down);
  }

  if (up.v_sd.size() < 2 || down.v_sd.size() < 2) {
    throw ExtractionError("spectroscopy: could not track both peak loci");
  }

  // Piecewise-linear gap d(v) = k_down(v) - k_up(v); find the zero crossing.
  auto locus_at = [](const Locus& l, double v) {
    // linear interpolation with end-segment extrapolation
    if (v <= l.v_sd.front()) {
      const double t = (v - l.v_sd[0]) / (l.v_sd[1] - l.v_sd[0]);
      return l.k[0] + t * (l.k[1] - l.k[0]);
    }
    if (v >= l.v_sd.back()) {
      const size_t n = l.v_sd.size();
      const double t = (v - l.v_sd[n - 2]) / (l.v_sd[n - 1] - l.v_sd[n - 2]);
      return l.k[n - 2] + t * (l.k[n - 1] - l.k[n - 2]);
    }
    return interp_linear(l.v_sd, l.k, v);
  };
  double v_lo = std::min(up.v_sd.front(), down.v_sd.front());
  double v_hi = std::max(up.v_sd.back(), down.v_sd.back()) * 1.5;
  auto gap = [&](double v) { return locus_at(down, v) - locus_at(up, v); };
  if (gap(v_lo) <= 0.0) throw ExtractionError("spectroscopy: loci already merged at low bias");
  if (gap(v_hi) > 0.0) {
    throw ExtractionError("spectroscopy: peak loci never cross within the bias range");
  }
  for (int it = 0; it < 80; ++it) {
    const double vm = 0.5 * (v_lo + v_hi);
    (gap(vm) > 0.0 ? v_lo : v_hi) = vm;
  }
  return kMeVPerVolt * 0.5 * (v_lo + v_hi);  // e * V_SD in meV
}

// ---------------------------------------------------------------------------
AnalysisResult analyze_device(const ConductanceTrace& forward, const ConductanceTrace* backward,
                              const std::vector<ConductanceTrace>* bias_family, double lever_arm,
                              const AnalysisConfig& cfg) {
  AnalysisResult res;
  res.id = forward.meta.id;
  res.cooldown = forward.meta.cooldown;
  res.temperature_k = forward.meta.temperature_k;
  res.illuminated = forward.meta.illuminated;
  res.lever_arm = lever_arm;

  CalibrationResult cal;
  try {
    cal = calibrate_series_resistance(forward, cfg);
  } catch (const CalibrationError& err) {
    res.flags.push_back(std::string("calibration_failed: ") + err.what());
    return res;
  }
  res.series_resistance_ohm = cal.r_s_ohm;
  res.noise_sigma_gq = cal.noise_sigma_gq;

  auto run_direction = [&](const ConductanceTrace& corrected) {
    DirectionResult dir;
    dir.present = true;
    for (int nsub = 1; nsub <= cfg.n_subbands; ++nsub) {
      try {
        dir.fits.push_back(fit_ex(corrected, nsub, cfg.window, lever_arm, cfg));
      } catch (const FitError& err) {
        res.flags.push_back("fit_failed_N" + std::to_string(nsub) + ": " + err.what());
        SubbandFit bad;
        bad.subband = nsub;
        dir.fits.push_back(bad);
      }
    }
    return dir;
  };

  res.forward = run_direction(cal.corrected);
  res.good_fit = !res.forward.fits.empty() && res.forward.fits[0].good;

  if (backward) {
    try {
      CalibrationResult cb = calibrate_series_resistance(*backward, cfg);
      res.backward = run_direction(cb.corrected);
    } catch (const CalibrationError& err) {
      res.flags.push_back(std::string("backward_calibration_failed: ") + err.what());
    }
  }

  // Suppression metrics per plateau on the forward sweep.
  double kc1_global = 0.0, delta12 = 0.0;
  bool have_delta12 = false;
  for (int nsub = 1; nsub <= cfg.n_subbands; ++nsub) {
    SubbandFit& fit = res.forward.fits[static_cast<size_t>(nsub - 1)];
    if (!fit.converged || fit.e_x_mev <= 0.0) continue;
    try {
      KappaTrace kt = to_kappa(cal.corrected, fit, cfg);
      const auto tc = transconductance(kt, cfg);
      res.suppression.push_back(
          suppression_metrics(kt, tc, fit, cal.noise_sigma_gq, cfg, &res.forward.fits));

      if (nsub == 1) {
        kc1_global = fit.kappa_center;
        // Riser-splitting detection within the first inter-subband window.
        const SubbandFit& f2 = res.forward.fits.size() > 1 ? res.forward.fits[1] : fit;
        double hi = cfg.riser_search_hi;
        if (res.forward.fits.size() > 1 && f2.converged) {
          const double scale = lever_arm * kMeVPerVolt / fit.e_x_mev;
          delta12 = scale * (f2.v_center_volts - kt.v_half_volts) - kc1_global;
          have_delta12 = delta12 > 1.0;
          if (have_delta12) hi = std::min(hi, delta12 - 0.5);
        }
        std::vector<double> wk, wt;
        for (size_t i = 0; i < kt.kappa.size(); ++i) {
          const double kl = kt.kappa[i] - fit.kappa_center;
          if (kl >= cfg.riser_search_lo && kl <= hi) {
            wk.push_back(kl);
            wt.push_back(tc[i]);
          }
        }
        if (wk.size() >= 3) {
          res.riser_split = detect_riser_splitting(wk, wt, cfg.split_prominence_fraction);
        } else {
          res.flags.push_back("split_window_empty");
        }
      }
    } catch (const ExtractionError& err) {
      res.flags.push_back("suppression_N" + std::to_string(nsub) + ": " + err.what());
    }
  }
  (void)have_delta12;

  if (bias_family && bias_family->size() >= 3) {
    try {
      res.delta_e_mev = extract_subband_spacing(*bias_family, cal.r_s_ohm, lever_arm, cfg);
      res.has_delta_e = true;
    } catch (const std::runtime_error& err) {
      res.flags.push_back(std::string("spectroscopy_failed: ") + err.what());
    }
  }
  return res;
}

}  // namespace qpc::analysis
