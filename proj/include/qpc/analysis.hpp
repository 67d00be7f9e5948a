#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qpc/synthesis.hpp"

namespace qpc::analysis {

using synthesis::ConductanceTrace;

// Conductance bounds (G_Q, relative to the subband offset) selecting the
// lower half step for the E_x fit.
struct FitWindow {
  double g_low = 0.02;
  double g_high = 0.5;

  void validate() const {
    if (!(g_low < g_high) || g_low < 0.0 || g_high > 1.0) {
      throw ArgumentError("fit window: need 0 <= low < high <= 1");
    }
  }
};

struct AnalysisConfig {
  FitWindow window;
  int sg_window = 11;  // Savitzky-Golay smoothing before differencing
  int sg_order = 3;
  double riser_search_lo = -0.5;  // kappa window of the 0.7 search (per riser)
  double riser_search_hi = 4.0;
  double g_window_lo = 0.5;  // sub-open gate on G_TC^0.7 candidates
  double g_window_hi = 0.95;
  double split_prominence_fraction = 0.10;
  double spectroscopy_prominence_fraction = 0.05;
  double good_fit_rms_gq = 0.02;
  double tc0_floor = 1e-6;
  double g0_floor = 0.05;
  std::vector<double> fixed_kappas{0.25, 0.5, 0.75, 1.0};
  int n_subbands = 3;
  int min_window_samples = 10;
  double plateau_band_lo = 0.8;  // raw-G_Q band where the first plateau is sought
  double plateau_band_hi = 1.2;
  double plateau_slope_fraction = 0.05;  // |dG| threshold relative to the max slope
  int curve_max_points = 400;            // stored S_TC / S_G curves are decimated to this
};

// ---------------------------------------------------------------------------
// Savitzky-Golay smoothing (shared by several operations and by tests).
std::vector<double> savgol_coefficients(int window, int order);
std::vector<double> savgol_smooth(std::span<const double> y, int window, int order);

// ---------------------------------------------------------------------------
struct CalibrationResult {
  double r_s_ohm = 0.0;
  double plateau_g_raw = 0.0;   // measured plateau level before correction
  double noise_sigma_gq = 0.0;  // robust per-sample noise estimate on the plateau
  ConductanceTrace corrected;   // two-terminal division inverted
};

// Aligns the first plateau to 1 G_Q; throws CalibrationError when no plateau.
CalibrationResult calibrate_series_resistance(const ConductanceTrace& trace,
                                              const AnalysisConfig& cfg = {});

// ---------------------------------------------------------------------------
struct SubbandFit {
  int subband = 1;
  double e_x_mev = 0.0;
  double v_center_volts = 0.0;  // riser position in gate voltage
  double lever_arm = 0.0;
  double temperature_k = 0.0;
  double rms_gq = 0.0;
  bool converged = false;
  bool at_bound = false;
  bool good = false;  // converged, off bounds, rms below the gate

  // Fitted single-subband model (0..1) and its kappa-derivative, on the
  // data kappa axis (see to_kappa); kappa_center is the riser position there.
  double kappa_center = 0.0;
};

// Nonlinear least squares of the saddle-point lower half step against the
// corrected trace. The lever arm is calibration metadata (known), free
// parameters are E_x and the riser position.
SubbandFit fit_ex(const ConductanceTrace& corrected, int subband, const FitWindow& window,
                  double lever_arm, const AnalysisConfig& cfg = {});

// Fitted noninteracting conductance / transconductance of one subband as a
// function of data-axis kappa (values in 0..1, derivative per unit kappa).
double fit_g0(const SubbandFit& fit, double kappa);
double fit_tc0(const SubbandFit& fit, double kappa);

// ---------------------------------------------------------------------------
struct KappaTrace {
  std::vector<double> kappa;  // uniform ascending grid, kappa = 0 at G = 0.5 G_Q
  std::vector<double> g_gq;
  double dk = 0.0;
  double temperature_k = 0.0;
  double v_half_volts = 0.0;  // gate voltage of the 0.5 G_Q crossing
};

// Resamples the corrected trace on a uniform kappa grid anchored at the
// riser's half-step crossing (0.5 G_Q above the subband offset). Also pins
// the fit's riser position on that axis (fit.kappa_center).
KappaTrace to_kappa(const ConductanceTrace& corrected, SubbandFit& fit,
                    const AnalysisConfig& cfg = {});

// Savitzky-Golay smoothing then central differences (one-sided stencils at
// the ends), returning TC_SD on the trace's kappa grid.
std::vector<double> transconductance(const KappaTrace& trace, const AnalysisConfig& cfg = {});

// ---------------------------------------------------------------------------
struct SuppressionResult {
  int subband = 1;
  std::vector<double> kappa;  // decimated curve grid (local to the riser)
  std::vector<double> g;      // measured conductance, subband offset removed
  std::vector<double> s_tc;   // NaN where masked
  std::vector<double> s_g;    // NaN where masked
  bool found = false;
  double s_tc_07 = 1.0;
  double kappa_07 = 0.0;  // local kappa of the minimum
  double g_07 = 0.0;      // conductance (offset removed) at the minimum
  double s_tc_07_sigma = 0.0;
  std::vector<double> s_g_at_fixed;  // at cfg.fixed_kappas, NaN where unavailable
};

// S_TC and S_G for one riser. The fitted TC^0 reference is evaluated at the
// equal-conductance abscissa so the ratio is exact for Hartree-composed
// traces; points with TC^0 below the floor are masked, never divided. S_G is
// exported for the first subband only, against the combined multi-subband
// fitted G^0 when `all_fits` is given (so it stays meaningful across risers).
SuppressionResult suppression_metrics(const KappaTrace& trace, const std::vector<double>& tc_sd,
                                      const SubbandFit& fit, double noise_sigma_gq,
                                      const AnalysisConfig& cfg = {},
                                      const std::vector<SubbandFit>* all_fits = nullptr);

struct SplitResult {
  bool split = false;
  std::vector<double> peak_kappas;
  std::vector<double> peak_values;
};

// Riser splitting: >= 2 local maxima of the smoothed TC_SD within one
// inter-subband window, each with prominence above the threshold fraction of
// the window maximum.
SplitResult detect_riser_splitting(std::span<const double> kappa, std::span<const double> tc,
                                   double prominence_fraction);

// ---------------------------------------------------------------------------
// Eq. A3 (dimensionally consistent reading): V_SD = V_DC (1 - R_s * Gbar)
// with Gbar the bias-averaged measured conductance up to V_DC (trapezoid over
// the family). Returns the corrected V_SD at each gate sample of the family's
// common grid. v_dc = 0 returns zeros.
std::vector<double> correct_dc_bias(double v_dc_volts,
                                    const std::vector<ConductanceTrace>& family,
                                    double r_s_ohm);

// Subband spacing from DC bias spectroscopy: tracks the N=1 and N=2
// transconductance peak loci vs corrected V_SD and intersects them.
double extract_subband_spacing(const std::vector<ConductanceTrace>& family, double r_s_ohm,
                               double lever_arm, const AnalysisConfig& cfg = {});

// ---------------------------------------------------------------------------
struct DirectionResult {
  bool present = false;
  std::vector<SubbandFit> fits;  // per subband 1..n_subbands (failed fits flagged)
};

struct AnalysisResult {
  synthesis::DeviceId id;
  int cooldown = 1;
  double temperature_k = 0.0;
  bool illuminated = false;
  double lever_arm = 0.0;
  double series_resistance_ohm = 0.0;
  bool good_fit = false;  // first-subband forward fit passed the gate
  DirectionResult forward;
  DirectionResult backward;
  double delta_e_mev = 0.0;  // ΔE_{1,2}; valid iff has_delta_e
  bool has_delta_e = false;
  std::vector<SuppressionResult> suppression;  // per subband (forward sweep)
  SplitResult riser_split;
  double noise_sigma_gq = 0.0;
  std::vector<std::string> flags;  // which preconditions failed / steps skipped
};

// Full per-device pipeline over the forward/backward pair plus an optional
// bias family. Soft failures set flags instead of throwing.
AnalysisResult analyze_device(const ConductanceTrace& forward,
                              const ConductanceTrace* backward,
                              const std::vector<ConductanceTrace>* bias_family, double lever_arm,
                              const AnalysisConfig& cfg = {});

}  // namespace qpc::analysis
