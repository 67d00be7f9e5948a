#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qpc/transport.hpp"
#include "qpc/vanhove.hpp"

namespace qpc::synthesis {

struct DeviceId {
  int chip = 1;    // 1..5
  int row = 1;     // 1..16
  int column = 1;  // 1..16

  std::string label() const;  // "QFET(row,column)"
};

// Ground truth for one device in one cooldown.
struct SaddleDevice {
  DeviceId id;
  double width_um = 0.4;
  double length_um = 0.4;
  double e_x_mev = 1.0;   // re-drawn each cooldown
  double e_y_mev = 2.5;   // device-fixed (times illumination factor)
  double lever_arm = 0.07;
  double v_riser_volts = -0.8;
  double u_mev = 0.0;
  double series_resistance_ohm = 1000.0;
  bool functional = true;
  int cooldown = 1;
  bool illuminated = false;

  transport::SaddlePotential potential() const {
    return {e_x_mev, e_y_mev, lever_arm, v_riser_volts};
  }
};

enum class SweepDirection { forward, backward };  // forward: conductance decreasing

struct TraceMeta {
  DeviceId id;
  int cooldown = 1;
  double temperature_k = 1.4;
  SweepDirection sweep = SweepDirection::forward;
  bool illuminated = false;
  double v_sd_dc_volts = 0.0;
};

struct ConductanceTrace {
  std::vector<double> gate_v;  // strictly monotone in sweep direction
  std::vector<double> g_gq;    // measured conductance in G_Q units
  TraceMeta meta;
};

// Numerical knobs of the trace factory. Defaults are calibrated once for the
// whole project; every value is config-overridable.
struct SynthesisParams {
  // tight-binding discretization
  int n_sites = 301;
  double hopping_mev = 120.0;
  double floor_drop_e_x = 10.0;
  double interaction_halfdepth_e_x = 0.25;
  // base ridge grid (units of kappa)
  double ridge_kappa_min = -4.0;
  double ridge_kappa_max = 8.0;
  int ridge_points = 1201;
  // suppression-profile shaping: the enhancement acts on propagating states
  // (smoothstep turn-on above the effective barrier top). The profile is a
  // sharp core (Gaussian cut, sets the anomaly minimum and riser splitting)
  // plus a weaker van Hove tail extending over the sub-open window, cut off
  // before the next riser by a quartic window.
  double left_ramp_lo = 0.0;
  double left_ramp_hi = 0.20;
  double right_cut_kappa = 0.30;
  double right_cut_ue_scale = 0.35;  // core cut = min(right_cut, scale*U_E)
  double tail_fraction = 0.35;
  double tail_window_ue_scale = 0.75;  // tail cut = max(scale*U_E, tail_window_min)
  double tail_window_min = 0.6;
  std::array<double, 3> subband_u_scale{1.0, 0.4, 0.07};
  int n_subbands = 4;
  // trace sampling
  double trace_kappa_min = -4.0;
  double trace_kappa_margin = 6.0;  // upper edge = (n_analysis_subbands-1)*U_E + margin
  int trace_points = 801;
  double hysteresis_shift_volts = 0.0;  // rigid v_riser shift on backward sweeps
};

// Per-device deterministic physics: LDOS ridge, suppression profile, Hartree
// operating-point map and intrinsic conductance. Immutable once built.
class DeviceModel {
 public:
  DeviceModel(const SaddleDevice& dev, double temperature_k, const SynthesisParams& params = {});

  // Composite effective interaction at the operating point reached at kappa.
  double u_eff_at(double kappa) const;
  // Effective-barrier coordinate: dk_h/dk = 1 - U_eff(k_h), anchored in pinch-off.
  double kappa_h(double kappa) const;
  // Intrinsic conductance G^0(kappa_h(kappa)) in G_Q units.
  double g_intrinsic(double kappa) const;
  // Noninteracting transconductance evaluated at the operating point.
  double tc0_at_operating_point(double kappa) const;
  // Max of the first-riser suppression profile (the configured U_eff^max).
  double u_eff_max() const { return u_eff_max_; }

  const vanhove::LdosCurve& ridge() const { return ridge_; }
  const SaddleDevice& device() const { return device_; }
  double temperature_k() const { return temperature_k_; }
  const SynthesisParams& params() const { return params_; }

 private:
  double profile_first_riser(double y) const;  // windowed enhancement, one riser
  double u_eff_total_at_y(double y) const;     // all subbands, argument = kappa_h

  SaddleDevice device_;
  double temperature_k_;
  SynthesisParams params_;
  vanhove::LdosCurve ridge_;
  std::vector<double> shape_y_;      // first-riser profile grid (kappa_h units)
  std::vector<double> shape_val_;    // normalized so max = 1
  double u_eff_max_ = 0.0;
  std::vector<double> map_y_;        // kappa_h samples
  std::vector<double> map_kappa_;    // kappa(kappa_h) = y + int U/(1-U)
};

// Returns the interaction strength U (meV) that makes the device's first-riser
// U_eff^max equal to the target, at the given temperature.
double calibrate_u_for_ueff_max(const SaddleDevice& dev, double temperature_k, double target,
                                const SynthesisParams& params = {});

ConductanceTrace synthesize_trace(const SaddleDevice& dev, const transport::ThermalState& th,
                                  SweepDirection sweep, double v_sd_dc_volts, double noise_sigma,
                                  uint64_t rng_seed, const SynthesisParams& params = {});

// Same, reusing an already-built DeviceModel (cohort runs synthesize many
// traces per device).
ConductanceTrace synthesize_trace(const DeviceModel& model, SweepDirection sweep,
                                  double v_sd_dc_volts, double noise_sigma, uint64_t rng_seed);

// One trace per DC bias value; series resistance enters through the actual
// voltage divider so the Eq. A3 correction round-trips.
std::vector<ConductanceTrace> bias_sweep_family(const SaddleDevice& dev,
                                                const transport::ThermalState& th,
                                                const std::vector<double>& v_sd_list_volts,
                                                double noise_sigma, uint64_t rng_seed,
                                                const SynthesisParams& params = {});

std::vector<ConductanceTrace> bias_sweep_family(const DeviceModel& model,
                                                const std::vector<double>& v_sd_list_volts,
                                                double noise_sigma, uint64_t rng_seed);

// Internal device bias reached when v_dc is applied across device + series
// resistance at the given kappa (ground truth for the A3 round-trip test).
double internal_bias_volts(const DeviceModel& model, double kappa, double v_dc_volts);

enum class UScalingMode { fixed, sqrt_e_y };

struct ChipPlan {
  enum class Mode { fixed_width, fixed_ratio } mode = Mode::fixed_width;
  std::vector<double> widths_um{0.6, 0.4};   // cycled over rows (fixed_width)
  std::vector<double> lengths_um;            // cycled over columns (fixed_width)
  double aspect_ratio = 0.5;                 // L/W (fixed_ratio)
  std::vector<double> ratio_widths_um;       // cycled over columns (fixed_ratio)
};

struct CohortConfig {
  std::vector<ChipPlan> chips;  // defaults to the 5-chip plan when empty
  int rows = 16;
  int columns = 16;
  // E_x: lognormal, re-drawn per cooldown
  double e_x_median_mev = 1.0;
  double e_x_log_sigma = 0.3;
  // E_y: geometry model, device-fixed noise
  double e_y_intercept_mev = 2.5;
  double e_y_length_slope_mev_per_um = 0.5;
  double e_y_width_slope_mev_per_um = 1.0;
  double e_y_sigma_mev = 0.2;
  double illumination_factor = 1.6;
  // interaction strength
  UScalingMode u_mode = UScalingMode::sqrt_e_y;
  double u_fixed_mev = 12.0;
  double u_coefficient = 11.0;  // U = c * sqrt(E_y) in sqrt_e_y mode
  // lever arm / riser voltage
  double lever_arm_min = 0.05;
  double lever_arm_max = 0.09;
  double v_riser_mean_volts = -0.8;
  double v_riser_sigma_volts = 0.05;
  double series_resistance_ohm = 1000.0;
  double defect_probability = 0.554;
  double noise_sigma_gq = 0.005;
  std::vector<double> temperatures_k{0.04, 1.4};
  uint64_t seed = 1;

  void validate() const;
  std::vector<ChipPlan> resolved_chips() const;
};

// Devices of every chip for one cooldown. E_x re-drawn per cooldown; E_y,
// geometry, lever arm and the functional flag are device-fixed.
std::vector<SaddleDevice> generate_cohort(const CohortConfig& cfg, int cooldown_index,
                                          bool illuminated);

}  // namespace qpc::synthesis
