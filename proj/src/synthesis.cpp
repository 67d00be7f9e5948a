#include "qpc/synthesis.hpp"

#include <algorithm>
#include <cmath>

#include "qpc/constants.hpp"
#include "qpc/errors.hpp"
#include "qpc/numeric.hpp"
#include "qpc/rng.hpp"

namespace qpc::synthesis {

using transport::Kappa;
using transport::SaddlePotential;
using transport::ThermalState;

std::string DeviceId::label() const {
  return "QFET(" + std::to_string(row) + "," + std::to_string(column) + ")";
}

namespace {

// C2 quintic step: curvature-continuous ends keep the composed conductance
// smooth enough for high-order differentiation in the Eq. (1) checks.
double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

double series_divided(double g_gq, double r_ohm) {
  return g_gq / (1.0 + g_gq * kConductanceQuantumS * r_ohm);
}

constexpr int kAnalysisSubbands = 3;

// Upper edge of the synthesized kappa window: past the third riser.
double trace_kappa_upper(const SaddleDevice& dev, const SynthesisParams& p) {
  const double u_e = dev.e_y_mev / dev.e_x_mev;
  return (kAnalysisSubbands - 1) * u_e + p.trace_kappa_margin;
}

}  // namespace

DeviceModel::DeviceModel(const SaddleDevice& dev, double temperature_k,
                         const SynthesisParams& params)
    : device_(dev), temperature_k_(temperature_k), params_(params) {
  dev.potential().validate();

  vanhove::BarrierOptions opt;
  opt.floor_drop_e_x = params.floor_drop_e_x;
  opt.interaction_halfdepth_e_x = params.interaction_halfdepth_e_x;
  const auto profile =
      vanhove::build_barrier(dev.e_x_mev, dev.e_y_mev, 0.0, params.n_sites, params.hopping_mev, opt);

  // The suppression profile is a property of the device electrostatics; it is
  // built from the zero-temperature ridge, while thermal broadening enters
  // through the transport integrals.
  vanhove::KappaGrid grid{params.ridge_kappa_min, params.ridge_kappa_max, params.ridge_points};
  ridge_ = vanhove::ldos_ridge(profile, 0.0, 0.0, grid);

  // Enhancement of the ridge over the open-lead background; the grid holds
  // only this smooth part, while the window factors (turn-on ramp, sharp
  // core, delayed van Hove tail) are evaluated analytically per query so the
  // composed profile has no interpolation kinks.
  shape_y_ = ridge_.kappa;
  shape_val_.resize(shape_y_.size());
  for (size_t i = 0; i < shape_y_.size(); ++i) {
    const double energy = profile.barrier_top_mev + shape_y_[i] * dev.e_x_mev;
    shape_val_[i] =
        std::max(0.0, ridge_.ldos[i] - vanhove::lead_background_ldos(profile, energy));
  }
  double peak = 0.0;
  for (double y = 0.0; y <= 2.0; y += 0.002) {
    peak = std::max(peak, profile_first_riser(y));
  }
  if (peak <= 0.0) throw ConfigError("device model: empty suppression profile");
  u_eff_max_ = dev.u_mev * params.subband_u_scale[0] * peak;

  // Operating-point map: kappa(y) = y + int_{-inf}^{y} U/(1-U) dy', the closed
  // form inverse of dk_h/dk = 1 - U_eff(k_h). The grid must stay fine: the
  // interpolated map's segment slope is what realizes Eq. (1).
  const double y_lo = params.trace_kappa_min - 1.0;
  const double y_hi = trace_kappa_upper(dev, params) + 1.0;
  const double dy = 0.0005;
  const int n = static_cast<int>(std::ceil((y_hi - y_lo) / dy)) + 1;
  map_y_.resize(static_cast<size_t>(n));
  std::vector<double> integrand(static_cast<size_t>(n));
  double u_peak_seen = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = y_lo + dy * i;
    map_y_[static_cast<size_t>(i)] = y;
    const double u = u_eff_total_at_y(y);
    u_peak_seen = std::max(u_peak_seen, u);
    if (u >= 1.0) {
      throw ModelValidityError("device model: max U_eff = " + std::to_string(u) +
                               " >= 1, first-order Hartree map reverses");
    }
    integrand[static_cast<size_t>(i)] = u / (1.0 - u);
  }
  const auto cum = cumulative_integral(integrand, dy);
  map_kappa_.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    map_kappa_[static_cast<size_t>(i)] = map_y_[static_cast<size_t>(i)] + cum[static_cast<size_t>(i)];
  }
}

double DeviceModel::profile_first_riser(double y) const {
  if (y <= shape_y_.front() || y >= shape_y_.back()) return 0.0;
  const double enh = interp_linear(shape_y_, shape_val_, y);
  if (enh <= 0.0) return 0.0;
  const double ramp =
      smoothstep((y - params_.left_ramp_lo) / (params_.left_ramp_hi - params_.left_ramp_lo));
  double cut = 1.0;
  if (y > 0.0) {
    const double u_e = device_.e_y_mev / device_.e_x_mev;
    const double w_c = std::min(params_.right_cut_kappa, params_.right_cut_ue_scale * u_e);
    const double w_tail = std::max(params_.tail_window_ue_scale * u_e, params_.tail_window_min);
    const double core = std::exp(-(y / w_c) * (y / w_c));
    const double t4 = (y / w_tail) * (y / w_tail) * (y / w_tail) * (y / w_tail);
    // the tail starts past the core's recovery flank so the split-riser
    // transconductance structure stays sharp
    const double onset = smoothstep((y - 0.45) / 0.35);
    cut = core + params_.tail_fraction * onset * std::exp(-t4);
  }
  return enh * ramp * cut;
}

double DeviceModel::u_eff_total_at_y(double y) const {
  const double u_e = device_.e_y_mev / device_.e_x_mev;
  double total = 0.0;
  for (int n = 1; n <= kAnalysisSubbands; ++n) {
    const double scale = params_.subband_u_scale[static_cast<size_t>(n - 1)];
    if (scale <= 0.0) continue;
    total += device_.u_mev * scale * profile_first_riser(y - (n - 1) * u_e);
  }
  return total;
}

double DeviceModel::kappa_h(double kappa) const {
  if (kappa <= map_kappa_.front()) return map_y_.front() + (kappa - map_kappa_.front());
  if (kappa >= map_kappa_.back()) return map_y_.back() + (kappa - map_kappa_.back());
  return interp_linear(map_kappa_, map_y_, kappa);
}

double DeviceModel::u_eff_at(double kappa) const { return u_eff_total_at_y(kappa_h(kappa)); }

double DeviceModel::g_intrinsic(double kappa) const {
  const ThermalState th{temperature_k_, 0.0};
  return transport::conductance_noninteracting(Kappa{kappa_h(kappa)}, device_.potential(), th,
                                               params_.n_subbands);
}

double DeviceModel::tc0_at_operating_point(double kappa) const {
  const ThermalState th{temperature_k_, 0.0};
  return transport::transconductance_noninteracting(Kappa{kappa_h(kappa)}, device_.potential(), th,
                                                    params_.n_subbands);
}

double calibrate_u_for_ueff_max(const SaddleDevice& dev, double temperature_k, double target,
                                const SynthesisParams& params) {
  if (!(target >= 0.0) || target >= 1.0) {
    throw ArgumentError("calibrate_u_for_ueff_max: target must be in [0, 1)");
  }
  SaddleDevice probe = dev;
  probe.u_mev = 1.0;
  const DeviceModel model(probe, temperature_k, params);
  if (model.u_eff_max() <= 0.0) throw ConfigError("calibrate_u_for_ueff_max: empty profile");
  return target / model.u_eff_max();
}

namespace {

// Measured conductance of device + series resistance at applied DC bias v_dc.
// g_of_v returns the device differential conductance (G_Q) at internal bias v.
template <typename G>
double solve_divider(G&& g_of_v, double v_dc, double r_ohm, double* v_internal_out) {
  if (v_dc == 0.0 || r_ohm == 0.0) {
    if (v_internal_out) *v_internal_out = v_dc;
    const double g = g_of_v(v_dc);
    return series_divided(g, r_ohm);
  }
  const double sgn = v_dc > 0.0 ? 1.0 : -1.0;
  const double mag = std::fabs(v_dc);
  auto current_a = [&](double v_mag) {
    // I(v) = G_Q * int_0^v g dv', 33-node composite Simpson.
    constexpr int kNodes = 33;
    const double h = v_mag / (kNodes - 1);
    double acc = 0.0;
    for (int i = 0; i < kNodes; ++i) {
      const double w = (i == 0 || i == kNodes - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      acc += w * g_of_v(sgn * h * i);
    }
    return kConductanceQuantumS * acc * h / 3.0;
  };
  double v = mag;  // Newton from the applied bias; f is increasing and convex-safe
  for (int it = 0; it < 40; ++it) {
    const double f = v + r_ohm * current_a(v) - mag;
    const double fp = 1.0 + r_ohm * kConductanceQuantumS * g_of_v(sgn * v);
    const double step = f / fp;
    v -= step;
    if (v < 0.0) v = 0.5 * (v + step);  // stay positive
    if (std::fabs(step) < 1e-14 * (1.0 + mag)) break;
  }
  if (v_internal_out) *v_internal_out = sgn * v;
  const double g_diff = g_of_v(sgn * v);
  return series_divided(g_diff, r_ohm);
}

struct IntrinsicTable {
  std::vector<double> kappa;
  std::vector<double> g;

  double at(double k) const { return interp_linear(kappa, g, k); }
};

IntrinsicTable tabulate_intrinsic(const DeviceModel& model, double k_lo, double k_hi, double dk) {
  IntrinsicTable t;
  const int n = static_cast<int>(std::ceil((k_hi - k_lo) / dk)) + 1;
  t.kappa.resize(static_cast<size_t>(n));
  t.g.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    t.kappa[static_cast<size_t>(i)] = k_lo + dk * i;
    t.g[static_cast<size_t>(i)] = model.g_intrinsic(t.kappa[static_cast<size_t>(i)]);
  }
  return t;
}

}  // namespace

ConductanceTrace synthesize_trace(const SaddleDevice& dev, const ThermalState& th,
                                  SweepDirection sweep, double v_sd_dc_volts, double noise_sigma,
                                  uint64_t rng_seed, const SynthesisParams& params) {
  const DeviceModel model(dev, th.temperature_k, params);
  return synthesize_trace(model, sweep, v_sd_dc_volts, noise_sigma, rng_seed);
}

namespace {

ConductanceTrace synthesize_trace_impl(const DeviceModel& model, SweepDirection sweep,
                                       double v_sd_dc_volts, double noise_sigma,
                                       uint64_t rng_seed, const IntrinsicTable* shared_table) {
  const SaddleDevice& dev = model.device();
  if (!dev.functional) {
    throw DeviceDefectError("synthesize_trace: device " + dev.id.label() + " is nonfunctional");
  }
  const SynthesisParams& p = model.params();

  const double k_lo = p.trace_kappa_min;
  const double k_hi = trace_kappa_upper(dev, p);
  const auto pot = dev.potential();

  const bool backward = sweep == SweepDirection::backward;
  const double riser_shift = backward ? p.hysteresis_shift_volts : 0.0;

  // Biased traces go through the actual voltage divider; the zero-bias path is
  // the v -> 0 limit of the same formula.
  const double delta_max = kMeVPerVolt * std::fabs(v_sd_dc_volts) / (2.0 * dev.e_x_mev);
  IntrinsicTable own_table;
  const IntrinsicTable* table = shared_table;
  if (v_sd_dc_volts != 0.0 && !table) {
    own_table = tabulate_intrinsic(model, k_lo - delta_max - 0.5, k_hi + delta_max + 0.5, 0.01);
    table = &own_table;
  }

  ConductanceTrace trace;
  trace.meta = TraceMeta{dev.id, dev.cooldown, model.temperature_k(), sweep, dev.illuminated,
                         v_sd_dc_volts};
  trace.gate_v.resize(static_cast<size_t>(p.trace_points));
  trace.g_gq.resize(static_cast<size_t>(p.trace_points));

  Rng rng(rng_seed);
  const double dk = (k_hi - k_lo) / (p.trace_points - 1);
  for (int s = 0; s < p.trace_points; ++s) {
    // forward sweep: conductance decreasing, i.e. kappa from high to low
    const int i = backward ? s : (p.trace_points - 1 - s);
    const double kappa = k_lo + dk * i;
    const double v_gate = transport::gate_from_kappa(kappa, pot) + riser_shift;
    double g_meas;
    if (v_sd_dc_volts == 0.0) {
      g_meas = series_divided(model.g_intrinsic(kappa), dev.series_resistance_ohm);
    } else {
      auto g_of_v = [&](double v) {
        const double d = kMeVPerVolt * v / (2.0 * dev.e_x_mev);
        return 0.5 * (table->at(kappa + d) + table->at(kappa - d));
      };
      g_meas = solve_divider(g_of_v, v_sd_dc_volts, dev.series_resistance_ohm, nullptr);
    }
    if (noise_sigma > 0.0) g_meas += noise_sigma * rng.normal();
    trace.gate_v[static_cast<size_t>(s)] = v_gate;
    trace.g_gq[static_cast<size_t>(s)] = g_meas;
  }
  return trace;
}

}  // namespace

ConductanceTrace synthesize_trace(const DeviceModel& model, SweepDirection sweep,
                                  double v_sd_dc_volts, double noise_sigma, uint64_t rng_seed) {
  return synthesize_trace_impl(model, sweep, v_sd_dc_volts, noise_sigma, rng_seed, nullptr);
}

std::vector<ConductanceTrace> bias_sweep_family(const SaddleDevice& dev, const ThermalState& th,
                                                const std::vector<double>& v_sd_list_volts,
                                                double noise_sigma, uint64_t rng_seed,
                                                const SynthesisParams& params) {
  const DeviceModel model(dev, th.temperature_k, params);
  return bias_sweep_family(model, v_sd_list_volts, noise_sigma, rng_seed);
}

std::vector<ConductanceTrace> bias_sweep_family(const DeviceModel& model,
                                                const std::vector<double>& v_sd_list_volts,
                                                double noise_sigma, uint64_t rng_seed) {
  // One intrinsic-conductance table serves the whole family.
  const SaddleDevice& dev = model.device();
  const SynthesisParams& p = model.params();
  double v_max = 0.0;
  for (double v : v_sd_list_volts) v_max = std::max(v_max, std::fabs(v));
  IntrinsicTable table;
  const IntrinsicTable* shared = nullptr;
  if (v_max > 0.0) {
    const double delta_max = kMeVPerVolt * v_max / (2.0 * dev.e_x_mev);
    table = tabulate_intrinsic(model, p.trace_kappa_min - delta_max - 0.5,
                               trace_kappa_upper(dev, p) + delta_max + 0.5, 0.01);
    shared = &table;
  }
  std::vector<ConductanceTrace> family;
  family.reserve(v_sd_list_volts.size());
  for (size_t i = 0; i < v_sd_list_volts.size(); ++i) {
    family.push_back(synthesize_trace_impl(model, SweepDirection::forward, v_sd_list_volts[i],
                                           noise_sigma, derive_stream(rng_seed, "bias", i),
                                           shared));
  }
  return family;
}

double internal_bias_volts(const DeviceModel& model, double kappa, double v_dc_volts) {
  const auto& dev = model.device();
  const double delta_max = kMeVPerVolt * std::fabs(v_dc_volts) / (2.0 * dev.e_x_mev);
  const auto table =
      tabulate_intrinsic(model, kappa - delta_max - 0.5, kappa + delta_max + 0.5, 0.01);
  auto g_of_v = [&](double v) {
    const double d = kMeVPerVolt * v / (2.0 * dev.e_x_mev);
    return 0.5 * (table.at(kappa + d) + table.at(kappa - d));
  };
  double v_internal = 0.0;
  solve_divider(g_of_v, v_dc_volts, dev.series_resistance_ohm, &v_internal);
  return v_internal;
}

void CohortConfig::validate() const {
  if (e_x_median_mev <= 0.0 || e_x_log_sigma < 0.0 || e_y_sigma_mev < 0.0 ||
      v_riser_sigma_volts < 0.0 || noise_sigma_gq < 0.0) {
    throw ArgumentError("cohort config: negative spread or nonpositive median");
  }
  if (defect_probability < 0.0 || defect_probability > 1.0) {
    throw ArgumentError("cohort config: defect probability outside [0, 1]");
  }
  if (rows < 1 || rows > 16 || columns < 1 || columns > 16) {
    throw ArgumentError("cohort config: rows/columns outside 1..16");
  }
  if (lever_arm_min <= 0.0 || lever_arm_max > 1.0 || lever_arm_min > lever_arm_max) {
    throw ArgumentError("cohort config: bad lever arm range");
  }
  if (temperatures_k.empty()) throw ArgumentError("cohort config: no temperatures");
}

std::vector<ChipPlan> CohortConfig::resolved_chips() const {
  if (!chips.empty()) return chips;
  std::vector<ChipPlan> plan;
  // Chips 1-2: length series at the two fixed widths. Chips 3-5: fixed aspect
  // ratio with the width series.
  ChipPlan fixed_w;
  fixed_w.mode = ChipPlan::Mode::fixed_width;
  fixed_w.widths_um = {0.6, 0.4};
  for (int c = 0; c < 16; ++c) fixed_w.lengths_um.push_back(0.10 + 0.05 * c);
  plan.push_back(fixed_w);
  plan.push_back(fixed_w);
  ChipPlan fixed_r;
  fixed_r.mode = ChipPlan::Mode::fixed_ratio;
  fixed_r.aspect_ratio = 0.5;
  for (int c = 0; c < 16; ++c) fixed_r.ratio_widths_um.push_back(0.30 + 0.025 * c);
  plan.push_back(fixed_r);
  plan.push_back(fixed_r);
  plan.push_back(fixed_r);
  return plan;
}

std::vector<SaddleDevice> generate_cohort(const CohortConfig& cfg, int cooldown_index,
                                          bool illuminated) {
  cfg.validate();
  if (cooldown_index < 1) throw ArgumentError("generate_cohort: cooldown index must be >= 1");
  const auto plan = cfg.resolved_chips();
  std::vector<SaddleDevice> cohort;
  cohort.reserve(plan.size() * static_cast<size_t>(cfg.rows * cfg.columns));

  for (size_t chip_i = 0; chip_i < plan.size(); ++chip_i) {
    const int chip = static_cast<int>(chip_i) + 1;
    const ChipPlan& cp = plan[chip_i];
    for (int row = 1; row <= cfg.rows; ++row) {
      for (int col = 1; col <= cfg.columns; ++col) {
        SaddleDevice dev;
        dev.id = DeviceId{chip, row, col};
        dev.cooldown = cooldown_index;
        dev.illuminated = illuminated;
        if (cp.mode == ChipPlan::Mode::fixed_width) {
          dev.width_um = cp.widths_um[static_cast<size_t>(row - 1) % cp.widths_um.size()];
          dev.length_um = cp.lengths_um[static_cast<size_t>(col - 1) % cp.lengths_um.size()];
        } else {
          dev.width_um =
              cp.ratio_widths_um[static_cast<size_t>(col - 1) % cp.ratio_widths_um.size()];
          dev.length_um = cp.aspect_ratio * dev.width_um;
        }
        const uint64_t key = static_cast<uint64_t>(row) * 100 + static_cast<uint64_t>(col);
        const uint64_t chip_u = static_cast<uint64_t>(chip);

        // E_x: re-drawn each cooldown (background potential fluctuations).
        Rng ex_rng(derive_stream(cfg.seed, "e_x", chip_u, key, static_cast<uint64_t>(cooldown_index)));
        dev.e_x_mev = cfg.e_x_median_mev * std::exp(cfg.e_x_log_sigma * ex_rng.normal());

        // E_y: geometry plus device-fixed disorder, identical across cooldowns.
        Rng ey_rng(derive_stream(cfg.seed, "e_y", chip_u, key));
        double e_y = 0.0;
        do {
          e_y = cfg.e_y_intercept_mev - cfg.e_y_length_slope_mev_per_um * dev.length_um -
                cfg.e_y_width_slope_mev_per_um * dev.width_um + cfg.e_y_sigma_mev * ey_rng.normal();
        } while (e_y <= 0.0);
        if (illuminated) e_y *= cfg.illumination_factor;
        dev.e_y_mev = e_y;

        Rng lever_rng(derive_stream(cfg.seed, "lever", chip_u, key));
        dev.lever_arm = cfg.lever_arm_min + (cfg.lever_arm_max - cfg.lever_arm_min) * lever_rng.uniform();

        Rng riser_rng(
            derive_stream(cfg.seed, "v_riser", chip_u, key, static_cast<uint64_t>(cooldown_index)));
        dev.v_riser_volts = cfg.v_riser_mean_volts + cfg.v_riser_sigma_volts * riser_rng.normal();

        dev.series_resistance_ohm = cfg.series_resistance_ohm;
        dev.u_mev = cfg.u_mode == UScalingMode::fixed ? cfg.u_fixed_mev
                                                      : cfg.u_coefficient * std::sqrt(dev.e_y_mev);

        Rng defect_rng(derive_stream(cfg.seed, "defects", chip_u, key));
        dev.functional = defect_rng.uniform() >= cfg.defect_probability;

        cohort.push_back(dev);
      }
    }
  }
  return cohort;
}

}  // namespace qpc::synthesis
