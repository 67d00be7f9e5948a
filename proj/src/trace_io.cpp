#include "qpc/trace_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace qpc::io {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double nan_guard(double v) { return std::isfinite(v) ? v : 0.0; }

json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double from_finite_or_null(const json& j, double fallback = std::numeric_limits<double>::quiet_NaN()) {
  if (j.is_null()) return fallback;
  return j.get<double>();
}

std::vector<double> vec_from(const json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(from_finite_or_null(v));
  return out;
}

json vec_to(const std::vector<double>& v) {
  json arr = json::array();
  for (double x : v) arr.push_back(finite_or_null(x));
  return arr;
}

}  // namespace

std::string sweep_name(synthesis::SweepDirection d) {
  return d == synthesis::SweepDirection::forward ? "forward" : "backward";
}

synthesis::SweepDirection sweep_from_name(const std::string& name) {
  if (name == "forward") return synthesis::SweepDirection::forward;
  if (name == "backward") return synthesis::SweepDirection::backward;
  throw IoError("unknown sweep direction: " + name);
}

void write_trace_csv(const std::filesystem::path& path, const synthesis::ConductanceTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const auto& m = trace.meta;
  out << "# device," << m.id.label() << "\n";
  out << "# chip," << m.id.chip << "\n";
  out << "# cooldown," << m.cooldown << "\n";
  out << "# temperature_K," << fmt(m.temperature_k) << "\n";
  out << "# sweep," << sweep_name(m.sweep) << "\n";
  out << "# illuminated," << (m.illuminated ? 1 : 0) << "\n";
  out << "# v_sd_dc_V," << fmt(m.v_sd_dc_volts) << "\n";
  out << "gate_voltage_V,g_sd_GQ\n";
  for (size_t i = 0; i < trace.gate_v.size(); ++i) {
    out << fmt(trace.gate_v[i]) << "," << fmt(trace.g_gq[i]) << "\n";
  }
  if (!out.good()) throw IoError("write failed: " + path.string());
}

synthesis::ConductanceTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  synthesis::ConductanceTrace trace;
  std::string line;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      std::string key = line.substr(2, comma - 2);
      std::string value = line.substr(comma + 1);
      if (key == "device") {
        int r = 0, c = 0;
        if (std::sscanf(value.c_str(), "QFET(%d,%d)", &r, &c) == 2) {
          trace.meta.id.row = r;
          trace.meta.id.column = c;
        }
      } else if (key == "chip") {
        trace.meta.id.chip = std::stoi(value);
      } else if (key == "cooldown") {
        trace.meta.cooldown = std::stoi(value);
      } else if (key == "temperature_K") {
        trace.meta.temperature_k = std::stod(value);
      } else if (key == "sweep") {
        trace.meta.sweep = sweep_from_name(value);
      } else if (key == "illuminated") {
        trace.meta.illuminated = std::stoi(value) != 0;
      } else if (key == "v_sd_dc_V") {
        trace.meta.v_sd_dc_volts = std::stod(value);
      }
      continue;
    }
    if (!header_done) {  // column header row
      header_done = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("malformed trace row in " + path.string());
    trace.gate_v.push_back(std::stod(line.substr(0, comma)));
    trace.g_gq.push_back(std::stod(line.substr(comma + 1)));
  }
  if (trace.gate_v.size() < 2) throw IoError("trace too short: " + path.string());
  return trace;
}

void write_ldos_csv(const std::filesystem::path& path, const vanhove::LdosCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "# ldos_max," << fmt(curve.ldos_max) << "\n";
  out << "# kappa_at_max," << fmt(curve.kappa_at_max) << "\n";
  out << "kappa,ldos_per_mev_site\n";
  for (size_t i = 0; i < curve.kappa.size(); ++i) {
    out << fmt(curve.kappa[i]) << "," << fmt(curve.ldos[i]) << "\n";
  }
  if (!out.good()) throw IoError("write failed: " + path.string());
}

void write_hartree_csv(const std::filesystem::path& path, const vanhove::HartreeMap& map) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "v_c_mev,v_c_hartree_mev,u_eff\n";
  for (size_t i = 0; i < map.v_c_mev.size(); ++i) {
    out << fmt(map.v_c_mev[i]) << "," << fmt(map.v_c_hartree_mev[i]) << ","
        << fmt(map.u_eff[i]) << "\n";
  }
  if (!out.good()) throw IoError("write failed: " + path.string());
}

json to_json(const synthesis::DeviceId& id) {
  return json{{"chip", id.chip}, {"row", id.row}, {"column", id.column}};
}

void from_json_into(const json& j, synthesis::DeviceId& id) {
  id.chip = j.at("chip").get<int>();
  id.row = j.at("row").get<int>();
  id.column = j.at("column").get<int>();
}

json to_json(const synthesis::SaddleDevice& dev) {
  return json{{"id", to_json(dev.id)},
              {"width_um", dev.width_um},
              {"length_um", dev.length_um},
              {"e_x_mev", dev.e_x_mev},
              {"e_y_mev", dev.e_y_mev},
              {"lever_arm", dev.lever_arm},
              {"v_riser_volts", dev.v_riser_volts},
              {"u_mev", dev.u_mev},
              {"series_resistance_ohm", dev.series_resistance_ohm},
              {"functional", dev.functional},
              {"cooldown", dev.cooldown},
              {"illuminated", dev.illuminated}};
}

void from_json_into(const json& j, synthesis::SaddleDevice& dev) {
  from_json_into(j.at("id"), dev.id);
  dev.width_um = j.at("width_um").get<double>();
  dev.length_um = j.at("length_um").get<double>();
  dev.e_x_mev = j.at("e_x_mev").get<double>();
  dev.e_y_mev = j.at("e_y_mev").get<double>();
  dev.lever_arm = j.at("lever_arm").get<double>();
  dev.v_riser_volts = j.at("v_riser_volts").get<double>();
  dev.u_mev = j.at("u_mev").get<double>();
  dev.series_resistance_ohm = j.at("series_resistance_ohm").get<double>();
  dev.functional = j.at("functional").get<bool>();
  dev.cooldown = j.at("cooldown").get<int>();
  dev.illuminated = j.at("illuminated").get<bool>();
}

namespace {

json chip_plan_to_json(const synthesis::ChipPlan& cp) {
  json j;
  j["mode"] = cp.mode == synthesis::ChipPlan::Mode::fixed_width ? "fixed_width" : "fixed_ratio";
  j["widths_um"] = cp.widths_um;
  j["lengths_um"] = cp.lengths_um;
  j["aspect_ratio"] = cp.aspect_ratio;
  j["ratio_widths_um"] = cp.ratio_widths_um;
  return j;
}

synthesis::ChipPlan chip_plan_from_json(const json& j) {
  synthesis::ChipPlan cp;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "fixed_width") {
    cp.mode = synthesis::ChipPlan::Mode::fixed_width;
  } else if (mode == "fixed_ratio") {
    cp.mode = synthesis::ChipPlan::Mode::fixed_ratio;
  } else {
    throw IoError("unknown chip plan mode: " + mode);
  }
  cp.widths_um = j.at("widths_um").get<std::vector<double>>();
  cp.lengths_um = j.at("lengths_um").get<std::vector<double>>();
  cp.aspect_ratio = j.at("aspect_ratio").get<double>();
  cp.ratio_widths_um = j.at("ratio_widths_um").get<std::vector<double>>();
  return cp;
}

}  // namespace

json to_json(const synthesis::CohortConfig& cfg) {
  json chips = json::array();
  for (const auto& cp : cfg.resolved_chips()) chips.push_back(chip_plan_to_json(cp));
  return json{{"chips", chips},
              {"rows", cfg.rows},
              {"columns", cfg.columns},
              {"e_x_median_mev", cfg.e_x_median_mev},
              {"e_x_log_sigma", cfg.e_x_log_sigma},
              {"e_y_intercept_mev", cfg.e_y_intercept_mev},
              {"e_y_length_slope_mev_per_um", cfg.e_y_length_slope_mev_per_um},
              {"e_y_width_slope_mev_per_um", cfg.e_y_width_slope_mev_per_um},
              {"e_y_sigma_mev", cfg.e_y_sigma_mev},
              {"illumination_factor", cfg.illumination_factor},
              {"u_mode", cfg.u_mode == synthesis::UScalingMode::fixed ? "fixed" : "sqrt_e_y"},
              {"u_fixed_mev", cfg.u_fixed_mev},
              {"u_coefficient", cfg.u_coefficient},
              {"lever_arm_min", cfg.lever_arm_min},
              {"lever_arm_max", cfg.lever_arm_max},
              {"v_riser_mean_volts", cfg.v_riser_mean_volts},
              {"v_riser_sigma_volts", cfg.v_riser_sigma_volts},
              {"series_resistance_ohm", cfg.series_resistance_ohm},
              {"defect_probability", cfg.defect_probability},
              {"noise_sigma_gq", cfg.noise_sigma_gq},
              {"temperatures_k", cfg.temperatures_k},
              {"seed", cfg.seed}};
}

void from_json_into(const json& j, synthesis::CohortConfig& cfg) {
  cfg = synthesis::CohortConfig{};
  if (j.contains("chips")) {
    cfg.chips.clear();
    for (const auto& cj : j.at("chips")) cfg.chips.push_back(chip_plan_from_json(cj));
  }
  auto opt = [&](const char* key, auto& field) {
    using T = std::decay_t<decltype(field)>;
    if (j.contains(key)) field = j.at(key).get<T>();
  };
  opt("rows", cfg.rows);
  opt("columns", cfg.columns);
  opt("e_x_median_mev", cfg.e_x_median_mev);
  opt("e_x_log_sigma", cfg.e_x_log_sigma);
  opt("e_y_intercept_mev", cfg.e_y_intercept_mev);
  opt("e_y_length_slope_mev_per_um", cfg.e_y_length_slope_mev_per_um);
  opt("e_y_width_slope_mev_per_um", cfg.e_y_width_slope_mev_per_um);
  opt("e_y_sigma_mev", cfg.e_y_sigma_mev);
  opt("illumination_factor", cfg.illumination_factor);
  if (j.contains("u_mode")) {
    const std::string m = j.at("u_mode").get<std::string>();
    if (m == "fixed") {
      cfg.u_mode = synthesis::UScalingMode::fixed;
    } else if (m == "sqrt_e_y") {
      cfg.u_mode = synthesis::UScalingMode::sqrt_e_y;
    } else {
      throw IoError("unknown u_mode: " + m);
    }
  }
  opt("u_fixed_mev", cfg.u_fixed_mev);
  opt("u_coefficient", cfg.u_coefficient);
  opt("lever_arm_min", cfg.lever_arm_min);
  opt("lever_arm_max", cfg.lever_arm_max);
  opt("v_riser_mean_volts", cfg.v_riser_mean_volts);
  opt("v_riser_sigma_volts", cfg.v_riser_sigma_volts);
  opt("series_resistance_ohm", cfg.series_resistance_ohm);
  opt("defect_probability", cfg.defect_probability);
  opt("noise_sigma_gq", cfg.noise_sigma_gq);
  opt("temperatures_k", cfg.temperatures_k);
  opt("seed", cfg.seed);
  cfg.validate();
}

namespace {

json fit_to_json(const analysis::SubbandFit& f) {
  return json{{"subband", f.subband},
              {"e_x_mev", finite_or_null(f.e_x_mev)},
              {"v_center_volts", nan_guard(f.v_center_volts)},
              {"lever_arm", f.lever_arm},
              {"temperature_k", f.temperature_k},
              {"rms_gq", nan_guard(f.rms_gq)},
              {"converged", f.converged},
              {"at_bound", f.at_bound},
              {"good", f.good},
              {"kappa_center", nan_guard(f.kappa_center)}};
}

analysis::SubbandFit fit_from_json(const json& j) {
  analysis::SubbandFit f;
  f.subband = j.at("subband").get<int>();
  f.e_x_mev = from_finite_or_null(j.at("e_x_mev"), 0.0);
  f.v_center_volts = j.at("v_center_volts").get<double>();
  f.lever_arm = j.at("lever_arm").get<double>();
  f.temperature_k = j.at("temperature_k").get<double>();
  f.rms_gq = j.at("rms_gq").get<double>();
  f.converged = j.at("converged").get<bool>();
  f.at_bound = j.at("at_bound").get<bool>();
  f.good = j.at("good").get<bool>();
  f.kappa_center = j.at("kappa_center").get<double>();
  return f;
}

json suppression_to_json(const analysis::SuppressionResult& s) {
  return json{{"subband", s.subband},
              {"found", s.found},
              {"s_tc_07", finite_or_null(s.s_tc_07)},
              {"kappa_07", finite_or_null(s.kappa_07)},
              {"g_07", finite_or_null(s.g_07)},
              {"s_tc_07_sigma", nan_guard(s.s_tc_07_sigma)},
              {"kappa", vec_to(s.kappa)},
              {"g", vec_to(s.g)},
              {"s_tc", vec_to(s.s_tc)},
              {"s_g", vec_to(s.s_g)},
              {"s_g_at_fixed", vec_to(s.s_g_at_fixed)}};
}

analysis::SuppressionResult suppression_from_json(const json& j) {
  analysis::SuppressionResult s;
  s.subband = j.at("subband").get<int>();
  s.found = j.at("found").get<bool>();
  s.s_tc_07 = from_finite_or_null(j.at("s_tc_07"));
  s.kappa_07 = from_finite_or_null(j.at("kappa_07"));
  s.g_07 = from_finite_or_null(j.at("g_07"));
  s.s_tc_07_sigma = j.at("s_tc_07_sigma").get<double>();
  s.kappa = vec_from(j.at("kappa"));
  s.g = vec_from(j.at("g"));
  s.s_tc = vec_from(j.at("s_tc"));
  s.s_g = vec_from(j.at("s_g"));
  s.s_g_at_fixed = vec_from(j.at("s_g_at_fixed"));
  return s;
}

}  // namespace

json to_json(const analysis::AnalysisResult& r) {
  json fwd = json::array();
  for (const auto& f : r.forward.fits) fwd.push_back(fit_to_json(f));
  json bwd = json::array();
  for (const auto& f : r.backward.fits) bwd.push_back(fit_to_json(f));
  json sup = json::array();
  for (const auto& s : r.suppression) sup.push_back(suppression_to_json(s));
  return json{{"id", to_json(r.id)},
              {"cooldown", r.cooldown},
              {"temperature_k", r.temperature_k},
              {"illuminated", r.illuminated},
              {"lever_arm", r.lever_arm},
              {"series_resistance_ohm", r.series_resistance_ohm},
              {"good_fit", r.good_fit},
              {"forward_present", r.forward.present},
              {"backward_present", r.backward.present},
              {"fits_forward", fwd},
              {"fits_backward", bwd},
              {"delta_e_mev", r.has_delta_e ? json(r.delta_e_mev) : json(nullptr)},
              {"suppression", sup},
              {"riser_split", r.riser_split.split},
              {"split_peak_kappas", vec_to(r.riser_split.peak_kappas)},
              {"split_peak_values", vec_to(r.riser_split.peak_values)},
              {"noise_sigma_gq", r.noise_sigma_gq},
              {"flags", r.flags}};
}

void from_json_into(const json& j, analysis::AnalysisResult& r) {
  r = analysis::AnalysisResult{};
  from_json_into(j.at("id"), r.id);
  r.cooldown = j.at("cooldown").get<int>();
  r.temperature_k = j.at("temperature_k").get<double>();
  r.illuminated = j.at("illuminated").get<bool>();
  r.lever_arm = j.at("lever_arm").get<double>();
  r.series_resistance_ohm = j.at("series_resistance_ohm").get<double>();
  r.good_fit = j.at("good_fit").get<bool>();
  r.forward.present = j.at("forward_present").get<bool>();
  r.backward.present = j.at("backward_present").get<bool>();
  for (const auto& fj : j.at("fits_forward")) r.forward.fits.push_back(fit_from_json(fj));
  for (const auto& fj : j.at("fits_backward")) r.backward.fits.push_back(fit_from_json(fj));
  if (!j.at("delta_e_mev").is_null()) {
    r.delta_e_mev = j.at("delta_e_mev").get<double>();
    r.has_delta_e = true;
  }
  for (const auto& sj : j.at("suppression")) r.suppression.push_back(suppression_from_json(sj));
  r.riser_split.split = j.at("riser_split").get<bool>();
  r.riser_split.peak_kappas = vec_from(j.at("split_peak_kappas"));
  r.riser_split.peak_values = vec_from(j.at("split_peak_values"));
  r.noise_sigma_gq = j.at("noise_sigma_gq").get<double>();
  r.flags = j.at("flags").get<std::vector<std::string>>();
}

json to_json(const statistics::DeviceSummary& s) {
  return json{{"id", to_json(s.id)},
              {"cooldown", s.cooldown},
              {"temperature_k", s.temperature_k},
              {"illuminated", s.illuminated},
              {"width_um", s.width_um},
              {"length_um", s.length_um},
              {"measured", s.measured},
              {"good_fit", s.good_fit},
              {"e_x_mev", finite_or_null(s.e_x_mev)},
              {"e_x_forward", vec_to(s.e_x_forward)},
              {"e_x_backward", vec_to(s.e_x_backward)},
              {"delta_e_mev", finite_or_null(s.delta_e_mev)},
              {"s_tc_07", finite_or_null(s.s_tc_07)},
              {"s_tc_07_sigma", s.s_tc_07_sigma},
              {"kappa_07", finite_or_null(s.kappa_07)},
              {"g_07", finite_or_null(s.g_07)},
              {"s_tc_07_by_subband", vec_to(s.s_tc_07_by_subband)},
              {"riser_split", s.riser_split},
              {"s_g_at_fixed", vec_to(s.s_g_at_fixed)}};
}

void from_json_into(const json& j, statistics::DeviceSummary& s) {
  s = statistics::DeviceSummary{};
  from_json_into(j.at("id"), s.id);
  s.cooldown = j.at("cooldown").get<int>();
  s.temperature_k = j.at("temperature_k").get<double>();
  s.illuminated = j.at("illuminated").get<bool>();
  s.width_um = j.at("width_um").get<double>();
  s.length_um = j.at("length_um").get<double>();
  s.measured = j.at("measured").get<bool>();
  s.good_fit = j.at("good_fit").get<bool>();
  s.e_x_mev = from_finite_or_null(j.at("e_x_mev"));
  s.e_x_forward = vec_from(j.at("e_x_forward"));
  s.e_x_backward = vec_from(j.at("e_x_backward"));
  s.delta_e_mev = from_finite_or_null(j.at("delta_e_mev"));
  s.s_tc_07 = from_finite_or_null(j.at("s_tc_07"));
  s.s_tc_07_sigma = j.at("s_tc_07_sigma").get<double>();
  s.kappa_07 = from_finite_or_null(j.at("kappa_07"));
  s.g_07 = from_finite_or_null(j.at("g_07"));
  s.s_tc_07_by_subband = vec_from(j.at("s_tc_07_by_subband"));
  s.riser_split = j.at("riser_split").get<bool>();
  s.s_g_at_fixed = vec_from(j.at("s_g_at_fixed"));
}

namespace {

json yields_to_json(const statistics::Yields& y) {
  return json{{"n_measured", y.n_measured},       {"n_good_fit", y.n_good_fit},
              {"n_suppressed", y.n_suppressed},   {"n_riser_split", y.n_riser_split},
              {"y_tc_07", y.y_tc_07},             {"y_rs_07", y.y_rs_07}};
}

json correlation_to_json(const statistics::Correlation& c) {
  return json{{"name", c.name},
              {"rho", finite_or_null(c.rho)},
              {"n", c.n},
              {"ci_lo", c.ci.lo},
              {"ci_hi", c.ci.hi},
              {"resamples", c.ci.resamples}};
}

}  // namespace

json to_json(const statistics::CohortReport& rep) {
  json per_cd = json::array();
  for (size_t i = 0; i < rep.per_cooldown.size(); ++i) {
    json e = yields_to_json(rep.per_cooldown[i]);
    e["cooldown"] = rep.cooldowns[i];
    per_cd.push_back(e);
  }
  json sg_ex = json::array();
  for (const auto& c : rep.rho_sg_ex) sg_ex.push_back(correlation_to_json(c));
  json sg_ue = json::array();
  for (const auto& c : rep.rho_sg_inv_ue) sg_ue.push_back(correlation_to_json(c));
  return json{{"totals", yields_to_json(rep.totals)},
              {"per_cooldown", per_cd},
              {"rho_suppression_sqrt_ue", correlation_to_json(rep.rho_suppression_sqrt_ue)},
              {"rho_sg_ex", sg_ex},
              {"rho_sg_inv_ue", sg_ue},
              {"fixed_kappas", rep.fixed_kappas}};
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out.good()) throw IoError("write failed: " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IoError("json parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out.good()) throw IoError("write failed: " + path.string());
}

}  // namespace qpc::io
