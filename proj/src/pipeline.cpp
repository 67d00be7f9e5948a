#include "qpc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "qpc/mux.hpp"
#include "qpc/rng.hpp"
#include "qpc/trace_io.hpp"

namespace qpc::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string temp_tag(double t_k) {
  return "t" + std::to_string(static_cast<long long>(std::llround(t_k * 1000.0))) + "mK";
}

std::string device_file_stem(const synthesis::DeviceId& id) {
  return "c" + std::to_string(id.chip) + "_r" + std::to_string(id.row) + "_c" +
         std::to_string(id.column);
}

std::vector<double> bias_list_for(const synthesis::SaddleDevice& dev, const RunConfig& cfg) {
  std::vector<double> out;
  const double top = cfg.bias_span_factor * dev.e_y_mev / kMeVPerVolt;
  for (int i = 0; i < cfg.bias_points; ++i) {
    out.push_back(top * static_cast<double>(i) / (cfg.bias_points - 1));
  }
  return out;
}

// Bounded worker pool running tasks by index; results land in caller-owned
// slots so aggregation order never depends on completion order.
void run_parallel(int workers, size_t n_tasks, const std::function<void(size_t)>& task) {
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 0) workers = 2;
  }
  workers = std::min<int>(workers, static_cast<int>(n_tasks));
  if (workers <= 1) {
    for (size_t i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= n_tasks) return;
        task(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

json analysis_config_json(const analysis::AnalysisConfig& a) {
  return json{{"sg_window", a.sg_window},
              {"sg_order", a.sg_order},
              {"fit_g_low", a.window.g_low},
              {"fit_g_high", a.window.g_high},
              {"riser_search_lo", a.riser_search_lo},
              {"riser_search_hi", a.riser_search_hi},
              {"g_window_lo", a.g_window_lo},
              {"g_window_hi", a.g_window_hi},
              {"split_prominence_fraction", a.split_prominence_fraction},
              {"good_fit_rms_gq", a.good_fit_rms_gq},
              {"tc0_floor", a.tc0_floor},
              {"g0_floor", a.g0_floor},
              {"fixed_kappas", a.fixed_kappas},
              {"n_subbands", a.n_subbands}};
}

void analysis_config_from_json(const json& j, analysis::AnalysisConfig& a) {
  a.sg_window = j.at("sg_window").get<int>();
  a.sg_order = j.at("sg_order").get<int>();
  a.window.g_low = j.at("fit_g_low").get<double>();
  a.window.g_high = j.at("fit_g_high").get<double>();
  a.riser_search_lo = j.at("riser_search_lo").get<double>();
  a.riser_search_hi = j.at("riser_search_hi").get<double>();
  a.g_window_lo = j.at("g_window_lo").get<double>();
  a.g_window_hi = j.at("g_window_hi").get<double>();
  a.split_prominence_fraction = j.at("split_prominence_fraction").get<double>();
  a.good_fit_rms_gq = j.at("good_fit_rms_gq").get<double>();
  a.tc0_floor = j.at("tc0_floor").get<double>();
  a.g0_floor = j.at("g0_floor").get<double>();
  a.fixed_kappas = j.at("fixed_kappas").get<std::vector<double>>();
  a.n_subbands = j.at("n_subbands").get<int>();
}

json synth_params_json(const synthesis::SynthesisParams& p) {
  return json{{"n_sites", p.n_sites},
              {"hopping_mev", p.hopping_mev},
              {"interaction_halfdepth_e_x", p.interaction_halfdepth_e_x},
              {"left_ramp_lo", p.left_ramp_lo},
              {"left_ramp_hi", p.left_ramp_hi},
              {"right_cut_kappa", p.right_cut_kappa},
              {"right_cut_ue_scale", p.right_cut_ue_scale},
              {"subband_u_scale", std::vector<double>{p.subband_u_scale.begin(), p.subband_u_scale.end()}},
              {"trace_points", p.trace_points},
              {"trace_kappa_min", p.trace_kappa_min},
              {"trace_kappa_margin", p.trace_kappa_margin},
              {"hysteresis_shift_volts", p.hysteresis_shift_volts}};
}

void synth_params_from_json(const json& j, synthesis::SynthesisParams& p) {
  p.n_sites = j.at("n_sites").get<int>();
  p.hopping_mev = j.at("hopping_mev").get<double>();
  p.interaction_halfdepth_e_x = j.at("interaction_halfdepth_e_x").get<double>();
  p.left_ramp_lo = j.at("left_ramp_lo").get<double>();
  p.left_ramp_hi = j.at("left_ramp_hi").get<double>();
  p.right_cut_kappa = j.at("right_cut_kappa").get<double>();
  p.right_cut_ue_scale = j.at("right_cut_ue_scale").get<double>();
  const auto scales = j.at("subband_u_scale").get<std::vector<double>>();
  for (size_t i = 0; i < p.subband_u_scale.size() && i < scales.size(); ++i) {
    p.subband_u_scale[i] = scales[i];
  }
  p.trace_points = j.at("trace_points").get<int>();
  p.trace_kappa_min = j.at("trace_kappa_min").get<double>();
  p.trace_kappa_margin = j.at("trace_kappa_margin").get<double>();
  p.hysteresis_shift_volts = j.at("hysteresis_shift_volts").get<double>();
}

}  // namespace

json RunConfig::to_json() const {
  return json{{"cohort", io::to_json(cohort)},
              {"cooldowns", cooldowns},
              {"illuminated_cooldowns", illuminated_cooldowns},
              {"spectroscopy", spectroscopy},
              {"bias_points", bias_points},
              {"bias_span_factor", bias_span_factor},
              {"workers", workers},
              {"synthesis", synth_params_json(synth)},
              {"analysis", analysis_config_json(analysis)},
              {"suppression_sigma_factor", stats.suppression_sigma_factor}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  io::from_json_into(j.at("cohort"), cfg.cohort);
  cfg.cooldowns = j.at("cooldowns").get<int>();
  cfg.illuminated_cooldowns = j.at("illuminated_cooldowns").get<std::vector<int>>();
  cfg.spectroscopy = j.at("spectroscopy").get<bool>();
  cfg.bias_points = j.at("bias_points").get<int>();
  cfg.bias_span_factor = j.at("bias_span_factor").get<double>();
  cfg.workers = j.at("workers").get<int>();
  synth_params_from_json(j.at("synthesis"), cfg.synth);
  analysis_config_from_json(j.at("analysis"), cfg.analysis);
  cfg.stats.suppression_sigma_factor = j.at("suppression_sigma_factor").get<double>();
  cfg.stats.fixed_kappas = cfg.analysis.fixed_kappas;
  return cfg;
}

// ---------------------------------------------------------------------------
RunCounts cmd_synthesize(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.cohort.validate();
  fs::create_directories(out_dir / "traces");
  RunCounts counts;
  json device_records = json::array();

  std::vector<fs::path> written;
  try {
    for (int cd = 1; cd <= cfg.cooldowns; ++cd) {
      const bool illuminated =
          std::find(cfg.illuminated_cooldowns.begin(), cfg.illuminated_cooldowns.end(), cd) !=
          cfg.illuminated_cooldowns.end();
      const auto cohort = synthesis::generate_cohort(cfg.cohort, cd, illuminated);
      for (const auto& dev : cohort) {
        ++counts.devices_total;
        json rec = io::to_json(dev);
        rec["traces"] = json::array();
        if (dev.functional) {
          ++counts.functional;
          for (const double temp : cfg.cohort.temperatures_k) {
            const synthesis::DeviceModel model(dev, temp, cfg.synth);
            for (const auto sweep :
                 {synthesis::SweepDirection::forward, synthesis::SweepDirection::backward}) {
              const uint64_t seed =
                  derive_stream(cfg.cohort.seed, "noise", static_cast<uint64_t>(dev.id.chip),
                                static_cast<uint64_t>(dev.id.row * 100 + dev.id.column),
                                static_cast<uint64_t>(cd * 1000 +
                                                      (sweep == synthesis::SweepDirection::forward
                                                           ? 0
                                                           : 1) +
                                                      2 * static_cast<int>(temp * 100)));
              auto trace = synthesize_trace(model, sweep, 0.0, cfg.cohort.noise_sigma_gq, seed);
              const fs::path rel = fs::path("traces") /
                                   (device_file_stem(dev.id) + "_cd" + std::to_string(cd) + "_" +
                                    temp_tag(temp) + "_" + io::sweep_name(sweep) + ".csv");
              io::write_trace_csv(out_dir / rel, trace);
              written.push_back(out_dir / rel);
              rec["traces"].push_back(rel.string());
            }
          }
          ++counts.measured;
        }
        device_records.push_back(std::move(rec));
      }
    }
  } catch (...) {
    // Partial outputs are removed on abort so reruns start clean.
    for (const auto& p : written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    throw;
  }

  json manifest;
  manifest["command"] = "synthesize";
  manifest["config"] = cfg.to_json();
  manifest["devices"] = std::move(device_records);
  io::write_json_file(out_dir / "manifest.json", manifest);
  return counts;
}

// ---------------------------------------------------------------------------
namespace {

struct SweepTask {
  int chip = 1;
  int cooldown = 1;
  bool illuminated = false;
  double temperature_k = 0.0;
};

struct SweepOutput {
  std::vector<mux::LogRecord> log;
  std::vector<statistics::DeviceSummary> rows;  // measured devices only
  std::vector<std::pair<fs::path, json>> result_files;
  int soft_failures = 0;
  int good_fit = 0;
};

SweepOutput run_chip_sweep(const RunConfig& cfg, const std::vector<synthesis::SaddleDevice>& chip_devices,
                           const SweepTask& task) {
  SweepOutput out;
  std::vector<bool> functional(static_cast<size_t>(mux::kLeaves * mux::kLeaves), false);
  std::map<std::pair<int, int>, const synthesis::SaddleDevice*> by_rc;
  for (const auto& dev : chip_devices) {
    functional[static_cast<size_t>((dev.id.row - 1) * mux::kLeaves + (dev.id.column - 1))] =
        dev.functional;
    by_rc[{dev.id.row, dev.id.column}] = &dev;
  }

  const fs::path results_rel =
      fs::path("results") / ("cd" + std::to_string(task.cooldown) + "_" + temp_tag(task.temperature_k));

  auto measure = [&](const mux::MuxAddress& addr) -> std::string {
    const auto it = by_rc.find({addr.row, addr.column});
    if (it == by_rc.end()) throw ConfigError("mux sweep: device missing from cohort");
    const synthesis::SaddleDevice& dev = *it->second;

    const auto stream = [&](const char* name, int extra) {
      return derive_stream(cfg.cohort.seed, name, static_cast<uint64_t>(dev.id.chip),
                           static_cast<uint64_t>(dev.id.row * 100 + dev.id.column),
                           static_cast<uint64_t>(task.cooldown * 1000 + extra +
                                                 2 * static_cast<int>(task.temperature_k * 100)));
    };

    const synthesis::DeviceModel model(dev, task.temperature_k, cfg.synth);
    const auto fwd = synthesize_trace(model, synthesis::SweepDirection::forward, 0.0,
                                      cfg.cohort.noise_sigma_gq, stream("noise", 0));
    const auto bwd = synthesize_trace(model, synthesis::SweepDirection::backward, 0.0,
                                      cfg.cohort.noise_sigma_gq, stream("noise", 1));
    std::vector<synthesis::ConductanceTrace> family;
    if (cfg.spectroscopy) {
      family = bias_sweep_family(model, bias_list_for(dev, cfg), cfg.cohort.noise_sigma_gq,
                                 stream("bias_noise", 2));
    }
    auto result = analysis::analyze_device(fwd, &bwd, cfg.spectroscopy ? &family : nullptr,
                                           dev.lever_arm, cfg.analysis);

    auto row = statistics::summarize(result, dev.width_um, dev.length_um);
    if (result.good_fit) ++out.good_fit;

    json file;
    file["width_um"] = dev.width_um;
    file["length_um"] = dev.length_um;
    file["analysis"] = io::to_json(result);
    const fs::path rel = results_rel / (device_file_stem(dev.id) + ".json");
    out.result_files.emplace_back(rel, std::move(file));
    out.rows.push_back(std::move(row));
    return rel.string();
  };

  out.log = mux::schedule_sweep(functional, measure);
  for (const auto& rec : out.log) {
    if (rec.outcome == mux::Outcome::error) ++out.soft_failures;
  }
  return out;
}

std::string lines_string(const mux::TreeLineState& t) {
  std::string s;
  for (int i = 0; i < mux::kLinesPerTree; ++i) {
    s += t.lines[static_cast<size_t>(i)] == mux::LineLevel::open ? 'O' : 'D';
  }
  return s;
}

json log_record_json(const mux::LogRecord& rec) {
  return json{{"address", json{{"row", rec.address.row}, {"column", rec.address.column}}},
              {"row_lines", lines_string(rec.lines.row_tree)},
              {"column_lines", lines_string(rec.lines.column_tree)},
              {"outcome", mux::outcome_name(rec.outcome)},
              {"fault_class", rec.fault_class},
              {"result_path", rec.result_path}};
}

}  // namespace

RunCounts cmd_run(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.cohort.validate();
  fs::create_directories(out_dir);
  fs::create_directories(out_dir / "mux");
  fs::create_directories(out_dir / "figures");

  // Manifest first: a run is reproducible from it alone.
  json manifest;
  manifest["command"] = "run";
  manifest["config"] = cfg.to_json();
  io::write_json_file(out_dir / "manifest.json", manifest);

  RunCounts counts;
  std::vector<SweepTask> tasks;
  std::map<int, std::vector<std::vector<synthesis::SaddleDevice>>> cohorts;  // cooldown -> per chip

  const size_t n_chips = cfg.cohort.resolved_chips().size();
  for (int cd = 1; cd <= cfg.cooldowns; ++cd) {
    const bool illuminated =
        std::find(cfg.illuminated_cooldowns.begin(), cfg.illuminated_cooldowns.end(), cd) !=
        cfg.illuminated_cooldowns.end();
    const auto cohort = synthesis::generate_cohort(cfg.cohort, cd, illuminated);
    auto& per_chip = cohorts[cd];
    per_chip.resize(n_chips);
    for (const auto& dev : cohort) {
      per_chip[static_cast<size_t>(dev.id.chip - 1)].push_back(dev);
      ++counts.devices_total;
      if (dev.functional) ++counts.functional;
    }
    for (double temp : cfg.cohort.temperatures_k) {
      for (size_t chip = 0; chip < n_chips; ++chip) {
        tasks.push_back(SweepTask{static_cast<int>(chip) + 1, cd, illuminated, temp});
      }
    }
  }

  std::vector<SweepOutput> outputs(tasks.size());
  run_parallel(cfg.workers, tasks.size(), [&](size_t i) {
    const auto& t = tasks[i];
    outputs[i] = run_chip_sweep(cfg, cohorts.at(t.cooldown)[static_cast<size_t>(t.chip - 1)], t);
  });

  // Deterministic ordered reduce.
  std::vector<statistics::DeviceSummary> rows;
  std::vector<json> result_jsons;
  std::set<fs::path> made_dirs;
  for (size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    auto& o = outputs[i];
    counts.measured += static_cast<int>(o.rows.size());
    counts.good_fit += o.good_fit;
    counts.soft_failures += o.soft_failures;

    for (auto& [rel, j] : o.result_files) {
      const fs::path full = out_dir / rel;
      if (made_dirs.insert(full.parent_path()).second) fs::create_directories(full.parent_path());
      io::write_json_file(full, j);
      result_jsons.push_back(std::move(j));
    }
    rows.insert(rows.end(), o.rows.begin(), o.rows.end());

    std::ostringstream log_text;
    for (const auto& rec : o.log) log_text << log_record_json(rec).dump() << "\n";
    const fs::path log_rel = fs::path("mux") / ("cd" + std::to_string(t.cooldown) + "_" +
                                                temp_tag(t.temperature_k) + "_chip" +
                                                std::to_string(t.chip) + ".jsonl");
    io::write_text_file(out_dir / log_rel, log_text.str());
  }

  // Summaries, report, figures.
  json rows_json = json::array();
  for (const auto& r : rows) rows_json.push_back(io::to_json(r));
  io::write_json_file(out_dir / "summaries.json", rows_json);

  statistics::StatisticsConfig scfg = cfg.stats;
  scfg.fixed_kappas = cfg.analysis.fixed_kappas;
  json report;
  report["counts"] = json{{"devices_total", counts.devices_total},
                          {"functional", counts.functional},
                          {"measured", counts.measured},
                          {"good_fit", counts.good_fit},
                          {"soft_failures", counts.soft_failures}};
  json per_temp = json::array();
  for (double temp : cfg.cohort.temperatures_k) {
    std::vector<statistics::DeviceSummary> sub;
    for (const auto& r : rows) {
      if (std::fabs(r.temperature_k - temp) < 1e-9) sub.push_back(r);
    }
    json entry;
    entry["temperature_k"] = temp;
    try {
      entry["report"] = io::to_json(statistics::correlation_suite(sub, scfg));
    } catch (const StatisticsError& e) {
      entry["error"] = e.what();
    }
    per_temp.push_back(std::move(entry));
  }
  report["per_temperature"] = std::move(per_temp);
  io::write_json_file(out_dir / "report.json", report);

  write_figures(out_dir / "figures", rows, result_jsons, scfg);
  return counts;
}

// ---------------------------------------------------------------------------
RunCounts cmd_analyze_manifest(const fs::path& manifest_path, const fs::path& out_dir,
                               const analysis::AnalysisConfig& acfg) {
  const json manifest = io::read_json_file(manifest_path);
  const fs::path base = manifest_path.parent_path();
  RunCounts counts;
  std::vector<statistics::DeviceSummary> rows;
  std::vector<json> result_jsons;

  for (const auto& rec : manifest.at("devices")) {
    ++counts.devices_total;
    synthesis::SaddleDevice dev;
    io::from_json_into(rec, dev);
    if (!dev.functional) continue;
    ++counts.functional;
    // Pair forward/backward per (cooldown, temperature).
    std::map<std::string, std::pair<fs::path, fs::path>> pairs;
    for (const auto& tp : rec.at("traces")) {
      const std::string rel = tp.get<std::string>();
      const bool is_fwd = rel.find("_forward") != std::string::npos;
      std::string key = rel;
      const auto cut = key.rfind(is_fwd ? "_forward" : "_backward");
      key = key.substr(0, cut);
      if (is_fwd) {
        pairs[key].first = base / rel;
      } else {
        pairs[key].second = base / rel;
      }
    }
    for (const auto& [key, pr] : pairs) {
      if (pr.first.empty()) continue;
      try {
        const auto fwd = io::read_trace_csv(pr.first);
        std::optional<synthesis::ConductanceTrace> bwd;
        if (!pr.second.empty()) bwd = io::read_trace_csv(pr.second);
        auto result = analysis::analyze_device(fwd, bwd ? &*bwd : nullptr, nullptr, dev.lever_arm,
                                               acfg);
        ++counts.measured;
        if (result.good_fit) ++counts.good_fit;
        json file;
        file["width_um"] = dev.width_um;
        file["length_um"] = dev.length_um;
        file["analysis"] = io::to_json(result);
        const fs::path results_rel = fs::path("results") /
                                     ("cd" + std::to_string(result.cooldown) + "_" +
                                      temp_tag(result.temperature_k));
        fs::create_directories(out_dir / results_rel);
        const fs::path rel = results_rel / (device_file_stem(dev.id) + ".json");
        io::write_json_file(out_dir / rel, file);
        rows.push_back(statistics::summarize(result, dev.width_um, dev.length_um));
        result_jsons.push_back(std::move(file));
      } catch (const std::exception& e) {
        ++counts.soft_failures;
        std::cerr << "warning: " << dev.id.label() << " (" << key << "): " << e.what() << "\n";
      }
    }
  }
  json rows_json = json::array();
  for (const auto& r : rows) rows_json.push_back(io::to_json(r));
  io::write_json_file(out_dir / "summaries.json", rows_json);
  return counts;
}

// ---------------------------------------------------------------------------
std::vector<statistics::DeviceSummary> load_summaries(const fs::path& results_dir, int* skipped,
                                                      std::vector<json>* documents) {
  std::vector<statistics::DeviceSummary> rows;
  int bad = 0;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    const auto name = entry.path().filename().string();
    if (name == "manifest.json" || name == "report.json" || name == "summaries.json" ||
        name == "index.json") {
      continue;
    }
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    try {
      json j = io::read_json_file(path);
      analysis::AnalysisResult result;
      io::from_json_into(j.at("analysis"), result);
      rows.push_back(statistics::summarize(result, j.at("width_um").get<double>(),
                                           j.at("length_um").get<double>()));
      if (documents) documents->push_back(std::move(j));
    } catch (const std::exception& e) {
      ++bad;
      std::cerr << "warning: skipping " << path.string() << ": " << e.what() << "\n";
    }
  }
  if (skipped) *skipped = bad;
  return rows;
}

int cmd_report(const fs::path& results_dir, const fs::path& out_dir,
               const statistics::StatisticsConfig& cfg) {
  int skipped = 0;
  std::vector<json> documents;
  const auto rows = load_summaries(results_dir, &skipped, &documents);
  if (rows.empty()) {
    throw StatisticsError("report: no readable result files under " + results_dir.string());
  }
  fs::create_directories(out_dir / "figures");

  std::set<double> temps;
  for (const auto& r : rows) temps.insert(r.temperature_k);
  json report;
  report["skipped_files"] = skipped;
  json per_temp = json::array();
  for (double temp : temps) {
    std::vector<statistics::DeviceSummary> sub;
    for (const auto& r : rows) {
      if (std::fabs(r.temperature_k - temp) < 1e-9) sub.push_back(r);
    }
    json entry;
    entry["temperature_k"] = temp;
    try {
      entry["report"] = io::to_json(statistics::correlation_suite(sub, cfg));
    } catch (const StatisticsError& e) {
      entry["error"] = e.what();
    }
    per_temp.push_back(std::move(entry));
  }
  report["per_temperature"] = std::move(per_temp);
  io::write_json_file(out_dir / "report.json", report);
  write_figures(out_dir / "figures", rows, documents, cfg);
  return skipped;
}

// ---------------------------------------------------------------------------
namespace {

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  out << header << "\n";
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) {
      if (i) out << ",";
      if (std::isfinite(r[i])) out << fmt(r[i]);
    }
    out << "\n";
  }
  io::write_text_file(path, out.str());
}

}  // namespace

void write_figures(const fs::path& fig_dir, const std::vector<statistics::DeviceSummary>& rows,
                   const std::vector<json>& result_jsons, const statistics::StatisticsConfig& cfg) {
  fs::create_directories(fig_dir);
  if (rows.empty()) return;

  // Key rows by device/cooldown at the lowest temperature present.
  double t0 = rows.front().temperature_k;
  for (const auto& r : rows) t0 = std::min(t0, r.temperature_k);
  std::vector<int> cooldowns;
  for (const auto& r : rows) {
    if (std::find(cooldowns.begin(), cooldowns.end(), r.cooldown) == cooldowns.end()) {
      cooldowns.push_back(r.cooldown);
    }
  }
  std::sort(cooldowns.begin(), cooldowns.end());

  auto key_of = [](const statistics::DeviceSummary& r) {
    return r.id.chip * 10000 + r.id.row * 100 + r.id.column;
  };
  auto at_temp = [&](double t) {
    std::map<int, std::map<int, const statistics::DeviceSummary*>> m;  // key -> cooldown -> row
    for (const auto& r : rows) {
      if (std::fabs(r.temperature_k - t) < 1e-9) m[key_of(r)][r.cooldown] = &r;
    }
    return m;
  };
  const auto base = at_temp(t0);

  // fig4a: E_x scatter between the first and last cooldowns.
  if (cooldowns.size() >= 2) {
    const int cd_a = cooldowns.front(), cd_b = cooldowns.back();
    std::vector<std::vector<double>> out4a, out4c;
    for (const auto& [key, percd] : base) {
      (void)key;
      const auto a = percd.find(cd_a);
      const auto b = percd.find(cd_b);
      if (a == percd.end() || b == percd.end()) continue;
      if (std::isfinite(a->second->e_x_mev) && std::isfinite(b->second->e_x_mev)) {
        out4a.push_back({static_cast<double>(a->second->id.chip),
                         static_cast<double>(a->second->id.row),
                         static_cast<double>(a->second->id.column), a->second->e_x_mev,
                         b->second->e_x_mev});
      }
      if (std::isfinite(a->second->delta_e_mev) && std::isfinite(b->second->delta_e_mev)) {
        out4c.push_back({static_cast<double>(a->second->id.chip),
                         static_cast<double>(a->second->id.row),
                         static_cast<double>(a->second->id.column), a->second->delta_e_mev,
                         b->second->delta_e_mev});
      }
    }
    write_csv(fig_dir / "fig4a_ex_cooldowns.csv",
              "chip,row,column,e_x_cd" + std::to_string(cd_a) + "_mev,e_x_cd" +
                  std::to_string(cd_b) + "_mev",
              out4a);
    write_csv(fig_dir / "fig4c_delta_e_cooldowns.csv",
              "chip,row,column,delta_e_cd" + std::to_string(cd_a) + "_mev,delta_e_cd" +
                  std::to_string(cd_b) + "_mev",
              out4c);
  }

  // fig4b / fig4d: geometry dependence at the first cooldown.
  {
    std::vector<std::vector<double>> out4b, out4d;
    for (const auto& r : rows) {
      if (std::fabs(r.temperature_k - t0) > 1e-9 || r.cooldown != cooldowns.front()) continue;
      if (std::isfinite(r.e_x_mev)) {
        out4b.push_back({r.length_um, r.width_um, r.e_x_mev});
      }
      if (std::isfinite(r.delta_e_mev)) {
        out4d.push_back({r.length_um, r.width_um, r.delta_e_mev});
      }
    }
    write_csv(fig_dir / "fig4b_ex_geometry.csv", "length_um,width_um,e_x_mev", out4b);
    write_csv(fig_dir / "fig4d_delta_e_geometry.csv", "length_um,width_um,delta_e_mev", out4d);
  }

  // fig5c: yields per cooldown.
  {
    std::vector<std::vector<double>> out;
    for (int cd : cooldowns) {
      std::vector<statistics::DeviceSummary> sub;
      for (const auto& r : rows) {
        if (r.cooldown == cd) sub.push_back(r);
      }
      if (sub.empty()) continue;
      const auto y = statistics::yields(sub, cfg);
      out.push_back({static_cast<double>(cd), y.y_tc_07, y.y_rs_07,
                     static_cast<double>(y.n_good_fit)});
    }
    write_csv(fig_dir / "fig5c_yields.csv", "cooldown,y_tc_07,y_rs_07,n_good_fit", out);
  }

  // fig5e: suppression depth vs sqrt(U_E).
  {
    std::vector<std::vector<double>> out;
    for (const auto& r : rows) {
      if (!r.good_fit || !std::isfinite(r.s_tc_07) || !std::isfinite(r.delta_e_mev) ||
          !std::isfinite(r.e_x_mev)) {
        continue;
      }
      out.push_back({std::sqrt(r.delta_e_mev / r.e_x_mev), 1.0 - r.s_tc_07});
    }
    write_csv(fig_dir / "fig5e_depth_vs_sqrt_ue.csv", "sqrt_ue,one_minus_s_tc_07", out);
  }

  // fig6b/6c: S_G against E_x and 1/U_E at the fixed kappas.
  {
    std::vector<std::vector<double>> out6b, out6c;
    for (const auto& r : rows) {
      if (!r.good_fit) continue;
      for (size_t k = 0; k < cfg.fixed_kappas.size() && k < r.s_g_at_fixed.size(); ++k) {
        if (!std::isfinite(r.s_g_at_fixed[k])) continue;
        if (std::isfinite(r.e_x_mev)) {
          out6b.push_back({cfg.fixed_kappas[k], r.e_x_mev, r.s_g_at_fixed[k]});
        }
        if (std::isfinite(r.delta_e_mev) && std::isfinite(r.e_x_mev)) {
          out6c.push_back({cfg.fixed_kappas[k], r.e_x_mev / r.delta_e_mev, r.s_g_at_fixed[k]});
        }
      }
    }
    write_csv(fig_dir / "fig6b_sg_vs_ex.csv", "kappa,e_x_mev,s_g", out6b);
    write_csv(fig_dir / "fig6c_sg_vs_inv_ue.csv", "kappa,inv_u_e,s_g", out6c);
  }

  // fig6d: correlation comparison vs kappa.
  {
    std::vector<std::vector<double>> out;
    try {
      const auto rep = statistics::correlation_suite(rows, cfg);
      for (size_t k = 0; k < rep.fixed_kappas.size(); ++k) {
        out.push_back({rep.fixed_kappas[k], rep.rho_sg_ex[k].rho, rep.rho_sg_inv_ue[k].rho});
      }
    } catch (const StatisticsError&) {
      // insufficient devices: emit nothing but keep the file present
    }
    write_csv(fig_dir / "fig6d_rho_vs_kappa.csv", "kappa,rho_sg_ex,rho_sg_inv_ue", out);
  }

  // fig5d / fig6a: per-device curves from the stored result files.
  if (!result_jsons.empty()) {
    std::ostringstream f5d, f6a;
    f5d << "chip,row,column,kappa,one_minus_s_tc\n";
    f6a << "chip,row,column,kappa,g_gq\n";
    for (const auto& file : result_jsons) {
      const auto& a = file.at("analysis");
      if (!a.at("good_fit").get<bool>()) continue;
      const auto& id = a.at("id");
      for (const auto& sup : a.at("suppression")) {
        if (sup.at("subband").get<int>() != 1) continue;
        const auto& ks = sup.at("kappa");
        const auto& st = sup.at("s_tc");
        const auto& gs = sup.at("g");
        for (size_t i = 0; i < ks.size(); ++i) {
          if (!st[i].is_null()) {
            f5d << id.at("chip") << "," << id.at("row") << "," << id.at("column") << ","
                << fmt(ks[i].get<double>()) << "," << fmt(1.0 - st[i].get<double>()) << "\n";
          }
          if (!gs[i].is_null()) {
            f6a << id.at("chip") << "," << id.at("row") << "," << id.at("column") << ","
                << fmt(ks[i].get<double>()) << "," << fmt(gs[i].get<double>()) << "\n";
          }
        }
      }
    }
    io::write_text_file(fig_dir / "fig5d_one_minus_stc_curves.csv", f5d.str());
    io::write_text_file(fig_dir / "fig6a_first_step_curves.csv", f6a.str());
  }
}

}  // namespace qpc::pipeline
