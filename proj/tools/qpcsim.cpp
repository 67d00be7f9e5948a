// qpcsim: synthesize multiplexed QPC cohorts, run the extraction pipeline,
// and aggregate cohort statistics, all from one reproducible seed.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qpc/analysis.hpp"
#include "qpc/constants.hpp"
#include "qpc/mux.hpp"
#include "qpc/pipeline.hpp"
#include "qpc/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qpc;

namespace {

fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("QPC_OUT_ROOT")) return fs::path(root) / p;
  return p;
}

pipeline::RunConfig load_run_config(const std::string& config_path, const std::string& manifest_path) {
  if (!manifest_path.empty()) {
    const json m = io::read_json_file(manifest_path);
    return pipeline::RunConfig::from_json(m.at("config"));
  }
  pipeline::RunConfig cfg;
  if (!config_path.empty()) {
    const json j = io::read_json_file(config_path);
    if (j.contains("cohort") || j.contains("cooldowns")) {
      // full run-config document
      json full = pipeline::RunConfig{}.to_json();
      for (const auto& [k, v] : j.items()) full[k] = v;
      // merge nested cohort over defaults
      if (j.contains("cohort")) {
        json base = io::to_json(synthesis::CohortConfig{});
        for (const auto& [k, v] : j.at("cohort").items()) base[k] = v;
        full["cohort"] = base;
      }
      cfg = pipeline::RunConfig::from_json(full);
    } else {
      // bare cohort document
      io::from_json_into(j, cfg.cohort);
    }
  }
  return cfg;
}

void apply_common_overrides(CLI::App* cmd, pipeline::RunConfig& cfg, std::string& config_path,
                            std::string& manifest_path, std::string& out,
                            std::string& temperatures, uint64_t& seed, int& cooldowns,
                            std::string& illuminated, int& workers) {
  cmd->add_option("--config", config_path, "JSON config file (run or cohort document)");
  cmd->add_option("--manifest", manifest_path, "reproduce from an existing run manifest");
  cmd->add_option("--out,-o", out, "output directory")->required();
  cmd->add_option("--temperatures", temperatures, "comma-separated kelvin list, e.g. 0.04,1.4");
  cmd->add_option("--seed", seed, "root seed");
  cmd->add_option("--cooldowns", cooldowns, "number of cooldowns");
  cmd->add_option("--illuminated", illuminated,
                  "comma-separated cooldown indices run after illumination");
  cmd->add_option("--workers", workers, "worker threads (0 = hardware)");
  (void)cfg;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::string tok;
  std::istringstream ss(csv);
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  for (double v : parse_double_list(csv)) out.push_back(static_cast<int>(v));
  return out;
}

void finalize_config(pipeline::RunConfig& cfg, const std::string& temperatures, uint64_t seed,
                     int cooldowns, const std::string& illuminated, int workers) {
  if (!temperatures.empty()) cfg.cohort.temperatures_k = parse_double_list(temperatures);
  if (seed != 0) cfg.cohort.seed = seed;
  if (cooldowns > 0) cfg.cooldowns = cooldowns;
  if (!illuminated.empty()) cfg.illuminated_cooldowns = parse_int_list(illuminated);
  if (workers >= 0) cfg.workers = workers;
}

int run_mux_check(const std::vector<std::string>& stuck_spec) {
  std::vector<mux::BranchFault> faults;
  for (const auto& s : stuck_spec) {
    // tree:level:prefix:mode, e.g. row:1:2:open or col:0:1:depleted
    mux::BranchFault f;
    std::string tree, mode;
    int level = 0, prefix = 0;
    std::istringstream ss(s);
    std::string tok;
    std::vector<std::string> parts;
    while (std::getline(ss, tok, ':')) parts.push_back(tok);
    if (parts.size() != 4) {
      std::cerr << "bad --stuck spec (want tree:level:prefix:mode): " << s << "\n";
      return 2;
    }
    tree = parts[0];
    level = std::stoi(parts[1]);
    prefix = std::stoi(parts[2]);
    mode = parts[3];
    f.on_row_tree = tree == "row";
    f.level = level;
    f.prefix = prefix;
    f.mode = mode == "open" ? mux::FaultMode::stuck_open : mux::FaultMode::stuck_depleted;
    faults.push_back(f);
  }

  std::printf("external contacts: %d (= %d + %d + 3)\n", mux::kExternalContacts,
              mux::kLinesPerTree, mux::kLinesPerTree);
  bool ok = true;
  std::set<std::array<uint8_t, 16>> seen;
  int healthy_singletons = 0;
  for (int row = 1; row <= 16; ++row) {
    for (int col = 1; col <= 16; ++col) {
      const auto lines = mux::address_to_lines({row, col});
      std::array<uint8_t, 16> key{};
      for (int i = 0; i < 8; ++i) {
        key[static_cast<size_t>(i)] = static_cast<uint8_t>(lines.row_tree.lines[static_cast<size_t>(i)]);
        key[static_cast<size_t>(8 + i)] =
            static_cast<uint8_t>(lines.column_tree.lines[static_cast<size_t>(i)]);
      }
      if (!seen.insert(key).second) {
        ok = false;
        std::printf("DUPLICATE line assignment at (%d,%d)\n", row, col);
      }
      const auto rows_active = mux::conduction_path(lines.row_tree, true, faults);
      const auto cols_active = mux::conduction_path(lines.column_tree, false, faults);
      if (faults.empty()) {
        if (rows_active.size() == 1 && cols_active.size() == 1 && rows_active[0] == row &&
            cols_active[0] == col) {
          ++healthy_singletons;
        } else {
          ok = false;
          std::printf("NOT singleton at (%d,%d): %zu x %zu leaves\n", row, col,
                      rows_active.size(), cols_active.size());
        }
      } else {
        if (rows_active.size() != 1 || cols_active.size() != 1) {
          std::printf("fault at (%d,%d): %zu row leaves, %zu column leaves\n", row, col,
                      rows_active.size(), cols_active.size());
        }
      }
    }
  }
  std::printf("distinct line assignments: %zu / 256\n", seen.size());
  if (faults.empty()) {
    std::printf("healthy singleton addresses: %d / 256\n", healthy_singletons);
  }
  std::printf("mux-check: %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qpcsim: multiplexed QPC cohort simulator and 0.7-anomaly analysis pipeline"};
  app.require_subcommand(1);

  // --- synthesize ---
  auto* synth = app.add_subcommand("synthesize", "generate trace CSVs and a cohort manifest");
  std::string sy_config, sy_manifest, sy_out, sy_temps, sy_illum;
  uint64_t sy_seed = 0;
  int sy_cooldowns = 0, sy_workers = -1;
  pipeline::RunConfig sy_cfg;
  apply_common_overrides(synth, sy_cfg, sy_config, sy_manifest, sy_out, sy_temps, sy_seed,
                         sy_cooldowns, sy_illum, sy_workers);

  // --- run ---
  auto* run = app.add_subcommand("run", "full pipeline: mux schedule, synthesize, analyze, report");
  std::string r_config, r_manifest, r_out, r_temps, r_illum;
  uint64_t r_seed = 0;
  int r_cooldowns = 0, r_workers = -1;
  bool r_no_spectroscopy = false;
  pipeline::RunConfig r_cfg;
  apply_common_overrides(run, r_cfg, r_config, r_manifest, r_out, r_temps, r_seed, r_cooldowns,
                         r_illum, r_workers);
  run->add_flag("--no-spectroscopy", r_no_spectroscopy, "skip DC-bias families");

  // --- analyze ---
  auto* an = app.add_subcommand("analyze", "analyze traces (single trace or a cohort manifest)");
  std::string an_trace, an_backward, an_manifest, an_out;
  std::vector<std::string> an_bias;
  double an_lever = 0.0;
  an->add_option("--trace", an_trace, "forward trace CSV");
  an->add_option("--backward", an_backward, "backward trace CSV");
  an->add_option("--bias", an_bias, "bias-family trace CSVs (repeatable, incl. zero bias)");
  an->add_option("--manifest", an_manifest, "cohort manifest from synthesize");
  an->add_option("--lever-arm", an_lever, "lever arm for single-trace analysis");
  an->add_option("--out,-o", an_out, "output file (single) or directory (manifest)")->required();

  // --- spectroscopy ---
  auto* sp = app.add_subcommand("spectroscopy", "extract ΔE from a DC-bias trace family");
  std::vector<std::string> sp_traces;
  double sp_lever = 0.0, sp_rs = -1.0;
  std::string sp_out;
  sp->add_option("--bias", sp_traces, "family trace CSVs including the zero bias")->required();
  sp->add_option("--lever-arm", sp_lever, "lever arm")->required();
  sp->add_option("--r-s", sp_rs, "series resistance (ohm); calibrated from zero bias if omitted");
  sp->add_option("--out,-o", sp_out, "output JSON (stdout if omitted)");

  // --- report ---
  auto* rp = app.add_subcommand("report", "re-aggregate an existing results directory");
  std::string rp_results, rp_out;
  rp->add_option("--results", rp_results, "results directory")->required();
  rp->add_option("--out,-o", rp_out, "output directory")->required();

  // --- mux-check ---
  auto* mc = app.add_subcommand("mux-check", "verify 256-address multiplexer correctness");
  std::vector<std::string> mc_stuck;
  mc->add_option("--stuck", mc_stuck, "inject stuck branch, tree:level:prefix:mode");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      auto cfg = load_run_config(sy_config, sy_manifest);
      finalize_config(cfg, sy_temps, sy_seed, sy_cooldowns, sy_illum, sy_workers);
      const auto counts = pipeline::cmd_synthesize(cfg, resolve_out(sy_out));
      std::printf("synthesize: %d devices (%d functional), traces for %d\n", counts.devices_total,
                  counts.functional, counts.measured);
      return 0;
    }
    if (run->parsed()) {
      auto cfg = load_run_config(r_config, r_manifest);
      finalize_config(cfg, r_temps, r_seed, r_cooldowns, r_illum, r_workers);
      if (r_no_spectroscopy) cfg.spectroscopy = false;
      const auto counts = pipeline::cmd_run(cfg, resolve_out(r_out));
      std::printf("run: %d devices, %d functional, %d measured, %d good fits, %d soft failures\n",
                  counts.devices_total, counts.functional, counts.measured, counts.good_fit,
                  counts.soft_failures);
      return 0;
    }
    if (an->parsed()) {
      if (!an_manifest.empty()) {
        const auto counts = pipeline::cmd_analyze_manifest(an_manifest, resolve_out(an_out));
        std::printf("analyze: %d measured, %d good fits, %d soft failures\n", counts.measured,
                    counts.good_fit, counts.soft_failures);
        return 0;
      }
      if (an_trace.empty() || an_lever <= 0.0) {
        std::cerr << "analyze: need --trace and --lever-arm (or --manifest)\n";
        return 2;
      }
      const auto fwd = io::read_trace_csv(an_trace);
      std::optional<synthesis::ConductanceTrace> bwd;
      if (!an_backward.empty()) bwd = io::read_trace_csv(an_backward);
      std::vector<synthesis::ConductanceTrace> family;
      for (const auto& p : an_bias) family.push_back(io::read_trace_csv(p));
      const auto result = analysis::analyze_device(fwd, bwd ? &*bwd : nullptr,
                                                   family.empty() ? nullptr : &family, an_lever);
      io::write_json_file(resolve_out(an_out), io::to_json(result));
      std::printf("analyze: good_fit=%d flags=%zu -> %s\n", result.good_fit ? 1 : 0,
                  result.flags.size(), an_out.c_str());
      return 0;
    }
    if (sp->parsed()) {
      std::vector<synthesis::ConductanceTrace> family;
      for (const auto& p : sp_traces) family.push_back(io::read_trace_csv(p));
      double rs = sp_rs;
      if (rs < 0.0) {
        const synthesis::ConductanceTrace* zero = nullptr;
        for (const auto& t : family) {
          if (t.meta.v_sd_dc_volts == 0.0) zero = &t;
        }
        if (!zero) {
          std::cerr << "spectroscopy: family has no zero-bias trace and no --r-s given\n";
          return 2;
        }
        rs = analysis::calibrate_series_resistance(*zero).r_s_ohm;
      }
      const double delta_e = analysis::extract_subband_spacing(family, rs, sp_lever);
      json out{{"delta_e_mev", delta_e}, {"r_s_ohm", rs}, {"n_traces", family.size()}};
      if (sp_out.empty()) {
        std::printf("%s\n", out.dump(2).c_str());
      } else {
        io::write_json_file(resolve_out(sp_out), out);
      }
      return 0;
    }
    if (rp->parsed()) {
      const int skipped = pipeline::cmd_report(rp_results, resolve_out(rp_out));
      std::printf("report: done, %d file(s) skipped\n", skipped);
      return 0;
    }
    if (mc->parsed()) {
      return run_mux_check(mc_stuck);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
