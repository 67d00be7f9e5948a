#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpc/analysis.hpp"
#include "qpc/statistics.hpp"
#include "qpc/synthesis.hpp"

namespace qpc::pipeline {

// Resolved configuration of a cohort run; serialized in full into the run
// manifest so a run can be reproduced from the manifest alone.
struct RunConfig {
  synthesis::CohortConfig cohort;
  int cooldowns = 2;
  std::vector<int> illuminated_cooldowns;  // cooldown indices run after illumination
  bool spectroscopy = true;
  int bias_points = 9;            // non-negative DC biases per family (including 0)
  double bias_span_factor = 1.5;  // family top bias = factor * E_y / e
  int workers = 0;                // 0 = hardware concurrency
  synthesis::SynthesisParams synth;
  analysis::AnalysisConfig analysis;
  statistics::StatisticsConfig stats;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

struct RunCounts {
  int devices_total = 0;
  int functional = 0;
  int measured = 0;
  int good_fit = 0;
  int soft_failures = 0;  // per-device measurement errors (run continued)
};

// synthesize: traces + cohort manifest, no analysis.
RunCounts cmd_synthesize(const RunConfig& cfg, const std::filesystem::path& out_dir);

// run: mux schedule -> synthesize -> analyze -> report + figures.
RunCounts cmd_run(const RunConfig& cfg, const std::filesystem::path& out_dir);

// analyze a synthesized cohort from its manifest (reads trace CSVs).
RunCounts cmd_analyze_manifest(const std::filesystem::path& manifest_path,
                               const std::filesystem::path& out_dir,
                               const analysis::AnalysisConfig& cfg = {});

// report: idempotent re-aggregation over an existing results directory.
// Returns the number of corrupt/unreadable files skipped (with warnings on
// stderr); throws StatisticsError when no results exist.
int cmd_report(const std::filesystem::path& results_dir, const std::filesystem::path& out_dir,
               const statistics::StatisticsConfig& cfg = {});

// Rebuild device summaries from per-device result files (used by report);
// optionally hands back the raw result documents for the curve figures.
std::vector<statistics::DeviceSummary> load_summaries(const std::filesystem::path& results_dir,
                                                      int* skipped_files,
                                                      std::vector<nlohmann::json>* documents = nullptr);

void write_figures(const std::filesystem::path& fig_dir,
                   const std::vector<statistics::DeviceSummary>& rows,
                   const std::vector<nlohmann::json>& result_jsons,
                   const statistics::StatisticsConfig& cfg);

}  // namespace qpc::pipeline
