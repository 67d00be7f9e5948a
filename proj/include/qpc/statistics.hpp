#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qpc/analysis.hpp"

namespace qpc::statistics {

// Sample Pearson correlation coefficient. Throws StatisticsError for fewer
// than 3 points or a constant input.
double pearson(std::span<const double> x, std::span<const double> y);

// Pairwise-complete helper: drops pairs where either value is NaN.
double pearson_pairwise(std::span<const double> x, std::span<const double> y);

// Seeded bootstrap confidence interval for rho (percentile method).
struct BootstrapInterval {
  double lo = 0.0;
  double hi = 0.0;
  int resamples = 0;
};
BootstrapInterval pearson_bootstrap(std::span<const double> x, std::span<const double> y,
                                    int resamples = 1000, uint64_t seed = 1,
                                    double coverage = 0.95);

// One row per analyzed device measurement, the unit of cohort aggregation.
struct DeviceSummary {
  synthesis::DeviceId id;
  int cooldown = 1;
  double temperature_k = 0.0;
  bool illuminated = false;
  double width_um = 0.0;
  double length_um = 0.0;
  bool measured = false;
  bool good_fit = false;
  double e_x_mev = std::numeric_limits<double>::quiet_NaN();  // forward, N=1
  std::vector<double> e_x_forward;                            // per subband
  std::vector<double> e_x_backward;
  double delta_e_mev = std::numeric_limits<double>::quiet_NaN();
  double s_tc_07 = std::numeric_limits<double>::quiet_NaN();  // first plateau
  double s_tc_07_sigma = 0.0;
  double kappa_07 = std::numeric_limits<double>::quiet_NaN();
  double g_07 = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> s_tc_07_by_subband;  // NaN where not found
  bool riser_split = false;
  std::vector<double> s_g_at_fixed;  // at the configured fixed kappas
};

DeviceSummary summarize(const analysis::AnalysisResult& result, double width_um, double length_um);

struct StatisticsConfig {
  double suppression_sigma_factor = 3.0;  // suppressed when S_TC^0.7 < 1 - k*sigma
  std::vector<double> fixed_kappas{0.25, 0.5, 0.75, 1.0};
  int bootstrap_resamples = 1000;
  uint64_t bootstrap_seed = 7;
  int min_devices_for_correlations = 10;
};

struct Yields {
  int n_measured = 0;
  int n_good_fit = 0;
  int n_suppressed = 0;
  int n_riser_split = 0;
  double y_tc_07 = 0.0;  // fractions over good-fit devices
  double y_rs_07 = 0.0;
};

// Suppression counted when S_TC^0.7 < 1 - k * (noise-propagated uncertainty).
Yields yields(std::span<const DeviceSummary> rows, const StatisticsConfig& cfg = {});

struct Correlation {
  std::string name;
  double rho = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
  BootstrapInterval ci;
};

struct CohortReport {
  Yields totals;
  std::vector<Yields> per_cooldown;  // indexed by cooldown order of appearance
  std::vector<int> cooldowns;
  Correlation rho_suppression_sqrt_ue;          // rho(1 - S_TC^0.7, sqrt(U_E))
  std::vector<Correlation> rho_sg_ex;           // per fixed kappa
  std::vector<Correlation> rho_sg_inv_ue;       // per fixed kappa
  std::vector<double> fixed_kappas;
};

// Correlations need >= cfg.min_devices_for_correlations good-fit devices with
// both E_x and delta_e extracted; throws StatisticsError with the count.
CohortReport correlation_suite(std::span<const DeviceSummary> rows,
                               const StatisticsConfig& cfg = {});

}  // namespace qpc::statistics
