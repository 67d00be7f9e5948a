#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qpc/trace_io.hpp"
#include "qpc/vanhove.hpp"

using namespace qpc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "qpc_io_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("trace CSV round trip is bit exact") {
  synthesis::ConductanceTrace tr;
  tr.meta.id = {2, 7, 13};
  tr.meta.cooldown = 3;
  tr.meta.temperature_k = 0.04;
  tr.meta.sweep = synthesis::SweepDirection::backward;
  tr.meta.illuminated = true;
  tr.meta.v_sd_dc_volts = 1.25e-3;
  for (int i = 0; i < 100; ++i) {
    tr.gate_v.push_back(-0.8 + i * 1.2345678901234e-4);
    tr.g_gq.push_back(0.3 + 0.01 * std::sin(i * 0.37));
  }
  const auto path = temp_dir() / "trace.csv";
  io::write_trace_csv(path, tr);
  const auto back = io::read_trace_csv(path);
  CHECK(back.meta.id.chip == 2);
  CHECK(back.meta.id.row == 7);
  CHECK(back.meta.id.column == 13);
  CHECK(back.meta.cooldown == 3);
  CHECK(back.meta.temperature_k == tr.meta.temperature_k);
  CHECK(back.meta.sweep == synthesis::SweepDirection::backward);
  CHECK(back.meta.illuminated);
  CHECK(back.meta.v_sd_dc_volts == tr.meta.v_sd_dc_volts);
  REQUIRE(back.gate_v.size() == tr.gate_v.size());
  for (size_t i = 0; i < tr.gate_v.size(); ++i) {
    CHECK(back.gate_v[i] == tr.gate_v[i]);  // bit exact
    CHECK(back.g_gq[i] == tr.g_gq[i]);
  }
}

TEST_CASE("device and cohort config JSON round trips") {
  synthesis::SaddleDevice dev;
  dev.id = {4, 11, 2};
  dev.e_x_mev = 1.234;
  dev.e_y_mev = 2.345;
  dev.u_mev = 7.5;
  dev.functional = false;
  dev.illuminated = true;
  synthesis::SaddleDevice back;
  io::from_json_into(io::to_json(dev), back);
  CHECK(back.id.chip == 4);
  CHECK(back.e_x_mev == dev.e_x_mev);
  CHECK(back.functional == dev.functional);
  CHECK(back.illuminated == dev.illuminated);

  synthesis::CohortConfig cfg;
  cfg.seed = 1234;
  cfg.defect_probability = 0.3;
  cfg.temperatures_k = {0.04};
  synthesis::CohortConfig cfg_back;
  io::from_json_into(io::to_json(cfg), cfg_back);
  CHECK(cfg_back.seed == 1234);
  CHECK(cfg_back.defect_probability == 0.3);
  CHECK(cfg_back.temperatures_k == std::vector<double>{0.04});
  // round-tripped config generates the identical cohort
  const auto a = synthesis::generate_cohort(cfg, 1, false);
  const auto b = synthesis::generate_cohort(cfg_back, 1, false);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); i += 97) {
    CHECK(a[i].e_x_mev == b[i].e_x_mev);
    CHECK(a[i].e_y_mev == b[i].e_y_mev);
  }
}

TEST_CASE("analysis result JSON round trip preserves NaN-as-null") {
  analysis::AnalysisResult r;
  r.id = {1, 2, 3};
  r.good_fit = true;
  r.series_resistance_ohm = 998.5;
  analysis::SubbandFit f;
  f.subband = 1;
  f.e_x_mev = 1.05;
  f.good = true;
  f.converged = true;
  r.forward.present = true;
  r.forward.fits.push_back(f);
  analysis::SuppressionResult s;
  s.subband = 1;
  s.found = true;
  s.s_tc_07 = 0.44;
  s.kappa = {0.0, 0.5};
  s.g = {0.5, 0.7};
  s.s_tc = {1.0, std::numeric_limits<double>::quiet_NaN()};
  s.s_g = {1.0, 0.9};
  s.s_g_at_fixed = {0.9, std::numeric_limits<double>::quiet_NaN()};
  r.suppression.push_back(s);
  r.flags = {"spectroscopy_failed: test"};

  analysis::AnalysisResult back;
  io::from_json_into(io::to_json(r), back);
  CHECK(back.good_fit);
  CHECK(back.series_resistance_ohm == 998.5);
  REQUIRE(back.forward.fits.size() == 1);
  CHECK(back.forward.fits[0].e_x_mev == 1.05);
  REQUIRE(back.suppression.size() == 1);
  CHECK(back.suppression[0].s_tc_07 == 0.44);
  CHECK(std::isnan(back.suppression[0].s_tc[1]));
  CHECK(std::isnan(back.suppression[0].s_g_at_fixed[1]));
  CHECK(back.flags == r.flags);
}

TEST_CASE("ldos and hartree plot dumps") {
  const auto dir = temp_dir();
  const auto profile = qpc::vanhove::build_barrier(1.0, 2.5, 0.0, 301, 120.0);
  const auto curve = qpc::vanhove::ldos_ridge(profile, 0.0, 0.0, {-1.0, 2.0, 61});
  io::write_ldos_csv(dir / "ldos.csv", curve);
  const auto map = qpc::vanhove::hartree_map(profile, 10.0, 0.0, 0.0, -2.0, 1.0, 101);
  io::write_hartree_csv(dir / "hartree.csv", map);
  std::ifstream in(dir / "ldos.csv");
  std::string line;
  size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 61 + 3);  // two metadata rows + header + samples
  std::ifstream in2(dir / "hartree.csv");
  rows = 0;
  while (std::getline(in2, line)) ++rows;
  CHECK(rows == 101 + 1);
}

TEST_CASE("io errors carry paths") {
  CHECK_THROWS_AS(io::read_trace_csv("/nonexistent/file.csv"), IoError);
  CHECK_THROWS_AS(io::read_json_file("/nonexistent/file.json"), IoError);
  const auto dir = temp_dir();
  io::write_text_file(dir / "corrupt.json", "{not json");
  CHECK_THROWS_AS(io::read_json_file(dir / "corrupt.json"), IoError);
}
