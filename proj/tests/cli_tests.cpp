#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpc/synthesis.hpp"
#include "qpc/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kBin = QPCSIM_PATH;

struct CmdResult {
  int exit_code = 0;
  std::string output;
};

CmdResult run_cmd(const std::string& args) {
  const std::string cmd = std::string(kBin) + " " + args + " 2>&1";
  std::string output;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe)) output += buf;
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), output};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "qpc_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Tiny healthy cohort: one chip plan restricted to a corner of the array.
json toy_cohort(int rows, int cols, double defect_p) {
  json cohort;
  cohort["rows"] = rows;
  cohort["columns"] = cols;
  cohort["defect_probability"] = defect_p;
  cohort["temperatures_k"] = {0.04};
  cohort["seed"] = 77;
  cohort["chips"] = json::array({json{{"mode", "fixed_width"},
                                      {"widths_um", {0.4, 0.6}},
                                      {"lengths_um", {0.2, 0.4, 0.6}},
                                      {"aspect_ratio", 0.5},
                                      {"ratio_widths_um", json::array()}}});
  return cohort;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

size_t count_files(const fs::path& dir, const std::string& ext) {
  size_t n = 0;
  if (!fs::exists(dir)) return 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) ++n;
  }
  return n;
}

bool trees_identical(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> rel_a;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
  }
  std::sort(rel_a.begin(), rel_a.end());
  for (const auto& rel : rel_a) {
    if (!fs::exists(b / rel)) return false;
    if (slurp(a / rel) != slurp(b / rel)) return false;
  }
  size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) ++count_b;
  }
  return count_b == rel_a.size();
}

}  // namespace

TEST_CASE("cli: synthesize a minimal cohort") {
  const auto dir = fresh_dir("synth_min");
  const auto cfg_path = dir / "cohort.json";
  qpc::io::write_json_file(cfg_path, toy_cohort(1, 1, 0.0));
  const auto res = run_cmd("synthesize --config " + cfg_path.string() + " --cooldowns 1 --out " +
                           (dir / "out").string());
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "manifest.json"));
  CHECK(count_files(dir / "out" / "traces", ".csv") == 2);  // forward + backward

  // the manifest device record and the trace header agree
  const json manifest = qpc::io::read_json_file(dir / "out" / "manifest.json");
  REQUIRE(manifest.at("devices").size() == 1);
  const auto rec = manifest.at("devices")[0];
  const auto trace =
      qpc::io::read_trace_csv(dir / "out" / rec.at("traces")[0].get<std::string>());
  CHECK(trace.meta.id.row == rec.at("id").at("row").get<int>());
}

TEST_CASE("cli: paper-shaped cohort has 1280 device records") {
  const auto dir = fresh_dir("synth_1280");
  // all devices defective: records only, no trace files to write
  json cohort;
  cohort["defect_probability"] = 1.0;
  cohort["seed"] = 1;
  const auto cfg_path = dir / "cohort.json";
  qpc::io::write_json_file(cfg_path, cohort);
  const auto res = run_cmd("synthesize --config " + cfg_path.string() + " --cooldowns 1 --out " +
                           (dir / "out").string());
  CHECK(res.exit_code == 0);
  const json manifest = qpc::io::read_json_file(dir / "out" / "manifest.json");
  CHECK(manifest.at("devices").size() == 1280);
}

TEST_CASE("cli: synthesize twice with the same seed is byte-identical") {
  const auto dir = fresh_dir("synth_repro");
  const auto cfg_path = dir / "cohort.json";
  qpc::io::write_json_file(cfg_path, toy_cohort(2, 2, 0.0));
  const auto a = run_cmd("synthesize --config " + cfg_path.string() + " --cooldowns 1 --out " +
                         (dir / "a").string());
  const auto b = run_cmd("synthesize --config " + cfg_path.string() + " --cooldowns 1 --out " +
                         (dir / "b").string());
  CHECK(a.exit_code == 0);
  CHECK(b.exit_code == 0);
  CHECK(trees_identical(dir / "a", dir / "b"));
}

TEST_CASE("cli: run on a healthy toy chip produces the full output set") {
  const auto dir = fresh_dir("run_toy");
  const auto cfg_path = dir / "cohort.json";
  qpc::io::write_json_file(cfg_path, toy_cohort(4, 4, 0.0));
  const auto res = run_cmd("run --config " + cfg_path.string() +
                           " --cooldowns 2 --workers 2 --out " + (dir / "out").string());
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "manifest.json"));
  CHECK(fs::exists(dir / "out" / "report.json"));
  CHECK(fs::exists(dir / "out" / "summaries.json"));
  CHECK(count_files(dir / "out" / "mux", ".jsonl") == 2);  // one per cooldown
  CHECK(count_files(dir / "out" / "results", ".json") == 32);
  CHECK(fs::exists(dir / "out" / "figures" / "fig5c_yields.csv"));
  CHECK(fs::exists(dir / "out" / "figures" / "fig4a_ex_cooldowns.csv"));

  const json report = qpc::io::read_json_file(dir / "out" / "report.json");
  CHECK(report.at("counts").at("measured").get<int>() == 32);
  REQUIRE(report.at("per_temperature").size() == 1);
  const auto& temp_rep = report.at("per_temperature")[0].at("report");
  CHECK(temp_rep.at("totals").at("n_good_fit").get<int>() > 0);

  // the mux log records one measured line per healthy address in this corner
  const auto log_text = slurp(dir / "out" / "mux" / "cd1_t40mK_chip1.jsonl");
  int measured_lines = 0;
  std::istringstream lines(log_text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find("\"measured\"") != std::string::npos) ++measured_lines;
  }
  CHECK(measured_lines == 16);
}

TEST_CASE("cli: two temperatures give two analysis passes per device") {
  const auto dir = fresh_dir("run_two_temps");
  auto cohort = toy_cohort(3, 3, 0.0);
  cohort["temperatures_k"] = {0.04, 1.4};
  const auto cfg_path = dir / "cohort.json";
  qpc::io::write_json_file(cfg_path, cohort);
  const auto res = run_cmd("run --config " + cfg_path.string() +
                           " --cooldowns 1 --workers 2 --no-spectroscopy --out " +
                           (dir / "out").string());
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "results" / "cd1_t40mK"));
  CHECK(fs::exists(dir / "out" / "results" / "cd1_t1400mK"));
  const json report = qpc::io::read_json_file(dir / "out" / "report.json");
  CHECK(report.at("per_temperature").size() == 2);
}

TEST_CASE("cli: rerun from the manifest reproduces the run byte-identically") {
  const auto dir = fresh_dir("run_manifest");
  const auto cfg_path = dir / "cohort.json";
  qpc::io::write_json_file(cfg_path, toy_cohort(3, 3, 0.3));
  const auto a = run_cmd("run --config " + cfg_path.string() + " --cooldowns 1 --workers 2 --out " +
                         (dir / "a").string());
  REQUIRE(a.exit_code == 0);
  const auto b = run_cmd("run --manifest " + (dir / "a" / "manifest.json").string() +
                         " --workers 1 --out " + (dir / "b").string());
  REQUIRE(b.exit_code == 0);
  // worker count must not affect outputs
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
  CHECK(slurp(dir / "a" / "summaries.json") == slurp(dir / "b" / "summaries.json"));
  for (const auto& e : fs::recursive_directory_iterator(dir / "a" / "results")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    CHECK(slurp(e.path()) == slurp(dir / "b" / rel));
  }
}

TEST_CASE("cli: report is idempotent, warns on corrupt files, fails on empty dirs") {
  const auto dir = fresh_dir("report");
  const auto cfg_path = dir / "cohort.json";
  qpc::io::write_json_file(cfg_path, toy_cohort(4, 4, 0.0));
  const auto run_res = run_cmd("run --config " + cfg_path.string() +
                               " --cooldowns 1 --workers 2 --out " + (dir / "out").string());
  REQUIRE(run_res.exit_code == 0);

  const auto r1 = run_cmd("report --results " + (dir / "out" / "results").string() + " --out " +
                          (dir / "rep1").string());
  const auto r2 = run_cmd("report --results " + (dir / "out" / "results").string() + " --out " +
                          (dir / "rep2").string());
  CHECK(r1.exit_code == 0);
  CHECK(r2.exit_code == 0);
  CHECK(slurp(dir / "rep1" / "report.json") == slurp(dir / "rep2" / "report.json"));

  // corrupt one result file: skipped with a warning count, report still made
  fs::create_directories(dir / "corrupt");
  fs::copy(dir / "out" / "results", dir / "corrupt" / "results", fs::copy_options::recursive);
  std::ofstream(dir / "corrupt" / "results" / "cd1_t40mK" / "c1_r1_c1.json") << "{broken";
  const auto r3 = run_cmd("report --results " + (dir / "corrupt" / "results").string() +
                          " --out " + (dir / "rep3").string());
  CHECK(r3.exit_code == 0);
  CHECK(r3.output.find("1 file(s) skipped") != std::string::npos);

  // empty directory: statistics error, nonzero exit
  fs::create_directories(dir / "empty");
  const auto r4 =
      run_cmd("report --results " + (dir / "empty").string() + " --out " + (dir / "rep4").string());
  CHECK(r4.exit_code != 0);
}

TEST_CASE("cli: analyze a single trace file") {
  const auto dir = fresh_dir("analyze_one");
  const auto cfg_path = dir / "cohort.json";
  qpc::io::write_json_file(cfg_path, toy_cohort(1, 1, 0.0));
  const auto synth = run_cmd("synthesize --config " + cfg_path.string() + " --cooldowns 1 --out " +
                             (dir / "out").string());
  REQUIRE(synth.exit_code == 0);
  const json manifest = qpc::io::read_json_file(dir / "out" / "manifest.json");
  const auto rec = manifest.at("devices")[0];
  const std::string fwd = rec.at("traces")[0].get<std::string>();
  const double lever = rec.at("lever_arm").get<double>();
  const auto res = run_cmd("analyze --trace " + (dir / "out" / fwd).string() + " --lever-arm " +
                           std::to_string(lever) + " --out " + (dir / "result.json").string());
  CHECK(res.exit_code == 0);
  const json result = qpc::io::read_json_file(dir / "result.json");
  CHECK(result.at("good_fit").get<bool>());
}

TEST_CASE("cli: spectroscopy subcommand extracts the subband spacing") {
  const auto dir = fresh_dir("spectro");
  qpc::synthesis::SaddleDevice d;
  d.e_x_mev = 1.0;
  d.e_y_mev = 2.5;
  d.lever_arm = 0.07;
  d.series_resistance_ohm = 1000.0;
  std::vector<double> biases;
  for (int i = 0; i <= 10; ++i) biases.push_back(1.5 * d.e_y_mev / 1000.0 * i / 10.0);
  const auto family = qpc::synthesis::bias_sweep_family(d, {0.04, 0.0}, biases, 0.0, 5);
  std::string args = "spectroscopy --lever-arm 0.07 --out " + (dir / "de.json").string();
  for (size_t i = 0; i < family.size(); ++i) {
    const auto p = dir / ("bias" + std::to_string(i) + ".csv");
    qpc::io::write_trace_csv(p, family[i]);
    args += " --bias " + p.string();
  }
  const auto res = run_cmd(args);
  CHECK(res.exit_code == 0);
  const json out = qpc::io::read_json_file(dir / "de.json");
  CHECK(out.at("delta_e_mev").get<double>() == doctest::Approx(2.5).epsilon(0.05));
}

TEST_CASE("cli: mux-check passes healthy and reports stuck faults") {
  const auto ok = run_cmd("mux-check");
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("external contacts: 19") != std::string::npos);
  CHECK(ok.output.find("distinct line assignments: 256 / 256") != std::string::npos);
  CHECK(ok.output.find("healthy singleton addresses: 256 / 256") != std::string::npos);
  CHECK(ok.output.find("mux-check: PASS") != std::string::npos);

  const auto faulty = run_cmd("mux-check --stuck row:1:1:open");
  CHECK(faulty.output.find("2 row leaves") != std::string::npos);
}

TEST_CASE("cli: QPC_OUT_ROOT resolves relative output paths") {
  const auto dir = fresh_dir("out_root");
  const auto cfg_path = dir / "cohort.json";
  qpc::io::write_json_file(cfg_path, toy_cohort(1, 1, 0.0));
  const std::string cmd = "QPC_OUT_ROOT=" + dir.string() + " " + std::string(kBin) +
                          " synthesize --config " + cfg_path.string() +
                          " --cooldowns 1 --out nested/run 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[256];
  while (fgets(buf, sizeof(buf), pipe)) {
  }
  const int status = pclose(pipe);
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(fs::exists(dir / "nested" / "run" / "manifest.json"));
}
