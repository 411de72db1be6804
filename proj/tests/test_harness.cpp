#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "experiment_harness.hpp"

using namespace dvb;
using json = nlohmann::json;

namespace {

RunConfig tiny_sweep(const char* g_in) {
  return parse_config(std::string(R"j({"grid": {"n_per_axis": 6, "n_sigma": 6},
    "solver": {"dt": 0.01}, "sweep": {"eps": [0.4, 0.2], "g_in": ")j") +
                      g_in + R"j(", "t_end": 0.04, "snapshots": [0.02, 0.04]}})j");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("zero initial fluctuation keeps every gap at roundoff") {
  const auto dir = std::filesystem::temp_directory_path() / "dvb_harness_zero";
  std::filesystem::remove_all(dir);
  run_epsilon_sweep(tiny_sweep("zero"), dir);
  const auto rows = parse_sweep_csv(slurp(dir / "sweep.csv"));
  CHECK(rows.size() == 6);
  for (const auto& r : rows) {
    CHECK(r.entropic_metric <= 1e-12);
    CHECK(r.l1_gap <= 1e-12);
    CHECK(r.q_gap <= 1e-12);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("sweep rows and the q_gap time integral agree with the csv") {
  const auto dir = std::filesystem::temp_directory_path() / "dvb_harness_smooth";
  std::filesystem::remove_all(dir);
  const RunResult res = run_epsilon_sweep(tiny_sweep("smooth"), dir);
  const auto rows = parse_sweep_csv(slurp(dir / "sweep.csv"));
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].eps == 0.4);
  CHECK(rows[0].t == 0.0);
  CHECK(rows[5].eps == 0.2);
  CHECK(rows[5].t == doctest::Approx(0.04));
  for (const auto& r : rows) {
    CHECK(r.l1_gap >= 0);
    CHECK(r.q_gap >= 0);
    CHECK(r.entropic_metric >= 0);
  }
  const json s = json::parse(res.summary_json);
  const auto q = s["q_gap_time_integral"]["values"].get<std::vector<double>>();
  REQUIRE(q.size() == 2);
  for (int k = 0; k < 2; ++k) {
    const SweepRow* r = &rows[3 * k];
    const double trap = 0.01 * (r[0].q_gap + r[1].q_gap) + 0.01 * (r[1].q_gap + r[2].q_gap);
    CHECK(q[k] == doctest::Approx(trap).epsilon(1e-12));
  }
  CHECK(s["sweep_csv_fnv1a"].get<std::string>() == hex64(fnv1a(slurp(dir / "sweep.csv").data(),
                                                               slurp(dir / "sweep.csv").size())));
  std::filesystem::remove_all(dir);
}
