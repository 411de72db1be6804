#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <dvboltz/dvboltz.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

TEST_CASE("version and error reporting") {
  CHECK(std::string(dvb_version()) == "1.0.0");
  dvb_grid* g = nullptr;
  CHECK(dvb_grid_create(7, 6.0, 1, &g) == DVB_ERR_INVALID_ARGUMENT);
  CHECK(g == nullptr);
  CHECK(std::string(dvb_last_error_message()).size() > 0);
  CHECK(dvb_grid_create(8, 6.0, 1, nullptr) == DVB_ERR_INVALID_ARGUMENT);
  dvb_grid_destroy(nullptr);
}

TEST_CASE("grid, collision and entropy through handles") {
  dvb_grid* g = nullptr;
  REQUIRE(dvb_grid_create(6, 5.0, 1, &g) == DVB_OK);
  const size_t n = dvb_grid_size(g);
  CHECK(n == 216);
  std::vector<double> nodes(3 * n), w(n), one(n, 1.0);
  CHECK(dvb_grid_nodes(g, nodes.data()) == DVB_OK);
  CHECK(dvb_grid_weights(g, w.data()) == DVB_OK);
  double mass = 0;
  CHECK(dvb_bracket(g, one.data(), &mass) == DVB_OK);
  CHECK(mass == doctest::Approx(1.0));

  dvb_collision* c = nullptr;
  CHECK(dvb_collision_create(g, 5, "maxwell", 1.0, 0.0, 1, &c) == DVB_ERR_INVALID_ARGUMENT);
  CHECK(dvb_collision_create(g, 6, "billiard", 1.0, 0.0, 1, &c) == DVB_ERR_INVALID_ARGUMENT);
  REQUIRE(dvb_collision_create(g, 6, "maxwell", 1.0, 0.0, 1, &c) == DVB_OK);

  std::vector<double> v1(n), out(n);
  for (size_t i = 0; i < n; ++i) v1[i] = nodes[3 * i];
  CHECK(dvb_collision_linearized(c, v1.data(), out.data()) == DVB_OK);
  for (double x : out) CHECK(std::abs(x) < 1e-12);

  std::vector<double> G(n);
  for (size_t i = 0; i < n; ++i) G[i] = std::exp(0.2 * std::sin(3.0 * i));
  double R = -1, R2 = -1, H = -1;
  CHECK(dvb_collision_q(c, G.data(), out.data(), &R) == DVB_OK);
  CHECK(dvb_collision_dissipation(c, G.data(), &R2) == DVB_OK);
  CHECK(R > 0);
  CHECK(R2 == doctest::Approx(R));
  CHECK(dvb_entropy_H(g, G.data(), &H) == DVB_OK);
  CHECK(H > 0);
  G[0] = -1;
  CHECK(dvb_entropy_H(g, G.data(), &H) == DVB_ERR_INVALID_ARGUMENT);

  dvb_collision_destroy(c);
  dvb_grid_destroy(g);
}

TEST_CASE("force handles and validation") {
  dvb_grid* g = nullptr;
  REQUIRE(dvb_grid_create(8, 6.0, 1, &g) == DVB_OK);
  dvb_force* f = nullptr;
  REQUIRE(dvb_force_create_magnetic(0, 0, 1, &f) == DVB_OK);
  int ok = -1;
  double rep[3];
  CHECK(dvb_force_validate(f, g, &ok, rep) == DVB_OK);
  CHECK(ok == 1);
  CHECK(rep[0] == 0.0);
  CHECK(rep[1] == 0.0);
  dvb_force_destroy(f);

  REQUIRE(dvb_force_create_custom("[1, 0, 0]", "0", &f) == DVB_OK);
  CHECK(dvb_force_validate(f, g, &ok, rep) == DVB_OK);
  CHECK(ok == 0);
  CHECK(rep[1] > 1.0);
  dvb_force_destroy(f);

  CHECK(dvb_force_create_custom("[1, 0", "0", &f) == DVB_ERR_CONFIG);
  dvb_grid_destroy(g);
}

TEST_CASE("experiments run through the library") {
  const auto dir = std::filesystem::temp_directory_path() / "dvb_capi_test";
  std::filesystem::remove_all(dir);
  char* summary = nullptr;
  int passed = -1;
  CHECK(dvb_run_experiment("sweep", "{\"grid\": {\"n_per_axis\": 7}}", dir.c_str(), 1, &summary, &passed) ==
        DVB_ERR_CONFIG);
  CHECK(dvb_run_experiment("nonsense", nullptr, dir.c_str(), 1, &summary, &passed) == DVB_ERR_INVALID_ARGUMENT);
  CHECK(dvb_run_experiment("validate-force", "{\"force\": {\"type\": \"custom\", \"F\": \"[v1, 0, 0]\", \"div\": \"1\"}}",
                           dir.c_str(), 1, &summary, &passed) == DVB_OK);
  CHECK(passed == 0);
  REQUIRE(summary != nullptr);
  CHECK(std::string(summary).find("div_v F") != std::string::npos);
  dvb_string_free(summary);
  summary = nullptr;
  CHECK(dvb_run_experiment("validate-force", "{\"grid\": {\"n_per_axis\": 8}}", dir.c_str(), 1, &summary, &passed) ==
        DVB_OK);
  CHECK(passed == 1);
  CHECK(std::filesystem::exists(dir / "validate_force.json"));
  dvb_string_free(summary);
  std::filesystem::remove_all(dir);
}
