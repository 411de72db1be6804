#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "collision.hpp"
#include "force_field.hpp"
#include "kinetic_solver.hpp"

namespace dvb {

inline constexpr const char* kVersion = "1.0.0";

struct RunConfig {
  struct Grid {
    int n_per_axis = 16;
    double v_max = 6.0;
    int n_sigma = 32;
    bool renormalize = true;
  } grid;

  struct Kernel {
    std::string type = "maxwell";  // maxwell | hard_sphere
    double b0 = 1.0;
    double c = 1.0;
  } kernel;

  struct Collision {
    double energy_cutoff = 32.0;  // infinity when the key is null
    double max_table_gib = 2.0;
  } collision;

  struct Force {
    std::string type = "magnetic";  // zero | magnetic | custom
    Vec3 B{0, 0, 1};
    std::string B_expr;             // replaces B when non-empty
    std::string F_expr, div_expr;   // custom
    ForceField::Declared declared;  // custom
  } force;

  struct Space {
    std::string mode = "homogeneous";  // homogeneous | torus_1d
    int n_x = 9;
    double modulation = 0.5;  // builtin profiles on the torus carry a factor 1 + modulation cos(2 pi x1)
  } space;

  SolverConfig solver;

  struct Sweep {
    std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
    std::string g_in = "smooth";  // smooth | smooth_hydro | zero | expr
    std::string g_in_expr;        // scalar in v (and x on the torus) when g_in = expr
    double amplitude = 1.0;       // max |g_in| for builtin profiles, a factor for expr
    double t_end = 1.0;
    std::vector<double> snapshots{0.25, 0.5, 1.0};
  } sweep;

  struct Conservation {
    double eps = 0.5;
    double t_end = 1.0;
    double stride = 0.05;
    bool refine = true;             // repeat the nonlinear run at dt/2 and report the slack ratio
    bool linearized = true;         // also run the dissipation equality check
    bool refine_linearized = true;  // repeat it at dt/2 and report the residual ratio
    bool equilibrium = true;  // also evolve G = 1 and report its drift
  } conservation;

  struct Operators {
    int refine_n = 32;  // 0 disables the refined grid
    int dense_n = 6;
    int samples = 3;  // random vectors per check
  } operators;

  std::uint64_t seed = 20240611;
  std::string output_dir = "out";
  int threads = 1;
};

// Strict parsing: unknown keys, wrong types and violated invariants are Errc::config errors.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);  // fully resolved

ForceField make_force(const RunConfig::Force& f);
CollisionKernel make_kernel(const RunConfig::Kernel& k);

// Builtin initial fluctuations, cell-major over the phase grid.
//   smooth: e^{-|v|^2/4}(1 + v1 + v2 v3 + v1^2) with its invariant components removed
//   smooth_hydro: smooth plus 0.5 v1 + 0.1 (|v|^2 - 3)
// Both are scaled to max |g| = amplitude.
std::vector<double> make_g_in(const RunConfig& cfg, const PhaseGrid& phase);

// G = 1 + eps max(g, -1/eps), written as max(1 + eps g, 0)
std::vector<double> clip_initial(std::span<const double> g, double eps);

struct SweepRow {
  double eps = 0, t = 0;
  double H_over_eps2 = 0, half_g2 = 0, entropic_metric = 0, l1_gap = 0, q_gap = 0;
  double mass_res = 0, energy_res = 0, entropy_slack = 0;
};

inline constexpr const char* kSweepHeader =
    "eps,t,H_over_eps2,half_g2,entropic_metric,l1_gap,q_gap,mass_res,energy_res,entropy_slack";

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

// Least-squares slope of log(y) against log(x), ignoring y below 1e-12; nullopt with fewer than 2 points.
std::optional<double> loglog_slope(std::span<const double> x, std::span<const double> y);

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset);
std::string hex64(std::uint64_t h);

struct RunResult {
  std::string summary_json;
  std::vector<std::filesystem::path> files;
  bool passed = true;
};

RunResult run_epsilon_sweep(const RunConfig& cfg, const std::filesystem::path& out);
RunResult run_conservation_suite(const RunConfig& cfg, const std::filesystem::path& out);
RunResult run_operator_suite(const RunConfig& cfg, const std::filesystem::path& out);
RunResult run_validate_force(const RunConfig& cfg, const std::filesystem::path& out);

// Dispatch by subcommand name: sweep | conservation | operators | validate-force.
RunResult run_subcommand(const std::string& name, const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace dvb
