#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "error.hpp"
#include "experiment_harness.hpp"

namespace dvb {

using json = nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) { fail(Errc::config, where + ": " + what); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) bad(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
  }
}

std::string path(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad(path(where, key), "expected true or false");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) bad(path(where, key), "expected an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) bad(path(where, key), "expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad(path(where, key), "expected a string");
  }
  out = v.get<T>();
}

std::vector<double> read_list(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_array()) bad(path(where, key), "expected a list of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) bad(path(where, key), "expected a list of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

bool multiple_of(double t, double dt) {
  double k = t / dt;
  return std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k);
}

void validate(const RunConfig& c) {
  const auto& g = c.grid;
  if (g.n_per_axis < 4 || g.n_per_axis % 2) bad("grid.n_per_axis", "must be even and at least 4");
  if (!(g.v_max > 0)) bad("grid.v_max", "must be positive");
  if (g.n_sigma != 6 && g.n_sigma != 8 && g.n_sigma != 12 && g.n_sigma != 20 && g.n_sigma != 32)
    bad("grid.n_sigma", "must be one of 6, 8, 12, 20, 32");
  if (c.kernel.type != "maxwell" && c.kernel.type != "hard_sphere") bad("kernel.type", "must be maxwell or hard_sphere");
  if (!(c.kernel.b0 > 0) || !(c.kernel.c > 0)) bad("kernel", "constants must be positive");
  if (!(c.collision.energy_cutoff > 0)) bad("collision.energy_cutoff", "must be positive or null");
  if (!(c.collision.max_table_gib > 0)) bad("collision.max_table_gib", "must be positive");
  const auto& f = c.force;
  if (f.type != "zero" && f.type != "magnetic" && f.type != "custom") bad("force.type", "must be zero, magnetic or custom");
  if (f.type == "custom" && (f.F_expr.empty() || f.div_expr.empty()))
    bad("force", "a custom force needs both F and div");
  if (c.space.mode != "homogeneous" && c.space.mode != "torus_1d") bad("space.mode", "must be homogeneous or torus_1d");
  if (c.space.mode == "torus_1d" && c.space.n_x < 3) bad("space.n_x", "must be at least 3");
  if (!(c.solver.dt > 0)) bad("solver.dt", "must be positive");
  if (!(c.solver.positivity_floor >= 0)) bad("solver.positivity_floor", "must be nonnegative");

  const auto& s = c.sweep;
  if (s.eps.empty()) bad("sweep.eps", "must not be empty");
  for (std::size_t k = 0; k < s.eps.size(); ++k) {
    if (!(s.eps[k] > 0 && s.eps[k] <= 1)) bad("sweep.eps", "every eps must lie in (0, 1]");
    if (k && !(s.eps[k] < s.eps[k - 1])) bad("sweep.eps", "must be strictly decreasing");
  }
  if (s.g_in != "smooth" && s.g_in != "smooth_hydro" && s.g_in != "zero" && s.g_in != "expr")
    bad("sweep.g_in", "must be smooth, smooth_hydro, zero or expr");
  if (s.g_in == "expr" && s.g_in_expr.empty()) bad("sweep.g_in_expr", "required when g_in = expr");
  if (!(s.t_end >= 0) || !multiple_of(s.t_end, c.solver.dt)) bad("sweep.t_end", "must be a nonnegative multiple of dt");
  for (std::size_t k = 0; k < s.snapshots.size(); ++k) {
    double t = s.snapshots[k];
    if (!(t > 0 && t <= s.t_end + 1e-12)) bad("sweep.snapshots", "times must lie in (0, t_end]");
    if (k && !(t > s.snapshots[k - 1])) bad("sweep.snapshots", "must be strictly increasing");
    if (!multiple_of(t, c.solver.dt)) bad("sweep.snapshots", "times must be multiples of dt (no interpolation in time)");
  }
  const auto& cs = c.conservation;
  if (!(cs.eps > 0 && cs.eps <= 1)) bad("conservation.eps", "must lie in (0, 1]");
  if (!(cs.t_end > 0) || !multiple_of(cs.t_end, c.solver.dt)) bad("conservation.t_end", "must be a positive multiple of dt");
  if (!(cs.stride > 0) || !multiple_of(cs.stride, c.solver.dt) || !multiple_of(cs.t_end, cs.stride))
    bad("conservation.stride", "must be a multiple of dt dividing t_end");
  if (c.operators.refine_n != 0 && (c.operators.refine_n < 4 || c.operators.refine_n % 2))
    bad("operators.refine_n", "must be 0 or an even number >= 4");
  if (c.operators.dense_n < 4 || c.operators.dense_n % 2 || c.operators.dense_n > 10)
    bad("operators.dense_n", "must be even, between 4 and 10");
  if (c.operators.samples < 1) bad("operators.samples", "must be at least 1");
  if (c.threads < 1) bad("threads", "must be at least 1");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::config, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  check_keys(j, {"grid", "kernel", "collision", "force", "space", "solver", "sweep", "conservation", "operators", "seed",
                 "output_dir", "threads"},
             "");
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, {"n_per_axis", "v_max", "n_sigma", "renormalize"}, "grid");
    read(g, "n_per_axis", c.grid.n_per_axis, "grid");
    read(g, "v_max", c.grid.v_max, "grid");
    read(g, "n_sigma", c.grid.n_sigma, "grid");
    read(g, "renormalize", c.grid.renormalize, "grid");
  }
  if (j.contains("kernel")) {
    const json& k = j["kernel"];
    check_keys(k, {"type", "b0", "c"}, "kernel");
    read(k, "type", c.kernel.type, "kernel");
    read(k, "b0", c.kernel.b0, "kernel");
    read(k, "c", c.kernel.c, "kernel");
  }
  if (j.contains("collision")) {
    const json& k = j["collision"];
    check_keys(k, {"energy_cutoff", "max_table_gib"}, "collision");
    if (k.contains("energy_cutoff") && k["energy_cutoff"].is_null())
      c.collision.energy_cutoff = std::numeric_limits<double>::infinity();
    else
      read(k, "energy_cutoff", c.collision.energy_cutoff, "collision");
    read(k, "max_table_gib", c.collision.max_table_gib, "collision");
  }
  if (j.contains("force")) {
    const json& f = j["force"];
    check_keys(f, {"type", "B", "F", "div", "declared"}, "force");
    read(f, "type", c.force.type, "force");
    if (f.contains("B")) {
      const json& b = f["B"];
      if (b.is_string()) {
        c.force.B_expr = b.get<std::string>();
      } else {
        auto v = read_list(f, "B", "force");
        if (v.size() != 3) bad("force.B", "expected three components or an expression");
        c.force.B = {v[0], v[1], v[2]};
      }
    }
    read(f, "F", c.force.F_expr, "force");
    read(f, "div", c.force.div_expr, "force");
    if (f.contains("declared")) {
      const json& d = f["declared"];
      check_keys(d, {"divergence_free", "orthogonal", "square_integrable"}, "force.declared");
      read(d, "divergence_free", c.force.declared.divergence_free, "force.declared");
      read(d, "orthogonal", c.force.declared.orthogonal, "force.declared");
      read(d, "square_integrable", c.force.declared.square_integrable, "force.declared");
    }
  }
  if (j.contains("space")) {
    const json& s = j["space"];
    check_keys(s, {"mode", "n_x", "modulation"}, "space");
    read(s, "mode", c.space.mode, "space");
    read(s, "n_x", c.space.n_x, "space");
    read(s, "modulation", c.space.modulation, "space");
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    check_keys(s, {"dt", "advection", "integrator", "positivity_floor"}, "solver");
    read(s, "dt", c.solver.dt, "solver");
    read(s, "positivity_floor", c.solver.positivity_floor, "solver");
    std::string adv = "spectral", integ = "explicit_rk2";
    read(s, "advection", adv, "solver");
    read(s, "integrator", integ, "solver");
    if (adv == "spectral")
      c.solver.advection = Advection::spectral;
    else if (adv == "upwind2")
      c.solver.advection = Advection::upwind2;
    else
      bad("solver.advection", "must be spectral or upwind2");
    if (integ == "explicit_rk2")
      c.solver.integrator = Integrator::explicit_rk2;
    else if (integ == "explicit_rk4")
      c.solver.integrator = Integrator::explicit_rk4;
    else if (integ == "semi_implicit_euler")
      c.solver.integrator = Integrator::semi_implicit_euler;
    else
      bad("solver.integrator", "must be explicit_rk2, explicit_rk4 or semi_implicit_euler");
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    check_keys(s, {"eps", "g_in", "g_in_expr", "amplitude", "t_end", "snapshots"}, "sweep");
    if (s.contains("eps")) c.sweep.eps = read_list(s, "eps", "sweep");
    read(s, "g_in", c.sweep.g_in, "sweep");
    read(s, "g_in_expr", c.sweep.g_in_expr, "sweep");
    read(s, "amplitude", c.sweep.amplitude, "sweep");
    read(s, "t_end", c.sweep.t_end, "sweep");
    if (s.contains("snapshots")) c.sweep.snapshots = read_list(s, "snapshots", "sweep");
  }
  if (j.contains("conservation")) {
    const json& s = j["conservation"];
    check_keys(s, {"eps", "t_end", "stride", "refine", "linearized", "refine_linearized", "equilibrium"}, "conservation");
    read(s, "eps", c.conservation.eps, "conservation");
    read(s, "t_end", c.conservation.t_end, "conservation");
    read(s, "stride", c.conservation.stride, "conservation");
    read(s, "refine", c.conservation.refine, "conservation");
    read(s, "linearized", c.conservation.linearized, "conservation");
    read(s, "refine_linearized", c.conservation.refine_linearized, "conservation");
    read(s, "equilibrium", c.conservation.equilibrium, "conservation");
  }
  if (j.contains("operators")) {
    const json& s = j["operators"];
    check_keys(s, {"refine_n", "dense_n", "samples"}, "operators");
    read(s, "refine_n", c.operators.refine_n, "operators");
    read(s, "dense_n", c.operators.dense_n, "operators");
    read(s, "samples", c.operators.samples, "operators");
  }
  read(j, "seed", c.seed, "");
  read(j, "output_dir", c.output_dir, "");
  read(j, "threads", c.threads, "");
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) fail(Errc::io, "cannot read config " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["grid"] = {{"n_per_axis", c.grid.n_per_axis},
               {"v_max", c.grid.v_max},
               {"n_sigma", c.grid.n_sigma},
               {"renormalize", c.grid.renormalize}};
  j["kernel"] = {{"type", c.kernel.type}, {"b0", c.kernel.b0}, {"c", c.kernel.c}};
  j["collision"] = {{"energy_cutoff", std::isfinite(c.collision.energy_cutoff) ? json(c.collision.energy_cutoff) : json()},
                    {"max_table_gib", c.collision.max_table_gib}};
  json f = {{"type", c.force.type}};
  if (c.force.type == "magnetic") {
    if (c.force.B_expr.empty())
      f["B"] = {c.force.B[0], c.force.B[1], c.force.B[2]};
    else
      f["B"] = c.force.B_expr;
  }
  if (c.force.type == "custom") {
    f["F"] = c.force.F_expr;
    f["div"] = c.force.div_expr;
    f["declared"] = {{"divergence_free", c.force.declared.divergence_free},
                     {"orthogonal", c.force.declared.orthogonal},
                     {"square_integrable", c.force.declared.square_integrable}};
  }
  j["force"] = f;
  j["space"] = {{"mode", c.space.mode}, {"n_x", c.space.n_x}, {"modulation", c.space.modulation}};
  const char* adv = c.solver.advection == Advection::spectral ? "spectral" : "upwind2";
  const char* integ = c.solver.integrator == Integrator::explicit_rk2   ? "explicit_rk2"
                      : c.solver.integrator == Integrator::explicit_rk4 ? "explicit_rk4"
                                                                        : "semi_implicit_euler";
  j["solver"] = {{"dt", c.solver.dt},
                 {"advection", adv},
                 {"integrator", integ},
                 {"positivity_floor", c.solver.positivity_floor}};
  j["sweep"] = {{"eps", c.sweep.eps},
                {"g_in", c.sweep.g_in},
                {"amplitude", c.sweep.amplitude},
                {"t_end", c.sweep.t_end},
                {"snapshots", c.sweep.snapshots}};
  if (c.sweep.g_in == "expr") j["sweep"]["g_in_expr"] = c.sweep.g_in_expr;
  j["conservation"] = {{"eps", c.conservation.eps},
                       {"t_end", c.conservation.t_end},
                       {"stride", c.conservation.stride},
                       {"refine", c.conservation.refine},
                       {"linearized", c.conservation.linearized},
                       {"refine_linearized", c.conservation.refine_linearized},
                       {"equilibrium", c.conservation.equilibrium}};
  j["operators"] = {{"refine_n", c.operators.refine_n},
                    {"dense_n", c.operators.dense_n},
                    {"samples", c.operators.samples}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  return j.dump(2);
}

}  // namespace dvb
