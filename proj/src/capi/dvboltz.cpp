#include "dvboltz/dvboltz.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "collision.hpp"
#include "entropy_diagnostics.hpp"
#include "error.hpp"
#include "experiment_harness.hpp"
#include "force_field.hpp"

struct dvb_grid {
  dvb::VelocityGrid grid;
};
struct dvb_collision {
  dvb::CollisionTable table;
};
struct dvb_force {
  dvb::ForceField field;
};

namespace {

thread_local std::string last_error;

dvb_status map(dvb::Errc c) {
  switch (c) {
    case dvb::Errc::invalid_argument: return DVB_ERR_INVALID_ARGUMENT;
    case dvb::Errc::config: return DVB_ERR_CONFIG;
    case dvb::Errc::inadmissible_force: return DVB_ERR_INADMISSIBLE_FORCE;
    case dvb::Errc::unstable: return DVB_ERR_UNSTABLE;
    case dvb::Errc::numeric: return DVB_ERR_NUMERIC;
    case dvb::Errc::io: return DVB_ERR_IO;
    case dvb::Errc::budget: return DVB_ERR_BUDGET;
  }
  return DVB_ERR_INTERNAL;
}

template <class F>
dvb_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return DVB_OK;
  } catch (const dvb::Error& e) {
    last_error = e.what();
    return map(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return DVB_ERR_BUDGET;
  } catch (const std::exception& e) {
    last_error = e.what();
    return DVB_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return DVB_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) dvb::fail(dvb::Errc::invalid_argument, std::string(what) + " is null");
}

}  // namespace

extern "C" {

const char* dvb_last_error_message(void) { return last_error.c_str(); }
const char* dvb_version(void) { return dvb::kVersion; }

dvb_status dvb_grid_create(int n, double v_max, int renormalize, dvb_grid** out) {
  return guard([&] {
    need(out, "out");
    *out = nullptr;
    *out = new dvb_grid{dvb::build_grid(n, v_max, renormalize != 0)};
  });
}

void dvb_grid_destroy(dvb_grid* g) { delete g; }

size_t dvb_grid_size(const dvb_grid* g) { return g ? g->grid.size() : 0; }

dvb_status dvb_grid_nodes(const dvb_grid* g, double* nodes) {
  return guard([&] {
    need(g, "grid");
    need(nodes, "nodes");
    for (std::size_t i = 0; i < g->grid.size(); ++i)
      for (int a = 0; a < 3; ++a) nodes[3 * i + a] = g->grid.nodes[i][a];
  });
}

dvb_status dvb_grid_weights(const dvb_grid* g, double* weights) {
  return guard([&] {
    need(g, "grid");
    need(weights, "weights");
    std::memcpy(weights, g->grid.weights.data(), g->grid.size() * sizeof(double));
  });
}

dvb_status dvb_bracket(const dvb_grid* g, const double* values, double* out) {
  return guard([&] {
    need(g, "grid");
    need(values, "values");
    need(out, "out");
    *out = dvb::bracket(g->grid, std::span<const double>(values, g->grid.size()));
  });
}

dvb_status dvb_collision_create(const dvb_grid* g, int n_sigma, const char* kernel, double constant,
                                double energy_cutoff, int threads, dvb_collision** out) {
  return guard([&] {
    need(g, "grid");
    need(kernel, "kernel");
    need(out, "out");
    *out = nullptr;
    dvb::RunConfig::Kernel k;
    k.type = kernel;
    if (k.type != "maxwell" && k.type != "hard_sphere")
      dvb::fail(dvb::Errc::invalid_argument, "kernel must be maxwell or hard_sphere");
    k.b0 = k.c = constant;
    if (!(constant > 0)) dvb::fail(dvb::Errc::invalid_argument, "kernel constant must be positive");
    dvb::CollisionOptions o;
    if (energy_cutoff > 0) o.energy_cutoff = energy_cutoff;
    o.threads = threads > 0 ? threads : 1;
    *out = new dvb_collision{dvb::CollisionTable(g->grid, dvb::build_sphere(n_sigma), dvb::make_kernel(k), o)};
  });
}

void dvb_collision_destroy(dvb_collision* c) { delete c; }

dvb_status dvb_collision_linearized(const dvb_collision* c, const double* g, double* out) {
  return guard([&] {
    need(c, "collision");
    need(g, "g");
    need(out, "out");
    const std::size_t n = c->table.grid().size();
    auto r = c->table.linearized(std::span<const double>(g, n));
    std::memcpy(out, r.data(), n * sizeof(double));
  });
}

dvb_status dvb_collision_q(const dvb_collision* c, const double* G, double* out, double* R) {
  return guard([&] {
    need(c, "collision");
    need(G, "G");
    need(out, "out");
    const std::size_t n = c->table.grid().size();
    auto r = c->table.q_nonlinear(std::span<const double>(G, n), R);
    std::memcpy(out, r.data(), n * sizeof(double));
  });
}

dvb_status dvb_collision_dissipation(const dvb_collision* c, const double* G, double* R) {
  return guard([&] {
    need(c, "collision");
    need(G, "G");
    need(R, "R");
    const std::size_t n = c->table.grid().size();
    for (std::size_t i = 0; i < n; ++i)
      if (!(G[i] > 0)) dvb::fail(dvb::Errc::invalid_argument, "dissipation: G must be positive");
    *R = c->table.dissipation(std::span<const double>(G, n));
  });
}

dvb_status dvb_force_create_magnetic(double b1, double b2, double b3, dvb_force** out) {
  return guard([&] {
    need(out, "out");
    *out = new dvb_force{dvb::ForceField::magnetic(dvb::Vec3{b1, b2, b3})};
  });
}

dvb_status dvb_force_create_custom(const char* F_expr, const char* div_expr, dvb_force** out) {
  return guard([&] {
    need(F_expr, "F_expr");
    need(div_expr, "div_expr");
    need(out, "out");
    *out = nullptr;
    *out = new dvb_force{dvb::ForceField::custom(dvb::Expr::parse(F_expr), dvb::Expr::parse(div_expr))};
  });
}

void dvb_force_destroy(dvb_force* f) { delete f; }

dvb_status dvb_force_validate(const dvb_force* f, const dvb_grid* g, int* admissible, double report[3]) {
  return guard([&] {
    need(f, "force");
    need(g, "grid");
    need(admissible, "admissible");
    auto rep = dvb::validate(f->field, g->grid, dvb::sample_lattice(5, 5, 1.0));
    *admissible = rep.admissible() ? 1 : 0;
    if (report) {
      report[0] = rep.max_divergence;
      report[1] = rep.max_orthogonality;
      report[2] = rep.max_square_norm;
    }
  });
}

dvb_status dvb_entropy_H(const dvb_grid* g, const double* G, double* out) {
  return guard([&] {
    need(g, "grid");
    need(G, "G");
    need(out, "out");
    *out = dvb::entropy_H(dvb::make_homogeneous(g->grid), std::span<const double>(G, g->grid.size()));
  });
}

dvb_status dvb_run_experiment(const char* subcommand, const char* config_json, const char* out_dir, int threads,
                              char** summary_json, int* passed) {
  return guard([&] {
    need(subcommand, "subcommand");
    if (summary_json) *summary_json = nullptr;
    dvb::RunConfig cfg = config_json ? dvb::parse_config(config_json) : dvb::RunConfig{};
    if (threads > 0) cfg.threads = threads;
    const std::string dir = out_dir ? out_dir : cfg.output_dir;
    auto res = dvb::run_subcommand(subcommand, cfg, dir);
    if (passed) *passed = res.passed ? 1 : 0;
    if (summary_json) {
      char* s = static_cast<char*>(std::malloc(res.summary_json.size() + 1));
      if (!s) throw std::bad_alloc();
      std::memcpy(s, res.summary_json.c_str(), res.summary_json.size() + 1);
      *summary_json = s;
    }
  });
}

void dvb_string_free(char* s) { std::free(s); }

}  // extern "C"
