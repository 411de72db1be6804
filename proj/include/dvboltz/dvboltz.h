/* dvboltz: discrete-velocity Boltzmann simulator, C interface. */
#ifndef DVBOLTZ_H
#define DVBOLTZ_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DVB_API __declspec(dllexport)
#else
#define DVB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dvb_status {
  DVB_OK = 0,
  DVB_ERR_INVALID_ARGUMENT = 1,
  DVB_ERR_CONFIG = 2,
  DVB_ERR_INADMISSIBLE_FORCE = 3,
  DVB_ERR_UNSTABLE = 4,
  DVB_ERR_NUMERIC = 5,
  DVB_ERR_IO = 6,
  DVB_ERR_BUDGET = 7,
  DVB_ERR_INTERNAL = 8
} dvb_status;

typedef struct dvb_grid dvb_grid;
typedef struct dvb_collision dvb_collision;
typedef struct dvb_force dvb_force;

/* Message of the last failed call on this thread; empty after success. Owned by the library. */
DVB_API const char* dvb_last_error_message(void);
DVB_API const char* dvb_version(void);

/* Velocity lattice: n_per_axis^3 cell-centred nodes on [-v_max, v_max]^3 with Maxwellian weights. */
DVB_API dvb_status dvb_grid_create(int n_per_axis, double v_max, int renormalize, dvb_grid** out);
DVB_API void dvb_grid_destroy(dvb_grid* g);
DVB_API size_t dvb_grid_size(const dvb_grid* g);
/* nodes: 3 * size doubles (v1, v2, v3 per node); weights: size doubles. */
DVB_API dvb_status dvb_grid_nodes(const dvb_grid* g, double* nodes);
DVB_API dvb_status dvb_grid_weights(const dvb_grid* g, double* weights);
DVB_API dvb_status dvb_bracket(const dvb_grid* g, const double* values, double* out);

/* Collision table. kernel: "maxwell" (constant = b0) or "hard_sphere" (constant = c).
   energy_cutoff <= 0 means no cutoff. The grid may be destroyed afterwards. */
DVB_API dvb_status dvb_collision_create(const dvb_grid* g, int n_sigma, const char* kernel, double constant,
                                        double energy_cutoff, int threads, dvb_collision** out);
DVB_API void dvb_collision_destroy(dvb_collision* c);
/* out = L g */
DVB_API dvb_status dvb_collision_linearized(const dvb_collision* c, const double* g, double* out);
/* out = Q(G, G); R (optional) receives the entropy dissipation */
DVB_API dvb_status dvb_collision_q(const dvb_collision* c, const double* G, double* out, double* R);
DVB_API dvb_status dvb_collision_dissipation(const dvb_collision* c, const double* G, double* R);

/* Forces. Expressions use t, x, v (vectors), their components x1..x3, v1..v3, and
   + - * / ^, sin cos exp sqrt cross dot norm2, [a, b, c]. */
DVB_API dvb_status dvb_force_create_magnetic(double b1, double b2, double b3, dvb_force** out);
DVB_API dvb_status dvb_force_create_custom(const char* F_expr, const char* div_expr, dvb_force** out);
DVB_API void dvb_force_destroy(dvb_force* f);
/* Admissibility on a (t, x1) sample lattice; *admissible is 1 or 0. report (optional) receives
   max |div F|, max |F.v|, sup <|F|^2>. */
DVB_API dvb_status dvb_force_validate(const dvb_force* f, const dvb_grid* g, int* admissible, double report[3]);

/* H(G) = <G log G - G + 1> on a homogeneous grid. */
DVB_API dvb_status dvb_entropy_H(const dvb_grid* g, const double* G, double* out);

/* Runs sweep | conservation | operators | validate-force with a JSON config (NULL for defaults),
   writing into out_dir. threads <= 0 keeps the config value. *summary_json (optional) receives
   the summary, to be released with dvb_string_free. *passed (optional) is 1 when every criterion holds. */
DVB_API dvb_status dvb_run_experiment(const char* subcommand, const char* config_json, const char* out_dir,
                                      int threads, char** summary_json, int* passed);
DVB_API void dvb_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
