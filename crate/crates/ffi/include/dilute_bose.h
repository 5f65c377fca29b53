#ifndef DILUTE_BOSE_H
#define DILUTE_BOSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DbStatus {
  DB_STATUS_OK = 0,
  DB_STATUS_NULL_POINTER = 1,
  DB_STATUS_INVALID_INPUT = 2,
  DB_STATUS_PRECONDITION = 3,
  DB_STATUS_DIVERGENT_TRANSFORM = 4,
  DB_STATUS_QUADRATURE = 5,
  DB_STATUS_NOT_BRACKETED = 6,
  DB_STATUS_SOLVER = 7,
  DB_STATUS_HYPERBOLIC_DOMAIN = 8,
  DB_STATUS_PROVENANCE = 9,
  DB_STATUS_BUDGET = 10,
  DB_STATUS_DEGENERATE_FIT = 11,
  DB_STATUS_IO = 12,
  DB_STATUS_BUFFER_TOO_SMALL = 13,
  DB_STATUS_PANIC = 99,
} DbStatus;

// Opaque coefficient table.
typedef struct DbCoefficients DbCoefficients;

// Opaque radial potential.
typedef struct DbPotential DbPotential;

// Opaque Neumann-problem solution. Keeps its own copy of the potential.
typedef struct DbSolution DbSolution;

// The order-one constants and the matching identity.
typedef struct DbIdentity {
  double c_gn;
  double lhs;
  double rhs;
  double diff;
} DbIdentity;

// e_Λ with its oscillation band.
typedef struct DbELambda {
  double value;
  double band;
  double half_value;
  double half_band;
  bool flagged;
} DbELambda;

// The four terms of the energy expansion and their sum.
typedef struct DbEnergy {
  double a;
  double term1;
  double term2;
  double term3;
  double term4;
  double total;
  double e_lambda_band;
} DbEnergy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (nul
// terminated). Returns the message length without the terminator, or 0 if
// there is none. Truncates when `len` is too small.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t db_last_error(char *buf, size_t len);

// Square barrier V₀ on r < R₀.
//
// # Safety
// `out` must be a valid pointer.
enum DbStatus db_potential_square_barrier(double v0, double radius, struct DbPotential **out);

// C² bump of height V₀ supported on r < R₀.
//
// # Safety
// `out` must be a valid pointer.
enum DbStatus db_potential_smooth_bump(double v0, double radius, struct DbPotential **out);

// Piecewise-linear potential through `len` samples (r[i], v[i]).
//
// # Safety
// `r` and `v` must point to `len` doubles; `out` must be valid.
enum DbStatus db_potential_tabulated(const double *r,
                                     const double *v,
                                     size_t len,
                                     struct DbPotential **out);

// # Safety
// `p` must be null or come from a `db_potential_*` constructor.
void db_potential_free(struct DbPotential *p);

// # Safety
// `p` and `out` must be valid.
enum DbStatus db_scattering_length(const struct DbPotential *p, double *out);

// Neumann problem on the ball of radius Nℓ.
//
// # Safety
// `p` and `out` must be valid.
enum DbStatus db_solution_new(const struct DbPotential *p,
                              uint64_t n,
                              double ell,
                              struct DbSolution **out);

// # Safety
// `s` must be null or come from `db_solution_new`.
void db_solution_free(struct DbSolution *s);

// Eigenvalue λ_ℓ, ∫Vf and the scattering length of a solution.
//
// # Safety
// All pointers must be valid; any of the outputs may be null.
enum DbStatus db_solution_summary(const struct DbSolution *s,
                                  double *lambda,
                                  double *integral_vf,
                                  double *a);

// f(r) of the solution.
//
// # Safety
// `s` and `out` must be valid.
enum DbStatus db_solution_f(const struct DbSolution *s, double r, double *out);

// Coefficient table over |n|² ≤ max_norm2.
//
// # Safety
// `s` and `out` must be valid.
enum DbStatus db_coefficients_new(const struct DbSolution *s,
                                  uint64_t max_norm2,
                                  struct DbCoefficients **out);

// # Safety
// `c` must be null or come from `db_coefficients_new`.
void db_coefficients_free(struct DbCoefficients *c);

// η, σ and γ on the shell |n|² = n2.
//
// # Safety
// `c` must be valid; any of the outputs may be null.
enum DbStatus db_coefficients_shell(const struct DbCoefficients *c,
                                    uint64_t n2,
                                    double *eta,
                                    double *sigma,
                                    double *gamma);

// # Safety
// `c` and `out` must be valid.
enum DbStatus db_identity_check(const struct DbCoefficients *c, struct DbIdentity *out);

// # Safety
// `c` and `out` must be valid.
enum DbStatus db_c_tilde_full(const struct DbCoefficients *c, double *out);

// # Safety
// `out` must be valid.
enum DbStatus db_e_lambda(uint32_t m_max, struct DbELambda *out);

// −64π(4π/3 − √3).
double db_third_order_constant(void);

// Third-order term from the integral approximation.
//
// # Safety
// `out` must be valid.
enum DbStatus db_c_tilde_integral(double a, double n, double *out);

// Third-order term from the lattice double sum.
//
// # Safety
// `out` must be valid.
enum DbStatus db_c_tilde_lattice(double a, double n, double *out);

// Four-term energy expansion.
//
// # Safety
// `p` and `out` must be valid.
enum DbStatus db_energy(const struct DbPotential *p,
                        uint64_t n,
                        double ell,
                        uint32_t m_max,
                        uint32_t second_order_k,
                        struct DbEnergy *out);

// Runs the command-line interface on `argc` arguments (without the program
// name) and returns its JSON document in `*out_json`, to be released with
// `db_string_free`. `*exit_code` receives the CLI exit code.
//
// # Safety
// `argv` must hold `argc` nul-terminated strings; `out_json` and
// `exit_code` must be valid.
enum DbStatus db_cli_run(int argc, const char *const *argv, char **out_json, int *exit_code);

// # Safety
// `s` must be null or come from `db_cli_run`.
void db_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DILUTE_BOSE_H */
