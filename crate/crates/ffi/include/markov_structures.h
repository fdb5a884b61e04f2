#ifndef MARKOV_STRUCTURES_H
#define MARKOV_STRUCTURES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Outcome of a call.
typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_POINTER = 1,
  MS_STATUS_INVALID_ARGUMENT = 2,
  MS_STATUS_BUFFER_TOO_SMALL = 3,
  MS_STATUS_DOMAIN = 4,
  MS_STATUS_INVALID_GENERATOR = 5,
  MS_STATUS_INVALID_DISTRIBUTION = 6,
  MS_STATUS_UNDEFINED_THETA = 7,
  MS_STATUS_ABSOLUTE_CONTINUITY = 8,
  MS_STATUS_BASELINE_MISMATCH = 9,
  MS_STATUS_INFEASIBLE = 10,
  MS_STATUS_CONFIG = 11,
  MS_STATUS_IO = 12,
  MS_STATUS_PANIC = 13,
} MsStatus;

typedef enum MsConsistency {
  MS_CONSISTENCY_STRONG = 0,
  MS_CONSISTENCY_WEAK_ONLY = 1,
  MS_CONSISTENCY_WEAK = 2,
  MS_CONSISTENCY_NOT_WEAK = 3,
  MS_CONSISTENCY_UNDETERMINED = 4,
} MsConsistency;

typedef enum MsModeKind {
  // Horizon fixed at `horizon`; `t` runs over `[0, horizon]`.
  MS_MODE_KIND_FIXED_T = 0,
  // Horizon `t + window`; `t` runs over `[0, until]`.
  MS_MODE_KIND_ROLLING = 1,
} MsModeKind;

typedef enum MsInstability {
  MS_INSTABILITY_SYSTEMIC_RISK = 0,
  MS_INSTABILITY_SYSTEMIC_INDIFFERENCE = 1,
  MS_INSTABILITY_SYSTEMIC_BENEFIT = 2,
} MsInstability;

// A parsed scenario file.
typedef struct MsScenario MsScenario;

// A measure series.
typedef struct MsSeries MsSeries;

// A Markov structure: joint generator, initial law and prescribed marginals.
typedef struct MsStructure MsStructure;

// A named piecewise-constant parameter. `breakpoints` may be null when
// `len` is 1, which gives a constant schedule.
typedef struct MsSchedule {
  const char *name;
  const double *breakpoints;
  const double *values;
  size_t len;
} MsSchedule;

typedef struct MsMode {
  enum MsModeKind kind;
  double horizon;
  double window;
  double until;
} MsMode;

typedef struct MsMeasurePoint {
  double t;
  double nu_dep;
  double nu_ind;
  double rho;
  double kl;
  double kappa;
  enum MsInstability classification;
} MsMeasurePoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ms_version(void);

// Message of the last failed call on this thread, or null if none failed.
// The pointer stays valid until the next failing call on the same thread.
const char *ms_last_error_message(void);

// Parses a scenario from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum MsStatus ms_scenario_parse(const char *toml, struct MsScenario **out);

// Loads a scenario from a file path or the name of a bundled scenario.
//
// # Safety
// `name_or_path` must be a NUL-terminated string and `out` a valid pointer.
enum MsStatus ms_scenario_load(const char *name_or_path, struct MsScenario **out);

// # Safety
// `scenario` must be null or a handle from this library not yet freed.
void ms_scenario_free(struct MsScenario *scenario);

// Number of structures a scenario defines.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum MsStatus ms_scenario_structure_count(const struct MsScenario *scenario, size_t *out);

// Builds the structure at `index` of a scenario.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum MsStatus ms_scenario_build(const struct MsScenario *scenario,
                                size_t index,
                                struct MsStructure **out);

// Builds one of the two-name families (`common_jumps`,
// `extreme_contagion`, `extreme_anti_contagion`, `systemic_importance`,
// `symmetric_common_jumps`) from its parameter schedules.
//
// # Safety
// `family` must be a NUL-terminated string, `params` must point to
// `n_params` schedules whose arrays hold `len` values, and `out` must be a
// valid pointer.
enum MsStatus ms_family_new(const char *family,
                            const struct MsSchedule *params,
                            size_t n_params,
                            struct MsStructure **out);

// Strong structure with simultaneous defaults at rate `eta * min(λ¹, λ²)`
// over the prescribed marginals of `base`.
//
// # Safety
// `base` must be a live handle and `out` a valid pointer.
enum MsStatus ms_strong_common_jump(const struct MsStructure *base,
                                    double eta,
                                    struct MsStructure **out);

// # Safety
// `structure` must be null or a handle from this library not yet freed.
void ms_structure_free(struct MsStructure *structure);

// Copies the label, NUL-terminated, into `buf`. `needed` receives the size
// including the terminator; pass a null `buf` to query it.
//
// # Safety
// `structure` must be a live handle, `buf` null or valid for `cap` bytes,
// and `needed` a valid pointer.
enum MsStatus ms_structure_label(const struct MsStructure *structure,
                                 char *buf,
                                 size_t cap,
                                 size_t *needed);

// Number of components and number of joint states.
//
// # Safety
// `structure` must be a live handle and both out-pointers valid.
enum MsStatus ms_structure_dimensions(const struct MsStructure *structure,
                                      size_t *components,
                                      size_t *states);

// Writes the transition matrix `P(t, s)` row-major into `out`, which must
// hold `states * states` values.
//
// # Safety
// `structure` must be a live handle and `out` valid for `len` values.
enum MsStatus ms_structure_transition(const struct MsStructure *structure,
                                      double t,
                                      double s,
                                      double *out,
                                      size_t len);

// Classifies the structure on the grid `0, step, …, end`.
//
// # Safety
// `structure` must be a live handle and `out` a valid pointer.
enum MsStatus ms_structure_classify(const struct MsStructure *structure,
                                    double end,
                                    double step,
                                    enum MsConsistency *out);

// Largest gap between the marginal rates the structure induces and its
// prescribed marginal rates, over the grid `0, step, …, end`.
//
// # Safety
// `structure` must be a live handle and `out` a valid pointer.
enum MsStatus ms_structure_law_matching_error(const struct MsStructure *structure,
                                              double end,
                                              double step,
                                              double *out);

// Measure series of the structure against the independence structure of
// its prescribed marginals. `z` and `x` hold one value per component.
//
// # Safety
// `structure` must be a live handle, `z` and `x` valid for one value per
// component, and `out` a valid pointer.
enum MsStatus ms_measure_series(const struct MsStructure *structure,
                                struct MsMode mode,
                                double grid_step,
                                const size_t *z,
                                size_t h,
                                const size_t *x,
                                struct MsSeries **out);

// # Safety
// `series` must be a live handle and `out` a valid pointer.
enum MsStatus ms_series_len(const struct MsSeries *series, size_t *out);

// # Safety
// `series` must be a live handle and `out` a valid pointer.
enum MsStatus ms_series_point(const struct MsSeries *series,
                              size_t index,
                              struct MsMeasurePoint *out);

// # Safety
// `series` must be null or a handle from this library not yet freed.
void ms_series_free(struct MsSeries *series);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARKOV_STRUCTURES_H */
