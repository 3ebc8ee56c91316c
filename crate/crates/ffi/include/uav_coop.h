#ifndef UAV_COOP_H
#define UAV_COOP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum UavStatus {
  UAV_STATUS_OK = 0,
  UAV_STATUS_NULL_POINTER = 1,
  UAV_STATUS_INVALID_ARGUMENT = 2,
  UAV_STATUS_IO = 3,
  UAV_STATUS_PARSE = 4,
  UAV_STATUS_INFEASIBLE = 5,
  UAV_STATUS_SOLVER = 6,
  UAV_STATUS_NUMERICAL = 7,
  UAV_STATUS_BUFFER_TOO_SMALL = 8,
  UAV_STATUS_PANIC = 9,
} UavStatus;

/* Opaque scenario handle. */
typedef struct UavScenario UavScenario;

/* Opaque result of one planned block. */
typedef struct UavResult UavResult;

/* Solver knobs. Obtain defaults from uav_ccp_settings_default. */
typedef struct UavCcpSettings {
  /* Stopping tolerance; relative to the first objective unless epsilon_absolute. */
  double epsilon;
  bool epsilon_absolute;
  uint32_t max_iters;
  /* Penalty weight; <= 0 keeps the scenario's value. */
  double beta;
  bool polish;
} UavCcpSettings;

/* Power figures of a planned block, in watts. */
typedef struct UavPowerSummary {
  double weighted_total;
  double bs_total;
  double uav_tx_total;
  double uav_nav_total;
  double per_uav_avg;
  uint32_t iterations;
  bool converged;
} UavPowerSummary;

#ifdef __cplusplus
extern "C" {
#endif

/* Library version as a static NUL-terminated string. */
const char *uav_version(void);

/* Message of the last failed call on this thread, or NULL when it succeeded.
 * The pointer stays valid until the next library call on the same thread. */
const char *uav_last_error_message(void);

void uav_string_free(char *s);

UavCcpSettings uav_ccp_settings_default(void);

/* Samples a desk-scale scenario. Zero counts keep the desk defaults;
 * r_min_bps <= 0 keeps the default rate target. */
UavStatus uav_scenario_generate(uint32_t num_uavs,
                                uint32_t num_users,
                                double r_min_bps,
                                uint64_t seed,
                                UavScenario **out);

UavStatus uav_scenario_load(const char *path, UavScenario **out);

UavStatus uav_scenario_parse(const char *text, UavScenario **out);

/* Free the string with uav_string_free. */
UavStatus uav_scenario_to_string(const UavScenario *scenario, char **out);

/* Any of the outputs may be NULL. */
UavStatus uav_scenario_dims(const UavScenario *scenario,
                            size_t *num_uavs,
                            size_t *num_users,
                            size_t *num_slots);

void uav_scenario_free(UavScenario *scenario);

/* Plans one block with the named scheme ("proposed", "baseline1" .. "baseline4").
 * settings may be NULL for the defaults. */
UavStatus uav_plan_block(const UavScenario *scenario,
                         uint32_t block_index,
                         const char *scheme,
                         const UavCcpSettings *settings,
                         UavResult **out);

UavStatus uav_result_summary(const UavResult *result, UavPowerSummary *out);

/* Copies the trajectory as [l][t][xyz] doubles, t = 0..=T.
 * Pass a NULL buffer to query the length through len_out. */
UavStatus uav_result_trajectory(const UavResult *result,
                                double *buf,
                                size_t len,
                                size_t *len_out);

/* Copies the cooperation indicators as [l][k] bytes (0 or 1). */
UavStatus uav_result_coop(const UavResult *result, uint8_t *buf, size_t len, size_t *len_out);

/* Per-iteration trace as CSV; free with uav_string_free. */
UavStatus uav_result_trace_csv(const UavResult *result, char **out);

void uav_result_free(UavResult *result);

#ifdef __cplusplus
}  /* extern "C" */
#endif

#endif  /* UAV_COOP_H */
