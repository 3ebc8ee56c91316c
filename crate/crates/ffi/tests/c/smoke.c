#include <stdio.h>
#include <string.h>

#include "uav_coop.h"

#define CHECK(expr)                                                        \
  do {                                                                     \
    UavStatus st_ = (expr);                                                \
    if (st_ != UAV_STATUS_OK) {                                            \
      fprintf(stderr, "%s failed: %d %s\n", #expr, (int)st_,               \
              uav_last_error_message() ? uav_last_error_message() : "");   \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  UavScenario *s = NULL;
  UavResult *r = NULL;
  size_t l = 0, k = 0, t = 0, n = 0;
  double traj[256];
  UavPowerSummary sum;
  UavCcpSettings cfg = uav_ccp_settings_default();
  char *text = NULL;

  printf("version %s\n", uav_version());
  CHECK(uav_scenario_generate(0, 0, 0.0, 7, &s));
  CHECK(uav_scenario_dims(s, &l, &k, &t));
  CHECK(uav_scenario_to_string(s, &text));
  if (strlen(text) == 0) return 1;
  uav_string_free(text);

  if (uav_plan_block(s, 0, "nonsense", NULL, &r) != UAV_STATUS_INVALID_ARGUMENT) return 1;
  if (uav_last_error_message() == NULL) return 1;

  cfg.max_iters = 2;
  CHECK(uav_plan_block(s, 0, "baseline3", &cfg, &r));
  CHECK(uav_result_summary(r, &sum));
  CHECK(uav_result_trajectory(r, NULL, 0, &n));
  if (n != l * (t + 1) * 3 || n > 256) return 1;
  CHECK(uav_result_trajectory(r, traj, n, &n));
  printf("L=%zu K=%zu T=%zu weighted=%g W\n", l, k, t, sum.weighted_total);
  if (!(sum.weighted_total > 0.0)) return 1;

  uav_result_free(r);
  uav_scenario_free(s);
  printf("smoke ok\n");
  return 0;
}
