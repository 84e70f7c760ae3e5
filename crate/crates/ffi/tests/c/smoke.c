#include <stdio.h>
#include <string.h>

#include "priomac.h"

static int check(PmStatus got, PmStatus want, const char *what) {
  if (got != want) {
    const char *msg = pm_last_error_message();
    fprintf(stderr, "%s: status %d, want %d (%s)\n", what, (int)got, (int)want, msg ? msg : "");
    return 1;
  }
  return 0;
}

int main(void) {
  int failures = 0;
  PmConfig *cfg = pm_config_new();
  failures += check(pm_config_set(cfg, "n_urgent", "2"), PM_STATUS_OK, "n_urgent");
  failures += check(pm_config_set(cfg, "duration_s", "30"), PM_STATUS_OK, "duration");
  failures += check(pm_config_set(cfg, "bogus", "1"), PM_STATUS_INVALID_ARGUMENT, "bogus");

  PmResult *res = NULL;
  failures += check(pm_run(cfg, PM_PROTOCOL_FROGMAC, &res), PM_STATUS_OK, "run");
  PmClassStats normal;
  failures += check(pm_result_class_stats(res, PM_CLASS_NORMAL, &normal), PM_STATUS_OK, "stats");
  char *csv = pm_result_to_csv(res);
  if (csv == NULL || strncmp(csv, "scenario_id,", 12) != 0) {
    fprintf(stderr, "bad csv\n");
    failures++;
  }
  printf("normal %llu/%llu\n", (unsigned long long)normal.delivered,
         (unsigned long long)normal.generated);
  pm_string_free(csv);
  pm_result_free(res);
  pm_config_free(cfg);
  return failures;
}
