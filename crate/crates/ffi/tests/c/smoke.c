#include <math.h>
#include <stdio.h>
#include <string.h>

#include "dtm_nav.h"

#define CHECK(cond)                                                    \
  do {                                                                 \
    if (!(cond)) {                                                     \
      const char *e = dtm_nav_last_error();                            \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, e ? e : ""); \
      return 1;                                                        \
    }                                                                  \
  } while (0)

int main(void) {
  DtmNavConfig *cfg = NULL;
  CHECK(dtm_nav_config_parse("trials = 4\nfeatures = 40\n", &cfg) == DTM_NAV_STATUS_OK);

  double values[2] = {30.0, 60.0};
  DtmNavMetrics *m = NULL;
  CHECK(dtm_nav_sweep(cfg, "features", values, 2, &m) == DTM_NAV_STATUS_OK);
  CHECK(dtm_nav_metrics_len(m) == 2);
  DtmNavMetricsRow row;
  CHECK(dtm_nav_metrics_row(m, 1, &row) == DTM_NAV_STATUS_OK);
  CHECK(row.value == 60.0 && row.trials == 4);
  CHECK(dtm_nav_metrics_row(m, 2, &row) == DTM_NAV_STATUS_INVALID_ARGUMENT);
  CHECK(dtm_nav_last_error() != NULL);
  dtm_nav_metrics_free(m);

  DtmNavConfig *bad = NULL;
  CHECK(dtm_nav_config_parse("height = -1.0\n", &bad) == DTM_NAV_STATUS_INVALID_CONFIG);
  CHECK(bad == NULL);
  CHECK(strstr(dtm_nav_last_error(), "height") != NULL);

  dtm_nav_config_free(cfg);
  printf("ok %s\n", dtm_nav_version());
  return 0;
}
