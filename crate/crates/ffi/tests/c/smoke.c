#include <math.h>
#include <stdio.h>
#include "edsl.h"

int main(void) {
    EdslDataset *ds = NULL;
    if (edsl_dataset_generate(60, 20, 3, 3, 0, 0, 1.0, 7, &ds) != EDSL_OK) {
        fprintf(stderr, "generate: %s\n", edsl_last_error());
        return 1;
    }
    EdslRunSettings settings = edsl_settings_default();
    EdslTrace *trace = NULL;
    if (edsl_run(ds, &settings, 3, &trace) != EDSL_OK) {
        fprintf(stderr, "run: %s\n", edsl_last_error());
        return 1;
    }
    double beta[20];
    if (edsl_trace_len(trace) != 4 || edsl_trace_beta(trace, 3, beta, 20) != EDSL_OK) {
        return 1;
    }
    if (edsl_trace_payload_bytes(trace, 1) != 2 * 2 * 20 * 8 || !isfinite(edsl_trace_l2_error(trace, 3))) {
        return 1;
    }
    if (edsl_trace_beta(trace, 3, beta, 5) != EDSL_DATA_ERROR || edsl_last_error() == NULL) {
        return 1;
    }
    printf("%.6f\n", edsl_trace_l2_error(trace, 3));
    edsl_trace_free(trace);
    edsl_dataset_free(ds);
    return 0;
}
