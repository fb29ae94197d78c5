#include <stdio.h>
#include <string.h>
#include "faithdebate.h"

int main(void) {
    const uint8_t golds[4] = {0, 0, 1, 1};
    const uint8_t preds[4] = {0, 1, 1, 0};
    double bacc = 0.0;
    if (fd_balanced_accuracy(preds, golds, 4, &bacc) != FD_STATUS_OK || bacc != 0.5) return 1;

    const uint8_t same[2] = {1, 1};
    double alpha = 0.0;
    if (fd_krippendorff_alpha(same, same, 2, &alpha) != FD_STATUS_DEGENERATE_DATA) return 2;
    if (fd_last_error() == NULL) return 3;

    FdEngine *engine = NULL;
    const char *spec = "{\"entries\":[{\"tag_pattern\":\"*\",\"responses\":[\"<label>1</label>\"]}]}";
    if (fd_engine_new_scripted(spec, NULL, &engine) != FD_STATUS_OK) return 4;
    char *out = NULL;
    if (fd_engine_evaluate(engine, "{\"record_id\":\"c1\",\"document\":\"d\",\"summary\":\"s\"}", &out) != FD_STATUS_OK) { fprintf(stderr, "%s\n", fd_last_error()); return 5; }
    int ok = strstr(out, "\"final_label\":\"faithful\"") != NULL;
    fd_string_free(out);
    fd_engine_free(engine);
    if (!ok) return 6;
    puts("ok");
    return 0;
}
