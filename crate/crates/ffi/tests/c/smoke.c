#include <stdio.h>
#include "cve_gnn.h"

#define CHECK(call)                                                     \
    do {                                                                \
        CveStatus s_ = (call);                                          \
        if (s_ != CVE_STATUS_OK) {                                      \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,           \
                    cve_last_error() ? cve_last_error() : "(none)");    \
            return 1;                                                   \
        }                                                               \
    } while (0)

int main(void) {
    CveDataset *ds = NULL;
    CveConfig *cfg = NULL;
    CveModel *model = NULL;
    double acc[3];

    CHECK(cve_dataset_gen_sbm(200, 2, 0.2, 0.01, 8, 1, &ds));
    CHECK(cve_config_new(&cfg));
    CHECK(cve_config_set(cfg, "optimizer", "heavy-ball"));
    CHECK(cve_config_set(cfg, "lr", "0.05"));
    CHECK(cve_config_set(cfg, "hidden-dim", "16"));
    CHECK(cve_config_set(cfg, "epochs", "10"));
    CHECK(cve_train(ds, cfg, &model));
    CHECK(cve_model_evaluate(model, ds, acc));
    printf("records %zu test %.4f\n", cve_model_num_records(model), acc[2]);

    if (cve_config_set(cfg, "no-such-key", "1") != CVE_STATUS_CONFIG) return 2;
    if (cve_last_error() == NULL) return 3;

    cve_model_free(model);
    cve_config_free(cfg);
    cve_dataset_free(ds);
    return acc[2] > 0.9 ? 0 : 4;
}
