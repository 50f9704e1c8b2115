#include <stdio.h>
#include <string.h>
#include "verifact.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, vf_last_error()); return 1; } } while (0)

int main(void) {
    VfVerdict v;
    CHECK(vf_parse_reply("score", "42", &v) == VF_STATUS_OK);
    CHECK(v.kind == VF_VERDICT_KIND_SCORE && v.value == 42);

    char *prompt = NULL;
    CHECK(vf_render_prompt("binary", "Water is wet.", NULL, NULL, 0, &prompt) == VF_STATUS_OK);
    CHECK(strstr(prompt, "Water is wet.") != NULL);
    vf_string_free(prompt);

    VfCalibrationModel *model = NULL;
    CHECK(vf_calibration_new(0.08, -4.0, &model) == VF_STATUS_OK);
    double p = 0.0;
    CHECK(vf_calibration_apply(model, 50.0, &p) == VF_STATUS_OK);
    CHECK(p > 0.4999 && p < 0.5001);
    vf_calibration_free(model);

    VfCostLedger *ledger = NULL;
    CHECK(vf_cost_ledger_new(&ledger) == VF_STATUS_OK);
    CHECK(vf_cost_ledger_record(ledger, "gpt-4", 100000, 3000) == VF_STATUS_OK);
    double usd = 0.0;
    CHECK(vf_cost_ledger_usd(ledger, "gpt-4", &usd) == VF_STATUS_OK);
    CHECK(usd > 3.1799 && usd < 3.1801);
    CHECK(vf_cost_ledger_usd(ledger, "unknown", &usd) == VF_STATUS_INVALID_ARGUMENT);
    CHECK(strlen(vf_last_error()) > 0);
    vf_cost_ledger_free(ledger);

    printf("ok %s\n", vf_version());
    return 0;
}
