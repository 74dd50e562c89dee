#include <stdio.h>
#include <string.h>

#include "pmgv.h"

static const char *CONFIG =
    "{\"n_rounds\":4,\"seed\":5,\"scripted\":{"
    "\"bob_choices\":[\"C3\",\"C1\",\"C4\",\"C2\"],"
    "\"alice_guesses\":[\"C4\",\"C1\",\"C3\",\"C2\"]}}";

int main(void) {
    PmgvSession *session = NULL;
    if (pmgv_session_new(CONFIG, &session) != PMGV_STATUS_OK) {
        fprintf(stderr, "new: %s\n", pmgv_last_error());
        return 1;
    }
    if (pmgv_session_run(session) != PMGV_STATUS_OK) {
        fprintf(stderr, "run: %s\n", pmgv_last_error());
        return 1;
    }
    uint64_t raw = 0, sifted = 0;
    double qber = -1.0;
    pmgv_session_counts(session, &raw, &sifted);
    pmgv_session_qber(session, &qber);

    char key[16];
    size_t needed = 0;
    if (pmgv_session_key(session, PMGV_ROLE_BOB, key, sizeof key, &needed) != PMGV_STATUS_OK) {
        return 1;
    }
    double corr = 0.0;
    pmgv_analytic_correlation(PMGV_CORRELATION_C1, 45.0, 45.0, &corr);

    PmgvSession *bad = NULL;
    PmgvStatus status = pmgv_session_new("{\"n_rounds\":1}", &bad);

    printf("raw=%llu sifted=%llu qber=%g key=%s corr=%g bad=%d null=%d\n",
           (unsigned long long)raw, (unsigned long long)sifted, qber, key, corr,
           (int)status, bad == NULL);
    pmgv_session_free(session);
    return 0;
}
