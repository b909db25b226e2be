#include <math.h>
#include <stdio.h>
#include "quench.h"

int main(void) {
    QuenchLattice *lat = NULL;
    if (quench_lattice_new(1, 2, 2, &lat) != QUENCH_STATUS_OK) return 1;
    QuenchState *st = NULL;
    if (quench_state_prepare(lat, 3, &st) != QUENCH_STATUS_OK) return 2;
    size_t n = quench_state_len(st);
    double probs[16];
    if (n != 16 || quench_state_probabilities(st, probs, n) != QUENCH_STATUS_OK) return 3;
    double total = 0.0;
    for (size_t i = 0; i < n; i++) total += probs[i];
    if (fabs(total - 1.0) > 1e-12) return 4;
    if (quench_lattice_new(7, 2, 2, &lat) != QUENCH_STATUS_INVALID_ARGUMENT) return 5;
    if (quench_last_error() == NULL) return 6;
    quench_state_free(st);
    printf("ok %s\n", quench_version());
    return 0;
}
