#include <math.h>
#include <stdio.h>
#include "boasbuck.h"

static double square(double s, void *ctx) {
    (void)ctx;
    return s * s;
}

#define CHECK(call)                                                        \
    do {                                                                   \
        BbStatus st_ = (call);                                             \
        if (st_ != BB_STATUS_OK) {                                         \
            fprintf(stderr, "%s: %s\n", #call, bb_last_error_message());   \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    BbSystem *sys = NULL;
    BbOperator *op = NULL;
    BbValue v;
    BbMoments m;

    CHECK(bb_system_builtin("exp1", &sys));
    CHECK(bb_operator_new(sys, BB_OPERATOR_KIND_DURRMEYER, 41, &op));
    CHECK(bb_operator_apply(op, square, NULL, NULL, 0, 1.0, &v));
    CHECK(bb_moments(sys, 41, 1.0, &m));
    if (fabs(v.value - m.durrmeyer[2]) > 1e-7) {
        fprintf(stderr, "mismatch %.15g vs %.15g\n", v.value, m.durrmeyer[2]);
        return 1;
    }
    if (bb_system_builtin("nope", &sys) != BB_STATUS_INVALID_ARGUMENT) {
        return 1;
    }
    bb_operator_free(op);
    bb_system_free(sys);
    printf("%.6f\n", v.value);
    return 0;
}
