#include <math.h>
#include <stdio.h>

#include "contact_hj.h"

int main(void) {
    ChjSystem *sys = NULL;
    if (chj_system_new(1, "y1 - 0.5*z", &sys) != CHJ_STATUS_OK) {
        return 1;
    }
    double start[3] = {0.0, 1.0, 0.0};
    ChjTrajectory *tr = NULL;
    if (chj_rk4(sys, start, 3, 1.0, 0.01, &tr) != CHJ_STATUS_OK) {
        return 2;
    }
    double t = 0.0, p[3];
    chj_trajectory_sample(tr, chj_trajectory_len(tr) - 1, &t, p, 3);
    /* dx/dt = 1 for H = y1 - z/2. */
    if (fabs(p[0] - 1.0) > 1e-12) {
        return 3;
    }
    ChjSystem *bad = NULL;
    char msg[128];
    if (chj_system_new(1, "y1 +", &bad) != CHJ_STATUS_CONFIG || bad != NULL) {
        return 4;
    }
    if (chj_last_error_message(msg, sizeof msg) == 0) {
        return 5;
    }
    chj_trajectory_free(tr);
    chj_system_free(sys);
    printf("ok %s\n", chj_version());
    return 0;
}
