#include <math.h>
#include <stdio.h>
#include <string.h>

#include "qems.h"

#define CHECK(cond)                                                    \
    do {                                                               \
        if (!(cond)) {                                                 \
            const char *msg = qems_last_error();                       \
            fprintf(stderr, "failed: %s (%s)\n", #cond, msg ? msg : ""); \
            return 1;                                                  \
        }                                                              \
    } while (0)

int main(void) {
    QemsParams *p = qems_params_nominal();
    CHECK(p != NULL);

    double omega_m = 0.0;
    CHECK(qems_params_get(p, "omega_m_hz", &omega_m) == QEMS_STATUS_OK);
    CHECK(fabs(omega_m - 250e6) < 1e-3);

    CHECK(qems_params_set(p, "gamma_down_hz", -1.0) == QEMS_STATUS_CONFIG);
    CHECK(qems_last_error() != NULL);

    QemsRegime regime;
    CHECK(qems_regime(p, &regime) == QEMS_STATUS_OK);
    CHECK(regime.resolved_ok && regime.adiabatic_ok);

    QemsSteady *s = NULL;
    CHECK(qems_steady_solve(p, 4, 4, QEMS_FRAME_SIDEBAND, &s) == QEMS_STATUS_OK);
    double n_c = 0.0, n_m = 0.0, residual = 1.0;
    CHECK(qems_steady_occupations(s, &n_c, &n_m) == QEMS_STATUS_OK);
    CHECK(qems_steady_residual(s, &residual) == QEMS_STATUS_OK);
    CHECK(n_m > 0.0 && n_m < 1.0 && residual < 1e-9);
    qems_steady_free(s);

    QemsSpectrum *spec = NULL;
    CHECK(qems_spectrum_analytic(p, 250e6, 2e6, 11, &spec) == QEMS_STATUS_OK);
    CHECK(qems_spectrum_len(spec) == 11);
    double total[11];
    CHECK(qems_spectrum_copy(spec, "total", total, 11) == QEMS_STATUS_OK);
    CHECK(total[5] > total[0]);
    CHECK(qems_spectrum_copy(spec, "total", total, 3) == QEMS_STATUS_BUFFER_TOO_SMALL);
    qems_spectrum_free(spec);

    char *out = NULL;
    CHECK(qems_run("gamma_c_hz = 5e4\n", QEMS_COMMAND_PARAMS, QEMS_METHOD_DEFAULT, &out) == QEMS_STATUS_OK);
    CHECK(strstr(out, "adiabatic_ok = true") != NULL);
    qems_string_free(out);

    qems_params_free(p);
    printf("ok\n");
    return 0;
}
