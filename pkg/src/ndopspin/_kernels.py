"""Hot per-column reaction kernels, in numba and pure-numpy flavours.

The public names (po4dop_terms, orbit_theta_steps) are bound to the numba
version when available and to the fallback otherwise, controlled by
NDOPSPIN_NUMBA (see _accel). Both flavours are importable directly for
equivalence tests and benchmarks.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


def _po4dop_terms_loop(y1, light, dz, col_start, n_eu, w_cell, w_bottom,
                       alpha, kp, ki, nu, d1, d2, b1_bottom):
    n_cols = col_start.size - 1
    for c in range(n_cols):
        s = col_start[c]
        e = col_start[c + 1]
        ne = n_eu[c]
        u = 0.0
        for i in range(s, s + ne):
            g = (alpha * y1[i] / (abs(y1[i]) + kp)
                 * light[i] / (abs(light[i]) + ki))
            d1[i] = g
            d2[i] = -nu * g
            u += dz[i] * g
        export = (1.0 - nu) * u
        for i in range(s + ne, e):
            d1[i] = -export * w_cell[i] / dz[i]
            d2[i] = 0.0
        b1_bottom[c] = -export * w_bottom[c]


def po4dop_terms_numpy(y1, light, dz, col_start, n_eu, w_cell, w_bottom,
                       alpha, kp, ki, nu, d1, d2, b1_bottom):
    """Vectorized twin of the per-column loop (same in/out contract)."""
    g = alpha * y1 / (np.abs(y1) + kp) * light / (np.abs(light) + ki)
    cols = np.repeat(np.arange(col_start.size - 1), np.diff(col_start))
    layer = np.arange(y1.size) - col_start[cols]
    euph = layer < n_eu[cols]
    ge = np.where(euph, g, 0.0)
    d1[:] = ge
    d2[:] = -nu * ge
    u = np.add.reduceat(dz * ge, col_start[:-1])
    export = (1.0 - nu) * u
    aph = ~euph
    d1[aph] = -export[cols[aph]] * w_cell[aph] / dz[aph]
    b1_bottom[:] = -export * w_bottom


def _orbit_theta_steps_loop(y, n_steps, theta, dt, m_inv, m_expl, gvec,
                            light_series, alpha, kp, ki, newton_tol):
    """March the 4-dim two-box system through n_steps of the theta scheme.

    State layout: (nutrient_1, nutrient_2, dop_1, dop_2). The step equation
    y+ = m_inv @ (m_expl @ y + dt*(1-theta)*G(y)*g + dt*theta*G(y+)*g) is
    closed by scalar Newton on the first component, since the nonlinearity
    enters only through the uptake rate in the euphotic box.
    """
    a0 = 0.0
    a1 = 0.0
    a2 = 0.0
    a3 = 0.0
    for k in range(n_steps):
        il = light_series[k]
        ir = light_series[k + 1]
        g_old = (alpha * y[0] / (abs(y[0]) + kp) * il / (abs(il) + ki))
        r0 = m_expl[0, 0] * y[0] + m_expl[0, 1] * y[1] + m_expl[0, 2] * y[2] \
            + m_expl[0, 3] * y[3] + dt * (1.0 - theta) * g_old * gvec[0]
        r1 = m_expl[1, 0] * y[0] + m_expl[1, 1] * y[1] + m_expl[1, 2] * y[2] \
            + m_expl[1, 3] * y[3] + dt * (1.0 - theta) * g_old * gvec[1]
        r2 = m_expl[2, 0] * y[0] + m_expl[2, 1] * y[1] + m_expl[2, 2] * y[2] \
            + m_expl[2, 3] * y[3] + dt * (1.0 - theta) * g_old * gvec[2]
        r3 = m_expl[3, 0] * y[0] + m_expl[3, 1] * y[1] + m_expl[3, 2] * y[2] \
            + m_expl[3, 3] * y[3] + dt * (1.0 - theta) * g_old * gvec[3]
        a0 = m_inv[0, 0] * r0 + m_inv[0, 1] * r1 + m_inv[0, 2] * r2 + m_inv[0, 3] * r3
        a1 = m_inv[1, 0] * r0 + m_inv[1, 1] * r1 + m_inv[1, 2] * r2 + m_inv[1, 3] * r3
        a2 = m_inv[2, 0] * r0 + m_inv[2, 1] * r1 + m_inv[2, 2] * r2 + m_inv[2, 3] * r3
        a3 = m_inv[3, 0] * r0 + m_inv[3, 1] * r1 + m_inv[3, 2] * r2 + m_inv[3, 3] * r3
        b0 = dt * theta * (m_inv[0, 0] * gvec[0] + m_inv[0, 1] * gvec[1]
                           + m_inv[0, 2] * gvec[2] + m_inv[0, 3] * gvec[3])
        b1 = dt * theta * (m_inv[1, 0] * gvec[0] + m_inv[1, 1] * gvec[1]
                           + m_inv[1, 2] * gvec[2] + m_inv[1, 3] * gvec[3])
        b2 = dt * theta * (m_inv[2, 0] * gvec[0] + m_inv[2, 1] * gvec[1]
                           + m_inv[2, 2] * gvec[2] + m_inv[2, 3] * gvec[3])
        b3 = dt * theta * (m_inv[3, 0] * gvec[0] + m_inv[3, 1] * gvec[1]
                           + m_inv[3, 2] * gvec[2] + m_inv[3, 3] * gvec[3])
        # scalar Newton for u = y+[0]: u = a0 + b0 * G(u, ir)
        u = a0
        lf = ir / (abs(ir) + ki)
        for _ in range(60):
            gu = alpha * u / (abs(u) + kp) * lf
            f = u - a0 - b0 * gu
            dg = alpha * kp / ((abs(u) + kp) * (abs(u) + kp)) * lf
            df = 1.0 - b0 * dg
            step = f / df
            u = u - step
            if abs(step) <= newton_tol * (abs(u) + 1.0):
                break
        g_new = alpha * u / (abs(u) + kp) * lf
        y[0] = a0 + b0 * g_new
        y[1] = a1 + b1 * g_new
        y[2] = a2 + b2 * g_new
        y[3] = a3 + b3 * g_new


if USE_NUMBA:
    po4dop_terms = njit(cache=True)(_po4dop_terms_loop)
    orbit_theta_steps = njit(cache=True)(_orbit_theta_steps_loop)
else:
    po4dop_terms = po4dop_terms_numpy
    orbit_theta_steps = _orbit_theta_steps_loop

po4dop_terms_loop = _po4dop_terms_loop
orbit_theta_steps_python = _orbit_theta_steps_loop
