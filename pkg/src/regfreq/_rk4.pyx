# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 integrator for the coupled swing equations."""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()


cdef inline void _rhs(int n, double t, double[::1] f, double[::1] g,
                      double[::1] two_h, double[::1] dprime, double[:, ::1] lap,
                      double[::1] loss, double[::1] r, double[::1] efr,
                      double[::1] efr_delay, double t_g,
                      double[::1] df, double[::1] dg) nogil:
    cdef int i, j
    cdef double ramp, e, p_imp, fr
    ramp = t / t_g
    if ramp > 1.0:
        ramp = 1.0
    for i in range(n):
        e = t - efr_delay[i]
        if e < 0.0:
            e = 0.0
        elif e > 1.0:
            e = 1.0
        fr = r[i] * ramp + efr[i] * e
        p_imp = 0.0
        for j in range(n):
            p_imp -= lap[i, j] * g[j]
        df[i] = (fr - loss[i] - dprime[i] * f[i] + p_imp) / two_h[i]
        dg[i] = f[i]


def integrate(double[::1] two_h, double[::1] dprime, double[:, ::1] lap,
              double[::1] loss, double[::1] r, double[::1] efr,
              double[::1] efr_delay, double t_g, double dt, long nsteps,
              long stride=1):
    """Fixed-step RK4 from a zero state; returns ``(df, int_df)`` samples.

    Rows are taken every ``stride`` steps, starting at ``t = 0``.
    """
    cdef int n = two_h.shape[0]
    cdef long nout = nsteps // stride + 1
    out_f_arr = np.zeros((nout, n))
    out_g_arr = np.zeros((nout, n))
    cdef double[:, ::1] out_f = out_f_arr
    cdef double[:, ::1] out_g = out_g_arr
    cdef double[::1] f = np.zeros(n)
    cdef double[::1] g = np.zeros(n)
    cdef double[::1] tf = np.zeros(n)
    cdef double[::1] tg = np.zeros(n)
    cdef double[::1] k1f = np.zeros(n)
    cdef double[::1] k1g = np.zeros(n)
    cdef double[::1] k2f = np.zeros(n)
    cdef double[::1] k2g = np.zeros(n)
    cdef double[::1] k3f = np.zeros(n)
    cdef double[::1] k3g = np.zeros(n)
    cdef double[::1] k4f = np.zeros(n)
    cdef double[::1] k4g = np.zeros(n)
    cdef long step, row = 1
    cdef int i
    cdef double t, h2 = 0.5 * dt, h6 = dt / 6.0
    cdef bint bad = 0
    cdef double bad_t = 0.0
    with nogil:
        for step in range(nsteps):
            t = step * dt
            _rhs(n, t, f, g, two_h, dprime, lap, loss, r, efr, efr_delay, t_g, k1f, k1g)
            for i in range(n):
                tf[i] = f[i] + h2 * k1f[i]
                tg[i] = g[i] + h2 * k1g[i]
            _rhs(n, t + h2, tf, tg, two_h, dprime, lap, loss, r, efr, efr_delay, t_g, k2f, k2g)
            for i in range(n):
                tf[i] = f[i] + h2 * k2f[i]
                tg[i] = g[i] + h2 * k2g[i]
            _rhs(n, t + h2, tf, tg, two_h, dprime, lap, loss, r, efr, efr_delay, t_g, k3f, k3g)
            for i in range(n):
                tf[i] = f[i] + dt * k3f[i]
                tg[i] = g[i] + dt * k3g[i]
            _rhs(n, (step + 1) * dt, tf, tg, two_h, dprime, lap, loss, r, efr, efr_delay, t_g, k4f, k4g)
            for i in range(n):
                f[i] += h6 * (k1f[i] + 2.0 * k2f[i] + 2.0 * k3f[i] + k4f[i])
                g[i] += h6 * (k1g[i] + 2.0 * k2g[i] + 2.0 * k3g[i] + k4g[i])
                if not isfinite(f[i]) or not isfinite(g[i]):
                    bad = 1
            if bad:
                bad_t = (step + 1) * dt
                break
            if (step + 1) % stride == 0:
                for i in range(n):
                    out_f[row, i] = f[i]
                    out_g[row, i] = g[i]
                row += 1
    if bad:
        raise FloatingPointError(f"non-finite state at t={bad_t:.6g} s")
    return out_f_arr, out_g_arr
