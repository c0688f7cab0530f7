"""Pure-Python/numpy RK4 integrator; same contract as the compiled ``_rk4``."""
import numpy as np


def _forcing(t, loss, r, efr, efr_delay, t_g):
    ramp = min(t / t_g, 1.0)
    e = np.clip(t - efr_delay, 0.0, 1.0)
    return r * ramp + efr * e - loss


def integrate(two_h, dprime, lap, loss, r, efr, efr_delay, t_g, dt, nsteps, stride=1):
    """Fixed-step RK4 from a zero state; returns ``(df, int_df)`` samples."""
    two_h = np.asarray(two_h, dtype=float)
    dprime = np.asarray(dprime, dtype=float)
    lap = np.asarray(lap, dtype=float)
    loss = np.asarray(loss, dtype=float)
    r = np.asarray(r, dtype=float)
    efr = np.asarray(efr, dtype=float)
    efr_delay = np.asarray(efr_delay, dtype=float)
    n = two_h.shape[0]
    nsteps = int(nsteps)
    stride = int(stride)
    nout = nsteps // stride + 1
    out_f = np.zeros((nout, n))
    out_g = np.zeros((nout, n))
    inv2h = 1.0 / two_h

    def rhs(t, f, g):
        p = _forcing(t, loss, r, efr, efr_delay, t_g)
        return (p - dprime * f - lap @ g) * inv2h, f

    f = np.zeros(n)
    g = np.zeros(n)
    h2 = 0.5 * dt
    row = 1
    for step in range(nsteps):
        t = step * dt
        k1f, k1g = rhs(t, f, g)
        k2f, k2g = rhs(t + h2, f + h2 * k1f, g + h2 * k1g)
        k3f, k3g = rhs(t + h2, f + h2 * k2f, g + h2 * k2g)
        k4f, k4g = rhs((step + 1) * dt, f + dt * k3f, g + dt * k3g)
        f = f + dt / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f)
        g = g + dt / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise FloatingPointError(f"non-finite state at t={(step + 1) * dt:.6g} s")
        if (step + 1) % stride == 0:
            out_f[row] = f
            out_g[row] = g
            row += 1
    return out_f, out_g
