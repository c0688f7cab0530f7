"""Exact two-region solution while PFR is ramping.

In the Laplace domain each regional frequency is a rational function

    F_i(s) = N_i(s) / (s^2 Q(s)),
    Q(s) = 4 H1 H2 s^3 + 2 (D1' H2 + D2' H1) s^2 + (2 H T + D1' D2') s + D' T

which splits as ``c_t / s^2 + c_const / s + q(s) / Q(s)``.  The cubic ``Q``
is factored with Cardano's formula and the residues give

    df_i(t) = c_t t + c_const + sum_k Z_k exp(z_k t).

Partial fractions are identified numerically (linear solve); the long
closed-form constants for the faulted region are kept only as a
cross-check (:func:`transcribed_partial_fractions`).

For three or more regions no closed form exists in general (the pole
polynomial has degree ``2N - 1 >= 5``); :func:`pole_structure` reports the
pole layout numerically instead.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .coi import CoiParams, coi_frequency
from .model import FaultSpec, SystemModel


class RootStructureError(ValueError):
    """The cubic does not have one real root and a complex-conjugate pair."""


@dataclass(frozen=True, eq=False)
class RationalLaplace:
    num: np.ndarray  # descending powers, degree <= 3
    den: np.ndarray  # descending powers, degree 5, den[-2:] == 0
    region: str = ""
    T_g: float | None = None
    coi: CoiParams | None = None
    transcribed: "PartialFractions | None" = None

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    @property
    def cubic(self) -> np.ndarray:
        return self.den[:4]


@dataclass(frozen=True, eq=False)
class PartialFractions:
    c_t: float  # coefficient of 1/s^2, Hz/s
    c_const: float  # coefficient of 1/s, Hz
    cubic_num: np.ndarray  # quadratic numerator q(s), descending
    cubic_den: np.ndarray  # Q(s), descending
    region: str = ""
    T_g: float | None = None
    coi: CoiParams | None = None
    condition: float = float("nan")
    transcription_error: float | None = None

    def recombine(self) -> tuple[np.ndarray, np.ndarray]:
        """Numerator and denominator over ``s^2 Q(s)``."""
        q = self.cubic_den
        num = self.c_t * np.concatenate([[0.0], q]) + self.c_const * np.concatenate([q, [0.0]])
        num = num + np.concatenate([self.cubic_num, [0.0, 0.0]])
        den = np.concatenate([q, [0.0, 0.0]])
        return num, den


@dataclass(frozen=True)
class OscillationMode:
    a: float  # attenuation, 1/s
    A: float  # amplitude, Hz
    omega: float  # rad/s
    phi: float  # rad, sine convention, (-pi, pi]
    C: float  # Hz

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self.a * t) * self.A * np.sin(self.omega * t + self.phi) + self.C

    @property
    def rocof_bound(self) -> float:
        """``A * omega``: bound on the oscillation slope with attenuation neglected."""
        return self.A * self.omega


@dataclass(frozen=True)
class ModeReport:
    mode: OscillationMode
    real_root: float
    real_residue: float
    coi_rate: float  # D'/2H
    coi_residue: float  # K of the COI exponential
    coi_discrepancy: float  # sup_t |Z1 exp(z1 t) - K exp(-D' t / 2H)| on [0, T_g]
    initial_value: float  # C + A sin(phi) + discrepancy(0); zero up to rounding


@dataclass(frozen=True, eq=False)
class TimeDomainSolution:
    c_t: float
    c_const: float
    roots: np.ndarray
    residues: np.ndarray
    conjugate_pair: bool
    T_g: float | None = None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.c_t * t + self.c_const
        if self.conjugate_pair:
            z1, z2 = self.roots[0].real, self.roots[1]
            Z1, Z2 = self.residues[0].real, self.residues[1]
            out = out + Z1 * np.exp(z1 * t)
            out = out + 2.0 * np.exp(z2.real * t) * (Z2.real * np.cos(z2.imag * t) - Z2.imag * np.sin(z2.imag * t))
        else:
            for z, Z in zip(self.roots.real, self.residues.real):
                out = out + Z * np.exp(z * t)
        return float(out) if out.ndim == 0 else out


# -- construction --------------------------------------------------------------


def _two_region(system: SystemModel) -> tuple[str, str, float]:
    if system.n_regions != 2:
        raise ValueError(f"two-region solution requires exactly 2 regions (got {system.n_regions})")
    a, b = system.region_ids
    t = system.line_stiffness(a, b)
    if not t > 0:
        raise ValueError("regions are not connected")
    return a, b, t


def _losses(system: SystemModel, fault: FaultSpec | None, losses: Mapping[str, float] | None) -> dict[str, float]:
    out = {rid: 0.0 for rid in system.region_ids}
    if fault is not None:
        out[fault.region] += fault.P_L
    for k, v in (losses or {}).items():
        out[k] += float(v)
    return out


def build_laplace_solution(
    system: SystemModel,
    fault: FaultSpec | None = None,
    losses: Mapping[str, float] | None = None,
) -> dict[str, RationalLaplace]:
    """Rational Laplace solution for both regions.

    ``losses`` may add infeed losses per region on top of ``fault`` (the
    system is linear, so simultaneous losses superpose).
    """
    a, b, T = _two_region(system)
    ids = (a, b)
    loss = _losses(system, fault, losses)
    rg = [system.region(r) for r in ids]
    H = rg[0].H + rg[1].H
    L_tot = loss[ids[0]] + loss[ids[1]]
    armed = 1.0 if L_tot != 0.0 else 0.0
    Rk = (armed * rg[0].R, armed * rg[1].R)
    R = Rk[0] + Rk[1]
    Dp = rg[0].D_prime + rg[1].D_prime
    Tg = system.T_g
    coi = CoiParams(H=H, D_prime=Dp, R=R, P_L=L_tot, T_g=Tg)
    cubic = np.array([
        4.0 * rg[0].H * rg[1].H,
        2.0 * (rg[0].D_prime * rg[1].H + rg[1].D_prime * rg[0].H),
        2.0 * H * T + rg[0].D_prime * rg[1].D_prime,
        Dp * T,
    ])
    den = np.concatenate([cubic, [0.0, 0.0]])
    out = {}
    for k in (0, 1):
        me, other = rg[k], rg[1 - k]
        Lk = loss[me.id]
        num = np.array([
            -2.0 * other.H * Lk,
            2.0 * other.H * Rk[k] / Tg - other.D_prime * Lk,
            other.D_prime * Rk[k] / Tg - T * L_tot,
            R * T / Tg,
        ])
        trans = None
        if loss[other.id] == 0.0 and Lk != 0.0:
            trans = transcribed_partial_fractions(system, me.id, Lk)
        out[me.id] = RationalLaplace(num=num, den=den, region=me.id, T_g=Tg, coi=coi, transcribed=trans)
    return out


def transcribed_partial_fractions(system: SystemModel, region: str, P_L: float) -> PartialFractions:
    """Closed-form decomposition for the region that loses ``P_L``.

    Written with the faulted region as "1"; used as an independent check
    on :func:`partial_fractions`.
    """
    a, b, T = _two_region(system)
    me = system.region(region)
    other = system.region(b if region == a else a)
    H1, H2 = me.H, other.H
    D1, D2 = me.D_prime, other.D_prime
    R1, R2 = me.R, other.R
    H, R, D = H1 + H2, R1 + R2, D1 + D2
    Tg, L = system.T_g, P_L
    c_t = R / (D * Tg)
    c_const = -(2 * H * R + D * Tg * L - D2 * (R1 * D2 - R2 * D1) / T) / (D * D * Tg)
    C1 = 4 * H1 * H2 * (L * Tg * T * D + 2 * H * R * T - R1 * D2**2 + R2 * D1 * D2)
    C2 = 2 * (
        L * Tg * T * D2 * (H1 - H2) * (D1 + D2)
        + 2 * R * T * (D2 * H1**2 + D1 * H2**2)
        + D1 * D2**2 * (H1 * R2 - H2 * R1)
        + D1**2 * D2 * H2 * R2
        - D2**3 * H1 * R1
    )
    C3 = (
        4 * H**2 * R * T**2
        + 2 * H * D * L * Tg * T**2
        - D2**2 * T * (L * Tg * D + 2 * H1 * (2 * R1 + R2))
        + 2 * D1 * D2 * T * (H1 * R2 + 2 * H2 * R1 + H2 * R2)
        - 2 * D1**2 * T * H2 * R2
        + D1 * D2**2 * (R2 * D1 - R1 * D2)
    )
    scale = Tg * T * D * D
    cubic = np.array([4 * H1 * H2, 2 * (D1 * H2 + D2 * H1), 2 * H * T + D1 * D2, D * T])
    return PartialFractions(
        c_t=c_t,
        c_const=c_const,
        cubic_num=np.array([C1, C2, C3]) / scale,
        cubic_den=cubic,
        region=region,
        T_g=Tg,
    )


# -- decomposition -------------------------------------------------------------

MAX_CONDITION = 1e13


def _rel_diff(x: np.ndarray, ref: np.ndarray) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ref = np.atleast_1d(np.asarray(ref, dtype=float))
    scale = max(float(np.max(np.abs(ref))), 1e-300)
    return float(np.max(np.abs(x - ref)) / scale)


def partial_fraction_mismatch(pf: PartialFractions, other: PartialFractions) -> float:
    """Largest relative coefficient mismatch between two decompositions."""
    return max(
        _rel_diff([pf.c_t], [other.c_t]),
        _rel_diff([pf.c_const], [other.c_const]),
        _rel_diff(pf.cubic_num, other.cubic_num),
    )


def partial_fractions(rl: RationalLaplace) -> PartialFractions:
    """Split ``N / (s^2 Q)`` into ``c_t/s^2 + c_const/s + q/Q`` by a linear solve.

    Unknowns ``(c_t, c_const, q2, q1, q0)`` satisfy
    ``N = c_t Q + c_const s Q + s^2 q`` coefficient-wise.  Columns are
    equilibrated before solving; the condition number is reported and
    ``numpy.linalg.LinAlgError`` is raised above ``MAX_CONDITION``.
    """
    den = np.asarray(rl.den, dtype=float)
    if den.shape != (6,) or den[-1] != 0.0 or den[-2] != 0.0 or not den[0] > 0:
        raise ValueError("denominator must be s^2 times a cubic with positive leading coefficient")
    q = den[:4]
    num = np.zeros(5)
    n = np.asarray(rl.num, dtype=float)
    num[5 - n.size:] = n
    # ascending powers s^0..s^4
    qa = q[::-1]
    m = np.zeros((5, 5))
    m[0:4, 0] = qa  # c_t * Q
    m[1:5, 1] = qa  # c_const * s * Q
    m[2, 4] = 1.0  # q0 s^2
    m[3, 3] = 1.0  # q1 s^3
    m[4, 2] = 1.0  # q2 s^4
    rhs = num[::-1]
    col = np.linalg.norm(m, axis=0)
    ms = m / col
    row = np.linalg.norm(ms, axis=1)
    ms = ms / row[:, None]
    cond = float(np.linalg.cond(ms))
    if not cond < MAX_CONDITION:
        raise np.linalg.LinAlgError(f"ill-conditioned partial-fraction identification (cond={cond:.3g})")
    x = np.linalg.solve(ms, rhs / row) / col
    pf = PartialFractions(
        c_t=float(x[0]),
        c_const=float(x[1]),
        cubic_num=np.array([x[2], x[3], x[4]]),
        cubic_den=q.copy(),
        region=rl.region,
        T_g=rl.T_g,
        coi=rl.coi,
        condition=cond,
    )
    if rl.transcribed is not None:
        err = partial_fraction_mismatch(pf, rl.transcribed)
        pf = PartialFractions(**{**pf.__dict__, "transcription_error": err})
    return pf


# -- cubic roots ---------------------------------------------------------------


def _cbrt(x: float) -> float:
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def _newton_polish(coeffs: np.ndarray, z: complex, iters: int = 3) -> complex:
    dcoeffs = np.polyder(coeffs)
    for _ in range(iters):
        p = np.polyval(coeffs, z)
        dp = np.polyval(dcoeffs, z)
        if dp == 0:
            break
        step = p / dp
        z = z - step
        if abs(step) <= 1e-16 * max(abs(z), 1e-300):
            break
    return z


def cubic_roots(coeffs) -> np.ndarray:
    """Roots of ``a s^3 + b s^2 + c s + d`` by Cardano's formula.

    Returned as complex; with one real root and a conjugate pair the order
    is ``[real, upper, lower]``.  Three real roots are sorted descending.
    Each root gets a few Newton iterations against the original
    polynomial.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (4,) or c[0] == 0:
        raise ValueError("need 4 coefficients with a non-zero leading term")
    _, b, cc, d = c / c[0]
    shift = -b / 3.0
    p = cc - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * cc / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0:
        sq = math.sqrt(disc)
        u = _cbrt(-q / 2.0 - math.copysign(sq, q))
        v = -p / (3.0 * u) if u != 0 else _cbrt(-q)
        y1 = u + v
        re = -y1 / 2.0
        im = math.sqrt(3.0) / 2.0 * abs(u - v)
        roots = [complex(y1 + shift, 0.0), complex(re + shift, im), complex(re + shift, -im)]
        polished = [_newton_polish(c, roots[0].real + 0j)]
        z2 = _newton_polish(c, roots[1])
        polished += [complex(z2.real, abs(z2.imag)), complex(z2.real, -abs(z2.imag))]
        polished[0] = complex(polished[0].real, 0.0)
        return np.array(polished)
    if p == 0:
        ys = [0.0, 0.0, 0.0]
    else:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (p * r)))
        theta = math.acos(arg) / 3.0
        ys = [r * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    roots = sorted((_newton_polish(c, complex(y + shift, 0.0)).real for y in ys), reverse=True)
    return np.array([complex(z, 0.0) for z in roots])


def has_conjugate_pair(roots: np.ndarray, tol: float = 1e-12) -> bool:
    """True if ``roots`` are one real root and a non-degenerate complex pair."""
    scale = max(float(np.max(np.abs(roots))), 1e-300)
    return bool(abs(roots[1].imag) > tol * scale and abs(roots[0].imag) <= tol * scale)


# -- time domain ---------------------------------------------------------------


def residues(pf: PartialFractions, roots: np.ndarray) -> np.ndarray:
    dq = np.polyder(pf.cubic_den)
    return np.array([np.polyval(pf.cubic_num, z) / np.polyval(dq, z) for z in roots])


def time_domain_solution(pf: PartialFractions, allow_real: bool = True) -> TimeDomainSolution:
    """Closed-form ``t -> df(t)`` (Hz), valid on ``[0, T_g]``.

    Raises :class:`RootStructureError` for three real roots unless
    ``allow_real`` (then three real exponentials are used).
    """
    roots = cubic_roots(pf.cubic_den)
    pair = has_conjugate_pair(roots)
    if not pair and not allow_real:
        raise RootStructureError(f"cubic has three real roots: {roots.real}")
    res = residues(pf, roots)
    return TimeDomainSolution(
        c_t=pf.c_t, c_const=pf.c_const, roots=roots, residues=res, conjugate_pair=pair, T_g=pf.T_g
    )


def _wrap_phase(phi: float) -> float:
    w = math.remainder(phi, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def extract_modes(pf: PartialFractions, n_grid: int = 2001) -> ModeReport:
    """Oscillation parameters of the conjugate pole pair plus COI comparison.

    ``A = 2|Z2|`` and ``phi = arg(Z2) + pi/2`` turn the pair into
    ``A exp(-a t) sin(omega t + phi)``.  ``C`` is the gap between the
    ``1/s`` coefficient and its COI counterpart.
    """
    if pf.coi is None:
        raise ValueError("partial fractions carry no COI parameters")
    roots = cubic_roots(pf.cubic_den)
    if not has_conjugate_pair(roots):
        raise RootStructureError(f"cubic has three real roots: {roots.real}")
    res = residues(pf, roots)
    z1, z2 = roots[0].real, roots[1]
    Z1, Z2 = res[0].real, res[1]
    A = 2.0 * abs(Z2)
    phi = _wrap_phase(cmath.phase(Z2) + math.pi / 2.0) if A > 0 else 0.0
    coi = pf.coi
    K = (2.0 * coi.H * coi.R + coi.D_prime * coi.T_g * coi.P_L) / (coi.D_prime**2 * coi.T_g)
    c_coi = -K
    C = pf.c_const - c_coi
    mode = OscillationMode(a=-z2.real, A=A, omega=abs(z2.imag), phi=phi, C=C)
    t_end = pf.T_g if pf.T_g is not None else coi.T_g
    t = np.linspace(0.0, t_end, n_grid)
    disc = Z1 * np.exp(z1 * t) - K * np.exp(-coi.rate * t)
    return ModeReport(
        mode=mode,
        real_root=z1,
        real_residue=Z1,
        coi_rate=coi.rate,
        coi_residue=K,
        coi_discrepancy=float(np.max(np.abs(disc))),
        initial_value=C + A * math.sin(phi) + float(disc[0]),
    )


def approximate_trace(pf: PartialFractions, report: ModeReport) -> Callable[[np.ndarray], np.ndarray]:
    """``t -> df_COI(t) + A exp(-a t) sin(omega t + phi) + C``."""
    coi = pf.coi

    def f(t):
        return coi_frequency(coi, t) + report.mode(t)

    return f


# -- N regions -------------------------------------------------------------------


@dataclass(frozen=True)
class PoleStructure:
    real: np.ndarray
    pairs: np.ndarray  # upper-half-plane members of conjugate pairs
    zero: int  # number of poles at the origin (integrator)

    @property
    def holds(self) -> bool:
        """One real pole and ``N - 1`` conjugate pairs (excluding the origin)."""
        return self.real.size == 1


def pole_structure(system: SystemModel, tol: float = 1e-9) -> PoleStructure:
    """Finite non-zero poles of the N-region response (degree ``2N - 1``).

    These are the eigenvalues of the homogeneous state matrix without the
    single integrator pole at the origin.
    """
    from .dynamics import state_matrix

    ev = np.linalg.eigvals(state_matrix(system))
    scale = max(float(np.max(np.abs(ev))), 1e-300)
    zero = int(np.sum(np.abs(ev) <= tol * scale))
    nz = ev[np.abs(ev) > tol * scale]
    real_mask = np.abs(nz.imag) <= tol * scale
    real = np.sort(nz[real_mask].real)
    pairs = nz[~real_mask]
    pairs = pairs[pairs.imag > 0]
    return PoleStructure(real=real, pairs=np.sort_complex(pairs), zero=zero)
