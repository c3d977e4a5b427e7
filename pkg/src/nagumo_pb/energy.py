"""Autonomous comparison system ``v'' - g v + nbar F0(v) = 0``.

Energy ``E(x, y) = y^2/2 - g x^2/2 + nbar * int_0^x F0``, its minimum
``a_nbar`` above ``a``, a convexity band ``[a, b]``, closed level curves
around ``(a_nbar, 0)`` and their periods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect, brentq, minimize_scalar

from .flow import DEFAULT_SETTINGS, IntegratorSettings, PhaseState, integrate
from .model import ModelError, ModifiedNonlinearity, SystemParams, Weight

__all__ = [
    "EnergyError",
    "AutonomousSystem",
    "Band",
    "LevelCurve",
    "energy",
    "equilibrium",
    "choose_band",
    "level_curve",
    "time_map",
    "first_return_time",
    "rot_floor",
    "period_bound",
]

_BISECT_TOL = 1e-12


class EnergyError(ValueError):
    """Hypothesis violation or inadmissible level (carries a short ``code``)."""

    def __init__(self, message: str, code: str = "energy-error"):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class AutonomousSystem:
    g: float
    nbar: float
    f0: ModifiedNonlinearity

    def __post_init__(self):
        if not self.nbar > 0.0:
            raise EnergyError("nbar must be positive")

    @classmethod
    def from_params(cls, p: SystemParams, nbar: float | None = None) -> "AutonomousSystem":
        if nbar is None:
            if p.weight.nbar is None:
                raise ModelError("weight has not been split; pass nbar")
            nbar = p.weight.nbar
        return cls(p.g, float(nbar), p.nonlinearity)

    def params(self, beta: float = 1.0) -> SystemParams:
        """The same system as a (constant-weight) :class:`SystemParams`."""
        from .model import split_weight

        return SystemParams(self.g, split_weight(Weight.constant(self.nbar, beta), "mean"), self.f0)

    def potential(self, x):
        """``E(x, 0)``."""
        x = np.asarray(x, dtype=float)
        return -0.5 * self.g * x ** 2 + self.nbar * self.f0.primitive(x)

    def force(self, x):
        """``dE(x, 0)/dx = -g x + nbar F0(x)``."""
        return -self.g * np.asarray(x) + self.nbar * self.f0(x)


def energy(z, sys: AutonomousSystem):
    """``E(x, y)``; ``z`` may be a single state or an ``(n, 2)`` array."""
    z = np.asarray(z, dtype=float)
    x, y = z[..., 0], z[..., 1]
    return 0.5 * y ** 2 + sys.potential(x)


def equilibrium(sys: AutonomousSystem) -> float:
    """Root of ``g s = nbar F0(s)`` in ``]a, 1[`` nearest ``a`` (the centre ``a_nbar``)."""
    a = sys.f0.a
    phi = lambda s: sys.g * s - sys.nbar * sys.f0(s)  # noqa: E731
    grid = np.linspace(a, 1.0, 2001)
    i = int(np.argmin(phi(grid)))
    res = minimize_scalar(phi, bounds=(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]),
                          method="bounded", options={"xatol": 1e-12})
    s_low = float(res.x) if res.fun < phi(grid[i]) else float(grid[i])
    if not phi(s_low) < 0.0:
        raise EnergyError(f"g s - nbar F0(s) has no sign change on ]a,1[ for nbar={sys.nbar}",
                          code="no-equilibrium")
    return float(bisect(phi, a, s_low, xtol=_BISECT_TOL, rtol=4 * np.finfo(float).eps))


@dataclass(frozen=True)
class Band:
    a: float
    b: float
    d0: float
    mu0: float


def choose_band(sys: AutonomousSystem) -> Band:
    """``b``: first point right of ``a`` where ``F0'`` drops to ``F0'(a)/2``; ``d0 = min F0'`` on ``[a, b]``."""
    f0 = sys.f0
    a = f0.a
    slope_a = float(f0.deriv(a))
    if slope_a <= 0.0:
        raise EnergyError(f"F'(a) = {slope_a:.4g} must be positive", code="hypothesis")
    half = 0.5 * slope_a
    grid = np.linspace(a, 1.0, 4097)
    below = np.flatnonzero(f0.deriv(grid) < half)
    if below.size:
        i = int(below[0])
        b = float(bisect(lambda s: f0.deriv(s) - half, grid[i - 1], grid[i], xtol=1e-13))
    else:
        b = 1.0 - 1e-9
    fine = np.linspace(a, b, 4097)
    vals = f0.deriv(fine)
    j = int(np.argmin(vals))
    lo, hi = fine[max(j - 1, 0)], fine[min(j + 1, fine.size - 1)]
    d0 = float(vals[j])
    if hi > lo:
        res = minimize_scalar(lambda s: float(f0.deriv(s)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        d0 = min(d0, float(res.fun))
    band = Band(a=a, b=b, d0=d0, mu0=sys.g / d0)
    if sys.nbar <= band.mu0:
        raise EnergyError(f"nbar={sys.nbar} must exceed mu0={band.mu0:.4g}", code="band")
    an = equilibrium(sys)
    if not a < an < b:
        raise EnergyError(f"a_nbar={an:.6g} outside ]a, b[ = ]{a}, {b:.6g}[", code="band")
    return band


@dataclass
class LevelCurve:
    """Closed level set ``E = c`` around ``(a_nbar, 0)``, boundary listed counter-clockwise by angle."""

    nbar: float
    c: float
    a_nbar: float
    b_minus: float
    b_plus: float
    boundary: np.ndarray = field(repr=False)

    @property
    def center(self) -> PhaseState:
        return PhaseState(self.a_nbar, 0.0)

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        u = self.boundary - np.array([self.a_nbar, 0.0])
        return np.arctan2(u[:, 1], u[:, 0]), np.hypot(u[:, 0], u[:, 1])

    def radius_at(self, angle) -> np.ndarray:
        """Distance from the centre to the curve along ``angle`` (periodic interpolation)."""
        ang, rad = self.polar()
        order = np.argsort(ang)
        return np.interp(np.mod(np.asarray(angle) + math.pi, 2 * math.pi) - math.pi,
                         ang[order], rad[order], period=2 * math.pi)

    def is_star_shaped(self) -> bool:
        ang, _ = self.polar()
        d = np.diff(np.unwrap(np.append(ang, ang[0])))
        return bool(np.all(d > 0) or np.all(d < 0))

    def resample(self, n: int) -> np.ndarray:
        """``n`` boundary points at equal angles around the centre."""
        ang = -math.pi + 2 * math.pi * np.arange(n) / n
        r = self.radius_at(ang)
        return np.column_stack((self.a_nbar + r * np.cos(ang), r * np.sin(ang)))


_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


def _drop(sys: AutonomousSystem, length, end: float) -> np.ndarray:
    """``E(end, 0) - E(end - length, 0) = int (-g x + nbar F0(x)) dx`` without cancellation.

    Exact for polynomial ``F`` inside ``[0, 1]`` (degree <= 15).
    """
    half = 0.5 * np.atleast_1d(np.asarray(length, dtype=float))
    mid = end - half
    xs = mid[:, None] + half[:, None] * _GL8_X[None, :]
    return half * np.sum(_GL8_W[None, :] * sys.force(xs), axis=1)


def level_curve(sys: AutonomousSystem, band: Band, c_rule="max-allowed",
                n_points: int = 512) -> LevelCurve:
    """Level curve ``E = c`` inside the band.

    ``c_rule`` is ``"max-allowed"`` (``c = min{E(a,0), E(b,0)}``) or
    ``("fraction", lam)`` with ``0 < lam <= 1`` interpolating from the
    equilibrium level.
    """
    an = equilibrium(sys)
    e_min = float(sys.potential(an))
    e_a, e_b = float(sys.potential(band.a)), float(sys.potential(band.b))
    c_max = min(e_a, e_b)
    if c_rule == "max-allowed":
        c = c_max
    else:
        kind, lam = c_rule
        if kind != "fraction" or not 0.0 < lam <= 1.0:
            raise EnergyError(f"invalid level rule {c_rule!r}", code="invalid-level")
        c = e_min + lam * (c_max - e_min)
    if not e_min < c <= c_max:
        raise EnergyError(f"level c={c} outside ]{e_min}, {c_max}]", code="invalid-level")

    def excess(x):
        return float(sys.potential(x)) - c

    b_minus = band.a if c == e_a else float(bisect(excess, band.a, an, xtol=_BISECT_TOL))
    b_plus = band.b if c == e_b else float(bisect(excess, an, band.b, xtol=_BISECT_TOL))
    # upper branch right-to-left, lower branch left-to-right: counter-clockwise around the centre
    k = n_points // 2
    phi = np.linspace(0.0, math.pi, k + 1)
    xs_up = an + np.where(np.cos(phi) >= 0, b_plus - an, an - b_minus) * np.cos(phi)
    y_up = np.sqrt(np.maximum(2.0 * (c - sys.potential(xs_up)), 0.0))
    xs_lo = xs_up[::-1][1:-1]
    y_lo = -y_up[::-1][1:-1]
    boundary = np.vstack((np.column_stack((xs_up, y_up)), np.column_stack((xs_lo, y_lo))))
    lc = LevelCurve(sys.nbar, c, an, b_minus, b_plus, boundary)
    if not lc.is_star_shaped():
        raise EnergyError("traced level curve is not star-shaped around the equilibrium",
                          code="invalid-level")
    return lc


def _branch_time(sys: AutonomousSystem, an: float, end: float, c_end: float, nodes: int) -> float:
    """``sqrt(2) int du / sqrt(c - E(u, 0))`` from ``an`` to ``end`` with ``u = an + (end - an) sin(t)``."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.25 * math.pi * (x + 1.0)
    w = 0.25 * math.pi * w
    span = end - an
    # end - u = span (1 - sin t), formed without cancellation
    gap = _drop(sys, 2.0 * span * np.sin(0.25 * math.pi - 0.5 * t) ** 2, end) + c_end
    return float(math.sqrt(2.0) * np.sum(w * abs(span) * np.cos(t) / np.sqrt(gap)))


def time_map(sys: AutonomousSystem, lc: LevelCurve, nodes: int = 128, tol: float = 1e-9,
             max_nodes: int = 4096) -> float:
    """Period of the closed orbit ``lc``."""
    an = lc.a_nbar
    # each branch is measured against its own endpoint level; b+- sit on c to bisection accuracy
    cp = cm = 0.0
    prev = None
    n = nodes
    while n <= max_nodes:
        tau = (_branch_time(sys, an, lc.b_plus, cp, n) + _branch_time(sys, an, lc.b_minus, cm, n))
        if prev is not None and abs(tau - prev) < tol:
            return tau
        prev = tau
        n *= 2
    raise EnergyError(f"time-map quadrature did not converge (last estimate {prev})",
                      code="quadrature")


def period_bound(nbar: float, d0: float, g: float) -> float:
    """``2 pi / sqrt(nbar d0 - g)``."""
    return 2 * math.pi / math.sqrt(nbar * d0 - g)


def first_return_time(sys: AutonomousSystem, lc: LevelCurve,
                      s: IntegratorSettings = IntegratorSettings(1e-12, 1e-14, 0.05)) -> float:
    """Time for the orbit through ``(b+, 0)`` to come back to ``y = 0`` from above (flow oracle)."""
    p = sys.params(beta=1.0)
    # window from the linearised frequency at the centre, doubled until the orbit closes
    omega2 = sys.nbar * float(sys.f0.deriv(lc.a_nbar)) - sys.g
    window = 4.0 * 2 * math.pi / math.sqrt(max(omega2, 1e-12))
    for _ in range(8):
        traj = integrate((lc.b_plus, 0.0), 0.0, window, p, s)
        ts = traj.t
        ys = traj.states[:, 1]
        for i in range(1, ts.size - 1):
            if ys[i] > 0.0 and ys[i + 1] <= 0.0:
                return float(brentq(lambda t: traj(t)[1], ts[i], ts[i + 1], xtol=1e-15, rtol=1e-15))
        window *= 2.0
    raise EnergyError("orbit did not return within the search window", code="quadrature")


def rot_floor(sys: AutonomousSystem | None, lc: LevelCurve | None, m: int, beta: float,
              tau: float | None = None) -> int:
    """``floor(m beta / tau)``; ``tau`` defaults to :func:`time_map` of ``lc``."""
    if tau is None:
        tau = time_map(sys, lc)
    return int(math.floor(m * beta / tau))
