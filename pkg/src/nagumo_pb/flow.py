"""Integration of ``x' = y, y' = -h(t, x)`` and the period map.

Two routes share the same weight segmentation:

* :func:`integrate` wraps :func:`scipy.integrate.solve_ivp` (DOP853, dense
  output) and returns a :class:`Trajectory`; used wherever the whole path
  matters (exports, zero counting, range checks).
* :func:`flow_map` / :func:`poincare_map` call the compiled propagator in
  :mod:`nagumo_pb._kernels`; used in every inner loop.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .model import SystemParams

__all__ = [
    "PhaseState",
    "IntegratorSettings",
    "IntegrationError",
    "LinearSystem",
    "Trajectory",
    "rhs",
    "breakpoints_between",
    "integrate",
    "flow_map",
    "poincare_map",
    "poincare_jacobian",
    "flow_jacobian",
    "gronwall_factor",
]


class PhaseState(NamedTuple):
    x: float
    y: float


class IntegrationError(RuntimeError):
    """Integration stopped early; ``t_last`` is the last time reached."""

    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last good t={t_last:.10g})")
        self.t_last = t_last


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 0.1

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not 0.0 < v <= 1e-2:
                raise ValueError(f"{name}={v} outside (0, 1e-2]")
        if not self.max_step > 0.0:
            raise ValueError("max_step must be positive")

    def tightened(self, factor: float = 10.0) -> "IntegratorSettings":
        return IntegratorSettings(self.rel_tol / factor, self.abs_tol / factor, self.max_step)


DEFAULT_SETTINGS = IntegratorSettings()


@dataclass(frozen=True)
class LinearSystem:
    """Sanity model ``h(t, s) = k s`` (``k=0``: free particle, ``k=1``: harmonic oscillator)."""

    k: float = 0.0
    beta: float = 1.0

    def h(self, t, s):
        return self.k * np.asarray(s)

    @cached_property
    def kernel_args(self) -> tuple:
        # g = 0, n = 1, "F" = k s without the [0, 1] cutoff
        return (0.0, float(self.beta), np.array([0.0, self.beta]), np.array([1.0]),
                np.array([0.0]), np.array([float(self.k), 0.0]), 0.0, False)


def rhs(t: float, z, p) -> np.ndarray:
    """``(y, -h(t, x))``."""
    x, y = z
    return np.array([y, -float(p.h(t, x))])


def breakpoints_between(p, t0: float, t1: float) -> np.ndarray:
    """Weight discontinuities (and linear-piece nodes) strictly inside ``]t0, t1[``, plus the ends."""
    bp = p.kernel_args[2]
    beta = p.beta
    k0 = math.floor(t0 / beta)
    k1 = math.ceil(t1 / beta)
    pts = (np.arange(k0, k1 + 1)[:, None] * beta + bp[None, :]).ravel()
    inner = np.unique(pts[(pts > t0) & (pts < t1)])
    return np.concatenate(([t0], inner, [t1]))


@dataclass
class Trajectory:
    """Dense solution on ``[t0, t1]`` assembled from per-segment solver output."""

    t0: float
    t: np.ndarray
    states: np.ndarray
    pieces: list = field(repr=False)

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    def __call__(self, t) -> np.ndarray:
        """Dense evaluation; returns shape ``(2,)`` or ``(2, len(t))``."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        starts = np.array([lo for lo, _, _ in self.pieces])
        idx = np.clip(np.searchsorted(starts, t_arr, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty((2, t_arr.size))
        for i in np.unique(idx):
            sel = idx == i
            out[:, sel] = self.pieces[i][2](t_arr[sel])
        return out[:, 0] if np.ndim(t) == 0 else out

    def sample(self, n: int | None = None, dt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Resample uniformly; returns ``(t, states)`` with ``states`` shape ``(len(t), 2)``."""
        if dt is not None:
            n = max(2, int(math.ceil((self.t1 - self.t0) / dt)) + 1)
        n = n or 1001
        ts = np.linspace(self.t0, self.t1, n)
        return ts, self(ts).T

    def to_csv(self, path, dt_out: float | None = None) -> None:
        ts, zs = self.sample(dt=dt_out) if dt_out else (self.t, self.states)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y"])
            for ti, (xi, yi) in zip(ts, zs):
                w.writerow([f"{ti:.12g}", f"{xi:.15g}", f"{yi:.15g}"])


def _segment_rhs(args: tuple, nc0: float, nc1: float, tseg: float):
    g, _, _, _, _, coeffs, k0, clip = args

    def fun(t, z):
        n = nc0 + nc1 * (t - tseg)
        return [z[1], g * z[0] - n * _kernels.f0_eval(z[0], coeffs, k0, clip)]

    return fun


def integrate(z0, t0: float, t1: float, p, s: IntegratorSettings = DEFAULT_SETTINGS) -> Trajectory:
    """Dense trajectory from ``z0`` at ``t0`` to ``t1``, restarting at every weight breakpoint."""
    if not t1 > t0:
        raise ValueError("integrate needs t1 > t0")
    args = p.kernel_args
    beta, bp, c0, c1 = args[1], args[2], args[3], args[4]
    knots = breakpoints_between(p, t0, t1)
    z = np.asarray(z0, dtype=float)
    ts = [np.array([t0])]
    zs = [z[None, :]]
    pieces = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (lo + hi)
        period = math.floor(mid / beta)
        j = int(np.clip(np.searchsorted(bp, mid - period * beta, side="right") - 1, 0, c0.size - 1))
        fun = _segment_rhs(args, c0[j], c1[j], period * beta + bp[j])
        sol = solve_ivp(fun, (lo, hi), z, method="DOP853", dense_output=True,
                        rtol=s.rel_tol, atol=s.abs_tol, max_step=s.max_step)
        if sol.status != 0:
            raise IntegrationError(sol.message, float(sol.t[-1]))
        if not np.all(np.isfinite(sol.y)):
            raise IntegrationError("non-finite state", float(lo))
        pieces.append((lo, hi, sol.sol))
        ts.append(sol.t[1:])
        zs.append(sol.y[:, 1:].T)
        z = sol.y[:, -1]
    return Trajectory(t0, np.concatenate(ts), np.vstack(zs), pieces)


class _Track(NamedTuple):
    state: np.ndarray
    theta: float
    rho_min: float
    nsteps: int


def _propagate(z0, t0, t1, p, s, q0=None, rho_floor=0.0):
    track = q0 is not None
    q1, q2 = (float(q0[0]), float(q0[1])) if track else (0.0, 0.0)
    x, y, status, acc = _kernels.propagate(
        float(z0[0]), float(z0[1]), float(t0), float(t1), *p.kernel_args,
        s.rel_tol, s.abs_tol, s.max_step, track, q1, q2, rho_floor)
    return x, y, status, acc


def flow_map(z0, t0: float, t1: float, p, s: IntegratorSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """``zeta(t1, t0, z0)``."""
    if t1 == t0:
        return np.asarray(z0, dtype=float).copy()
    x, y, status, acc = _propagate(z0, t0, t1, p, s)
    if status != _kernels.OK:
        raise IntegrationError(f"propagation failed (status {status})", float(acc[3]))
    return np.array([x, y])


def poincare_map(z0, m: int, p, s: IntegratorSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """``phi^m(z0) = zeta(m beta, 0, z0)``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return flow_map(z0, 0.0, m * p.beta, p, s)


def fd_step(z0) -> float:
    return 1e-6 * max(1.0, float(np.hypot(z0[0], z0[1])))


def _step_record(z0, t0, t1, p, s, capacity: int = 4096):
    while True:
        rec_t = np.empty(capacity)
        rec_j = np.empty((capacity, 2), dtype=np.int64)
        x, y, status, acc = _kernels.propagate_rec(
            float(z0[0]), float(z0[1]), float(t0), float(t1), *p.kernel_args,
            s.rel_tol, s.abs_tol, s.max_step, False, 0.0, 0.0, 0.0, rec_t, rec_j)
        if status != _kernels.OK:
            raise IntegrationError(f"propagation failed (status {status})", float(acc[3]))
        n = int(acc[2])
        if n <= capacity:
            return np.array([x, y]), rec_t, rec_j, n
        capacity = 2 * n


def flow_jacobian(z0, t0: float, t1: float, p, s: IntegratorSettings = DEFAULT_SETTINGS,
                  h_fd: float | None = None, det_tol: float = 1e-6,
                  max_shrink: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """``zeta(t1, t0, z0)`` and its central-difference Jacobian.

    The four perturbed solves replay the step sequence chosen adaptively
    for ``z0``; otherwise step-size control noise, amplified by the flow,
    swamps the difference quotient near separatrices.  The flow preserves
    area, so while ``|det - 1| > det_tol`` the difference step is divided
    by 10 (at most ``max_shrink`` times) and the most consistent matrix kept.
    """
    z0 = np.asarray(z0, dtype=float)
    h = fd_step(z0) if h_fd is None else h_fd
    end, rec_t, rec_j, n = _step_record(z0, t0, t1, p, s)
    args = p.kernel_args
    best, best_err = None, math.inf
    for _ in range(max_shrink + 1):
        J = np.empty((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            plus = _kernels.propagate_frozen(z0[0] + e[0], z0[1] + e[1], float(t0), rec_t, rec_j, n, *args)
            minus = _kernels.propagate_frozen(z0[0] - e[0], z0[1] - e[1], float(t0), rec_t, rec_j, n, *args)
            J[:, k] = (np.array(plus) - np.array(minus)) / (2 * h)
        err = abs(np.linalg.det(J) - 1.0)
        if err < best_err:
            best, best_err = J, err
        if err <= det_tol or h_fd is not None:
            break
        h /= 10.0
    return end, best


def poincare_jacobian(z0, m: int, p, s: IntegratorSettings = DEFAULT_SETTINGS,
                      h_fd: float | None = None) -> tuple[np.ndarray, float]:
    """Central-difference Jacobian of ``phi^m`` at ``z0`` and its determinant."""
    if m < 1:
        raise ValueError("m must be >= 1")
    _, J = flow_jacobian(z0, 0.0, m * p.beta, p, s, h_fd)
    return J, float(np.linalg.det(J))


def gronwall_factor(p: SystemParams, t0: float, t1: float) -> float:
    """``exp(int_{t0}^{t1} A)`` with ``A(t) = g + n(t) L0``; exact for piecewise-linear weights."""
    knots = breakpoints_between(p, t0, t1)
    mids = 0.5 * (knots[:-1] + knots[1:])
    # A is linear between knots, so the midpoint rule is exact
    total = float(np.sum(np.diff(knots) * p.lipschitz_rate(mids)))
    return math.exp(total)
