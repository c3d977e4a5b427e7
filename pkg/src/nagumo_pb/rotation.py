"""Rotation numbers around a reference point.

The rotation number over ``[0, m beta]`` is the clockwise angular
displacement of ``zeta(t) - q0`` divided by ``2 pi``.  It is computed by
unwrapping the polar angle step by step; the compiled propagator rejects
any step whose angle increment reaches ``pi/2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .flow import (DEFAULT_SETTINGS, IntegrationError, IntegratorSettings, PhaseState,
                   Trajectory, _propagate, integrate)

__all__ = [
    "RHO_FLOOR",
    "ReferenceHitError",
    "RadiusSearchError",
    "NonstandardIntegrandWarning",
    "AngleRecord",
    "OuterRadius",
    "unwrap_angle",
    "rot_m",
    "rot_many",
    "rot_integral",
    "outer_radius_search",
]

RHO_FLOOR = 1e-8
_MAX_REFINE = 30


class ReferenceHitError(RuntimeError):
    """The trajectory came within ``rho_floor`` of the reference point."""

    def __init__(self, t: float, rho: float | None = None):
        msg = f"trajectory reaches the reference point at t={t:.10g}"
        if rho is not None:
            msg += f" (distance {rho:.3e})"
        super().__init__(msg)
        self.t = t


class RadiusSearchError(RuntimeError):
    pass


class NonstandardIntegrandWarning(UserWarning):
    """The printed rotation integrand only measures rotation about the origin."""


@dataclass
class AngleRecord:
    q0: PhaseState
    t: np.ndarray
    theta: np.ndarray
    rho_min: float

    def theta_at(self, t) -> np.ndarray:
        return np.interp(t, self.t, self.theta)

    @property
    def winding(self) -> float:
        """Clockwise turns over the recorded interval."""
        return float(self.theta[0] - self.theta[-1]) / (2 * math.pi)


def _polar(zs: np.ndarray, q0) -> tuple[np.ndarray, np.ndarray]:
    u = zs[:, 0] - q0[0]
    v = zs[:, 1] - q0[1]
    return np.arctan2(v, u), np.hypot(u, v)


def unwrap_angle(traj: Trajectory, q0, rho_floor: float = RHO_FLOOR,
                 min_samples: int = 0) -> AngleRecord:
    """Continuous polar angle of ``traj - q0``, refined until every increment is below ``pi/2``."""
    q0 = PhaseState(float(q0[0]), float(q0[1]))
    ts = traj.t
    if min_samples and ts.size < min_samples:
        ts = np.union1d(ts, np.linspace(traj.t0, traj.t1, min_samples))
    for _ in range(_MAX_REFINE):
        zs = traj(ts).T
        ang, rho = _polar(zs, q0)
        bad = np.flatnonzero(rho < rho_floor)
        if bad.size:
            raise ReferenceHitError(float(ts[bad[0]]), float(rho[bad[0]]))
        d = np.diff(ang)
        d = (d + math.pi) % (2 * math.pi) - math.pi
        coarse = np.flatnonzero(np.abs(d) >= 0.5 * math.pi)
        if not coarse.size:
            theta = ang[0] + np.concatenate(([0.0], np.cumsum(d)))
            # theta(t0) in (-pi, pi]
            if theta[0] == -math.pi:
                theta = theta + 2 * math.pi
            return AngleRecord(q0, ts, theta, float(rho.min()))
        ts = np.sort(np.concatenate((ts, 0.5 * (ts[coarse] + ts[coarse + 1]))))
    raise RuntimeError("angle unwrapping did not resolve after refinement")


def rot_m(z0, q0, m: int, p, s: IntegratorSettings = DEFAULT_SETTINGS,
          rho_floor: float = RHO_FLOOR) -> float:
    """Clockwise turns of ``zeta(t, 0, z0)`` around ``q0`` for ``t`` in ``[0, m beta]``."""
    return rot_over(z0, q0, 0.0, m * p.beta, p, s, rho_floor)


def rot_over(z0, q0, t0: float, t1: float, p, s: IntegratorSettings = DEFAULT_SETTINGS,
             rho_floor: float = RHO_FLOOR) -> float:
    x, y, status, acc = _propagate(z0, t0, t1, p, s, q0=q0, rho_floor=rho_floor)
    if status == _kernels.HIT_REFERENCE:
        raise ReferenceHitError(float(acc[3]), float(acc[1]))
    if status != _kernels.OK:
        raise IntegrationError(f"propagation failed (status {status})", float(acc[3]))
    return -float(acc[0]) / (2 * math.pi)


class RotSweep(NamedTuple):
    rot: np.ndarray
    rho_min: np.ndarray
    status: np.ndarray


def rot_many(points: np.ndarray, q0, m: int, p, s: IntegratorSettings = DEFAULT_SETTINGS,
             rho_floor: float = RHO_FLOOR, t0: float = 0.0) -> RotSweep:
    """Rotation numbers for many initial points; failures are reported in ``status``, not raised."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    _, _, st, th, rm = _kernels.propagate_many(
        np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
        float(t0), float(m * p.beta), *p.kernel_args, s.rel_tol, s.abs_tol, s.max_step,
        True, float(q0[0]), float(q0[1]), rho_floor)
    return RotSweep(-th / (2 * math.pi), rm, st)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def rot_integral(z0, q0, m: int, p, s: IntegratorSettings = DEFAULT_SETTINGS,
                 traj: Trajectory | None = None) -> float:
    """Quadrature of ``(y^2 + x h(t, x)) / |zeta - q0|^2`` over ``[0, m beta]``, divided by ``2 pi``.

    The numerator does not involve ``q0``, so the value is an angular
    displacement only for ``q0 = (0, 0)``; other references trigger a
    :class:`NonstandardIntegrandWarning`.
    """
    if q0[0] != 0.0 or q0[1] != 0.0:
        warnings.warn("integrand measures rotation about the origin only", NonstandardIntegrandWarning,
                      stacklevel=2)
    if traj is None:
        traj = integrate(z0, 0.0, m * p.beta, p, s)
    total = 0.0
    for lo, hi, sol in traj.pieces:
        steps = sol.ts
        a, b = steps[:-1], steps[1:]
        # nodes strictly inside each smooth step, so h(t, .) is never sampled on a jump
        tq = (0.5 * (b - a))[:, None] * _GL_X[None, :] + (0.5 * (a + b))[:, None]
        wq = (0.5 * (b - a))[:, None] * _GL_W[None, :]
        x, y = sol(tq.ravel())
        hx = np.asarray(p.h(tq.ravel(), x))
        rho2 = (x - q0[0]) ** 2 + (y - q0[1]) ** 2
        total += float(np.sum(wq.ravel() * (y ** 2 + x * hx) / rho2))
    return total / (2 * math.pi)


@dataclass
class OuterRadius:
    radius: float
    max_rot: float
    n_samples: int
    rots: np.ndarray

    def __float__(self) -> float:
        return self.radius


def circle_points(radius: float, n: int, center=(0.0, 0.0)) -> np.ndarray:
    ang = 2 * math.pi * np.arange(n) / n
    return np.column_stack((center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)))


def sample_circle_rot(radius: float, q0, m: int, p, s: IntegratorSettings, n_samples: int,
                      center=(0.0, 0.0), max_samples: int = 1024,
                      rho_floor: float = RHO_FLOOR) -> tuple[np.ndarray, np.ndarray, bool]:
    """Rotation numbers on a circle, doubling the sample count while neighbours differ by > 0.25.

    Returns ``(points, rots, ok)``; ``ok`` is false when some trajectory hit ``q0``
    (its rotation is recorded as ``inf``) or failed to integrate.
    """
    n = n_samples
    while True:
        pts = circle_points(radius, n, center)
        sweep = rot_many(pts, q0, m, p, s, rho_floor)
        rots = np.where(sweep.status == _kernels.OK, sweep.rot, np.inf)
        ok = bool(np.all(sweep.status == _kernels.OK))
        jumps = np.abs(np.diff(np.append(rots, rots[0])))
        if not ok or n >= max_samples or not np.any(jumps > 0.25):
            return pts, rots, ok
        n *= 2


def outer_radius_search(q0, m: int, p, n_samples: int = 64,
                        s: IntegratorSettings = DEFAULT_SETTINGS, r_init: float = 2.0,
                        r_max: float = 1e6, margin: float = 0.75) -> OuterRadius:
    """Smallest ``R = r_init * 2**k`` whose origin-centred circle has every sampled rotation below ``margin``."""
    if math.hypot(q0[0], q0[1]) > 1.0:
        raise ValueError("reference point must satisfy |q0| <= 1")
    r = r_init
    while r <= r_max:
        _, rots, ok = sample_circle_rot(r, q0, m, p, s, n_samples)
        mx = float(np.max(rots))
        if ok and mx < margin:
            return OuterRadius(r, mx, rots.size, rots)
        r *= 2.0
    raise RadiusSearchError(f"no radius up to {r_max:g} keeps rotation below {margin}")
