"""Twist annulus, its numerical certificate, and fixed points of the period map.

Inner boundary: an energy level curve of the autonomous comparison system
around ``q0 = (a_nbar, 0)``.  Outer boundary: a circle about ``q0`` on which
every sampled solution turns less than once.  Fixed points of ``phi^m`` in
between are located by damped Newton iteration from a polar seed grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .energy import AutonomousSystem, LevelCurve, choose_band, energy, level_curve
from .flow import (DEFAULT_SETTINGS, IntegrationError, IntegratorSettings, PhaseState,
                   breakpoints_between, flow_jacobian, flow_map, integrate, poincare_map)
from .model import SystemParams, Weight, split_weight
from .rotation import (RHO_FLOOR, OuterRadius, ReferenceHitError, outer_radius_search, rot_m,
                       rot_many, sample_circle_rot)

__all__ = [
    "Annulus",
    "TwistCertificate",
    "PeriodicOrbit",
    "build_annulus",
    "verify_twist",
    "find_fixed_points",
    "grid_fixed_points",
    "make_orbit",
    "count_zero_crossings",
    "same_periodicity_class",
    "minimal_period_check",
    "coprime_rotation_set",
    "classes_by_rotation",
    "PerturbationBudget",
    "perturbation_budget",
]

FIXED_POINT_TOL = 1e-9
DEDUP_TOL = 1e-6
CLASS_TOL = 1e-6
SHIFT_TOL = 1e-4


@dataclass
class Annulus:
    """Region between the level curve ``inner`` and the circle ``|z - q0| = outer_radius``."""

    inner: LevelCurve
    outer_radius: float
    q0: PhaseState
    search: OuterRadius | None = field(default=None, repr=False)

    def inner_radius(self, angle) -> np.ndarray:
        return self.inner.radius_at(angle)

    def contains(self, z, slack: float = 0.0) -> bool:
        """Membership in the closed annulus (``slack`` widens both boundaries)."""
        u = np.asarray(z, dtype=float) - np.asarray(self.q0)
        r = float(np.hypot(u[0], u[1]))
        ang = math.atan2(u[1], u[0])
        return float(self.inner_radius(ang)) - slack <= r <= self.outer_radius + slack


def build_annulus(lc: LevelCurve, m: int, p, n_samples: int = 64,
                  s: IntegratorSettings = DEFAULT_SETTINGS, r_init: float = 2.0) -> Annulus:
    """Annulus around ``(a_nbar, 0)``; the outer radius comes from :func:`outer_radius_search`.

    The searched circle is centred at the origin; the annulus uses the
    ``q0``-centred circle of radius ``R0 + |q0|``, all of whose points have
    norm at least ``R0``.
    """
    q0 = lc.center
    search = outer_radius_search(q0, m, p, n_samples=n_samples, s=s, r_init=r_init)
    radius = search.radius + math.hypot(*q0)
    _, rad = lc.polar()
    if not (rad.max() < radius and rad.min() > 0.0):
        raise ValueError("level curve is not strictly inside the outer circle")
    return Annulus(lc, radius, q0, search)


@dataclass
class TwistCertificate:
    m: int
    N: int
    inner_min_rot: float
    outer_max_rot: float
    nonq_ok: bool
    inner_samples: int = 0
    outer_samples: int = 0

    @property
    def valid(self) -> bool:
        return self.inner_min_rot > self.N and self.outer_max_rot < 1.0 and self.nonq_ok

    @property
    def certified_N(self) -> int:
        """Largest ``j`` for which the same measurements certify the twist (0 if none)."""
        if not (self.outer_max_rot < 1.0 and self.nonq_ok) or not math.isfinite(self.inner_min_rot):
            return 0
        return max(0, int(math.ceil(self.inner_min_rot)) - 1)


def _curve_rot(lc: LevelCurve, q0, m, p, s, n: int, max_n: int = 1024) -> tuple[np.ndarray, bool]:
    while True:
        pts = lc.resample(n)
        sweep = rot_many(pts, q0, m, p, s)
        ok = bool(np.all(sweep.status == _kernels.OK))
        rots = np.where(sweep.status == _kernels.OK, sweep.rot, -np.inf)
        jumps = np.abs(np.diff(np.append(rots, rots[0])))
        if not ok or n >= max_n or not np.any(jumps > 0.25):
            return rots, ok
        n *= 2


def _start_times(p, m: int, per_period: int) -> np.ndarray:
    T = m * p.beta
    knots = breakpoints_between(p, 0.0, T)[:-1]
    uniform = np.arange(m * per_period) * (p.beta / per_period)
    return np.unique(np.concatenate((knots, uniform)))


def verify_twist(ann: Annulus, m: int, N: int, p, s: IntegratorSettings = DEFAULT_SETTINGS,
                 inner_samples: int = 128, outer_samples: int = 64, t0_per_period: int = 8,
                 hole_scale: float = 0.5) -> TwistCertificate:
    """Sample the twist conditions on both boundaries and the non-collision condition.

    The neighbourhood ``D0`` is the level-curve interior shrunk by
    ``hole_scale`` about ``q0``; trajectories from its boundary are started at
    every breakpoint and ``t0_per_period`` uniform times per period.
    """
    q0 = ann.q0
    rin, ok_in = _curve_rot(ann.inner, q0, m, p, s, inner_samples)
    _, rout, ok_out = sample_circle_rot(ann.outer_radius, q0, m, p, s, outer_samples, center=q0)
    hole = np.asarray(q0) + hole_scale * (ann.inner.resample(inner_samples) - np.asarray(q0))
    nonq = ok_in
    for t0 in _start_times(p, m, t0_per_period):
        sweep = rot_many(hole, q0, m, p, s, t0=t0)
        if np.any(sweep.status == _kernels.HIT_REFERENCE):
            nonq = False
            break
    inner_min = float(np.min(rin)) if ok_in else -math.inf
    outer_max = float(np.max(rout)) if ok_out else math.inf
    return TwistCertificate(m, N, inner_min, outer_max, nonq, rin.size, rout.size)


@dataclass
class PeriodicOrbit:
    z0: np.ndarray
    m: int
    rot_k: int
    rot_value: float
    zero_crossings: int
    residual: float
    range: tuple[float, float]
    min_shift_displacement: float
    minimal_period_certified: bool = False
    class_id: int = -1
    representative: bool = False
    continuum: bool = False
    trivial: bool = False
    map_residual: float = math.nan

    @property
    def in_unit_interval(self) -> bool:
        return 0.0 < self.range[0] and self.range[1] < 1.0


def count_zero_crossings(traj, level: float, per_unit: int = 2000) -> int:
    """Sign changes of ``x(t) - level`` on the closed loop ``[t0, t1]`` of a periodic trajectory."""
    n = max(1001, int(per_unit * (traj.t1 - traj.t0)))
    ts = np.union1d(traj.t, np.linspace(traj.t0, traj.t1, n))
    u = traj(ts)[0] - level
    sgn = np.sign(u)
    # drop exact zeros so a touch is not counted twice
    sgn = sgn[sgn != 0]
    return int(np.count_nonzero(sgn[1:] != sgn[:-1]))


def minimal_period_check(o: PeriodicOrbit, shift_tol: float = SHIFT_TOL) -> bool:
    """``gcd(m, k) = 1`` and every shift ``phi^i(z0)``, ``0 < i < m``, moves ``z0`` by more than ``shift_tol``."""
    if o.m == 1:
        return True
    if o.rot_k <= 0 or math.gcd(o.m, o.rot_k) != 1:
        return False
    return o.min_shift_displacement > shift_tol


def make_orbit(z0, m: int, p, q0, s: IntegratorSettings = DEFAULT_SETTINGS,
               defect: float | None = None) -> PeriodicOrbit:
    """Measure an (approximate) fixed point of ``phi^m``.

    ``residual`` is the multiple-shooting defect when given, else the
    single-shot displacement; ``map_residual`` is always the latter.
    """
    z0 = np.asarray(z0, dtype=float)
    T = m * p.beta
    map_residual = float(np.linalg.norm(poincare_map(z0, m, p, s) - z0))
    residual = map_residual if defect is None else float(defect)
    try:
        rv = rot_m(z0, q0, m, p, s)
    except ReferenceHitError:
        rv = math.nan
    traj = integrate(z0, 0.0, T, p, s)
    ts, zs = traj.sample(n=max(1001, int(1000 * m)))
    xmin, xmax = float(zs[:, 0].min()), float(zs[:, 0].max())
    trivial = (xmax - xmin) < 1e-8 and float(np.abs(zs[:, 1]).max()) < 1e-8
    crossings = count_zero_crossings(traj, q0[0])
    shifts = [float(np.linalg.norm(flow_map(z0, 0.0, i * p.beta, p, s) - z0)) for i in range(1, m)]
    k = int(round(rv)) if math.isfinite(rv) else -1
    o = PeriodicOrbit(z0, m, k, rv, crossings, residual, (xmin, xmax),
                      min(shifts) if shifts else math.inf, trivial=trivial, map_residual=map_residual)
    o.minimal_period_certified = minimal_period_check(o)
    return o


def same_periodicity_class(o1: PeriodicOrbit, o2: PeriodicOrbit, p,
                           s: IntegratorSettings = DEFAULT_SETTINGS,
                           class_tol: float = CLASS_TOL) -> bool:
    """Whether ``o2.z0`` equals ``zeta(j beta, 0, o1.z0)`` for some ``0 <= j < m``."""
    if o1.m != o2.m:
        raise ValueError("orbits have different periods")
    z = np.asarray(o1.z0, dtype=float)
    for j in range(o1.m):
        if j:
            z = flow_map(z, (j - 1) * p.beta, j * p.beta, p, s)
        if np.linalg.norm(z - o2.z0) < class_tol:
            return True
    return False


def coprime_rotation_set(m: int, K: int) -> list[int]:
    """The first ``K`` positive integers co-prime with ``m``."""
    if m < 2 or K < 1:
        raise ValueError("need m >= 2 and K >= 1")
    out = []
    l = 1
    while len(out) < K:
        if math.gcd(l, m) == 1:
            out.append(l)
        l += 1
    return out


def shooting_nodes(p, m: int, per_period: int) -> np.ndarray:
    """Node times on ``[0, m beta]``: every weight breakpoint plus a uniform grid."""
    T = m * p.beta
    uniform = np.linspace(0.0, T, m * per_period + 1)
    return np.unique(np.concatenate((breakpoints_between(p, 0.0, T), uniform)))


def _shooting_newton(z, m, p, s, tol, max_iter, box, per_period: int = 8):
    """Damped Newton for the cyclic multiple-shooting system ``zeta(t_{i+1}, t_i, Z_i) = Z_{i+1}``.

    Splitting the period keeps every sub-flow moderately sensitive, which
    widens the basin around orbits that pass close to a saddle.  Returns
    ``(Z_0, defect)`` with ``defect`` the norm of all node mismatches.
    """
    ts = shooting_nodes(p, m, per_period)
    M = ts.size - 1
    Z = np.empty((M, 2))
    Z[0] = z
    for i in range(M - 1):
        Z[i + 1] = flow_map(Z[i], ts[i], ts[i + 1], p, s)
        if not np.all(np.abs(Z[i + 1]) < box):
            raise IntegrationError("shooting node left the search box", float(ts[i + 1]))

    def defects(Z):
        return np.array([flow_map(Z[i], ts[i], ts[i + 1], p, s) for i in range(M)]) - np.roll(Z, -1, axis=0)

    eye = np.eye(2)
    for _ in range(max_iter):
        A = np.zeros((2 * M, 2 * M))
        D = np.empty((M, 2))
        for i in range(M):
            end, J = flow_jacobian(Z[i], ts[i], ts[i + 1], p, s)
            D[i] = end - Z[(i + 1) % M]
            A[2 * i:2 * i + 2, 2 * i:2 * i + 2] = J
            k = (i + 1) % M
            A[2 * i:2 * i + 2, 2 * k:2 * k + 2] -= eye
        r = float(np.linalg.norm(D))
        if r < tol:
            break
        step = np.linalg.lstsq(A, -D.ravel(), rcond=None)[0].reshape(M, 2)
        lam = 1.0
        for _ in range(20):
            Z_new = Z + lam * step
            if np.all(np.abs(Z_new) < box):
                try:
                    r_new = float(np.linalg.norm(defects(Z_new)))
                except IntegrationError:
                    r_new = math.inf
                if r_new < r:
                    break
            lam *= 0.5
        else:
            break
        Z = Z_new
        r = r_new
    return Z[0], r


def seed_grid(ann: Annulus, n_angular: int = 48, n_radial: int = 24) -> np.ndarray:
    """Polar seeds between the boundaries, radially denser towards the inner curve."""
    ang = 2 * math.pi * (np.arange(n_angular) + 0.5) / n_angular
    rin = ann.inner_radius(ang)
    u = ((np.arange(n_radial) + 0.5) / n_radial) ** 2
    r = rin[:, None] + (ann.outer_radius - rin)[:, None] * u[None, :]
    return np.column_stack((ann.q0[0] + (r * np.cos(ang)[:, None]).ravel(),
                            ann.q0[1] + (r * np.sin(ang)[:, None]).ravel()))


def _dedup(points: Sequence[np.ndarray], tol: float) -> list[np.ndarray]:
    kept: list[np.ndarray] = []
    for z in sorted(points, key=lambda v: (round(v[0], 9), round(v[1], 9))):
        if all(np.linalg.norm(z - w) >= tol for w in kept):
            kept.append(z)
    return kept


def _assign_classes(orbits: list[PeriodicOrbit], p, s) -> None:
    reps: list[PeriodicOrbit] = []
    for o in orbits:
        for rep in reps:
            if rep.rot_k == o.rot_k and same_periodicity_class(rep, o, p, s):
                o.class_id = rep.class_id
                break
        else:
            o.class_id = len(reps)
            o.representative = True
            reps.append(o)


def _collapse_continua(orbits: list[PeriodicOrbit], p, rel_tol: float = 1e-6) -> list[PeriodicOrbit]:
    """Constant weight: fixed points on one closed orbit form a circle; keep one per level."""
    sys = AutonomousSystem(p.g, float(p.weight.values[0]), p.nonlinearity)
    out: list[PeriodicOrbit] = []
    levels: list[tuple[int, float]] = []
    for o in orbits:
        e = float(energy(o.z0, sys))
        hit = next((i for i, (k, lev) in enumerate(levels)
                    if k == o.rot_k and abs(lev - e) <= rel_tol * max(1.0, abs(e))), None)
        if hit is None or o.trivial:
            levels.append((o.rot_k, e))
            out.append(o)
        else:
            out[hit].continuum = True
    return out


def find_fixed_points(ann: Annulus, m: int, p, s: IntegratorSettings = DEFAULT_SETTINGS,
                      n_angular: int = 48, n_radial: int = 24, tol: float = FIXED_POINT_TOL,
                      dedup_tol: float = DEDUP_TOL, max_iter: int = 50,
                      seeds: np.ndarray | None = None, target: int = 0,
                      per_period: int = 8) -> list[PeriodicOrbit]:
    """Fixed points of ``phi^m`` in the closed annulus, one :class:`PeriodicOrbit` each.

    Each seed starts a damped multiple-shooting Newton solve.  When fewer
    than ``target`` non-trivial orbits are found the polar grid is refined
    once by a factor 2 in each direction.
    """
    box = 4.0 * (ann.outer_radius + math.hypot(*ann.q0))
    grids = [seeds] if seeds is not None else [seed_grid(ann, n_angular, n_radial)]
    roots: list[tuple[np.ndarray, float]] = []
    while grids:
        for z in grids.pop():
            try:
                zr, r = _shooting_newton(np.asarray(z, dtype=float), m, p, s, tol, max_iter, box,
                                         per_period)
            except IntegrationError:
                continue
            if r < tol and ann.contains(zr, slack=dedup_tol):
                roots.append((zr, r))
        if seeds is None and target and not grids and n_angular < 96:
            found = _dedup([z for z, _ in roots], dedup_tol)
            if sum(np.linalg.norm(z) > 1e-6 for z in found) < target:
                n_angular, n_radial = 2 * n_angular, 2 * n_radial
                grids.append(seed_grid(ann, n_angular, n_radial))
    kept = _dedup([z for z, _ in roots], dedup_tol)
    defect = {id(z): r for z, r in roots}
    orbits = [make_orbit(z, m, p, ann.q0, s, defect[id(z)]) for z in kept]
    if p.weight.is_constant:
        orbits = _collapse_continua(orbits, p)
    orbits.sort(key=lambda o: (o.rot_k, o.z0[0], o.z0[1]))
    _assign_classes(orbits, p, s)
    return orbits


def grid_fixed_points(ann: Annulus, m: int, p, s: IntegratorSettings = DEFAULT_SETTINGS,
                      n_angular: int = 96, n_radial: int = 48, accept: float = 1e-7,
                      dedup_tol: float = DEDUP_TOL) -> list[np.ndarray]:
    """Brute-force oracle: local minima of ``|phi^m(z) - z|`` on a polar grid, polished by Nelder-Mead.

    Uses no derivatives and no Newton step, so it checks :func:`find_fixed_points` independently.
    """
    ang = 2 * math.pi * np.arange(n_angular) / n_angular
    rin = ann.inner_radius(ang)
    u = np.linspace(0.0, 1.0, n_radial)
    R = rin[:, None] + (ann.outer_radius - rin)[:, None] * u[None, :]
    X = ann.q0[0] + R * np.cos(ang)[:, None]
    Y = ann.q0[1] + R * np.sin(ang)[:, None]
    args = p.kernel_args
    fx, fy, st, _, _ = _kernels.propagate_many(
        X.ravel().copy(), Y.ravel().copy(), 0.0, m * p.beta, *args, s.rel_tol, s.abs_tol,
        s.max_step, False, 0.0, 0.0, 0.0)
    disp = np.hypot(fx - X.ravel(), fy - Y.ravel())
    disp[st != _kernels.OK] = np.inf
    disp = disp.reshape(X.shape)

    def objective(z):
        try:
            return float(np.linalg.norm(poincare_map(z, m, p, s) - z))
        except IntegrationError:
            return math.inf

    found = []
    for i in range(n_angular):
        for j in range(n_radial):
            d = disp[i, j]
            nb = [disp[(i + di) % n_angular, j + dj] for di in (-1, 0, 1) for dj in (-1, 0, 1)
                  if (di or dj) and 0 <= j + dj < n_radial]
            if not np.isfinite(d) or d > min(nb):
                continue
            res = minimize(objective, np.array([X[i, j], Y[i, j]]), method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-13, "maxiter": 4000})
            if res.fun < accept and ann.contains(res.x, slack=dedup_tol):
                found.append(np.asarray(res.x))
    return _dedup(found, dedup_tol)


def classes_by_rotation(orbits: Sequence[PeriodicOrbit]) -> dict[int, set[int]]:
    """``{k: {class_id, ...}}`` over non-trivial orbits."""
    out: dict[int, set[int]] = {}
    for o in orbits:
        if not o.trivial:
            out.setdefault(o.rot_k, set()).add(o.class_id)
    return out


@dataclass
class PerturbationBudget:
    """Largest tested perturbation of the two-level weight that keeps the twist certificate."""

    alpha: float
    ntilde_l1: float
    certificate: TwistCertificate


def perturbation_budget(f0, g: float, n1: float, n0: float, beta: float, m: int, N: int,
                        s: IntegratorSettings = DEFAULT_SETTINGS, alpha_min: float | None = None,
                        iters: int = 12, n_samples: int = 64) -> PerturbationBudget | None:
    """Bisect the plateau length ``alpha`` of ``n1 on ]0, alpha[, n0 on ]alpha, beta[``.

    The split is at the plateau value, so the level curve stays fixed and
    ``|ntilde|_1 = (n1 - n0)(beta - alpha)`` shrinks to 0 as ``alpha -> beta``.
    Returns ``None`` when even the unperturbed weight fails the certificate.
    """
    sys = AutonomousSystem(g, n1, f0)
    lc = level_curve(sys, choose_band(sys))
    if alpha_min is None:
        alpha_min = 0.5 * beta

    def attempt(alpha):
        w = split_weight(Weight.two_level(n1, n0, alpha, beta), "plateau-value", n1)
        p = SystemParams(g, w, f0)
        try:
            ann = build_annulus(lc, m, p, n_samples=n_samples, s=s)
        except (ValueError, RuntimeError):
            return None, w
        cert = verify_twist(ann, m, N, p, s, outer_samples=n_samples)
        return (cert if cert.valid else None), w

    best, w = attempt(beta)
    if best is None:
        return None
    good, bad = beta, alpha_min
    cert, w_lo = attempt(alpha_min)
    if cert is not None:
        return PerturbationBudget(alpha_min, w_lo.ntilde_l1, cert)
    for _ in range(iters):
        mid = 0.5 * (good + bad)
        cert, _ = attempt(mid)
        if cert is None:
            bad = mid
        else:
            good, best = mid, cert
    w = split_weight(Weight.two_level(n1, n0, good, beta), "plateau-value", n1)
    return PerturbationBudget(good, w.ntilde_l1, best)
