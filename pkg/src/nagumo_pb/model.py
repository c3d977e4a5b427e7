"""Nonlinearity, its bounded modification, and periodic weights.

The equation under study is ``v'' - g v + n(x) F(v) = 0`` where ``F`` has
zeros ``0 < a < 1`` with ``F < 0`` on ``]0, a[`` and ``F > 0`` on ``]a, 1[``.
``F`` is carried as polynomial coefficients (highest degree first), which
covers the cubic nerve-fibre models and keeps evaluation compilable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

__all__ = [
    "ModelError",
    "Nonlinearity",
    "ModifiedNonlinearity",
    "Weight",
    "SystemParams",
    "delta",
    "ell",
    "ell_prime",
    "build_modified",
    "eval_weight",
    "split_weight",
    "l1_norm_over",
]

_SIGN_GRID = 2001
_ZERO_TOL = 1e-12
_REFINE_TOL = 1e-10


class ModelError(ValueError):
    """Invalid model data (sign pattern, constants, weight layout)."""


def delta(s):
    """Clamp to ``[0, 1]``."""
    return np.clip(s, 0.0, 1.0)


def ell(s):
    """Smooth outward push: ``exp(1/s)`` left of 0, ``-exp(1/(1-s))`` right of 1, zero between."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    lo = s < 0.0
    hi = s > 1.0
    with np.errstate(over="ignore", divide="ignore"):
        out[lo] = np.exp(1.0 / s[lo])
        out[hi] = -np.exp(1.0 / (1.0 - s[hi]))
    return out if out.ndim else float(out)


def ell_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    lo = s < 0.0
    hi = s > 1.0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out[lo] = -np.exp(1.0 / s[lo]) / s[lo] ** 2
        out[hi] = -np.exp(1.0 / (1.0 - s[hi])) / (1.0 - s[hi]) ** 2
    return out if out.ndim else float(out)


def _refine_max(fun, grid: np.ndarray) -> tuple[float, float]:
    """Maximise ``fun`` on ``[grid[0], grid[-1]]``: dense scan, then bounded Brent refinement."""
    vals = fun(grid)
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    best_s, best_v = float(grid[i]), float(vals[i])
    if hi > lo:
        res = minimize_scalar(lambda s: -float(fun(np.array([s]))[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": _REFINE_TOL})
        if -res.fun > best_v:
            best_s, best_v = float(res.x), float(-res.fun)
    return best_s, best_v


@dataclass(frozen=True)
class Nonlinearity:
    """Polynomial ``F`` with ``F(0) = F(a) = F(1) = 0`` and the nerve-fibre sign pattern."""

    coeffs: tuple[float, ...]
    a: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not 0.0 < self.a < 1.0:
            raise ModelError(f"middle zero a={self.a} must lie in ]0,1[")
        for z in (0.0, self.a, 1.0):
            if abs(self(z)) > _ZERO_TOL:
                raise ModelError(f"F({z}) = {self(z):.3e}, expected 0")
        s = np.linspace(0.0, 1.0, _SIGN_GRID)[1:-1]
        v = self(s)
        left = s < self.a
        right = s > self.a
        # skip grid points within rounding of a
        left &= self.a - s > 1e-9
        right &= s - self.a > 1e-9
        if np.any(v[left] >= 0.0) or np.any(v[right] <= 0.0):
            raise ModelError("F must be negative on ]0,a[ and positive on ]a,1[")

    @classmethod
    def cubic(cls, a: float = 0.6) -> "Nonlinearity":
        """``F(s) = s (1 - s) (s - a)``."""
        return cls((-1.0, 1.0 + a, -a, 0.0), a)

    def __call__(self, s):
        return np.polyval(self.coeffs, s)

    def deriv(self, s):
        return np.polyval(np.polyder(self.coeffs), s)

    @property
    def slope_at_a(self) -> float:
        return float(self.deriv(self.a))


@dataclass(frozen=True)
class ModifiedNonlinearity:
    """``F0(s) = F(delta(s)) + k0 * ell(s)``: equal to ``F`` on ``[0, 1]``, bounded by ``c0``."""

    base: Nonlinearity
    k0: float
    c0: float
    lipschitz_l0: float

    @property
    def a(self) -> float:
        return self.base.a

    @property
    def coeffs(self) -> np.ndarray:
        return np.asarray(self.base.coeffs)

    def __call__(self, s):
        # F(0) = F(1) = 0 exactly; evaluating the polynomial there would leave rounding residue
        s = np.asarray(s, dtype=float)
        inside = (s >= 0.0) & (s <= 1.0)
        out = np.where(inside, self.base(delta(s)), 0.0) + self.k0 * ell(s)
        return out if out.ndim else float(out)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s >= 0.0) & (s <= 1.0)
        out = np.where(inside, self.base.deriv(s), 0.0) + self.k0 * ell_prime(s)
        return out if out.ndim else float(out)

    def primitive(self, x):
        """Exact ``int_0^x F0`` on ``[0, 1]``; the ``ell`` tails outside use quadrature."""
        P = np.polyint(self.base.coeffs)
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.polyval(P, np.clip(x_arr, 0.0, 1.0))
        for i, xi in enumerate(x_arr):
            if xi < 0.0:
                # F(delta(s)) = F(0) = 0 there
                out[i] = -self.k0 * quad(lambda s: math.exp(1.0 / s) if s < 0 else 0.0, xi, 0.0)[0]
            elif xi > 1.0:
                out[i] -= self.k0 * quad(
                    lambda s: math.exp(1.0 / (1.0 - s)) if s > 1 else 0.0, 1.0, xi)[0]
        return out if np.ndim(x) else float(out[0])


def _sup_abs_f(f: Nonlinearity) -> float:
    grid = np.linspace(0.0, 1.0, 4097)
    return _refine_max(lambda s: np.abs(f(s)), grid)[1]


def build_modified(f: Nonlinearity, k0: float | None = None) -> ModifiedNonlinearity:
    """Build ``F0`` with ``0 < k0 <= c0``; ``k0=None`` takes ``k0 = c0``."""
    c0 = _sup_abs_f(f)
    if k0 is None:
        k0 = c0
    if not 0.0 < k0 <= c0 * (1.0 + 1e-12):
        raise ModelError(f"k0={k0} must satisfy 0 < k0 <= c0={c0:.6g}")
    k0 = min(k0, c0)
    # derivative of F0: F' on [0,1], k0*ell' outside (ell' peaks at s=-1/2 and s=3/2)
    _, lip_in = _refine_max(lambda s: np.abs(f.deriv(s)), np.linspace(0.0, 1.0, 4097))
    _, lip_out = _refine_max(lambda s: np.abs(ell_prime(s)), np.linspace(-20.0, -1e-3, 8001))
    return ModifiedNonlinearity(base=f, k0=float(k0), c0=float(c0),
                                lipschitz_l0=float(max(lip_in, k0 * lip_out)))


@dataclass(frozen=True)
class Weight:
    """beta-periodic weight ``n(x)``.

    ``kind="piecewise"``: ``breakpoints`` ``0 = t_0 < ... < t_S = beta`` with one
    value per segment, right-continuous at the jumps.  ``kind="sampled"``:
    node values on ``breakpoints`` (last value equal to the first),
    interpolated linearly.
    """

    beta: float
    kind: str
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    nbar: float | None = None
    ntilde_l1: float | None = None

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "breakpoints", tuple(bp.tolist()))
        object.__setattr__(self, "values", tuple(vals.tolist()))
        if self.beta <= 0.0:
            raise ModelError("beta must be positive")
        if self.kind not in ("piecewise", "sampled"):
            raise ModelError(f"unknown weight kind {self.kind!r}")
        if bp.size < 2 or bp[0] != 0.0 or not math.isclose(bp[-1], self.beta) or np.any(np.diff(bp) <= 0):
            raise ModelError("breakpoints must increase strictly from 0 to beta")
        expected = bp.size - 1 if self.kind == "piecewise" else bp.size
        if vals.size != expected:
            raise ModelError(f"{self.kind} weight needs {expected} values, got {vals.size}")
        if np.any(vals <= 0.0):
            raise ModelError("weight values must be positive")
        if self.kind == "sampled" and not math.isclose(vals[0], vals[-1]):
            raise ModelError("sampled weight must satisfy n(0) = n(beta)")

    @classmethod
    def constant(cls, value: float, beta: float = 1.0) -> "Weight":
        return cls(beta, "piecewise", (0.0, beta), (value,))

    @classmethod
    def piecewise(cls, segments: Sequence[tuple[float, float]]) -> "Weight":
        """From ``[(t_end, value), ...]``; the last ``t_end`` is the period."""
        ends = [float(t) for t, _ in segments]
        return cls(ends[-1], "piecewise", (0.0, *ends), tuple(float(v) for _, v in segments))

    @classmethod
    def two_level(cls, n1: float, n0: float, alpha: float, beta: float = 1.0) -> "Weight":
        """``n1`` on ``]0, alpha[`` and ``n0`` on ``]alpha, beta[`` (mod beta)."""
        if not 0.0 < alpha <= beta:
            raise ModelError("alpha must lie in ]0, beta]")
        if alpha == beta:
            return cls.constant(n1, beta)
        return cls.piecewise([(alpha, n1), (beta, n0)])

    @classmethod
    def sampled(cls, grid: Sequence[float], values: Sequence[float]) -> "Weight":
        grid = tuple(float(t) for t in grid)
        return cls(grid[-1], "sampled", grid, tuple(values))

    def __call__(self, t):
        return eval_weight(self, t)

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    @property
    def split_done(self) -> bool:
        return self.nbar is not None

    def ntilde(self, t):
        """Perturbation ``n(t) - nbar``; needs a split weight."""
        if self.nbar is None:
            raise ModelError("weight has not been split")
        return eval_weight(self, t) - self.nbar

    def integral(self) -> float:
        bp = np.asarray(self.breakpoints)
        v = np.asarray(self.values)
        if self.kind == "piecewise":
            return float(np.sum(np.diff(bp) * v))
        return float(np.trapezoid(v, bp))

    def deviation_l1(self, nbar: float) -> float:
        """``int_0^beta |n - nbar|``, exact for both representations."""
        bp = np.asarray(self.breakpoints)
        v = np.asarray(self.values)
        if self.kind == "piecewise":
            return float(np.sum(np.diff(bp) * np.abs(v - nbar)))
        total = 0.0
        for t0, t1, u0, u1 in zip(bp[:-1], bp[1:], v[:-1] - nbar, v[1:] - nbar):
            dt = t1 - t0
            if u0 * u1 >= 0.0:
                total += 0.5 * dt * (abs(u0) + abs(u1))
            else:
                # linear piece crosses nbar: two triangles
                tc = dt * abs(u0) / (abs(u0) + abs(u1))
                total += 0.5 * (tc * abs(u0) + (dt - tc) * abs(u1))
        return total

    def kernel_segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(bp, c0, c1)`` with ``n(t) = c0[j] + c1[j] (t - bp[j])`` on segment ``j``."""
        bp = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if self.kind == "piecewise":
            return bp, v.copy(), np.zeros_like(v)
        return bp, v[:-1].copy(), np.diff(v) / np.diff(bp)


def eval_weight(w: Weight, t):
    """``n(t mod beta)``, taking right limits at jumps."""
    t_arr = np.asarray(t, dtype=float)
    local = np.mod(t_arr, w.beta)
    bp = np.asarray(w.breakpoints)
    v = np.asarray(w.values)
    if w.kind == "piecewise":
        j = np.clip(np.searchsorted(bp, local, side="right") - 1, 0, v.size - 1)
        out = v[j]
    else:
        out = np.interp(local, bp, v)
    return float(out) if out.ndim == 0 else out


def split_weight(w: Weight, strategy: str = "mean", nbar: float | None = None) -> Weight:
    """Split ``n = nbar + ntilde``; returns a copy with ``nbar`` and ``ntilde_l1`` set.

    strategy is ``"mean"``, ``"plateau-value"`` (value on the longest constant
    segment, piecewise weights only) or ``"explicit"`` with ``nbar`` given.
    """
    if strategy == "mean":
        value = w.integral() / w.beta
    elif strategy == "plateau-value":
        if w.kind != "piecewise":
            raise ModelError("plateau-value split needs a piecewise-constant weight")
        lengths = np.diff(w.breakpoints)
        value = w.values[int(np.argmax(lengths))]
    elif strategy == "explicit":
        if nbar is None or nbar <= 0:
            raise ModelError("explicit split needs a positive nbar")
        value = nbar
    else:
        raise ModelError(f"unsupported split strategy {strategy!r}")
    return replace(w, nbar=float(value), ntilde_l1=w.deviation_l1(float(value)))


def l1_norm_over(w: Weight, m: int) -> float:
    """``|ntilde|_1`` on ``[0, m beta]``."""
    if not w.split_done:
        raise ModelError("weight has not been split")
    return m * w.ntilde_l1


@dataclass(frozen=True)
class SystemParams:
    """``h(t, s) = -g s + n(t) F0(s)``."""

    g: float
    weight: Weight
    nonlinearity: ModifiedNonlinearity

    def __post_init__(self):
        if not self.g > 0.0:
            raise ModelError("g must be positive")

    @property
    def beta(self) -> float:
        return self.weight.beta

    def h(self, t, s):
        return -self.g * s + self.weight(t) * self.nonlinearity(s)

    def lipschitz_rate(self, t):
        """``A(t) = g + n(t) L0``."""
        return self.g + self.weight(t) * self.nonlinearity.lipschitz_l0

    @cached_property
    def kernel_args(self) -> tuple:
        bp, c0, c1 = self.weight.kernel_segments()
        return (float(self.g), float(self.beta), bp, c0, c1,
                np.asarray(self.nonlinearity.coeffs, dtype=float),
                float(self.nonlinearity.k0), True)

    def with_weight(self, weight: Weight) -> "SystemParams":
        return replace(self, weight=weight)


def default_params(nbar: float = 20.0, beta: float = 1.0, g: float = 0.1, a: float = 0.6) -> SystemParams:
    """Cubic model with constant weight (the phase-portrait setting)."""
    f0 = build_modified(Nonlinearity.cubic(a))
    return SystemParams(g, split_weight(Weight.constant(nbar, beta), "mean"), f0)
