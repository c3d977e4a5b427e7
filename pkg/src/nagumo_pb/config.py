"""Scenario files: flat ``key = value`` text with dotted keys.

Grammar (one scenario per file)::

    line    := blank | comment | entry
    comment := "#" anything
    entry   := key "=" value
    key     := name ("." name)*          e.g. weight.n1
    value   := scalar ("," scalar)*      a list when it contains a comma
    scalar  := number | word | x ":" y   pairs: points, segments (t_end:value), samples (t:value)

Unknown keys are errors.  Every key has a default, the matching field of :class:`Scenario`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .flow import IntegratorSettings
from .model import (ModelError, Nonlinearity, SystemParams, Weight, build_modified,
                    split_weight)

__all__ = [
    "ConfigError",
    "SweepGrid",
    "Scenario",
    "TASKS",
    "parse_text",
    "load_scenario",
    "scenario_from_mapping",
]

TASKS = ("portrait", "timemap", "rotation", "outer-radius", "find-orbits", "subharmonics", "sweep")
WEIGHT_KINDS = ("constant", "two-level", "piecewise", "sampled")
SPLITS = ("mean", "plateau-value", "explicit")


class ConfigError(ValueError):
    """Invalid scenario; ``path`` is the offending dotted key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class SweepGrid:
    nbar: tuple[float, ...]
    alpha: tuple[float, ...]
    m: tuple[int, ...]

    def __post_init__(self):
        for name in ("nbar", "alpha", "m"):
            vals = getattr(self, name)
            if not vals:
                raise ConfigError(f"sweep.{name}", "must be non-empty")
            if any(not v > 0 for v in vals):
                raise ConfigError(f"sweep.{name}", "entries must be positive")

    def cells(self):
        """Grid order: ``nbar`` outermost, then ``alpha``, then ``m``."""
        for nb in self.nbar:
            for al in self.alpha:
                for m in self.m:
                    yield nb, al, m


@dataclass(frozen=True)
class Scenario:
    task: str = "find-orbits"
    # model
    g: float = 0.1
    a: float = 0.6
    k0: float | None = None
    # weight
    weight_kind: str = "constant"
    beta: float = 1.0
    n: float = 20.0
    n1: float = 40.0
    n0: float = 1.0
    alpha: float = 0.9
    segments: tuple[tuple[float, float], ...] = ()
    samples: tuple[tuple[float, float], ...] = ()
    split: str = "plateau-value"
    nbar: float | None = None
    # task parameters
    m: int = 1
    N: int = 1
    K: int = 1
    nbar_values: tuple[float, ...] = (20.0, 80.0, 320.0)
    x0: tuple[float, ...] = (0.2, 0.4, 0.6, 0.62, 0.7, 0.8, 0.9, 1.0)
    periods: float = 10.0
    points: tuple[tuple[float, float], ...] = ()
    seeds_angular: int = 48
    seeds_radial: int = 24
    outer_samples: int = 64
    inner_samples: int = 128
    # numerics
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 0.1
    # output
    out_dir: str = "out"
    dt_out: float = 0.01
    emit_orbits: bool = False
    workers: int = 1
    sweep: SweepGrid | None = None

    def __post_init__(self):
        _validate(self)

    # -- derived objects -------------------------------------------------
    @property
    def settings(self) -> IntegratorSettings:
        return IntegratorSettings(self.rel_tol, self.abs_tol, self.max_step)

    def nonlinearity(self):
        try:
            return build_modified(Nonlinearity.cubic(self.a), self.k0)
        except ModelError as exc:
            raise ConfigError("model.a", str(exc)) from exc

    def weight(self) -> Weight:
        try:
            if self.weight_kind == "constant":
                w = Weight.constant(self.n, self.beta)
            elif self.weight_kind == "two-level":
                w = Weight.two_level(self.n1, self.n0, self.alpha, self.beta)
            elif self.weight_kind == "piecewise":
                w = Weight.piecewise(self.segments)
            else:
                w = Weight.sampled([t for t, _ in self.samples], [v for _, v in self.samples])
            return split_weight(w, self.split, self.nbar)
        except ModelError as exc:
            raise ConfigError("weight", str(exc)) from exc

    def params(self) -> SystemParams:
        return SystemParams(self.g, self.weight(), self.nonlinearity())

    # -- text form ---------------------------------------------------------
    def to_mapping(self) -> dict[str, str]:
        out = {}
        for key, attr in _KEYS.items():
            if key.startswith("sweep."):
                continue
            v = getattr(self, attr)
            if v is None or (isinstance(v, tuple) and not v):
                continue
            out[key] = _format(v)
        if self.sweep is not None:
            out["sweep.nbar"] = _format(self.sweep.nbar)
            out["sweep.alpha"] = _format(self.sweep.alpha)
            out["sweep.m"] = _format(self.sweep.m)
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_mapping().items())


# dotted key -> Scenario attribute
_KEYS = {
    "task": "task",
    "model.g": "g",
    "model.a": "a",
    "model.k0": "k0",
    "weight.kind": "weight_kind",
    "weight.beta": "beta",
    "weight.n": "n",
    "weight.n1": "n1",
    "weight.n0": "n0",
    "weight.alpha": "alpha",
    "weight.segments": "segments",
    "weight.samples": "samples",
    "split.strategy": "split",
    "split.nbar": "nbar",
    "run.m": "m",
    "run.N": "N",
    "run.K": "K",
    "timemap.nbar": "nbar_values",
    "portrait.x0": "x0",
    "portrait.periods": "periods",
    "rotation.points": "points",
    "seeds.angular": "seeds_angular",
    "seeds.radial": "seeds_radial",
    "twist.outer_samples": "outer_samples",
    "twist.inner_samples": "inner_samples",
    "tol.rel": "rel_tol",
    "tol.abs": "abs_tol",
    "tol.max_step": "max_step",
    "output.dir": "out_dir",
    "output.dt": "dt_out",
    "output.emit_orbits": "emit_orbits",
    "run.workers": "workers",
    "sweep.nbar": "sweep",
    "sweep.alpha": "sweep",
    "sweep.m": "sweep",
}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{_format(x)}:{_format(y)}" for x, y in v)
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_text(text: str) -> dict[str, str]:
    """Raw ``{key: value}`` strings; later duplicates are errors."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        if key in out:
            raise ConfigError(key, "given twice")
        out[key] = value
    return out


def _scalar(key: str, text: str, kind):
    try:
        if kind is bool:
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if kind is int:
            return int(text)
        if kind is float:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError(text)
            return v
        return text
    except ValueError:
        raise ConfigError(key, f"cannot read {text!r} as {kind.__name__}") from None


def _list(key: str, text: str, kind) -> tuple:
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(_scalar(key, t, kind) for t in items)


def _pairs(key: str, text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in (t.strip() for t in text.split(",") if t.strip()):
        if ":" not in item:
            raise ConfigError(key, f"expected 'x:y', got {item!r}")
        u, v = item.split(":", 1)
        out.append((_scalar(key, u.strip(), float), _scalar(key, v.strip(), float)))
    return tuple(out)


_TYPES = {f.name: f.type for f in fields(Scenario)}


def scenario_from_mapping(raw: dict[str, str], **overrides) -> Scenario:
    """Typed scenario from raw strings; ``overrides`` are attribute values applied last."""
    kw: dict = {}
    for key, text in raw.items():
        attr = _KEYS[key]
        if attr == "sweep":
            continue
        typ = _TYPES[attr]
        if attr in ("segments", "samples", "points"):
            kw[attr] = _pairs(key, text)
        elif attr in ("nbar_values", "x0"):
            kw[attr] = _list(key, text, float)
        elif typ in ("float", "float | None"):
            kw[attr] = _scalar(key, text, float)
        elif typ == "int":
            kw[attr] = _scalar(key, text, int)
        elif typ == "bool":
            kw[attr] = _scalar(key, text, bool)
        else:
            kw[attr] = text
    sweep_keys = [k for k in raw if k.startswith("sweep.")]
    if sweep_keys:
        missing = {"sweep.nbar", "sweep.alpha", "sweep.m"} - set(sweep_keys)
        if missing:
            raise ConfigError(sorted(missing)[0], "required with the other sweep keys")
        kw["sweep"] = SweepGrid(_list("sweep.nbar", raw["sweep.nbar"], float),
                                _list("sweep.alpha", raw["sweep.alpha"], float),
                                _list("sweep.m", raw["sweep.m"], int))
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return Scenario(**kw)


def load_scenario(path, **overrides) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from exc
    return scenario_from_mapping(parse_text(text), **overrides)


def _key_of(attr: str) -> str:
    return next(k for k, a in _KEYS.items() if a == attr)


def _validate(sc: Scenario) -> None:
    def need(cond, attr, msg):
        if not cond:
            raise ConfigError(_key_of(attr), msg)

    need(sc.task in TASKS, "task", f"must be one of {', '.join(TASKS)}")
    need(sc.weight_kind in WEIGHT_KINDS, "weight_kind", f"must be one of {', '.join(WEIGHT_KINDS)}")
    need(sc.split in SPLITS, "split", f"must be one of {', '.join(SPLITS)}")
    need(sc.g > 0, "g", "must be positive")
    need(0 < sc.a < 1, "a", "must lie in ]0, 1[")
    need(sc.beta > 0, "beta", "must be positive")
    for attr in ("m", "N", "K", "seeds_angular", "seeds_radial", "outer_samples", "inner_samples",
                 "workers"):
        need(getattr(sc, attr) >= 1, attr, "must be a positive integer")
    need(sc.periods > 0, "periods", "must be positive")
    need(sc.dt_out > 0, "dt_out", "must be positive")
    need(all(v > 0 for v in sc.nbar_values), "nbar_values", "entries must be positive")
    need(0 < sc.rel_tol <= 1e-2, "rel_tol", "must lie in ]0, 1e-2]")
    need(0 < sc.abs_tol <= 1e-2, "abs_tol", "must lie in ]0, 1e-2]")
    need(sc.max_step > 0, "max_step", "must be positive")
    if sc.weight_kind == "piecewise":
        need(len(sc.segments) > 0, "segments", "required for a piecewise weight")
    if sc.weight_kind == "sampled":
        need(len(sc.samples) > 1, "samples", "at least two t:value samples required")
    if sc.split == "explicit":
        need(sc.nbar is not None, "nbar", "required by the explicit split")
    if sc.task == "subharmonics":
        need(sc.m >= 2, "m", "subharmonic search needs m >= 2")
    if sc.task == "sweep":
        need(sc.sweep is not None, "sweep", "sweep.nbar, sweep.alpha and sweep.m are required")
    if sc.task == "rotation":
        need(len(sc.points) > 0, "points", "required for the rotation task")


def with_task(sc: Scenario, task: str) -> Scenario:
    return replace(sc, task=task)
