"""Command-line scenario runner.

Every subcommand reads one scenario file (``--config``), applies the
command-line overrides, runs the matching pipeline and writes CSV files
into ``--out``.  Exit status: 0 success, 2 configuration error, 3
numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .config import ConfigError, Scenario, SweepGrid, parse_text, scenario_from_mapping
from .energy import (AutonomousSystem, EnergyError, choose_band, equilibrium, level_curve,
                     period_bound, time_map)
from .flow import IntegrationError, integrate
from .model import ModelError
from .orbits import (Annulus, PeriodicOrbit, TwistCertificate, build_annulus, coprime_rotation_set,
                     find_fixed_points, same_periodicity_class, verify_twist)
from .rotation import RadiusSearchError, ReferenceHitError, outer_radius_search, rot_many

__all__ = [
    "Report",
    "run_scenario",
    "sweep_multiplicity",
    "subharmonic_search",
    "find_orbits",
    "timemap_table",
    "main",
]

NUMERICAL_ERRORS = (EnergyError, IntegrationError, RadiusSearchError, ReferenceHitError,
                    ModelError, RuntimeError, FloatingPointError)

ORBIT_HEADER = ["x0", "y0", "m", "k", "crossings", "residual", "xmin", "xmax", "minimal", "class_id"]
CERT_HEADER = ["nbar", "ntilde_l1", "tau", "m", "N", "inner_min_rot", "outer_max_rot", "nonq_ok",
               "valid", "certified_N", "outer_radius"]
SWEEP_HEADER = ["nbar", "alpha", "ntilde_l1", "m", "certified_N", "orbits_found", "failure"]
TIMEMAP_HEADER = ["nbar", "a_nbar", "c", "b_minus", "b_plus", "tau", "bound"]


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else _num(x) for x in r])


@dataclass
class Report:
    """Summary lines plus the files written; ``status`` is the process exit code."""

    lines: list[str] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)
    status: int = 0

    def add(self, line: str) -> None:
        self.lines.append(line)

    def text(self) -> str:
        return "\n".join(self.lines)


# -- shared setup ------------------------------------------------------------

@dataclass
class _Setup:
    params: object
    system: AutonomousSystem
    curve: object
    tau: float


def _setup(sc: Scenario) -> _Setup:
    p = sc.params()
    asys = AutonomousSystem.from_params(p)
    equilibrium(asys)  # raises "no-equilibrium" before the band hypotheses are checked
    band = choose_band(asys)
    lc = level_curve(asys, band)
    return _Setup(p, asys, lc, time_map(asys, lc))


def _orbit_row(o: PeriodicOrbit) -> list:
    return [o.z0[0], o.z0[1], o.m, o.rot_k, o.zero_crossings, o.residual, o.range[0], o.range[1],
            o.minimal_period_certified, o.class_id]


def _cert_row(st: _Setup, cert: TwistCertificate, ann: Annulus) -> list:
    w = st.params.weight
    return [st.system.nbar, w.ntilde_l1, st.tau, cert.m, cert.N, cert.inner_min_rot,
            cert.outer_max_rot, cert.nonq_ok, cert.valid, cert.certified_N, ann.outer_radius]


# -- pipelines ---------------------------------------------------------------

def timemap_table(sc: Scenario) -> list[list[float]]:
    """One row per ``nbar`` of the autonomous comparison system."""
    f0 = sc.nonlinearity()
    rows = []
    for nb in sc.nbar_values:
        asys = AutonomousSystem(sc.g, nb, f0)
        band = choose_band(asys)
        lc = level_curve(asys, band)
        tau = time_map(asys, lc)
        rows.append([nb, lc.a_nbar, lc.c, lc.b_minus, lc.b_plus, tau, period_bound(nb, band.d0, sc.g)])
    return rows


@dataclass
class OrbitSearch:
    setup: _Setup
    annulus: Annulus
    certificate: TwistCertificate
    orbits: list[PeriodicOrbit]


def find_orbits(sc: Scenario, m: int | None = None, N: int | None = None) -> OrbitSearch:
    """Annulus, twist certificate and fixed points of ``phi^m``."""
    m = sc.m if m is None else m
    N = sc.N if N is None else N
    s = sc.settings
    st = _setup(sc)
    ann = build_annulus(st.curve, m, st.params, n_samples=sc.outer_samples, s=s)
    cert = verify_twist(ann, m, N, st.params, s, inner_samples=sc.inner_samples,
                        outer_samples=sc.outer_samples)
    target = 2 * cert.certified_N
    orbits = find_fixed_points(ann, m, st.params, s, n_angular=sc.seeds_angular,
                               n_radial=sc.seeds_radial, target=target)
    return OrbitSearch(st, ann, cert, orbits)


def classes_with_rotation(orbits, ks) -> dict[int, set[int]]:
    out: dict[int, set[int]] = {k: set() for k in ks}
    for o in orbits:
        if not o.trivial and o.rot_k in out:
            out[o.rot_k].add(o.class_id)
    return out


@dataclass
class SubharmonicResult:
    search: OrbitSearch
    rotation_set: list[int]
    orbits: list[PeriodicOrbit]
    distinct: bool


def subharmonic_search(sc: Scenario) -> SubharmonicResult:
    """``m beta``-periodic solutions with rotation numbers co-prime with ``m`` and certified minimal period."""
    if sc.m < 2:
        raise ConfigError("run.m", "subharmonic search needs m >= 2")
    ks = coprime_rotation_set(sc.m, sc.K)
    res = find_orbits(sc, sc.m, ks[-1])
    keep = [o for o in res.orbits
            if not o.trivial and o.rot_k in ks and o.minimal_period_certified and o.representative]
    p, s = res.setup.params, sc.settings
    distinct = all(not same_periodicity_class(a, b, p, s)
                   for i, a in enumerate(keep) for b in keep[i + 1:])
    return SubharmonicResult(res, ks, keep, distinct)


def _sweep_cell(args) -> list:
    base, nbar, alpha, m = args
    row = [nbar, alpha, math.nan, m, 0, 0]
    try:
        sc = replace(base, task="find-orbits", weight_kind="two-level", n1=nbar, alpha=alpha,
                     split="plateau-value", nbar=None, m=m, N=1)
        row[2] = sc.weight().ntilde_l1
        st = _setup(sc)
        s = sc.settings
        ann = build_annulus(st.curve, m, st.params, n_samples=sc.outer_samples, s=s)
        cert = verify_twist(ann, m, 1, st.params, s, inner_samples=sc.inner_samples,
                            outer_samples=sc.outer_samples)
        n_cert = cert.certified_N
        row[4] = n_cert
        if n_cert >= 1:
            orbits = find_fixed_points(ann, m, st.params, s, n_angular=sc.seeds_angular,
                                       n_radial=sc.seeds_radial, target=2 * n_cert)
            cls = classes_with_rotation(orbits, range(1, n_cert + 1))
            row[5] = sum(len(v) for v in cls.values())
        return row + [""]
    except EnergyError as exc:
        return row + [exc.code]
    except (ConfigError, ModelError):
        return row + ["invalid-weight"]
    except RadiusSearchError:
        return row + ["radius-search"]
    except ReferenceHitError:
        return row + ["reference-hit"]
    except (IntegrationError, RuntimeError, FloatingPointError, ValueError):
        return row + ["integration"]


def sweep_multiplicity(grid: SweepGrid, base: Scenario) -> list[list]:
    """Certificate and orbit count for every grid cell, in grid order; failures become coded rows."""
    jobs = [(base, nb, al, m) for nb, al, m in grid.cells()]
    if base.workers > 1:
        with ProcessPoolExecutor(max_workers=base.workers) as pool:
            return list(pool.map(_sweep_cell, jobs))
    return [_sweep_cell(j) for j in jobs]


# -- scenario dispatch -----------------------------------------------------

def _orbit_report(rep: Report, res: OrbitSearch, out: Path, sc: Scenario, orbits=None,
                  stem: str = "orbits") -> None:
    cert, st = res.certificate, res.setup
    orbits = res.orbits if orbits is None else orbits
    cert_row = _cert_row(st, cert, res.annulus)
    for k, v in zip(CERT_HEADER, cert_row):
        rep.add(f"{k} = {v if isinstance(v, str) else _num(v)}")
    rows = [_orbit_row(o) for o in orbits]
    rep.add(",".join(ORBIT_HEADER))
    for r in rows:
        rep.add(",".join(_num(x) for x in r))
    _write_csv(out / "certificate.csv", CERT_HEADER, [cert_row])
    _write_csv(out / f"{stem}.csv", ORBIT_HEADER, rows)
    rep.files += [out / "certificate.csv", out / f"{stem}.csv"]
    if sc.emit_orbits:
        for i, o in enumerate(orbits):
            path = out / "orbit_traj" / f"orbit_{i:03d}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            integrate(o.z0, 0.0, o.m * st.params.beta, st.params, sc.settings).to_csv(path, sc.dt_out)
            rep.files.append(path)


def run_scenario(sc: Scenario) -> Report:
    """Run ``sc.task``; CSV files go to ``sc.out_dir``."""
    out = Path(sc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = Report()
    s = sc.settings
    task = sc.task

    if task == "portrait":
        p = sc.params()
        T = sc.periods * p.beta
        rows = []
        for i, x0 in enumerate(sc.x0):
            traj = integrate((x0, 0.0), 0.0, T, p, s)
            path = out / f"portrait_{i:02d}.csv"
            traj.to_csv(path, sc.dt_out)
            xs = traj.states[:, 0]
            rows.append([x0, 0.0, path.name, float(xs.min()), float(xs.max())])
            rep.files.append(path)
        _write_csv(out / "portrait.csv", ["x0", "y0", "file", "xmin", "xmax"], rows)
        rep.files.append(out / "portrait.csv")
        rep.add(f"{len(rows)} trajectories over [0, {T:g}]")

    elif task == "timemap":
        rows = timemap_table(sc)
        _write_csv(out / "timemap.csv", TIMEMAP_HEADER, rows)
        rep.files.append(out / "timemap.csv")
        rep.add(",".join(TIMEMAP_HEADER))
        for r in rows:
            rep.add(",".join(_num(x) for x in r))

    elif task == "rotation":
        st = _setup(sc)
        q0 = st.curve.center
        pts = np.array(sc.points, dtype=float)
        sweep = rot_many(pts, q0, sc.m, st.params, s)
        rot = np.where(sweep.status == _kernels.OK, sweep.rot, math.nan)
        _write_csv(out / "rotation.csv", ["x0", "y0", "rot"], np.column_stack((pts, rot)).tolist())
        rep.files.append(out / "rotation.csv")
        rep.add(f"q0 = ({q0[0]!r}, 0.0), m = {sc.m}")
        for (x, y), r in zip(pts, rot):
            rep.add(f"{x!r},{y!r},{r!r}")
        if np.any(sweep.status != _kernels.OK):
            rep.add("some trajectories failed (rot = nan)")
            rep.status = 3

    elif task == "outer-radius":
        st = _setup(sc)
        res = outer_radius_search(st.curve.center, sc.m, st.params, n_samples=sc.outer_samples, s=s)
        _write_csv(out / "outer_radius.csv", ["m", "radius", "max_rot", "n_samples"],
                   [[sc.m, res.radius, res.max_rot, res.n_samples]])
        ang = 2 * math.pi * np.arange(res.rots.size) / res.rots.size
        _write_csv(out / "outer_circle.csv", ["x0", "y0", "rot"],
                   np.column_stack((res.radius * np.cos(ang), res.radius * np.sin(ang), res.rots)).tolist())
        rep.files += [out / "outer_radius.csv", out / "outer_circle.csv"]
        rep.add(f"m = {sc.m}: R = {res.radius!r}, max rot = {res.max_rot!r} over {res.n_samples} points")

    elif task == "find-orbits":
        res = find_orbits(sc)
        _orbit_report(rep, res, out, sc)
        cls = classes_with_rotation(res.orbits, range(1, sc.N + 1))
        rep.add("classes per k: " + ", ".join(f"{k}:{len(v)}" for k, v in cls.items()))

    elif task == "subharmonics":
        res = subharmonic_search(sc)
        _orbit_report(rep, res.search, out, sc, res.orbits, stem="subharmonics")
        rep.add(f"rotation set = {res.rotation_set}; distinct classes = {res.distinct}")

    elif task == "sweep":
        rows = sweep_multiplicity(sc.sweep, sc)
        _write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
        rep.files.append(out / "sweep.csv")
        rep.add(",".join(SWEEP_HEADER))
        for r in rows:
            rep.add(",".join(x if isinstance(x, str) else _num(x) for x in r))

    return rep


# -- entry point ---------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nagumo-pb", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("portrait", "timemap", "rotation", "outer-radius", "find-orbits", "subharmonics",
                 "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="scenario file (flat dotted keys)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--tol-rel", type=float)
        sp.add_argument("--tol-abs", type=float)
        sp.add_argument("--dt-out", type=float, help="sampling step of exported trajectories")
        sp.add_argument("--seeds", type=int, help="angular seeds; radial seeds are half as many")
        sp.add_argument("--emit-orbits", action="store_true", help="write each orbit trajectory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one scenario key (repeatable)")
        sp.add_argument("--quiet", action="store_true")
        if name == "timemap":
            sp.add_argument("--nbar-grid", help="comma-separated nbar values")
    return ap


def scenario_from_args(args) -> Scenario:
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = parse_text(fh.read())
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from exc
    raw.update(parse_text("\n".join(args.set)))
    if getattr(args, "nbar_grid", None):
        raw["timemap.nbar"] = args.nbar_grid
    raw["task"] = args.command
    seeds = {}
    if args.seeds is not None:
        seeds = {"seeds_angular": args.seeds, "seeds_radial": max(1, args.seeds // 2)}
    return scenario_from_mapping(raw, out_dir=args.out, rel_tol=args.tol_rel, abs_tol=args.tol_abs,
                                 dt_out=args.dt_out, emit_orbits=args.emit_orbits or None, **seeds)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        sc = scenario_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        rep = run_scenario(sc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    if not args.quiet:
        print(rep.text())
    return rep.status


if __name__ == "__main__":
    sys.exit(main())
