"""Command-line front end.

Subcommands: ``check``, ``coeffs``, ``verify-closed-forms``, ``maps``,
``scan`` and ``hunt``.  Reports are JSON on stdout (or ``--out``); bulk
samples are CSV.  Exit codes: 0 success, 1 numerical failure, 2 usage
error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from ._quad import QuadratureError
from .flow import DEFAULT_TOL as ODE_TOL
from .flow import DulacMaps, FlowError, count_zeros, hunt_simultaneous, sample_map
from .polyfield import DSystem, PolyError, check_H1, check_H2
from .quadratic import (
    A_EXCLUSION,
    ParameterError,
    QuadParams,
    G1_closed,
    G2_closed,
    d0_closed,
    m_coefficients,
    m_coefficients_quadrature,
    make_quadratic,
    n_coefficients,
    n_coefficients_quadrature,
)
from .saddle_coeffs import HypothesisError, coefficient_report, compute_d0, compute_G

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    """Bad command-line input; maps to exit code 2."""


@dataclass
class RunConfig:
    subcommand: str
    tol_quad: float = 1e-10
    tol_ode: float = ODE_TOL
    s_min: float = 1e-3
    s_max: float = 0.1
    grid: str | None = None
    out: str | None = None
    workers: int = 1
    seed: int = 0
    extra: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        for name in ("tol_quad", "tol_ode", "s_min", "s_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise UsageError(f"--{name.replace('_', '-')} must be positive, got {v}")
        if self.s_min >= self.s_max:
            raise UsageError("--s-min must be below --s-max")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")
        return self


# ---------------------------------------------------------------------------
# input helpers


def _read_json(source: str) -> Any:
    """Parse inline JSON or the contents of a file (``-`` reads stdin)."""
    if source == "-":
        text = sys.stdin.read()
    elif source.lstrip().startswith("{"):
        text = source
    else:
        path = Path(source)
        if not path.is_file():
            raise UsageError(f"no such file: {source}")
        text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON: {exc}") from exc


def load_system(source: str) -> DSystem | QuadParams:
    """A D-system record or the quadratic shorthand ``{family, a, b, eps0, eps1, eps2}``."""
    data = _read_json(source)
    if not isinstance(data, dict):
        raise UsageError("system spec must be a JSON object")
    if data.get("family") == "quadratic":
        try:
            mu = QuadParams(
                float(data["a"]),
                float(data["b"]),
                float(data.get("eps0", 0.0)),
                float(data.get("eps1", 0.0)),
                float(data.get("eps2", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad quadratic spec: {exc}") from exc
        return mu
    if "family" in data:
        raise UsageError(f"unknown family {data['family']!r}")
    try:
        return DSystem.from_dict(data)
    except PolyError as exc:
        raise UsageError(str(exc)) from exc


def as_dsystem(obj: DSystem | QuadParams) -> DSystem:
    if isinstance(obj, DSystem):
        return obj
    try:
        return make_quadratic(obj)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc


def _linspace_spec(v: Any, name: str) -> list[float]:
    """A list of numbers, or ``{"start", "stop", "num"}``."""
    if isinstance(v, dict):
        try:
            return [float(x) for x in np.linspace(float(v["start"]), float(v["stop"]), int(v["num"]))]
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad range for {name}: {exc}") from exc
    if isinstance(v, (list, tuple)) and v:
        return [float(x) for x in v]
    raise UsageError(f"{name} must be a nonempty list or a range object")


DEFAULT_CLOSED_FORM_GRID: dict[str, Any] = {
    "a": {"start": -1.9, "stop": -0.1, "num": 5},
    "b": {"start": 0.1, "stop": 1.9, "num": 5},
    "eps1": [0.0, 0.01, -0.01],
    "eps2": [0.0, 0.01, -0.01],
    "exclude_a_near_minus_one": 0.05,
    "m_a": [-1.8, -1.5, -1.2],
    "n_a": [-0.8, -0.5, -0.2],
    "mn_b": [0.5, 1.0, 1.5],
}


def closed_form_grid(spec: str | None) -> dict[str, Any]:
    grid = dict(DEFAULT_CLOSED_FORM_GRID)
    if spec not in (None, "default"):
        user = _read_json(spec)
        if not isinstance(user, dict):
            raise UsageError("grid spec must be a JSON object")
        grid.update(user)
    return grid


# ---------------------------------------------------------------------------
# output helpers


def dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _pool_map(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map, fanned out over processes when ``workers > 1``."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(cfg: RunConfig) -> int:
    system = as_dsystem(load_system(cfg.extra["system"]))
    h1, h2 = check_H1(system), check_H2(system)

    def row(r):
        w = r.witness
        return {"holds": r.holds, "witness": list(w) if isinstance(w, tuple) else w, "reason": r.reason}

    report = {"H1": row(h1), "H2": row(h2), "passed": bool(h1.holds and h2.holds)}
    emit(dump_json(report), cfg.out)
    return EXIT_OK if report["passed"] else EXIT_NUMERIC


def cmd_coeffs(cfg: RunConfig) -> int:
    system = as_dsystem(load_system(cfg.extra["system"]))
    report = coefficient_report(system, tol=cfg.tol_quad)
    emit(report.to_json() + "\n", cfg.out)
    return EXIT_OK


def _compare(name: str, quad: float, closed: float, rtol: float, params: dict) -> dict:
    # a closed form that vanishes exactly is compared in absolute terms
    err = abs(quad - closed) / (abs(closed) if closed != 0.0 else 1.0)
    return {
        "quantity": name,
        "params": params,
        "quadrature": quad,
        "closed_form": closed,
        "rel_err": err,
        "tol": rtol,
        "status": "pass" if err <= rtol else "fail",
    }


def _closed_form_rows(job: tuple) -> list[dict]:
    kind, args, tol_quad, rtol, rtol_mn, excl = job
    if kind == "dG":
        a, b, e1, e2 = args
        mu = QuadParams(a, b, 0.0, e1, e2)
        p = mu.to_dict()
        if abs(a + 1.0) < max(excl, A_EXCLUSION):
            reason = f"|a+1| < {max(excl, A_EXCLUSION):g}"
            return [{"quantity": q, "params": p, "status": "skipped", "reason": reason} for q in ("d0", "G1", "G2")]
        system = make_quadratic(mu)
        d0 = compute_d0(system, tol_quad).value
        G = compute_G(system, tol_quad)
        return [
            _compare("d0", d0, d0_closed(mu), rtol, p),
            _compare("G1", G["G1"].value, G1_closed(mu), rtol, p),
            _compare("G2", G["G2"].value, G2_closed(mu), rtol, p),
        ]
    a, b = args
    p = {"a": a, "b": b}
    if abs(a + 1.0) < A_EXCLUSION:
        return [{"quantity": kind, "params": p, "status": "skipped", "reason": f"|a+1| < {A_EXCLUSION:g}"}]
    if kind == "m":
        quad = m_coefficients_quadrature(a, b, tol=min(tol_quad, 1e-12))
        closed = m_coefficients(a, b)
        names = ("m0_plus", "m1_plus", "m2_plus")
    else:
        quad = n_coefficients_quadrature(a, b, tol=min(tol_quad, 1e-12))
        closed = n_coefficients(a, b)[:2]
        names = ("n0_plus", "n1_plus")
    return [_compare(n, q, c, rtol_mn, p) for n, q, c in zip(names, quad, closed)]


def cmd_verify_closed_forms(cfg: RunConfig) -> int:
    grid = closed_form_grid(cfg.grid)
    rtol = cfg.extra.get("rtol") or 1e-8
    rtol_mn = cfg.extra.get("rtol_gamma") or 1e-6
    a_vals = _linspace_spec(grid["a"], "a")
    b_vals = _linspace_spec(grid["b"], "b")
    e1_vals = _linspace_spec(grid["eps1"], "eps1")
    e2_vals = _linspace_spec(grid["eps2"], "eps2")
    excl = float(grid.get("exclude_a_near_minus_one", 0.0))
    jobs: list[tuple] = []
    for a in a_vals:
        for b in b_vals:
            for e1 in e1_vals:
                for e2 in e2_vals:
                    jobs.append(("dG", (a, b, e1, e2), cfg.tol_quad, rtol, rtol_mn, excl))
    n_random = int(cfg.extra.get("random") or 0)
    if n_random:
        rng = np.random.default_rng(cfg.seed)
        for _ in range(n_random):
            a = float(rng.uniform(min(a_vals), max(a_vals)))
            b = float(rng.uniform(min(b_vals), max(b_vals)))
            e1, e2 = (float(x) for x in rng.uniform(-0.01, 0.01, 2))
            jobs.append(("dG", (a, b, e1, e2), cfg.tol_quad, rtol, rtol_mn, excl))
    for b in _linspace_spec(grid["mn_b"], "mn_b"):
        jobs += [("m", (a, b), cfg.tol_quad, rtol, rtol_mn, excl) for a in _linspace_spec(grid["m_a"], "m_a")]
        jobs += [("n", (a, b), cfg.tol_quad, rtol, rtol_mn, excl) for a in _linspace_spec(grid["n_a"], "n_a")]
    rows = [r for chunk in _pool_map(_closed_form_rows, jobs, cfg.workers) for r in chunk]
    failed = sum(r["status"] == "fail" for r in rows)
    summary = {
        "rows": rows,
        "passed": sum(r["status"] == "pass" for r in rows),
        "failed": failed,
        "skipped": sum(r["status"] == "skipped" for r in rows),
    }
    emit(dump_json(summary), cfg.out)
    return EXIT_NUMERIC if failed else EXIT_OK


def _s_grid(cfg: RunConfig, default: int = 24) -> np.ndarray:
    try:
        n = int(cfg.grid) if cfg.grid not in (None, "default") else default
    except ValueError as exc:
        raise UsageError("--grid must be an integer sample count here") from exc
    if n < 2:
        raise UsageError("--grid needs at least 2 points")
    return np.geomspace(cfg.s_min, cfg.s_max, n)


def cmd_maps(cfg: RunConfig) -> int:
    obj = load_system(cfg.extra["system"])
    side = cfg.extra.get("side") or "u"
    kind = cfg.extra.get("kind") or "difference"
    s = _s_grid(cfg)
    maps = DulacMaps(obj, cfg.tol_ode)
    fn = {
        "difference": lambda x: maps.difference(x, side),
        "plus": lambda x: maps.half_map(x, side, 1.0),
        "minus": lambda x: maps.half_map(x, side, -1.0),
        "return": lambda x: maps.return_map(x, side),
    }[kind]
    samples = sample_map(fn, s, label=f"{kind}_{side}")
    emit(samples.to_csv(), cfg.out)
    if kind in ("difference", "return"):
        sys.stderr.write(count_zeros(samples).to_json() + "\n")
    return EXIT_OK


def _scan_point(job: tuple) -> dict:
    a, b, e1, e2, tol = job
    mu = QuadParams(a, b, 0.0, e1, e2)
    rep = coefficient_report(make_quadratic(mu), tol=tol, with_deltas=False)
    return {
        "eps1": e1,
        "eps2": e2,
        "d0": rep.d0.value,
        "d0_closed": d0_closed(mu),
        "d1": None if rep.d1 is None else rep.d1.value,
        "d1_branch": rep.d1_branch,
        "stability": rep.stability,
    }


def cmd_scan(cfg: RunConfig) -> int:
    a, b = cfg.extra["a"], cfg.extra["b"]
    eps_max = cfg.extra.get("eps_max") or 0.01
    try:
        n = int(cfg.grid) if cfg.grid not in (None, "default") else 9
    except ValueError as exc:
        raise UsageError("--grid must be an integer here") from exc
    try:
        QuadParams(a, b).validate()
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    axis = np.linspace(-eps_max, eps_max, n)
    jobs = [(a, b, float(e1), float(e2), cfg.tol_quad) for e1 in axis for e2 in axis]
    rows = _pool_map(_scan_point, jobs, cfg.workers)
    buf = io.StringIO()
    cols = ["eps1", "eps2", "d0", "d0_closed", "d1", "d1_branch", "stability"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    emit(buf.getvalue(), cfg.out)
    return EXIT_OK


def cmd_hunt(cfg: RunConfig) -> int:
    try:
        n = int(cfg.grid) if cfg.grid not in (None, "default") else 24
    except ValueError as exc:
        raise UsageError("--grid must be an integer here") from exc
    res = hunt_simultaneous(
        cfg.extra["a0"],
        cfg.extra["b0"],
        s_range=(cfg.s_min, cfg.s_max),
        budget=int(cfg.extra.get("budget") or 10_000),
        tol=cfg.tol_ode,
        grid=n,
    )
    emit(res.to_json() + "\n", cfg.out)
    return EXIT_OK if res.success else EXIT_NUMERIC


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "check": cmd_check,
    "coeffs": cmd_coeffs,
    "verify-closed-forms": cmd_verify_closed_forms,
    "maps": cmd_maps,
    "scan": cmd_scan,
    "hunt": cmd_hunt,
}


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, s_max: float = 0.1) -> None:
    p.add_argument("--tol-quad", type=float, default=1e-10, help="quadrature tolerance")
    p.add_argument("--tol-ode", type=float, default=ODE_TOL, help="ODE relative tolerance")
    p.add_argument("--s-min", type=float, default=1e-3)
    p.add_argument("--s-max", type=float, default=s_max)
    p.add_argument("--grid", default=None, help="grid size, or a JSON grid spec for verify-closed-forms")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 already; keep the message terse
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hemicycle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="test H1 and H2 for a system")
    p.add_argument("system", help="JSON file, inline JSON, or - for stdin")
    _common(p)

    p = sub.add_parser("coeffs", help="saddle quantities d0, d1, G and Delta")
    p.add_argument("system")
    _common(p)

    p = sub.add_parser("verify-closed-forms", help="quadrature against closed forms on a grid")
    p.add_argument("--rtol", type=float, default=1e-8, help="pass threshold for d0, G1, G2")
    p.add_argument("--rtol-gamma", type=float, default=1e-6, help="pass threshold for the Gamma identities")
    p.add_argument("--random", type=int, default=0, help="extra random parameter points drawn with --seed")
    _common(p)

    p = sub.add_parser("maps", help="sample Dulac maps on a geometric s grid (CSV)")
    p.add_argument("system")
    p.add_argument("--side", choices=("u", "l"), default="u")
    p.add_argument("--kind", choices=("difference", "plus", "minus", "return"), default="difference")
    _common(p)

    p = sub.add_parser("scan", help="d0, d1 and stability over an (eps1, eps2) square (CSV)")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--eps-max", type=float, default=0.01)
    _common(p)

    p = sub.add_parser("hunt", help="staged search for simultaneous bifurcation of limit cycles")
    p.add_argument("--a0", type=float, default=-1.5)
    p.add_argument("--b0", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=10_000)
    _common(p, s_max=0.2)
    return parser


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    keys = ("subcommand", "tol_quad", "tol_ode", "s_min", "s_max", "grid", "out", "workers", "seed")
    cfg = RunConfig(**{k: ns.pop(k) for k in keys})
    cfg.extra = ns
    return cfg.validate()


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
        return COMMANDS[cfg.subcommand](cfg)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (QuadratureError, FlowError, HypothesisError, ParameterError, PolyError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
