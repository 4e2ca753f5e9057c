"""Dulac maps along the hemicycle by direct integration.

Orbits are followed on the Poincare sphere: the affine chart near the
origin and the two charts at infinity elsewhere, switching with
hysteresis.  The saddles at infinity sit at the origin of chart U1, so
the passage near them is integrated in coordinates where the saddle is
a regular hyperbolic point.

Sections: ``s -> (0, 1/s)`` (far, upper), ``s -> (0, -1/s)`` (far,
lower) and ``s -> (0, s)`` (near).  ``D+`` follows the field and ``D-``
the reversed field; their difference is the displacement map whose
zeros correspond to limit cycles.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .charts import AFFINE, U1, U2, PoincareAtlas, chart_transition, poincare_charts, to_affine
from .polyfield import DSystem, Poly2
from .quadratic import NuParams, QuadParams, phi_inverse, phi_params, quadratic_field

DEFAULT_TOL = 1e-12
S_FLOOR = 1e-3


class FlowError(RuntimeError):
    """The orbit did not reach the requested section."""


# ---------------------------------------------------------------------------
# sections


@dataclass(frozen=True)
class SectionSpec:
    """A transversal on the y-axis together with its parametrization."""

    name: str
    kind: str  # "far" or "near"
    y_of_s: Callable[[float], float]

    def point(self, s: float) -> tuple[float, float]:
        return 0.0, self.y_of_s(s)


SIGMA1_UPPER = SectionSpec("sigma1_upper", "far", lambda s: 1.0 / s)
SIGMA1_LOWER = SectionSpec("sigma1_lower", "far", lambda s: -1.0 / s)
SIGMA2 = SectionSpec("sigma2", "near", lambda s: s)


# ---------------------------------------------------------------------------
# propagation


@dataclass
class Crossing:
    point: tuple[float, float]
    chart: str
    z: tuple[float, float]
    segments: int
    steps: int


class Propagator:
    """Chart-switching integrator with section detection."""

    def __init__(
        self,
        atlas: PoincareAtlas,
        rtol: float = DEFAULT_TOL,
        atol: float | None = None,
        max_segments: int = 60,
        t_max: float = 1e3,
        method: str = "DOP853",
    ):
        self.atlas = atlas
        self.rtol = rtol
        self.atol = rtol * 1e-12 if atol is None else atol
        self.max_segments = max_segments
        self.t_max = t_max
        self.method = method
        R = atlas.radius
        self._inner = 4.0 / R  # |x1| or |v| beyond which we return to the affine chart

    @staticmethod
    def hemisphere(chart: str, z) -> float:
        if chart == U1:
            return 1.0 if z[0] > 0 else -1.0
        if chart == U2:
            return 1.0 if z[1] > 0 else -1.0
        return 1.0

    def _exit_events(self, chart: str) -> list:
        R = self.atlas.radius
        inner = self._inner
        if chart == AFFINE:
            fns = [lambda t, z: abs(z[0]) - R, lambda t, z: abs(z[1]) - R]
        elif chart == U1:
            fns = [lambda t, z: abs(z[0]) - inner, lambda t, z: abs(z[1]) - 2.0]
        else:
            fns = [lambda t, z: abs(z[1]) - inner, lambda t, z: abs(z[0]) - 2.0]
        for fn in fns:
            fn.terminal = True
            fn.direction = 1.0
        return fns

    def _next_chart(self, chart: str, z, which: int) -> tuple[str, tuple[float, float]]:
        if chart == AFFINE:
            x, y = z
            dst = U1 if abs(x) >= abs(y) else U2
        elif chart == U1:
            dst = AFFINE if which == 0 else U2
        else:
            dst = AFFINE if which == 0 else U1
        return dst, chart_transition(chart, dst, z)

    def run(self, chart: str, z, sign: float, direction: float, far: bool | None = None) -> Crossing:
        """Integrate ``sign * X`` from ``z`` until ``x`` crosses 0 in ``direction``.

        ``far=True`` demands the crossing at large ``|y|`` (chart U2 or
        affine with ``|y| >= 1``); ``far=False`` demands ``|y| < 1``.
        """
        z = (float(z[0]), float(z[1]))
        steps = 0
        for seg in range(self.max_segments):
            h = self.hemisphere(chart, z)
            rhs = self.atlas.rhs(chart, sign, h)
            events = self._exit_events(chart)
            target_idx = None
            if chart in (AFFINE, U2):
                if chart == AFFINE:
                    tgt = lambda t, zz: zz[0]  # noqa: E731
                else:
                    tgt = lambda t, zz, h=h: zz[0] * h  # noqa: E731
                tgt.terminal = True
                tgt.direction = direction
                events.append(tgt)
                target_idx = len(events) - 1
            sol = solve_ivp(
                rhs, (0.0, self.t_max), np.array(z), method=self.method, rtol=self.rtol, atol=self.atol, events=events
            )
            steps += len(sol.t)
            if sol.status == -1:
                raise FlowError(f"integrator failed: {sol.message}")
            if sol.status == 0:
                raise FlowError(f"orbit did not leave chart {chart} within time {self.t_max}")
            hit = [i for i, te in enumerate(sol.t_events) if len(te)]
            # the earliest event wins
            i = min(hit, key=lambda k: sol.t_events[k][0])
            zz = tuple(float(v) for v in sol.y_events[i][0])
            if i == target_idx:
                p = to_affine(chart, zz)
                p = (0.0, p[1])
                if far is not None:
                    is_far = chart == U2 or abs(p[1]) >= 1.0
                    if is_far != far:
                        raise FlowError(f"orbit crossed x=0 at y={p[1]:.6g}, not on the requested section")
                return Crossing(point=p, chart=chart, z=zz, segments=seg + 1, steps=steps)
            chart, z = self._next_chart(chart, zz, i)
        raise FlowError("too many chart switches")


# ---------------------------------------------------------------------------
# Dulac maps


def _field_of(obj) -> tuple[Poly2, Poly2]:
    if isinstance(obj, QuadParams):
        return quadratic_field(obj)
    if isinstance(obj, DSystem):
        return obj.P, obj.Q
    P, Q = obj
    return P, Q


@dataclass
class MapValue:
    value: float
    err: float


class DulacMaps:
    """Dulac maps of a polynomial field with the hemicycle structure.

    ``side`` selects the upper (``"u"``) or lower (``"l"``) hemicycle.
    """

    def __init__(self, obj, tol: float = DEFAULT_TOL, radius: float = 10.0, error_estimate: bool = True):
        P, Q = _field_of(obj)
        self.params = obj
        self.atlas = poincare_charts((P, Q), radius)
        self.tol = tol
        self.error_estimate = error_estimate
        self._fine = Propagator(self.atlas, rtol=tol)
        self._coarse = Propagator(self.atlas, rtol=10.0 * tol)
        self.evaluations = 0

    def _start(self, s: float, side: str) -> tuple[str, tuple[float, float]]:
        if not s > 0:
            raise ValueError(f"section parameter must be positive, got {s}")
        y_sign = 1.0 if side == "u" else -1.0
        if s < 4.0 / self.atlas.radius:
            return U2, (0.0, y_sign * s)
        return AFFINE, (0.0, y_sign / s)

    def _one(self, prop: Propagator, s: float, side: str, sign: float) -> float:
        chart, z = self._start(s, side)
        # the forward field leaves the far section with x increasing, returns with x decreasing
        c = prop.run(chart, z, sign, direction=-sign, far=False)
        return c.point[1]

    def half_map(self, s: float, side: str = "u", sign: float = 1.0) -> MapValue:
        """``D+`` (``sign=1``) or ``D-`` (``sign=-1``) at ``s``."""
        self.evaluations += 1
        v = self._one(self._fine, s, side, sign)
        if not self.error_estimate:
            return MapValue(v, self.tol * abs(v))
        v2 = self._one(self._coarse, s, side, sign)
        err = max(abs(v - v2), 4.0 * np.finfo(float).eps * abs(v))
        return MapValue(v, err)

    def difference(self, s: float, side: str = "u") -> MapValue:
        p = self.half_map(s, side, 1.0)
        m = self.half_map(s, side, -1.0)
        return MapValue(p.value - m.value, p.err + m.err)

    def return_map(self, s: float, side: str = "u") -> MapValue:
        """Full turn along the hemicycle starting on the far section, as ``R(s) - s``."""
        vals = []
        props = [self._fine, self._coarse] if self.error_estimate else [self._fine]
        for prop in props:
            chart, z = self._start(s, side)
            c1 = prop.run(chart, z, 1.0, direction=-1.0, far=False)
            c2 = prop.run(AFFINE, c1.point, 1.0, direction=1.0, far=True)
            y = c2.point[1]
            vals.append(abs(1.0 / y) - s)
        self.evaluations += 1
        err = abs(vals[0] - vals[1]) if len(vals) == 2 else self.tol * s
        return MapValue(vals[0], max(err, 4.0 * np.finfo(float).eps * s))


@dataclass
class MapSamples:
    s: np.ndarray
    value: np.ndarray
    err: np.ndarray
    label: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "value", "err"])
        for row in zip(self.s, self.value, self.err):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, label: str = "") -> "MapSamples":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["s", "value", "err"]:
            raise ValueError("unexpected CSV header")
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(data[:, 0], data[:, 1], data[:, 2], label)


def sample_map(fn: Callable[[float], MapValue], s_grid: Sequence[float], label: str = "") -> MapSamples:
    vals = [fn(float(s)) for s in s_grid]
    return MapSamples(
        np.asarray(s_grid, dtype=float),
        np.array([v.value for v in vals]),
        np.array([v.err for v in vals]),
        label,
    )


def integrate_to_section(obj, s: float, side: str = "u", sign: float = 1.0, tol: float = DEFAULT_TOL) -> MapValue:
    """Point reached on the near section starting from the far section at ``s``."""
    return DulacMaps(obj, tol).half_map(s, side, sign)


def dulac_difference(
    obj, s_grid: Sequence[float], side: str = "u", tol: float = DEFAULT_TOL, s_min: float = S_FLOOR
) -> MapSamples:
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(s_grid < s_min):
        raise ValueError(f"section parameters below the floor {s_min}")
    maps = DulacMaps(obj, tol)
    return sample_map(lambda s: maps.difference(s, side), s_grid, label=f"D_{side}")


# ---------------------------------------------------------------------------
# zeros


@dataclass
class ZeroReport:
    """Certified sign changes of a sampled map.

    ``count`` only includes brackets whose two ends both exceed their
    error estimate.  Samples without a trustworthy sign are listed in
    ``ambiguous`` and never counted.
    """

    count: int
    brackets: list[tuple[float, float]]
    zeros: list[float] = field(default_factory=list)
    ambiguous: list[float] = field(default_factory=list)
    label: str = ""
    residuals: list[float | None] = field(default_factory=list)  # map value at each refined zero

    @property
    def certified_count(self) -> int:
        return self.count

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "count": self.count,
            "brackets": [list(b) for b in self.brackets],
            "zeros": list(self.zeros),
            "residuals": list(self.residuals),
            "ambiguous": list(self.ambiguous),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _bisect(
    refine: Callable[[float], MapValue], lo: float, hi: float, vlo: float, max_bisections: int
) -> tuple[float, float]:
    """Geometric bisection; returns the last midpoint and the map value there."""
    mid, val = lo, vlo
    for _ in range(max_bisections):
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        mv = refine(mid)
        val = mv.value
        if abs(mv.value) <= mv.err:
            break
        if np.sign(mv.value) == np.sign(vlo):
            lo, vlo = mid, mv.value
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return mid, float(val)


def count_zeros(
    samples: MapSamples, refine: Callable[[float], MapValue] | None = None, max_bisections: int = 40
) -> ZeroReport:
    """Sign changes between consecutive samples whose sign exceeds the error estimate."""
    s, v, e = samples.s, samples.value, samples.err
    trusted = np.abs(v) > e
    ambiguous = [float(x) for x in s[~trusted]]
    idx = np.flatnonzero(trusted)
    brackets, zeros, residuals = [], [], []
    for i, j in zip(idx[:-1], idx[1:]):
        if np.sign(v[i]) == np.sign(v[j]):
            continue
        lo, hi = float(s[i]), float(s[j])
        brackets.append((lo, hi))
        if refine is not None:
            z, r = _bisect(refine, lo, hi, v[i], max_bisections)
        else:
            z, r = math.sqrt(lo * hi), None
        zeros.append(z)
        residuals.append(r)
    return ZeroReport(len(brackets), brackets, zeros, ambiguous, samples.label, residuals)


# ---------------------------------------------------------------------------
# simultaneous bifurcation search


@dataclass
class HuntResult:
    mu: QuadParams | None
    nu: NuParams | None
    upper: ZeroReport | None
    lower: ZeroReport | None
    evaluations: int
    success: bool
    stages: list[dict] = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "message": self.message,
            "mu": None if self.mu is None else self.mu.to_dict(),
            "nu": None if self.nu is None else self.nu.to_dict(),
            "upper": None if self.upper is None else self.upper.to_dict(),
            "lower": None if self.lower is None else self.lower.to_dict(),
            "evaluations": self.evaluations,
            "stages": self.stages,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def charge(self, n: int = 1) -> None:
        self.used += n
        if self.used > self.limit:
            raise FlowError(f"map evaluation budget {self.limit} exhausted")


def _pair(nu: NuParams, s: float, tol: float, budget: _Budget) -> tuple[MapValue, MapValue]:
    mu = phi_inverse(nu)
    maps = DulacMaps(mu, tol)
    budget.charge(2)
    return maps.difference(s, "u"), maps.difference(s, "l")


def _signed(v: MapValue, ref: float) -> float:
    """``ref * value`` if the sign is trustworthy, else 0."""
    return ref * v.value if abs(v.value) > v.err else 0.0


def _tune_scale(
    make: Callable[[float], NuParams],
    keep: Callable[[NuParams], bool],
    flip: Callable[[NuParams], float | None],
    start: float,
    shrink: float,
    max_shrinks: int,
    target: float,
    bisections: int = 8,
) -> tuple[NuParams, float] | None:
    """Find a scale ``c`` for which ``keep(make(c))`` holds and a new sign change appears.

    ``flip`` returns the largest admissible anchor below the previous one
    (or ``None``).  The scale is first reduced geometrically until both
    conditions hold, then bisected in log scale towards the last failing
    value so that the anchor lands near ``target``.
    """
    c, failed = start, None
    hit = None
    for _ in range(max_shrinks):
        nu = make(c)
        if keep(nu):
            s = flip(nu)
            if s is not None:
                hit = (c, nu, s)
                break
        failed = c
        c *= shrink
    if hit is None:
        return None
    if failed is not None:
        good = hit[0]
        for _ in range(bisections):
            mid = math.copysign(math.sqrt(abs(good * failed)), good)
            nu = make(mid)
            s = flip(nu) if keep(nu) else None
            if s is None:
                failed = mid
                continue
            good = mid
            hit = (mid, nu, s)
            if s >= target:
                break
    return hit[1], hit[2]


def hunt_simultaneous(
    a0: float,
    b0: float,
    s_range: tuple[float, float] = (S_FLOOR, 0.2),
    budget: int = 10_000,
    scale: float = 0.02,
    shrink: float = 0.25,
    tol: float = 1e-10,
    grid: int = 24,
    max_shrinks: int = 8,
) -> HuntResult:
    """Staged search for two zeros of the upper and one of the lower displacement map.

    Works in the coordinates ``nu`` at ``(a0, b0)`` with ``a0 < -1`` and
    ``nu5 < 0``: stage 1 switches on ``nu3``, stage 2 adds ``nu2`` of the
    same sign, stage 3 adds ``nu1`` of the opposite sign.  Each stage keeps
    the sign pattern of the previous one at its anchor points and creates
    a new sign change closer to the singular end of the section.
    """
    B = _Budget(budget)
    base = phi_params(QuadParams(a0, b0))
    stages: list[dict] = []
    lo, hi = s_range
    s_grid = np.geomspace(lo * 1.05, hi * 0.95, grid)
    if base.nu5 >= 0:
        return HuntResult(None, None, None, None, 0, False, stages, "construction needs c_minus < 0")
    try:
        # stage 1
        s1 = float(s_grid[-1])
        nu3 = scale
        nu = NuParams(0.0, 0.0, nu3, base.nu4, base.nu5)
        du, dl = _pair(nu, s1, tol, B)
        if not (_signed(du, nu3) < 0 and _signed(dl, nu3) > 0):
            return HuntResult(None, nu, None, None, B.used, False, stages, "stage 1 sign pattern not found")
        stages.append({"stage": 1, "nu": nu.to_dict(), "s1": s1, "Du": du.value, "Dl": dl.value})

        # stage 2: nu2 with nu2 * nu3 > 0 keeps the signs at s1 and flips Du below it
        def keep2(cand: NuParams) -> bool:
            du1, dl1 = _pair(cand, s1, tol, B)
            return _signed(du1, nu3) < 0 and _signed(dl1, nu3) > 0

        def flip2(cand: NuParams) -> float | None:
            # anchor s2 in the middle of the top band where nu2 * Du > 0
            band: list[float] = []
            for s in s_grid[:-1][::-1]:
                du2, _ = _pair(cand, float(s), tol, B)
                if _signed(du2, cand.nu2) > 0:
                    band.append(float(s))
                elif band:
                    break
            return band[len(band) // 2] if band else None

        # the widest band of the new sign leaves the most room for stage 3
        target2 = float(s_grid[-2])
        res = _tune_scale(
            lambda c: NuParams(0.0, c, nu3, base.nu4, base.nu5), keep2, flip2, nu3, shrink, max_shrinks, target2
        )
        if res is None:
            return HuntResult(None, None, None, None, B.used, False, stages, "stage 2 failed")
        nu, s2 = res
        stages.append({"stage": 2, "nu": nu.to_dict(), "s2": s2})

        # stage 3: nu1 with nu1 * nu2 < 0 keeps the signs at s1 and inside the nu2 band,
        # and flips both maps below it
        nu2 = nu.nu2

        def signs(cand: NuParams) -> tuple[np.ndarray, np.ndarray]:
            maps = DulacMaps(phi_inverse(cand), tol)
            B.charge(4 * len(s_grid))
            su = np.array([np.sign(_signed(maps.difference(float(s), "u"), 1.0)) for s in s_grid])
            sl = np.array([np.sign(_signed(maps.difference(float(s), "l"), 1.0)) for s in s_grid])
            return su, sl

        def judge(cand: NuParams) -> tuple[str, float | None, float | None]:
            """'big' if the stage-2 pattern is lost, 'small' if no flip yet, else 'ok'."""
            su, sl = signs(cand)
            if not (su[-1] * nu3 < 0 and sl[-1] * nu3 > 0):
                return "big", None, None
            band = [i for i in range(len(s_grid) - 1) if su[i] * nu2 > 0]
            if not band:
                return "big", None, None
            top = max(band)
            run = [i for i in band if all(su[j] * nu2 > 0 for j in range(i, top + 1))]
            i2 = run[len(run) // 2]
            c1 = cand.nu1
            below = [i for i in range(min(run)) if su[i] * c1 > 0 and sl[i] * c1 > 0]
            if not below:
                return "small", float(s_grid[i2]), None
            return "ok", float(s_grid[i2]), float(s_grid[max(below)])

        make = lambda c: NuParams(c, nu2, nu3, base.nu4, base.nu5)
        c = -math.copysign(abs(nu2), nu2)
        big = small = None
        hit = None
        for _ in range(max_shrinks):
            verdict, s2_new, s3 = judge(make(c))
            if verdict == "ok":
                hit = (c, s2_new, s3)
                break
            if verdict == "big":
                big = c
                c *= shrink
            else:
                small = c
                break
        if hit is None and big is not None and small is not None:
            for _ in range(2 * max_shrinks):
                c = math.copysign(math.sqrt(big * small), big)
                verdict, s2_new, s3 = judge(make(c))
                if verdict == "ok":
                    hit = (c, s2_new, s3)
                    break
                if verdict == "big":
                    big = c
                else:
                    small = c
        if hit is None:
            stages.append({"stage": 3, "too_big": big, "too_small": small})
            return HuntResult(None, None, None, None, B.used, False, stages, "stage 3 failed")
        nu = make(hit[0])
        stages.append({"stage": 3, "nu": nu.to_dict(), "s2": hit[1], "s3": hit[2]})

        # certification on the full grid
        mu = phi_inverse(nu)
        maps = DulacMaps(mu, tol)
        B.charge(4 * len(s_grid))
        up = count_zeros(sample_map(lambda s: maps.difference(s, "u"), s_grid, "D_u"))
        low = count_zeros(sample_map(lambda s: maps.difference(s, "l"), s_grid, "D_l"))
        ok = up.certified_count >= 2 and low.certified_count >= 1
        msg = "ok" if ok else "sign pattern found but certification incomplete"
        return HuntResult(mu, nu, up, low, B.used, ok, stages, msg)
    except FlowError as exc:
        return HuntResult(None, None, None, None, B.used, False, stages, str(exc))
