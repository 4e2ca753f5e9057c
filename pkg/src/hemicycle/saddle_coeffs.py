"""Saddle quantities and Dulac-map coefficients of a D-system.

Everything here is quadrature on explicit integrands built from ``f``,
``g``, ``q`` and the chart function ``K``.  Integrands that are removable
at 0 or decay like ``1/z**2`` at infinity are formed with exact
rational arithmetic (division by ``z`` drops a vanishing constant term)
so no cancellation happens near the endpoints.

Minus-side quantities are the plus-side quantities of the reflected
system ``x -> -x`` of the reversed field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from . import _quad
from .charts import KPartials, ProjectiveChart, RationalFn1, K_partials, projectivize
from .polyfield import DSystem, Poly1, check_H1, check_H2, homogeneous_data

EQ1_GUARD = 1e-3
_X = Poly1(np.array([0.0, 1.0]))


class HypothesisError(ValueError):
    """The system violates one of the structural hypotheses."""


class BranchError(ValueError):
    """A quantity was requested on the wrong side of ``lam = 1``."""


# ---------------------------------------------------------------------------
# L factors


class AxisLogFactor:
    """``log L(u) = int_0^u (r(z) + c) dz / z`` for a rational ``r`` with ``r(0) = -c``.

    The integral is tabulated on panels of ``[0, 1]`` in ``z`` and, for
    ``|u| > 1``, in ``w = 1/z``; a query adds one partial Gauss-Legendre
    panel to the tabulated prefix, so no interpolation error is incurred.
    """

    def __init__(self, r: RationalFn1, c: float, panels: int = 32, order: int = 20):
        self.c = float(c)
        self.r_inf = r.limit_at_infinity()
        self.order = order
        self.panels = panels
        self.nodes, self.weights = _quad.gauss_legendre(order)
        self._side = {}
        self.err = 0.0
        for sign in (1.0, -1.0):
            rs = r if sign > 0 else r.compose_neg()
            h = (rs + self.c).div_x()
            tail = (rs.inverted() - self.r_inf).div_x()
            ch, eh = self._cumulative(h)
            ct, et = self._cumulative(tail)
            self._side[sign] = (h, tail, ch, ct)
            self.err = max(self.err, eh, et)

    def _panel_integral(self, fn: RationalFn1, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        pts = mid[..., None] + half[..., None] * self.nodes
        return half * np.sum(fn(pts) * self.weights, axis=-1)

    def _cumulative(self, fn: RationalFn1):
        edges = np.linspace(0.0, 1.0, self.panels + 1)
        parts = self._panel_integral(fn, edges[:-1], edges[1:])
        # refinement check on the whole interval
        fine = np.linspace(0.0, 1.0, 2 * self.panels + 1)
        total_fine = float(np.sum(self._panel_integral(fn, fine[:-1], fine[1:])))
        cum = np.concatenate([[0.0], np.cumsum(parts)])
        return cum, abs(total_fine - cum[-1])

    def _prefix(self, fn, cum, t):
        """``int_0^t fn`` for ``0 <= t <= 1``."""
        t = np.asarray(t, dtype=float)
        k = np.minimum((t * self.panels).astype(int), self.panels - 1)
        lo = k / self.panels
        return cum[k] + self._panel_integral(fn, lo, t)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for sign in (1.0, -1.0):
            h, tail, ch, ct = self._side[sign]
            mask = (u * sign) > 0
            if not np.any(mask):
                continue
            t = np.abs(u[mask])
            inner = t <= 1.0
            vals = np.empty_like(t)
            vals[inner] = self._prefix(h, ch, t[inner])
            if np.any(~inner):
                tt = t[~inner]
                vals[~inner] = (
                    ch[-1] + (self.r_inf + self.c) * np.log(tt) + ct[-1] - self._prefix(tail, ct, 1.0 / tt)
                )
            out[mask] = vals
        return out if out.ndim else float(out)

    def tail_log(self, w, sign: float):
        """``log L(sign/w) - (r_inf + c) log(1/w)`` for ``0 < w <= 1``."""
        h, tail, ch, ct = self._side[1.0 if sign > 0 else -1.0]
        return ch[-1] + ct[-1] - self._prefix(tail, ct, w)

    def derivative_at_zero(self) -> float:
        return float(self._side[1.0][0](0.0))


@dataclass
class MFunction:
    """``M(u) = L(u) D(u)`` with tail-regularized evaluation."""

    L: AxisLogFactor
    D: RationalFn1

    def __call__(self, u):
        return np.exp(self.L(u)) * self.D(u)

    @cached_property
    def at_zero(self) -> float:
        return float(self.D(0.0))

    @cached_property
    def derivative_at_zero(self) -> float:
        return float(self.L.derivative_at_zero() * self.D(0.0) + self.D.deriv()(0.0))

    @cached_property
    def _D_inv(self):
        return {1.0: self.D.inverted(), -1.0: self.D.compose_neg().inverted()}

    def scaled_tail(self, w, sign: float, beta: float):
        """``w**(beta-1) M(sign/w)``, bounded as ``w -> 0`` when ``M = O(u**(beta-1))``."""
        w = np.asarray(w, dtype=float)
        power = beta - 1.0 - (self.L.r_inf + self.L.c)
        return np.exp(power * np.log(w) + self.L.tail_log(w, sign)) * self._D_inv[sign](w)

    def difference_quotient(self, z, sign: float):
        """``(M(sign z) - M(0)) / z`` for ``z > 0``."""
        z = np.asarray(z, dtype=float)
        small = z < 1e-7
        out = np.empty_like(z)
        zz = z[~small]
        out[~small] = (self(sign * zz) - self.at_zero) / zz
        out[small] = sign * self.derivative_at_zero
        return out if out.ndim else float(out)


def weighted_mellin_integral(M: MFunction, sign: float, beta: float, tol: float) -> tuple[float, float]:
    """``int_0^inf (M(sign z) - M(0)) z**(-1-beta) dz`` for ``0 < beta < 1``."""
    if not 0.0 < beta < 1.0:
        raise BranchError(f"exponent beta={beta} outside (0, 1)")
    head, e1 = _quad.quad(
        lambda z: float(M.difference_quotient(z, sign)), 0.0, 1.0, tol, tol, weight="alg", wvar=(-beta, 0.0)
    )
    tail, e2 = _quad.quad(lambda w: float(M.scaled_tail(w, sign, beta)), 0.0, 1.0, tol, tol)
    return head + tail - M.at_zero / beta, e1 + e2


# ---------------------------------------------------------------------------
# integrand assembly


@dataclass
class AxisData:
    """Rational functions on the two axes used by the saddle integrals."""

    system: DSystem
    chart: ProjectiveChart
    partials: KPartials
    lam: float
    A: RationalFn1  # q(z, 0) / g(z)
    B: RationalFn1  # q_n(z, 1) / ell(z, 1)
    C: RationalFn1  # q_n(1, z) / ell(1, z)

    @classmethod
    def build(cls, system: DSystem) -> "AxisData":
        hd = homogeneous_data(system)
        chart = projectivize(system)
        partials = K_partials(chart)
        A = RationalFn1(system.q.restrict_y(0.0), system.g)
        B = RationalFn1(hd.q_n.restrict_y(1.0), hd.ell.restrict_y(1.0))
        C = RationalFn1(hd.q_n.restrict_x(1.0), hd.ell.restrict_x(1.0))
        return cls(system, chart, partials, chart.lam, A, B, C)

    @cached_property
    def L2(self) -> AxisLogFactor:
        return AxisLogFactor(self.chart.K.on_x1_axis(), self.lam)

    @cached_property
    def L1(self) -> AxisLogFactor:
        return AxisLogFactor(self.chart.K.reciprocal().on_x2_axis(), 1.0 / self.lam)

    @cached_property
    def M2(self) -> MFunction:
        return MFunction(self.L2, self.partials.d2K_on_x1)

    @cached_property
    def M1(self) -> MFunction:
        return MFunction(self.L1, self.partials.d1_invK_on_x2)


def _check(system: DSystem) -> None:
    h1 = check_H1(system)
    if not h1:
        raise HypothesisError(f"H1 fails ({h1.reason}) at {h1.witness}")
    h2 = check_H2(system)
    if not h2:
        raise HypothesisError(f"H2 fails ({h2.reason}) at {h2.witness}")


def _half_line_rational(R: RationalFn1, tol: float) -> tuple[float, float]:
    """``int_0^inf R`` for a rational ``R = O(z**-2)``."""
    head, e1 = _quad.quad(R, 0.0, 1.0, tol, tol)
    tail_fn = R.inverted().div_x().div_x()
    tail, e2 = _quad.quad(tail_fn, 0.0, 1.0, tol, tol)
    return head + tail, e1 + e2


def _axis(system_or_data) -> AxisData:
    if isinstance(system_or_data, AxisData):
        return system_or_data
    _check(system_or_data)
    return AxisData.build(system_or_data)


# ---------------------------------------------------------------------------
# public quantities


@dataclass(frozen=True)
class Estimate:
    value: float
    err: float

    def to_dict(self) -> dict[str, float]:
        return {"value": self.value, "err": self.err}


def L_factor(system: DSystem, which: int, u):
    """``L_1`` or ``L_2`` evaluated at ``u`` (scalar or array)."""
    ax = _axis(system)
    L = {1: ax.L1, 2: ax.L2}[which]
    return np.exp(L(u))


def M_function(system: DSystem, which: int) -> MFunction:
    ax = _axis(system)
    return {1: ax.M1, 2: ax.M2}[which]


def compute_d0(system, tol: float = _quad.DEFAULT_TOL) -> Estimate:
    """First saddle quantity, integrated over the whole line."""
    ax = _axis(system)
    F = ax.A + ax.B * ax.lam
    S = F + F.compose_neg()
    val, err = _half_line_rational(S, tol)
    return Estimate(-val, err)


def compute_log_delta0(system, tol: float = _quad.DEFAULT_TOL) -> Estimate:
    """``log Delta0^+``; the minus side is this applied to the reflected system."""
    ax = _axis(system)
    F = ax.A + ax.B * ax.lam
    val, err = _half_line_rational(F, tol)
    return Estimate(-val, err)


def _G2_plus(ax: AxisData, tol: float) -> Estimate:
    lam = ax.lam
    inv_part = ax.A.inverted().div_x()  # A(1/z)/z
    z_part = RationalFn1(ax.A.num * _X, ax.A.den)  # z A(z)
    bracket = (-inv_part - z_part) + (lam + 1.0)
    val, err = _quad.quad(bracket.div_x(), 0.0, 1.0, tol, tol)
    return Estimate(val, err)


def _G1_bracket(ax: AxisData) -> RationalFn1:
    lam = ax.lam
    return (ax.C + RationalFn1(ax.B.num * _X, ax.B.den)) + (1.0 + 1.0 / lam)


def compute_G(system, tol: float = _quad.DEFAULT_TOL) -> dict[str, Estimate]:
    """``G1, G2`` and their one-sided parts ``G1+, G1-, G2+, G2-``."""
    ax = _axis(system)
    rx = AxisData.build(ax.system.reflected())
    g1_integrand = _G1_bracket(ax).div_x()
    G1, e1 = _quad.quad(g1_integrand, -1.0, 1.0, tol, tol)
    A = ax.A
    G2, e2 = _half_line_rational(A + A.compose_neg(), tol)
    g1p, e3 = _quad.quad(g1_integrand, 0.0, 1.0, tol, tol)
    g1m_r, e4 = _quad.quad(_G1_bracket(rx).div_x(), 0.0, 1.0, tol, tol)
    return {
        "G1": Estimate(G1, e1),
        "G2": Estimate(G2, e2),
        "G1+": Estimate(g1p, e3),
        "G1-": Estimate(g1m_r, e4),
        "G2+": _G2_plus(ax, tol),
        "G2-": _G2_plus(rx, tol),
    }


def _branch(lam: float) -> str:
    if abs(lam - 1.0) < EQ1_GUARD:
        return "F3"
    return "F1" if lam > 1.0 else "F2"


def compute_F(system, which: str | None = None, tol: float = _quad.DEFAULT_TOL, G: dict | None = None) -> Estimate:
    """Second saddle quantity ``F1`` (lam > 1), ``F2`` (lam < 1) or ``F3`` (lam = 1)."""
    ax = _axis(system)
    lam = ax.lam
    branch = _branch(lam)
    which = which or branch
    if which != branch:
        raise BranchError(f"{which} requested but lam={lam:.6g} selects {branch}")
    G = G or compute_G(ax, tol)
    if which == "F3":
        g2 = G["G2"]
        v = -g2.value * ax.partials.mixed_combination
        return Estimate(v, abs(ax.partials.mixed_combination) * g2.err)
    if which == "F2":
        jm, em = weighted_mellin_integral(ax.M2, -1.0, lam, tol)
        jp, ep = weighted_mellin_integral(ax.M2, 1.0, lam, tol)
        eg = math.exp(G["G2"].value)
        return Estimate(jm + eg * jp, em + eg * ep + abs(jp) * eg * G["G2"].err)
    beta = 1.0 / lam
    jp, ep = weighted_mellin_integral(ax.M1, 1.0, beta, tol)
    jm, em = weighted_mellin_integral(ax.M1, -1.0, beta, tol)
    eg = math.exp(G["G1"].value)
    return Estimate(-(jp + eg * jm), ep + eg * em + abs(jm) * eg * G["G1"].err)


def _one_sided_deltas(ax: AxisData, tol: float, G: dict[str, Estimate], side: str) -> dict[str, Estimate]:
    """Plus-side coefficients of ``ax`` (``side`` only labels the output)."""
    lam = ax.lam
    ld0 = compute_log_delta0(ax, tol)
    d0p = math.exp(ld0.value)
    out = {"Delta0": Estimate(d0p, d0p * ld0.err)}
    g2p = G["G2+"]
    c2 = d0p * d0p * math.exp(-g2p.value)
    if abs(lam - 1.0) < EQ1_GUARD:
        out["Delta3"] = Estimate(c2 * ax.partials.mixed_combination, c2 * abs(ax.partials.mixed_combination) * (2 * ld0.err + g2p.err))
    elif lam < 1.0:
        j, e = weighted_mellin_integral(ax.M2, 1.0, lam, tol)
        out["Delta2"] = Estimate(c2 * j, c2 * (e + abs(j) * (2 * ld0.err + g2p.err)))
    else:
        j, e = weighted_mellin_integral(ax.M1, 1.0, 1.0 / lam, tol)
        c1 = -lam * d0p * math.exp(-G["G1+"].value)
        out["Delta1"] = Estimate(c1 * j, abs(c1) * (e + abs(j) * (ld0.err + G["G1+"].err)))
    return {f"{k}{side}": v for k, v in out.items()}


def compute_Delta(system, tol: float = _quad.DEFAULT_TOL) -> dict[str, Estimate]:
    """Coefficients of ``D+`` and ``D-`` and their differences.

    Keys: ``Delta0+``, ``Delta0-``, ``Delta0`` and the second-order
    coefficient selected by ``lam`` (``Delta1`` for lam > 1, ``Delta2`` for
    lam < 1, ``Delta3`` for lam = 1) on both sides.
    """
    ax = _axis(system)
    rx = AxisData.build(ax.system.reflected())
    Gp = compute_G(ax, tol)
    Gm = compute_G(rx, tol)
    plus = _one_sided_deltas(ax, tol, Gp, "+")
    minus = _one_sided_deltas(rx, tol, Gm, "-")
    out = {**plus, **minus}
    for key in ("Delta0", "Delta1", "Delta2", "Delta3"):
        if key + "+" in out:
            p, m = out[key + "+"], out[key + "-"]
            out[key] = Estimate(p.value - m.value, p.err + m.err)
    return out


@dataclass
class CoefficientReport:
    lam: float
    d0: Estimate
    G: dict[str, Estimate]
    d1: Estimate | None
    d1_branch: str
    Delta: dict[str, Estimate] = field(default_factory=dict)
    stability: str = "undetermined"
    params: dict[str, float] = field(default_factory=dict)

    @property
    def branch(self) -> str:
        return {"F1": "gt1", "F2": "lt1", "F3": "eq1"}[self.d1_branch]

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": dict(self.params),
            "lambda": self.lam,
            "branch": self.branch,
            "d0": self.d0.to_dict(),
            "G": {k: v.to_dict() for k, v in sorted(self.G.items())},
            "d1": None if self.d1 is None else self.d1.to_dict(),
            "d1_branch": self.d1_branch,
            "Delta": {k: v.to_dict() for k, v in sorted(self.Delta.items())},
            "stability": self.stability,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def classify_stability(d0: float, d1: float | None, tol: float = 1e-10) -> str:
    """Stability of the hemicycle from the first non-vanishing saddle quantity."""
    if abs(d0) > tol:
        return "stable" if d0 < 0 else "unstable"
    if d1 is None or abs(d1) <= tol:
        return "undetermined"
    return "stable" if d1 < 0 else "unstable"


def coefficient_report(system: DSystem, tol: float = _quad.DEFAULT_TOL, with_deltas: bool = True) -> CoefficientReport:
    ax = _axis(system)
    d0 = compute_d0(ax, tol)
    G = compute_G(ax, tol)
    branch = _branch(ax.lam)
    d1 = compute_F(ax, tol=tol, G=G)
    Delta = compute_Delta(ax, tol) if with_deltas else {}
    thresh = max(10.0 * d0.err, 1e-12)
    return CoefficientReport(
        lam=ax.lam,
        d0=d0,
        G=G,
        d1=d1,
        d1_branch=branch,
        Delta=Delta,
        stability=classify_stability(d0.value, d1.value, thresh),
        params=dict(system.params),
    )

