"""Projective charts of a D-system and the saddle function K.

Near the saddle at infinity on the positive x-axis we use the chart
``(x1, x2) = (1/x, y/x)``.  After dropping a positive time factor the
field becomes ``x1 P1 d/dx1 + x2 P2 d/dx2``, and ``K = P2 / P1`` is the
function whose expansion drives every asymptotic coefficient.

The module also builds the three-chart Poincare atlas used by the flow
integrator: the affine plane plus the two standard charts at infinity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .polyfield import DSystem, Poly1, Poly2, PolyError

DEFAULT_SWITCH_RADIUS = 10.0


@dataclass(frozen=True, eq=False)
class RationalFn1:
    """Quotient of two univariate polynomials."""

    num: Poly1
    den: Poly1

    def __call__(self, x):
        return self.num(x) / self.den(x)

    def __add__(self, other) -> "RationalFn1":
        if isinstance(other, RationalFn1):
            return RationalFn1(self.num * other.den + other.num * self.den, self.den * other.den)
        return RationalFn1(self.num + self.den * float(other), self.den)

    __radd__ = __add__

    def __neg__(self) -> "RationalFn1":
        return RationalFn1(-self.num, self.den)

    def __sub__(self, other) -> "RationalFn1":
        if isinstance(other, RationalFn1):
            return self + (-other)
        return self + (-float(other))

    def __mul__(self, other) -> "RationalFn1":
        if isinstance(other, RationalFn1):
            return RationalFn1(self.num * other.num, self.den * other.den)
        return RationalFn1(self.num * float(other), self.den)

    __rmul__ = __mul__

    def deriv(self) -> "RationalFn1":
        return RationalFn1(self.num.deriv() * self.den - self.num * self.den.deriv(), self.den * self.den)

    def div_x(self) -> "RationalFn1":
        """Divide by x; the numerator must vanish at the origin."""
        return RationalFn1(self.num.div_x(), self.den)

    def compose_neg(self) -> "RationalFn1":
        return RationalFn1(self.num.compose_neg(), self.den.compose_neg())

    def inverted(self) -> "RationalFn1":
        """The function ``w -> r(1/w)`` written as a quotient of polynomials."""
        d = max(self.num.degree, self.den.degree, 0)
        return RationalFn1(self.num.reversed(d), self.den.reversed(d))

    def limit_at_infinity(self) -> float:
        inv = self.inverted()
        if inv.den(0.0) == 0.0:
            raise PolyError("rational function is unbounded at infinity")
        return float(inv(0.0))


@dataclass(frozen=True, eq=False)
class RationalFn2:
    """Quotient of two bivariate polynomials with exact quotient-rule derivatives."""

    num: Poly2
    den: Poly2

    def __call__(self, x1, x2):
        return self.num(x1, x2) / self.den(x1, x2)

    def d1(self) -> "RationalFn2":
        return RationalFn2(self.num.dx() * self.den - self.num * self.den.dx(), self.den * self.den)

    def d2(self) -> "RationalFn2":
        return RationalFn2(self.num.dy() * self.den - self.num * self.den.dy(), self.den * self.den)

    def reciprocal(self) -> "RationalFn2":
        return RationalFn2(self.den, self.num)

    def on_x1_axis(self) -> RationalFn1:
        """``u -> r(u, 0)``."""
        return RationalFn1(self.num.restrict_y(0.0), self.den.restrict_y(0.0))

    def on_x2_axis(self) -> RationalFn1:
        """``u -> r(0, u)``."""
        return RationalFn1(self.num.restrict_x(0.0), self.den.restrict_x(0.0))


@dataclass(frozen=True, eq=False)
class ProjectiveChart:
    """Chart data at the saddle ``s1``: ``P1``, ``P2`` and ``K = P2/P1``."""

    system: DSystem
    P1: Poly2
    P2: Poly2

    @cached_property
    def K(self) -> RationalFn2:
        return RationalFn2(self.P2, self.P1)

    @property
    def lam(self) -> float:
        """Hyperbolicity ratio ``-K(0, 0)``."""
        return -float(self.K(0.0, 0.0))

    def field(self, x1, x2):
        return x1 * self.P1(x1, x2), x2 * self.P2(x1, x2)


def projectivize(system: DSystem) -> ProjectiveChart:
    """Build ``P1`` and ``P2`` from ``f``, ``g``, ``q``."""
    n = system.n
    # x1^n f(1/x1, x2/x1) = sum f_ij x1^(n-i-j) x2^j
    f_hat = Poly2.from_terms({(n - i - j, j): c for i, j, c in system.f.terms})
    q_hat = Poly2.from_terms({(n - i - j, j): c for i, j, c in system.q.terms})
    g_hat = Poly2.from_terms({(n + 1 - i, 0): float(c) for i, c in enumerate(system.g.coeffs) if c != 0})
    P1 = -(Poly2.y() * f_hat) - g_hat
    P2 = P1 + q_hat
    return ProjectiveChart(system=system, P1=P1, P2=P2)


@dataclass(frozen=True)
class KPartials:
    """Derivatives of K at the origin and the two axis restrictions used downstream."""

    K00: float
    d1K: float
    d2K: float
    d12K: float
    d2K_on_x1: RationalFn1  # u -> d2 K(u, 0)
    d1_invK_on_x2: RationalFn1  # u -> d1 (1/K)(0, u)

    @property
    def mixed_combination(self) -> float:
        """``d1K * d2K + d12K`` at the origin."""
        return self.d1K * self.d2K + self.d12K


def K_partials(chart: ProjectiveChart) -> KPartials:
    K = chart.K
    K1, K2 = K.d1(), K.d2()
    K12 = K1.d2()
    inv1 = K.reciprocal().d1()
    return KPartials(
        K00=float(K(0.0, 0.0)),
        d1K=float(K1(0.0, 0.0)),
        d2K=float(K2(0.0, 0.0)),
        d12K=float(K12(0.0, 0.0)),
        d2K_on_x1=K2.on_x1_axis(),
        d1_invK_on_x2=inv1.on_x2_axis(),
    )


# ---------------------------------------------------------------------------
# Poincare atlas

AFFINE, U1, U2 = "affine", "U1", "U2"


def _top_transform(p: Poly2, d: int, which: str) -> Poly2:
    """``x1^d p(1/x1, x2/x1)`` for U1, ``v^d p(u/v, 1/v)`` for U2."""
    terms: dict[tuple[int, int], float] = {}
    for i, j, c in p.terms:
        if which == U1:
            key = (d - i - j, j)
        else:
            key = (i, d - i - j)
        terms[key] = terms.get(key, 0.0) + c
    return Poly2.from_terms(terms)


def to_affine(chart: str, z) -> tuple[float, float]:
    a, b = float(z[0]), float(z[1])
    if chart == AFFINE:
        return a, b
    if chart == U1:
        return 1.0 / a, b / a
    if chart == U2:
        return a / b, 1.0 / b
    raise ValueError(chart)


def from_affine(chart: str, p) -> tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    if chart == AFFINE:
        return x, y
    if chart == U1:
        return 1.0 / x, y / x
    if chart == U2:
        return x / y, 1.0 / y
    raise ValueError(chart)


def chart_transition(src: str, dst: str, z) -> tuple[float, float]:
    if src == dst:
        return float(z[0]), float(z[1])
    if src == U1 and dst == U2:
        a, b = float(z[0]), float(z[1])
        return 1.0 / b, a / b
    if src == U2 and dst == U1:
        a, b = float(z[0]), float(z[1])
        return b / a, 1.0 / a
    return from_affine(dst, to_affine(src, z))


@dataclass(frozen=True, eq=False)
class PoincareAtlas:
    """Affine chart plus the two charts at infinity for a polynomial field.

    Fields at infinity carry the time factor ``|x1|**(d-1)`` (resp.
    ``|v|**(d-1)``) so orientation is preserved on both hemispheres.
    """

    P: Poly2
    Q: Poly2
    radius: float = DEFAULT_SWITCH_RADIUS

    @cached_property
    def degree(self) -> int:
        return max(self.P.degree, self.Q.degree, 1)

    @cached_property
    def _u1(self) -> tuple[Poly2, Poly2]:
        d = self.degree
        return _top_transform(self.P, d, U1), _top_transform(self.Q, d, U1)

    @cached_property
    def _u2(self) -> tuple[Poly2, Poly2]:
        d = self.degree
        return _top_transform(self.P, d, U2), _top_transform(self.Q, d, U2)

    def vector(self, chart: str, z, sign: float = 1.0) -> tuple[float, float]:
        """Rescaled field in ``chart``; ``sign=-1`` reverses time."""
        a, b = float(z[0]), float(z[1])
        if chart == AFFINE:
            return sign * self.P.eval_scalar(a, b), sign * self.Q.eval_scalar(a, b)
        odd = (self.degree - 1) % 2 == 1
        if chart == U1:
            Pt, Qt = self._u1
            p, q = Pt.eval_scalar(a, b), Qt.eval_scalar(a, b)
            s = sign * (np.sign(a) if odd and a != 0 else 1.0)
            return s * (-a * p), s * (q - b * p)
        if chart == U2:
            Ph, Qh = self._u2
            p, q = Ph.eval_scalar(a, b), Qh.eval_scalar(a, b)
            s = sign * (np.sign(b) if odd and b != 0 else 1.0)
            return s * (p - a * q), s * (-b * q)
        raise ValueError(chart)

    def rhs(self, chart: str, sign: float, hemisphere: float) -> Callable:
        """ODE right-hand side with the orientation factor frozen for a segment."""
        a_u1, b_u1 = self._u1
        a_u2, b_u2 = self._u2
        odd = (self.degree - 1) % 2 == 1
        h = hemisphere if odd else 1.0
        if chart == AFFINE:
            P, Q = self.P.eval_scalar, self.Q.eval_scalar

            def f(t, z):
                return np.array([sign * P(z[0], z[1]), sign * Q(z[0], z[1])])

        elif chart == U1:
            Pt, Qt = a_u1.eval_scalar, b_u1.eval_scalar

            def f(t, z):
                p = Pt(z[0], z[1])
                return np.array([sign * h * (-z[0] * p), sign * h * (Qt(z[0], z[1]) - z[1] * p)])

        else:
            Ph, Qh = a_u2.eval_scalar, b_u2.eval_scalar

            def f(t, z):
                q = Qh(z[0], z[1])
                return np.array([sign * h * (Ph(z[0], z[1]) - z[0] * q), sign * h * (-z[1] * q)])

        return f

    def jacobian(self, chart: str, z, step: float = 1e-6) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        J = np.zeros((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            J[:, k] = (np.array(self.vector(chart, z + e)) - np.array(self.vector(chart, z - e))) / (2 * step)
        return J

    def preferred_chart(self, p) -> str:
        x, y = float(p[0]), float(p[1])
        if max(abs(x), abs(y)) <= self.radius:
            return AFFINE
        return U1 if abs(x) >= abs(y) else U2


def poincare_charts(system_or_field, radius: float = DEFAULT_SWITCH_RADIUS) -> PoincareAtlas:
    """Atlas for a D-system or for an explicit ``(P, Q)`` pair."""
    if isinstance(system_or_field, DSystem):
        return PoincareAtlas(system_or_field.P, system_or_field.Q, radius)
    P, Q = system_or_field
    return PoincareAtlas(P, Q, radius)
