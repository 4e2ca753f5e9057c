"""The five-parameter quadratic family and its closed forms.

The family is

    x' = (b-2)/4 + eps1 x + (1-b) y + a x^2 + eps2 x y + b y^2,
    y' = eps0 - 2 x y,

with admissible region ``-2 < a < 0`` and ``0 < b < 2``.  For ``eps0 = 0``
it is a D-system of degree ``n = 1``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Any

import numpy as np
from scipy import integrate

from .polyfield import DSystem, Poly1, Poly2

A_EXCLUSION = 1e-3


class ParameterError(ValueError):
    """Raised when parameters leave the admissible region."""


@dataclass(frozen=True)
class QuadParams:
    a: float
    b: float
    eps0: float = 0.0
    eps1: float = 0.0
    eps2: float = 0.0

    def validate(self) -> "QuadParams":
        if not (-2.0 < self.a < 0.0):
            raise ParameterError(f"a={self.a} outside (-2, 0)")
        if not (0.0 < self.b < 2.0):
            raise ParameterError(f"b={self.b} outside (0, 2)")
        if self.eps1**2 >= self.a * (self.b - 2.0):
            raise ParameterError("eps1 too large: g acquires real roots")
        if self.eps2**2 >= 4.0 * self.b * (self.a + 2.0):
            raise ParameterError("eps2 too large: the top-degree form loses positivity")
        return self

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.a, self.b, self.eps0, self.eps1, self.eps2)

    def to_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}

    def with_eps(self, eps0=None, eps1=None, eps2=None) -> "QuadParams":
        return replace(
            self,
            eps0=self.eps0 if eps0 is None else eps0,
            eps1=self.eps1 if eps1 is None else eps1,
            eps2=self.eps2 if eps2 is None else eps2,
        )

    # derived constants
    @property
    def lam(self) -> float:
        return -(self.a + 2.0) / self.a

    @property
    def lam_prime(self) -> float:
        return self.lam + min(self.lam, 1.0)

    @property
    def eta1(self) -> float:
        return self.b / (self.a + 2.0)

    @property
    def eta2(self) -> float:
        return (self.b - 2.0) / (4.0 * self.a)

    @property
    def eta_b(self) -> float:
        return math.sqrt(self.b / (2.0 - self.b))


@dataclass(frozen=True)
class NuParams:
    """Coordinates ``(eps0, eps_plus, eps_minus, c_plus, c_minus)``."""

    nu1: float
    nu2: float
    nu3: float
    nu4: float
    nu5: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.nu1, self.nu2, self.nu3, self.nu4, self.nu5)

    def to_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}


def make_quadratic(mu: QuadParams, check: bool = True) -> DSystem:
    """The D-system for ``mu`` (``eps0`` is recorded in params but must vanish)."""
    if check:
        mu.validate()
    if mu.eps0 != 0.0:
        raise ParameterError("eps0 != 0 breaks the invariant axis; use quadratic_field")
    a, b, e1, e2 = mu.a, mu.b, mu.eps1, mu.eps2
    f = Poly2.from_terms({(0, 0): 1.0 - b, (1, 0): e2, (0, 1): b})
    g = Poly1(np.array([(b - 2.0) / 4.0, e1, a]))
    q = Poly2.from_terms({(1, 0): -2.0})
    return DSystem(n=1, f=f, g=g, q=q, params=mu.to_dict())


def quadratic_field(mu: QuadParams) -> tuple[Poly2, Poly2]:
    """Polynomial pair ``(P, Q)`` including the ``eps0`` term."""
    a, b, e0, e1, e2 = mu.as_tuple()
    P = Poly2.from_terms(
        {(0, 0): (b - 2.0) / 4.0, (1, 0): e1, (0, 1): 1.0 - b, (2, 0): a, (1, 1): e2, (0, 2): b}
    )
    Q = Poly2.from_terms({(0, 0): e0, (1, 1): -2.0})
    return P, Q


def vector_field(mu: QuadParams, x, y):
    a, b, e0, e1, e2 = mu.as_tuple()
    dx = (b - 2.0) / 4.0 + e1 * x + (1.0 - b) * y + a * x * x + e2 * x * y + b * y * y
    dy = e0 - 2.0 * x * y
    return dx, dy


# ---------------------------------------------------------------------------
# parameter change and involution


def _kappa(a: float, b: float) -> float:
    return math.sqrt(b * (a + 2.0) / (a * (b - 2.0)))


def phi_params(mu: QuadParams) -> NuParams:
    a, b, e0, e1, e2 = mu.as_tuple()
    k = _kappa(a, b)
    return NuParams(
        nu1=e0,
        nu2=-e2 - 2.0 * k * e1,
        nu3=-e2 + 2.0 * k * e1,
        nu4=(a + 1.0) + (1.0 - b),
        nu5=(a + 1.0) - (1.0 - b),
    )


def phi_inverse(nu: NuParams, around: QuadParams | None = None) -> QuadParams:
    """Inverse of :func:`phi_params`; the map is global so ``around`` is unused."""
    del around
    a = 0.5 * (nu.nu4 + nu.nu5) - 1.0
    b = 1.0 - 0.5 * (nu.nu4 - nu.nu5)
    if not (-2.0 < a < 0.0 and 0.0 < b < 2.0):
        raise ParameterError(f"nu maps outside the admissible region: a={a}, b={b}")
    k = _kappa(a, b)
    return QuadParams(a=a, b=b, eps0=nu.nu1, eps1=(nu.nu3 - nu.nu2) / (4.0 * k), eps2=-0.5 * (nu.nu2 + nu.nu3))


def involution(mu: QuadParams) -> QuadParams:
    """Parameter map induced by ``(x, y) -> (eta x, -eta^2 y)``."""
    eta = mu.eta_b
    return QuadParams(
        a=mu.a,
        b=2.0 - mu.b,
        eps0=-(eta**3) * mu.eps0,
        eps1=eta * mu.eps1,
        eps2=-mu.eps2 / eta,
    )


def involution_nu(nu: NuParams) -> NuParams:
    eta = math.sqrt((2.0 - nu.nu4 + nu.nu5) / (2.0 + nu.nu4 - nu.nu5))
    return NuParams(
        nu1=-(eta**3) * nu.nu1,
        nu2=-nu.nu3 / eta,
        nu3=-nu.nu2 / eta,
        nu4=nu.nu5,
        nu5=nu.nu4,
    )


def conjugacy_map(mu: QuadParams, x, y):
    eta = mu.eta_b
    return eta * x, -(eta**2) * y


# ---------------------------------------------------------------------------
# center variety and first integrals


@dataclass(frozen=True)
class CenterVerdict:
    membership: str  # "Z0", "Z1", "both" or "none"
    residual_Z0: float
    residual_Z1: float

    @property
    def on_variety(self) -> bool:
        return self.membership != "none"

    @property
    def component(self) -> str | None:
        """Component whose first integral is used; ``both`` prefers Z0."""
        return {"none": None, "both": "Z0"}.get(self.membership, self.membership)


def center_variety(mu: QuadParams, tol: float = 1e-12) -> CenterVerdict:
    r0 = max(abs(mu.eps0), abs(mu.eps1), abs(mu.eps2))
    r1 = max(abs(mu.a + mu.b), abs(mu.eps0), abs(2.0 * mu.eps1 + mu.eps2))
    in0, in1 = r0 <= tol, r1 <= tol
    membership = "both" if in0 and in1 else "Z0" if in0 else "Z1" if in1 else "none"
    return CenterVerdict(membership=membership, residual_Z0=r0, residual_Z1=r1)


def _H0(mu: QuadParams, x, y):
    a, b = mu.a, mu.b
    ell = b / (a + 2.0)
    m = -(b - 1.0) / (a + 1.0)
    n = (b - 2.0) / (4.0 * a)
    return np.abs(y) ** a * (x * x + ell * y * y + m * y + n)


def _H1(mu: QuadParams, x, y, angle=None):
    a, b, e2 = mu.a, mu.b, mu.eps2
    r1 = 2.0 * b * y + (2.0 - b) + e2 * x
    alpha = math.sqrt(4.0 * b * (2.0 - b) - e2 * e2)
    theta = np.arctan2(alpha * x, r1) if angle is None else angle
    # exponent sign fixed by requiring grad H . X = 0 identically
    return np.abs(y) ** a * (r1 * r1 + alpha * alpha * x * x) * np.exp(-2.0 * e2 / alpha * theta)


def first_integral_angle(mu: QuadParams, x, y):
    """Principal argument used by the ``Z1`` integral (cut below the lower center)."""
    b, e2 = mu.b, mu.eps2
    r1 = 2.0 * b * y + (2.0 - b) + e2 * x
    alpha = math.sqrt(4.0 * b * (2.0 - b) - e2 * e2)
    return np.arctan2(alpha * x, r1)


def first_integral(mu: QuadParams, x, y, component: str | None = None, angle=None, tol: float = 1e-12):
    """Evaluate the first integral of the center component containing ``mu``.

    ``angle`` lets callers pass a continuously unwrapped branch of the
    argument for orbits that wind around the lower center.
    """
    if component is None:
        v = center_variety(mu, tol)
        component = v.component
        if v.membership == "both" and abs(mu.a + 1.0) < A_EXCLUSION:
            component = "Z1"
    if component == "Z0":
        if abs(mu.a + 1.0) < A_EXCLUSION:
            raise ParameterError("the Z0 integral is singular at a = -1")
        return _H0(mu, x, y)
    if component == "Z1":
        return _H1(mu, x, y, angle)
    raise ParameterError("parameters are not on the center variety")


# ---------------------------------------------------------------------------
# closed forms


def _guard_a(a: float, side: str) -> None:
    if abs(a + 1.0) < A_EXCLUSION:
        raise ParameterError("a inside the exclusion band around -1")
    if side == "m" and not (-2.0 < a < -1.0):
        raise ParameterError("m coefficients need -2 < a < -1")
    if side == "n" and not (-1.0 < a < 0.0):
        raise ParameterError("n coefficients need -1 < a < 0")


def d0_closed(mu: QuadParams) -> float:
    a, b, _, e1, e2 = mu.as_tuple()
    return 2.0 * math.pi / a * (
        e1 / math.sqrt((b - 2.0) * a - e1 * e1) + e2 / math.sqrt(4.0 * b * (a + 2.0) - e2 * e2)
    )


def G2_closed(mu: QuadParams) -> float:
    a, b, _, e1, _ = mu.as_tuple()
    return -2.0 * math.pi * e1 / (a * math.sqrt((b - 2.0) * a - e1 * e1))


def G1_closed(mu: QuadParams) -> float:
    a, b, _, _, e2 = mu.as_tuple()
    return 2.0 * math.pi * e2 / ((a + 2.0) * math.sqrt(4.0 * b * (a + 2.0) - e2 * e2))


def m_coefficients(a: float, b: float) -> tuple[float, float, float]:
    """``(m0, m1, m2)`` on the positive side, valid for ``-2 < a < -1``."""
    _guard_a(a, "m")
    eta = (b - 2.0) / (4.0 * a)
    G = math.gamma
    g2a = G((2.0 * a + 1.0) / a)
    m0 = (b - 1.0) * eta ** (-1.0 - 1.0 / a) / (a * (a + 1.0))
    m2 = -math.sqrt(math.pi) / (2.0 * a * a) * G((a + 2.0) / (2.0 * a)) / g2a * eta ** (-(a + 2.0) / (2.0 * a))
    m1 = (
        -math.sqrt(math.pi)
        * (b - 1.0)
        / (2.0 * a * a * (a + 1.0))
        * (G((3.0 * a + 2.0) / (2.0 * a)) / g2a + math.sqrt(math.pi) / a)
        * eta ** (-(3.0 * a + 2.0) / (2.0 * a))
    )
    return m0, m1, m2


def n_coefficients(a: float, b: float) -> tuple[float, float, float]:
    """``(n0, n1, n2)`` on the positive side, valid for ``-1 < a < 0``.

    ``n2`` is recovered from the linear relation tying it to ``n0`` and ``n1``.
    """
    _guard_a(a, "n")
    eta = b / (a + 2.0)
    G = math.gamma
    n0 = (1.0 - b) / ((a + 1.0) * (a + 2.0)) * eta ** (-(a + 1.0) / (a + 2.0))
    n1 = (
        math.sqrt(math.pi)
        / (2.0 * (a + 2.0) ** 2)
        * G(a / (2.0 * (a + 2.0)))
        / G((2.0 * a + 3.0) / (a + 2.0))
        * eta ** (-a / (2.0 * (a + 2.0)))
    )
    ratio = a * (b - 1.0) / (2.0 * (a + 1.0) * b)
    n2 = 0.5 * (2.0 * n1 * ratio + math.pi * n0 / math.sqrt(b * (a + 2.0) ** 3))
    return n0, n1, n2


def n2_direct(a: float, b: float) -> float:
    """``n2`` from its own Gamma-function expression (consistency check)."""
    _guard_a(a, "n")
    eta = b / (a + 2.0)
    G = math.gamma
    rhs = (
        math.sqrt(math.pi)
        * (a + 2.0) ** 2
        / (4.0 * (a + 1.0))
        * (G((3.0 * a + 4.0) / (2.0 * (a + 2.0))) / G((2.0 * a + 3.0) / (a + 2.0)) - math.sqrt(math.pi) / (a + 2.0))
        * eta ** (-(a + 1.0) / (a + 2.0))
    )
    return rhs * 2.0 * (1.0 - b) / ((a + 2.0) ** 3 * math.sqrt(b * (a + 2.0)))


def _q(f, lo, hi, tol, **kw):
    val, err = integrate.quad(f, lo, hi, epsabs=tol, epsrel=tol, limit=400, **kw)
    return val, err


def m_coefficients_quadrature(a: float, b: float, tol: float = 1e-12) -> tuple[float, float, float]:
    """The defining integrals of ``(m0, m1, m2)`` evaluated numerically.

    Each half-line integral is split at 1; the tail uses ``u = 1/w`` with
    the algebraic factors pulled out so both pieces carry integrable
    power weights.
    """
    _guard_a(a, "m")
    eta = (b - 2.0) / (4.0 * a)
    p = -2.0 - 1.0 / a
    r = math.sqrt(eta)

    i0 = _split(lambda u: (1.0 + eta * u * u) ** p, 1.0 + 2.0 / a, lambda w: (w * w + eta) ** p, 1.0, tol)
    m0 = 2.0 * (b - 1.0) / (a * a) * i0

    def m2_head(u):
        z = eta * u * u
        if z < 1e-6:
            return eta * (p + 0.5 * p * (p - 1.0) * z)
        return ((1.0 + z) ** p - 1.0) / (u * u)

    i2 = _split(m2_head, 2.0 + 2.0 / a, lambda w: (w * w + eta) ** p, 2.0, tol)
    i2 -= 1.0 / (-2.0 / a - 1.0)
    m2 = -2.0 / (a * a) * i2

    j1 = _split(
        lambda u: (1.0 + eta * u * u) ** p * math.atan(r * u),
        1.0 + 2.0 / a,
        lambda w: (w * w + eta) ** p * math.atan2(r, w),
        1.0,
        tol,
    )
    j2 = _split(lambda u: (1.0 + eta * u * u) ** (p - 1.0), 2.0 + 2.0 / a, lambda w: (w * w + eta) ** (p - 1.0), 2.0, tol)
    m1 = -2.0 * (b - 1.0) / a**4 * (j1 / r + (1.0 + 2.0 * a) * j2)
    return m0, m1, m2


def n_coefficients_quadrature(a: float, b: float, tol: float = 1e-12) -> tuple[float, float]:
    """The defining integrals of ``(n0, n1)`` evaluated numerically."""
    _guard_a(a, "n")
    eta = b / (a + 2.0)
    p = -(2.0 * a + 3.0) / (a + 2.0)
    inv_lam = -a / (a + 2.0)
    i0 = _split(lambda u: (1.0 + eta * u * u) ** p, -inv_lam, lambda w: (w * w + eta) ** p, 1.0, tol)
    n0 = 2.0 * (1.0 - b) / (a + 2.0) ** 2 * i0

    def n1_head(u):
        z = eta * u * u
        if z < 1e-6:
            return eta * (p + 0.5 * p * (p - 1.0) * z)
        return ((1.0 + z) ** p - 1.0) / (u * u)

    i1 = _split(n1_head, 1.0 - inv_lam, lambda w: (w * w + eta) ** p, 2.0, tol)
    i1 -= 1.0 / inv_lam
    n1 = 2.0 / (a + 2.0) ** 2 * i1
    return n0, n1


def _split(head, head_alpha: float, tail, tail_alpha: float, tol: float) -> float:
    """``int_0^1 head(u) u^head_alpha du + int_0^1 tail(w) w^tail_alpha dw``."""
    h, _ = _q(head, 0.0, 1.0, tol, weight="alg", wvar=(head_alpha, 0.0))
    t, _ = _q(tail, 0.0, 1.0, tol, weight="alg", wvar=(tail_alpha, 0.0))
    return h + t


def prediction_ratio(a: float, b: float) -> float:
    """Slope of the first-order kernel of the second saddle quantity.

    For ``a > -1`` this is the coefficient of ``eps2`` relative to ``eps1``
    in the linear part of the ``F1`` branch; for ``a < -1`` the coefficient
    of ``eps1`` relative to ``eps2`` in the ``F2`` branch.
    """
    _guard_a(a, "any")
    if a > -1.0:
        return a * (b - 1.0) / (2.0 * (a + 1.0) * b)
    return 2.0 * (a + 2.0) * (b - 1.0) / ((a + 1.0) * (b - 2.0))


def d0_direction(a: float, b: float) -> tuple[float, float]:
    """Gradient direction of the first saddle quantity in ``(eps1, eps2)``."""
    return 2.0 * math.sqrt(b * (a + 2.0)) / math.sqrt(a * (b - 2.0)), 1.0


def lemma_delta_constant(a: float, b: float, tol: float = 1e-12) -> float:
    """Rate ``d(delta_plus - delta_minus)/d eps0`` at ``eps = 0``."""
    n = (b - 2.0) / (4.0 * a)
    c = (1.0 - a) / a
    p = -_split(lambda u: (1.0 + n * u * u) ** c, -2.0 / a, lambda w: (w * w + n) ** c, 0.0, tol)
    return 2.0 * p * n ** (-1.0 / a) / a


def closed_forms(mu: QuadParams) -> dict[str, Any]:
    """All closed-form quantities available at ``mu``, keyed by name."""
    mu.validate()
    a, b = mu.a, mu.b
    out: dict[str, Any] = {
        "params": mu.to_dict(),
        "lambda": mu.lam,
        "lambda_prime": mu.lam_prime,
        "eta1": mu.eta1,
        "eta2": mu.eta2,
        "eta_b": mu.eta_b,
        "d0": d0_closed(mu),
        "G1": G1_closed(mu),
        "G2": G2_closed(mu),
        "d0_direction": list(d0_direction(a, b)),
    }
    if abs(a + 1.0) >= A_EXCLUSION:
        out["prediction_ratio"] = prediction_ratio(a, b)
        if a < -1.0:
            m0, m1, m2 = m_coefficients(a, b)
            out.update({"m0_plus": m0, "m1_plus": m1, "m2_plus": m2})
        else:
            n0, n1, n2 = n_coefficients(a, b)
            out.update({"n0_plus": n0, "n1_plus": n1, "n2_plus": n2})
    out["lemma_delta"] = lemma_delta_constant(a, b)
    return out
