"""Polynomial containers and hypothesis checks for D-systems.

A D-system is the planar field

    x' = y f(x, y) + g(x),    y' = y q(x, y)

with ``deg f = deg q = n`` (odd) and ``deg g = n + 1``.  The two
structural hypotheses are checked exactly enough to be trusted: every
positivity question is reduced to "a univariate polynomial has no real
root", which is answered with a Sturm sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

DEFAULT_DEGREE_BOUND = 8


class PolyError(ValueError):
    """Raised on malformed polynomial data."""


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return np.zeros(1)
    return c[: nz[-1] + 1].copy()


@dataclass(frozen=True, eq=False)
class Poly1:
    """Univariate polynomial, coefficients in increasing degree."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    @classmethod
    def const(cls, c: float) -> "Poly1":
        return cls(np.array([c], dtype=float))

    @property
    def degree(self) -> int:
        if self.is_zero():
            return -1
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0.0

    def coef(self, i: int) -> float:
        return float(self.coeffs[i]) if 0 <= i < len(self.coeffs) else 0.0

    def __call__(self, x):
        return P.polyval(x, self.coeffs)

    def __add__(self, other) -> "Poly1":
        other = _as_poly1(other)
        return Poly1(P.polyadd(self.coeffs, other.coeffs))

    __radd__ = __add__

    def __neg__(self) -> "Poly1":
        return Poly1(-self.coeffs)

    def __sub__(self, other) -> "Poly1":
        return self + (-_as_poly1(other))

    def __rsub__(self, other) -> "Poly1":
        return _as_poly1(other) - self

    def __mul__(self, other) -> "Poly1":
        other = _as_poly1(other)
        return Poly1(P.polymul(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def deriv(self) -> "Poly1":
        if len(self.coeffs) == 1:
            return Poly1.const(0.0)
        return Poly1(P.polyder(self.coeffs))

    def divmod(self, other: "Poly1") -> tuple["Poly1", "Poly1"]:
        q, r = P.polydiv(self.coeffs, other.coeffs)
        return Poly1(q), Poly1(r)

    def reversed(self, d: int | None = None) -> "Poly1":
        """Return ``x**d * p(1/x)``; ``d`` defaults to the degree."""
        d = self.degree if d is None else d
        if d < self.degree:
            raise PolyError("reversal degree below polynomial degree")
        c = np.zeros(max(d, 0) + 1)
        c[: len(self.coeffs)] = self.coeffs
        return Poly1(c[::-1])

    def div_x(self, tol: float = 1e-12) -> "Poly1":
        """Exact division by x.  The constant term must (nearly) vanish."""
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        if abs(self.coeffs[0]) > tol * scale:
            raise PolyError(f"constant term {self.coeffs[0]:.3e} does not vanish")
        if len(self.coeffs) == 1:
            return Poly1.const(0.0)
        return Poly1(self.coeffs[1:])

    def compose_neg(self) -> "Poly1":
        """Return p(-x)."""
        sign = (-1.0) ** np.arange(len(self.coeffs))
        return Poly1(self.coeffs * sign)

    def scaled(self, c: float) -> "Poly1":
        return Poly1(self.coeffs * c)

    def to_list(self) -> list[float]:
        return [float(v) for v in self.coeffs]

    def __repr__(self) -> str:
        return f"Poly1({self.to_list()})"


def _as_poly1(p) -> Poly1:
    if isinstance(p, Poly1):
        return p
    return Poly1.const(float(p))


# ---------------------------------------------------------------------------
# Sturm sequences


def sturm_sequence(p: Poly1, rel_tol: float = 1e-12) -> list[Poly1]:
    """Sturm chain of ``p``; remainders below ``rel_tol`` are treated as zero."""
    if p.degree < 1:
        return [p]
    scale = float(np.max(np.abs(p.coeffs)))
    seq = [p.scaled(1.0 / scale)]
    d = p.deriv()
    seq.append(d.scaled(1.0 / float(np.max(np.abs(d.coeffs)))))
    while seq[-1].degree > 0:
        _, r = seq[-2].divmod(seq[-1])
        r = -r
        mag = float(np.max(np.abs(r.coeffs)))
        if mag <= rel_tol:
            break
        seq.append(r.scaled(1.0 / mag))
    return seq


def _sign_changes(values: Sequence[float]) -> int:
    s = [np.sign(v) for v in values if v != 0.0]
    return int(sum(1 for u, v in zip(s, s[1:]) if u != v))


def _signs_at_infinity(seq: list[Poly1], positive: bool) -> list[float]:
    out = []
    for q in seq:
        lead = q.coeffs[-1]
        if positive or q.degree % 2 == 0:
            out.append(float(np.sign(lead)))
        else:
            out.append(float(-np.sign(lead)))
    return out


def count_real_roots(p: Poly1, lo: float = -np.inf, hi: float = np.inf) -> int:
    """Number of distinct real roots of ``p`` in ``(lo, hi]``."""
    if p.is_zero():
        raise PolyError("zero polynomial has infinitely many roots")
    if p.degree == 0:
        return 0
    seq = sturm_sequence(p)
    va = _signs_at_infinity(seq, False) if lo == -np.inf else [q(lo) for q in seq]
    vb = _signs_at_infinity(seq, True) if hi == np.inf else [q(hi) for q in seq]
    return _sign_changes(va) - _sign_changes(vb)


def cauchy_bound(p: Poly1) -> float:
    c = p.coeffs
    return 1.0 + float(np.max(np.abs(c[:-1]) / abs(c[-1]))) if p.degree > 0 else 0.0


def isolate_real_roots(p: Poly1, width: float = 1e-10) -> list[tuple[float, float]]:
    """Disjoint intervals each holding exactly one real root, via Sturm bisection."""
    if p.degree < 1:
        return []
    seq = sturm_sequence(p)

    def v(x: float) -> int:
        return _sign_changes([q(x) for q in seq])

    bound = cauchy_bound(p)
    out: list[tuple[float, float]] = []
    stack = [(-bound, bound, v(-bound), v(bound))]
    while stack:
        a, b, va, vb = stack.pop()
        k = va - vb
        if k <= 0:
            continue
        if k == 1 and b - a <= width * max(1.0, abs(a)):
            out.append((a, b))
            continue
        if b - a <= 1e-15 * max(1.0, abs(a)):
            out.append((a, b))
            continue
        m = 0.5 * (a + b)
        vm = v(m)
        stack.append((a, m, va, vm))
        stack.append((m, b, vm, vb))
    return sorted(out)


# ---------------------------------------------------------------------------
# Bivariate polynomials


def _grid(c) -> np.ndarray:
    c = np.atleast_2d(np.asarray(c, dtype=float))
    return c


@dataclass(frozen=True, eq=False)
class Poly2:
    """Bivariate polynomial; ``coeffs[i, j]`` multiplies ``x**i * y**j``."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = _grid(self.coeffs)
        rows = np.nonzero(np.any(c != 0, axis=1))[0]
        cols = np.nonzero(np.any(c != 0, axis=0))[0]
        if rows.size == 0:
            c = np.zeros((1, 1))
        else:
            c = c[: rows[-1] + 1, : cols[-1] + 1].copy()
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def const(cls, c: float) -> "Poly2":
        return cls(np.array([[c]], dtype=float))

    @classmethod
    def from_terms(cls, terms: dict[tuple[int, int], float]) -> "Poly2":
        if not terms:
            return cls.const(0.0)
        mi = max(i for i, _ in terms) + 1
        mj = max(j for _, j in terms) + 1
        c = np.zeros((mi, mj))
        for (i, j), v in terms.items():
            c[i, j] += v
        return cls(c)

    @classmethod
    def x(cls) -> "Poly2":
        return cls(np.array([[0.0], [1.0]]))

    @classmethod
    def y(cls) -> "Poly2":
        return cls(np.array([[0.0, 1.0]]))

    @property
    def degree(self) -> int:
        nz = np.argwhere(self.coeffs != 0)
        if nz.size == 0:
            return -1
        return int(nz.sum(axis=1).max())

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def coef(self, i: int, j: int) -> float:
        c = self.coeffs
        if 0 <= i < c.shape[0] and 0 <= j < c.shape[1]:
            return float(c[i, j])
        return 0.0

    def __call__(self, x, y):
        return P.polyval2d(x, y, self.coeffs)

    @cached_property
    def terms(self) -> tuple[tuple[int, int, float], ...]:
        return tuple((int(i), int(j), float(self.coeffs[i, j])) for i, j in np.argwhere(self.coeffs != 0))

    def eval_scalar(self, x: float, y: float) -> float:
        """Fast path for plain floats (used inside ODE right-hand sides)."""
        s = 0.0
        for i, j, c in self.terms:
            s += c * x**i * y**j
        return s

    def _pad(self, shape: tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape)
        out[: self.coeffs.shape[0], : self.coeffs.shape[1]] = self.coeffs
        return out

    def __add__(self, other) -> "Poly2":
        other = _as_poly2(other)
        shape = (
            max(self.coeffs.shape[0], other.coeffs.shape[0]),
            max(self.coeffs.shape[1], other.coeffs.shape[1]),
        )
        return Poly2(self._pad(shape) + other._pad(shape))

    __radd__ = __add__

    def __neg__(self) -> "Poly2":
        return Poly2(-self.coeffs)

    def __sub__(self, other) -> "Poly2":
        return self + (-_as_poly2(other))

    def __rsub__(self, other) -> "Poly2":
        return _as_poly2(other) - self

    def __mul__(self, other) -> "Poly2":
        other = _as_poly2(other)
        a, b = self.coeffs, other.coeffs
        out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
        for i, j in np.argwhere(a != 0):
            out[i : i + b.shape[0], j : j + b.shape[1]] += a[i, j] * b
        return Poly2(out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly2":
        out = Poly2.const(1.0)
        for _ in range(k):
            out = out * self
        return out

    def dx(self) -> "Poly2":
        c = self.coeffs
        if c.shape[0] == 1:
            return Poly2.const(0.0)
        return Poly2(c[1:] * np.arange(1, c.shape[0])[:, None])

    def dy(self) -> "Poly2":
        c = self.coeffs
        if c.shape[1] == 1:
            return Poly2.const(0.0)
        return Poly2(c[:, 1:] * np.arange(1, c.shape[1])[None, :])

    def homogeneous_part(self, d: int) -> "Poly2":
        return Poly2.from_terms({(i, j): c for i, j, c in self.terms if i + j == d})

    def restrict_x(self, x0: float) -> Poly1:
        """The univariate polynomial ``y -> p(x0, y)``."""
        return Poly1(P.polyval(x0, self.coeffs))

    def restrict_y(self, y0: float) -> Poly1:
        """The univariate polynomial ``x -> p(x, y0)``."""
        return Poly1(P.polyval(y0, self.coeffs.T))

    def substitute_neg_x(self) -> "Poly2":
        """Return ``p(-x, y)``."""
        sign = (-1.0) ** np.arange(self.coeffs.shape[0])
        return Poly2(self.coeffs * sign[:, None])

    def to_nested(self, size: int | None = None) -> list[list[float]]:
        size = size or max(self.coeffs.shape)
        return self._pad((size, size)).tolist()

    def __repr__(self) -> str:
        return f"Poly2({self.coeffs.tolist()})"


def _as_poly2(p) -> Poly2:
    if isinstance(p, Poly2):
        return p
    return Poly2.const(float(p))


# ---------------------------------------------------------------------------
# D-systems


@dataclass(frozen=True)
class HomogeneousData:
    """Top-degree data that fixes the saddles at infinity."""

    n: int
    f_n: Poly2
    q_n: Poly2
    g_top: float
    ell: Poly2

    @property
    def ratio(self) -> float:
        """Hyperbolicity ratio of the saddle at infinity on the positive x-axis."""
        return -1.0 + self.q_n.coef(self.n, 0) / self.g_top


@dataclass(frozen=True, eq=False)
class DSystem:
    """The field ``x' = y f + g``, ``y' = y q`` with its degree bookkeeping."""

    n: int
    f: Poly2
    g: Poly1
    q: Poly2
    params: dict[str, float] = field(default_factory=dict)
    degree_bound: int = DEFAULT_DEGREE_BOUND

    def __post_init__(self) -> None:
        n = self.n
        if n < 1 or n % 2 == 0:
            raise PolyError(f"n must be a positive odd integer, got {n}")
        if n + 1 > self.degree_bound:
            raise PolyError(f"degree {n + 1} exceeds the bound {self.degree_bound}")
        if self.f.degree > n or self.q.degree > n:
            raise PolyError("f and q must have total degree at most n")
        if self.g.degree > n + 1:
            raise PolyError("g must have degree at most n + 1")
        if self.g.coef(n + 1) == 0.0:
            raise PolyError("leading coefficient g_{n+1} must be nonzero")

    # vector field pieces
    @cached_property
    def P(self) -> Poly2:
        return Poly2.y() * self.f + Poly2(self.g.coeffs[:, None])

    @cached_property
    def Q(self) -> Poly2:
        return Poly2.y() * self.q

    def field(self, x, y):
        return self.P(x, y), self.Q(x, y)

    def reflected(self) -> "DSystem":
        """System conjugate to the reversed field by ``x -> -x``."""
        return DSystem(
            n=self.n,
            f=self.f.substitute_neg_x(),
            g=self.g.compose_neg(),
            q=-self.q.substitute_neg_x(),
            params=dict(self.params),
            degree_bound=self.degree_bound,
        )

    # serialization
    def to_dict(self) -> dict[str, Any]:
        size = self.n + 1
        g = np.zeros(self.n + 2)
        g[: len(self.g.coeffs)] = self.g.coeffs
        return {
            "n": self.n,
            "f": self.f.to_nested(size),
            "g": g.tolist(),
            "q": self.q.to_nested(size),
            "params": {k: float(v) for k, v in self.params.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict[str, Any], degree_bound: int = DEFAULT_DEGREE_BOUND) -> "DSystem":
        try:
            n = int(d["n"])
            f = Poly2(np.array(d["f"], dtype=float))
            g = Poly1(np.array(d["g"], dtype=float))
            q = Poly2(np.array(d["q"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise PolyError(f"malformed D-system record: {exc}") from exc
        params = {k: float(v) for k, v in (d.get("params") or {}).items()}
        return cls(n=n, f=f, g=g, q=q, params=params, degree_bound=degree_bound)

    @classmethod
    def from_json(cls, text: str, degree_bound: int = DEFAULT_DEGREE_BOUND) -> "DSystem":
        return cls.from_dict(json.loads(text), degree_bound=degree_bound)


def homogeneous_data(system: DSystem) -> HomogeneousData:
    n = system.n
    f_n = system.f.homogeneous_part(n)
    q_n = system.q.homogeneous_part(n)
    g_top = system.g.coef(n + 1)
    x, y = Poly2.x(), Poly2.y()
    ell = y * f_n - x * q_n + g_top * x ** (n + 1)
    return HomogeneousData(n=n, f_n=f_n, q_n=q_n, g_top=g_top, ell=ell)


@dataclass(frozen=True)
class HypothesisResult:
    holds: bool
    witness: Any = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.holds


def _nonpositive_witness(p: Poly1) -> float | None:
    """A point where ``p <= 0`` if one exists, else None."""
    if p(0.0) <= 0.0:
        return 0.0
    roots = isolate_real_roots(p)
    if not roots:
        return None
    cands = []
    mids = [0.5 * (a + b) for a, b in roots]
    cands.extend(mids)
    cands.extend(0.5 * (u + v) for u, v in zip(mids, mids[1:]))
    cands.extend([mids[0] - 1.0, mids[-1] + 1.0])
    return float(min(cands, key=lambda t: p(t)))


def check_H1(system: DSystem) -> HypothesisResult:
    """``g(x) < 0`` for every real x."""
    g = system.g
    if g(0.0) >= 0.0:
        return HypothesisResult(False, 0.0, "g(0) >= 0")
    if count_real_roots(g) == 0:
        return HypothesisResult(True)
    w = _nonpositive_witness(-g)
    return HypothesisResult(False, w, "g has a real root")


def check_H2(system: DSystem) -> HypothesisResult:
    """``ell(x, y) > 0`` away from the origin, tested on the two affine slices."""
    ell = homogeneous_data(system).ell
    slice_x = ell.restrict_x(1.0)  # z -> ell(1, z)
    slice_y = ell.restrict_y(1.0)  # z -> ell(z, 1)
    for poly, make in ((slice_x, lambda z: (1.0, z)), (slice_y, lambda z: (z, 1.0))):
        if poly.is_zero():
            return HypothesisResult(False, make(0.0), "ell vanishes on a slice")
        w = _nonpositive_witness(poly)
        if w is not None:
            return HypothesisResult(False, make(w), "ell is not positive")
        if count_real_roots(poly) != 0:
            return HypothesisResult(False, make(0.0), "ell has a real zero")
    return HypothesisResult(True)
