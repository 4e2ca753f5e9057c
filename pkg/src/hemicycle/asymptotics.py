"""Compensators, incomplete Mellin transforms and expansion fitting.

The Dulac maps studied here expand in powers ``s**lam`` corrected by
the compensator ``omega(s; alpha)``.  This module provides

* ``compensator`` -- the Roussarie-Ecalle family ``(s**-alpha - 1)/alpha``;
* ``mellin_hat`` -- the solution of ``x f_hat' - alpha f_hat = f`` that is
  analytic in ``alpha`` away from the non-negative integers;
* ``fit_expansion`` / ``ExpansionRegressor`` -- linear least squares for
  the coefficients of a truncated expansion, with an optional
  one-dimensional search for the exponent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import _quad
from ._validation import as_sample_vector, check_finite_scalar

POLE_GUARD = 1e-8


class PoleError(ValueError):
    """``alpha`` sits on a pole of the incomplete Mellin transform."""


class RankDeficientError(np.linalg.LinAlgError):
    """Design matrix of an expansion fit has dependent columns."""


def compensator(s, alpha: float):
    """``(s**-alpha - 1)/alpha``, continued by ``-log s`` at ``alpha = 0``."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("compensator needs s > 0")
    L = np.log(s)
    if alpha == 0.0:
        out = -L
    else:
        out = np.expm1(-alpha * L) / alpha
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TaylorFn:
    """A function together with its Taylor coefficients at 0.

    ``taylor(i)`` must return ``f^{(i)}(0) / i!``.
    """

    f: Callable[[float], float]
    taylor: Callable[[int], float]
    series_terms: int = 30

    def __call__(self, x):
        return self.f(x)

    def remainder_over_power(self, t: float, sign: float, k: int) -> float:
        """``(f - T_{k-1} f)(sign t) / t**k`` for ``t > 0``.

        Below ``10**(-2/k)`` the direct difference loses more than two
        digits to cancellation, so the Taylor tail is summed instead.
        """
        if k > 0 and t < min(0.3, 10.0 ** (-2.0 / k)):
            return sum(self.taylor(i) * sign**i * t ** (i - k) for i in range(k, k + self.series_terms))
        x = sign * t
        poly = sum(self.taylor(i) * x**i for i in range(k))
        return (self.f(x) - poly) / t**k


def _nearest_pole(alpha: float) -> int | None:
    i0 = round(alpha)
    if i0 >= 0 and abs(alpha - i0) < POLE_GUARD:
        return int(i0)
    return None


def default_order(alpha: float) -> int:
    """Smallest truncation order keeping the remainder weight away from ``t**-1``."""
    return max(0, math.ceil(alpha + 0.5))


def mellin_hat(
    f: TaylorFn,
    alpha: float,
    x: float,
    k: int | None = None,
    tol: float = _quad.DEFAULT_TOL,
    regularized: bool = False,
) -> float:
    """Incomplete Mellin transform ``f_hat(alpha, x)``.

    With ``regularized=True`` the value ``(i0 - alpha) f_hat`` is returned,
    where ``i0`` is the nearest non-negative integer; it extends
    continuously to ``alpha = i0`` with limit ``taylor(i0) x**i0``.
    """
    alpha = check_finite_scalar(alpha, "alpha")
    x = check_finite_scalar(x, "x")
    pole = _nearest_pole(alpha)
    if pole is not None:
        if not regularized:
            raise PoleError(f"alpha={alpha} is within {POLE_GUARD} of the pole {pole}")
        return float(f.taylor(pole) * x**pole)
    if k is None:
        k = default_order(alpha)
    if k <= alpha:
        raise ValueError(f"truncation order k={k} must exceed alpha={alpha}")
    head = sum(f.taylor(i) * x**i / (i - alpha) for i in range(k))
    t_max = abs(x)
    if t_max == 0.0:
        val = head if k > 0 else 0.0
    else:
        sign = 1.0 if x > 0 else -1.0
        integral, _ = _quad.quad(
            lambda t: f.remainder_over_power(t, sign, k),
            0.0,
            t_max,
            epsabs=tol * 1e-2,
            epsrel=tol,
            weight="alg",
            wvar=(k - alpha - 1.0, 0.0),
        )
        val = head + t_max**alpha * integral
    if regularized:
        i0 = round(alpha)
        return float((i0 - alpha) * val)
    return float(val)


# ---------------------------------------------------------------------------
# expansion models

MODELS = ("M0", "M1", "M2", "M3")


@dataclass(frozen=True)
class FitModel:
    """Truncated expansion ``delta + sum c_j phi_j(s; lam)``.

    * M0: ``s**lam``
    * M1: M0 plus ``s**(lam+1)``
    * M2: M0 plus ``s**(2 lam)``
    * M3: M0 plus ``s**(lam+1) omega(s; 1-lam)`` and ``s**(lam+1)``

    ``lam=None`` means the exponent is searched on ``[hint/2, 2 hint]``.
    """

    name: str = "M0"
    lam: float | None = None
    lam_hint: float = 1.0
    offset: bool = True

    def __post_init__(self) -> None:
        if self.name not in MODELS:
            raise ValueError(f"unknown model {self.name!r}; expected one of {MODELS}")
        if self.lam is None and not self.lam_hint > 0:
            raise ValueError("lam_hint must be positive when the exponent is free")

    def column_names(self) -> list[str]:
        names = ["delta"] if self.offset else []
        names.append("Delta0")
        names += {"M0": [], "M1": ["Delta1"], "M2": ["Delta2"], "M3": ["Delta3", "Delta1"]}[self.name]
        return names

    def design(self, s: np.ndarray, lam: float) -> np.ndarray:
        cols = [np.ones_like(s)] if self.offset else []
        cols.append(s**lam)
        if self.name == "M1":
            cols.append(s ** (lam + 1.0))
        elif self.name == "M2":
            cols.append(s ** (2.0 * lam))
        elif self.name == "M3":
            cols.append(s ** (lam + 1.0) * compensator(s, 1.0 - lam))
            cols.append(s ** (lam + 1.0))
        return np.column_stack(cols)


@dataclass
class FitResult:
    model: str
    lam: float
    coeffs: dict[str, float]
    stderr: dict[str, float]
    resid_max: float
    cond: float = float("nan")
    lam_free: bool = False
    n_samples: int = 0
    window: tuple[float, float] = (float("nan"), float("nan"))
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "lambda": self.lam,
            "coeffs": dict(self.coeffs),
            "stderr": dict(self.stderr),
            "resid_max": self.resid_max,
            "window": list(self.window),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def predict(self, s, model: FitModel | None = None) -> np.ndarray:
        m = model or FitModel(self.model, lam=self.lam, offset="delta" in self.coeffs)
        A = m.design(np.asarray(s, dtype=float), self.lam)
        return A @ np.array([self.coeffs[k] for k in m.column_names()])


def _weights(values: np.ndarray, weighting) -> np.ndarray:
    if weighting is None or (isinstance(weighting, str) and weighting == "uniform"):
        return np.ones_like(values)
    if isinstance(weighting, str) and weighting == "relative":
        scale = np.abs(values)
        floor = 1e-300 + 1e-12 * float(np.max(scale))
        return 1.0 / np.maximum(scale, floor)
    w = np.asarray(weighting, dtype=float)
    if w.shape != values.shape:
        raise ValueError("weights must match the sample shape")
    return w


def _solve(A: np.ndarray, y: np.ndarray, w: np.ndarray, rcond: float = 1e-12):
    Aw = A * w[:, None]
    yw = y * w
    norms = np.linalg.norm(Aw, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError("design matrix has an all-zero column")
    As = Aw / norms
    coef_s, _, rank, sv = np.linalg.lstsq(As, yw, rcond=None)
    if rank < A.shape[1] or sv[-1] <= rcond * sv[0]:
        raise RankDeficientError(f"design matrix rank {rank} < {A.shape[1]} columns")
    coef = coef_s / norms
    resid = yw - Aw @ coef
    dof = max(A.shape[0] - A.shape[1], 0)
    sigma2 = float(resid @ resid) / dof if dof > 0 else float("nan")
    cov_s = np.linalg.inv(As.T @ As) * sigma2
    stderr = np.sqrt(np.abs(np.diag(cov_s))) / norms
    return coef, stderr, resid, float(sv[0] / sv[-1])


def fit_expansion(
    s: Sequence[float],
    values: Sequence[float],
    model: FitModel | str = "M0",
    weighting="uniform",
    lam_bounds: tuple[float, float] | None = None,
) -> FitResult:
    """Least-squares fit of ``model`` to samples ``values(s)``."""
    if isinstance(model, str):
        model = FitModel(model)
    s = as_sample_vector(s, "s")
    y = as_sample_vector(values, "values")
    if s.shape != y.shape:
        raise ValueError("s and values must have the same length")
    if np.any(s <= 0):
        raise ValueError("sample points must be positive")
    w = _weights(y, weighting)
    ncol = len(model.column_names())
    if s.size < ncol:
        raise RankDeficientError(f"{s.size} samples cannot determine {ncol} coefficients")

    def objective(lam: float) -> float:
        try:
            _, _, r, _ = _solve(model.design(s, lam), y, w)
        except RankDeficientError:
            return np.inf
        return float(r @ r)

    lam_free = model.lam is None
    if lam_free:
        lo, hi = lam_bounds or (0.5 * model.lam_hint, 2.0 * model.lam_hint)
        grid = np.linspace(lo, hi, 41)
        vals = np.array([objective(g) for g in grid])
        if not np.any(np.isfinite(vals)):
            raise RankDeficientError("no admissible exponent in the search interval")
        j = int(np.nanargmin(vals))
        a, b = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
        res = optimize.minimize_scalar(objective, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
        lam = float(res.x) if res.fun <= vals[j] else float(grid[j])
    else:
        lam = float(model.lam)
    coef, se, resid, cond = _solve(model.design(s, lam), y, w)
    names = model.column_names()
    raw_resid = y - model.design(s, lam) @ coef
    return FitResult(
        model=model.name,
        lam=lam,
        coeffs={k: float(v) for k, v in zip(names, coef)},
        stderr={k: float(v) for k, v in zip(names, se)},
        resid_max=float(np.max(np.abs(raw_resid))),
        cond=cond,
        lam_free=lam_free,
        n_samples=int(s.size),
        window=(float(s.min()), float(s.max())),
    )


class ExpansionRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_expansion`.

    ``X`` holds the section parameter ``s`` (shape ``(m,)`` or ``(m, 1)``)
    and ``y`` the sampled map values.
    """

    def __init__(self, model="M0", lam=None, lam_hint=1.0, offset=True, weighting="uniform"):
        self.model = model
        self.lam = lam
        self.lam_hint = lam_hint
        self.offset = offset
        self.weighting = weighting

    def _spec(self) -> FitModel:
        return FitModel(self.model, lam=self.lam, lam_hint=self.lam_hint, offset=self.offset)

    def fit(self, X, y):
        s = as_sample_vector(X, "X")
        self.result_ = fit_expansion(s, y, self._spec(), weighting=self.weighting)
        self.lambda_ = self.result_.lam
        self.coef_ = np.array(list(self.result_.coeffs.values()))
        self.stderr_ = np.array(list(self.result_.stderr.values()))
        self.resid_max_ = self.result_.resid_max
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        s = as_sample_vector(X, "X")
        spec = FitModel(self.model, lam=self.lambda_, offset=self.offset)
        return spec.design(s, self.lambda_) @ self.coef_
