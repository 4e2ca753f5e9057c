"""Thin wrappers around QUADPACK with explicit failure reporting."""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np
from scipy import integrate

DEFAULT_TOL = 1e-10


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach its target."""


def quad(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    epsabs: float = DEFAULT_TOL,
    epsrel: float = DEFAULT_TOL,
    limit: int = 500,
    **kw,
) -> tuple[float, float]:
    """``scipy.integrate.quad`` that raises instead of warning on failure."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info, *rest = integrate.quad(
            f, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1, **kw
        )
    ier = rest[0] if rest and isinstance(rest[0], str) else None
    if not math.isfinite(val):
        raise QuadratureError(f"non-finite quadrature result on [{lo}, {hi}]")
    if ier is not None:
        target = max(epsabs, epsrel * abs(val))
        # a roundoff-limited result is accepted when it is still close to target
        slack = 1e4 if "roundoff" in ier else 10.0
        if err > slack * target:
            raise QuadratureError(f"quadrature on [{lo}, {hi}] failed: {ier.splitlines()[0]}")
    return float(val), float(err)


def half_line(f: Callable[[float], float], epsabs: float = DEFAULT_TOL, epsrel: float = DEFAULT_TOL) -> tuple[float, float]:
    """``int_0^inf f`` split at 1 with ``z = 1/w`` on the tail."""
    a, ea = quad(f, 0.0, 1.0, epsabs, epsrel)
    b, eb = quad(lambda w: f(1.0 / w) / (w * w), 0.0, 1.0, epsabs, epsrel)
    return a + b, ea + eb


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w
