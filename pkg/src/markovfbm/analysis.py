"""Deterministic strong-error analysis of the OU-sum approximation.

By the Ito isometry the terminal error of the approximation is

    E|W^H_T - W^{H,n}_T|^2 = int_0^T (s**(H-1/2) - K_n(s))**2 ds,

and every piece of the expanded square has a closed form in terms of the
lower incomplete gamma function.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NumericalFailure
from .quadrature import ModelParams, QuadratureScheme, build_scheme

_EPS = 1e-16
_CF_TOL = 4e-16
_MAX_ITER = 1000
# beyond this the upper tail e^{-x} x^{s-1} is far below double resolution
_SATURATION = 1e3


def gamma_fn(s: float) -> float:
    if not s > 0.0:
        raise ValueError(f"gamma_fn needs s > 0, got {s}")
    return math.gamma(s)


def _lower_series(s: float, x: np.ndarray) -> np.ndarray:
    term = np.full_like(x, 1.0 / s)
    total = term.copy()
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, _MAX_ITER):
        term = np.where(active, term * x / (s + k), 0.0)
        total += term
        active &= np.abs(term) > _EPS * np.abs(total)
        if not active.any():
            break
    else:
        raise NumericalFailure(f"incomplete gamma series did not converge for s={s}")
    return total * np.exp(s * np.log(x) - x)


def _upper_fraction(s: float, x: np.ndarray) -> np.ndarray:
    # modified Lentz evaluation of the continued fraction for Gamma(s, x)
    tiny = 1e-300
    b = x + 1.0 - s
    c = np.full_like(x, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _MAX_ITER):
        an = -i * (i - s)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = b + an / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        step = np.where(active, d * c, 1.0)
        h *= step
        active &= np.abs(step - 1.0) > _CF_TOL
        if not active.any():
            break
    else:
        raise NumericalFailure(f"incomplete gamma continued fraction did not converge for s={s}")
    return h * np.exp(s * np.log(x) - x)


def lower_incomplete_gamma(s: float, x):
    """Lower incomplete gamma ``int_0^x t**(s-1) e**(-t) dt`` (not regularized).

    Power series below ``x = s + 1``, continued fraction for the upper
    function above, saturation at ``Gamma(s)`` for very large ``x``.
    """
    if not s > 0.0:
        raise ValueError(f"lower_incomplete_gamma needs s > 0, got {s}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0.0):
        raise ValueError("lower_incomplete_gamma needs x >= 0")
    flat = x_arr.ravel()
    out = np.zeros_like(flat)
    full = math.gamma(s)
    small = (flat > 0.0) & (flat < s + 1.0)
    mid = (flat >= s + 1.0) & (flat <= _SATURATION)
    big = flat > _SATURATION
    if small.any():
        out[small] = _lower_series(s, flat[small])
    if mid.any():
        out[mid] = full - _upper_fraction(s, flat[mid])
    out[big] = full
    out = np.clip(out, 0.0, full).reshape(x_arr.shape)
    return float(out) if x_arr.ndim == 0 else out


@dataclass(frozen=True)
class ErrorRecord:
    H: float
    m: int
    n: int
    r: float
    T: float
    abs_error: float
    rel_error: float


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float


def predicted_rate(H: float, m: int) -> float:
    """Rate ``2*H*m/3`` predicted for m-point rules on the geometric grid."""
    if not (0.0 < H < 0.5):
        raise ValueError(f"Hurst index must lie in (0, 1/2), got H={H}")
    if m < 1:
        raise ValueError(f"need m >= 1, got m={m}")
    return 2.0 * H * m / 3.0


def cross_covariances(scheme: QuadratureScheme, T: float) -> np.ndarray:
    """``Cov(W^H_T, int_0^T e^{-(T-s)x_j} dW_s) = x_j**(-alpha) * lowergamma(alpha, x_j T)``."""
    alpha = scheme.params.alpha
    x = scheme.nodes
    return x ** (-alpha) * lower_incomplete_gamma(alpha, x * T)


def ou_covariance(nodes: np.ndarray, t: float) -> np.ndarray:
    """``Cov(int_0^t e^{-(t-s)x_j} dW_s, int_0^t e^{-(t-s)x_l} dW_s)``."""
    total = np.add.outer(nodes, nodes)
    return -np.expm1(-total * t) / total


def l2_error_squared(scheme: QuadratureScheme, T: float | None = None) -> float:
    """Closed-form ``E|W^H_T - W^{H,n}_T|^2``; raises on a clearly negative result."""
    if T is None:
        T = scheme.params.T
    if not T > 0.0:
        raise ValueError(f"horizon must be positive, got T={T}")
    H = scheme.params.H
    w = scheme.kernel_weights
    target = T ** (2.0 * H) / (2.0 * H)
    cross = -2.0 * w * cross_covariances(scheme, T)
    gram = np.outer(w, w) * ou_covariance(scheme.nodes, T)
    value = math.fsum(np.concatenate(([target], cross, gram.ravel())))
    if value < 0.0:
        if value < -1e-12 * target:
            raise NumericalFailure(
                f"squared L2 error came out negative ({value:.3e}) for H={H}, n={scheme.n}, "
                f"m={scheme.m}; cancellation exceeds double precision"
            )
        value = 0.0
    return value


def l2_error(scheme: QuadratureScheme, T: float | None = None) -> ErrorRecord:
    if T is None:
        T = scheme.params.T
    H = scheme.params.H
    abs_error = math.sqrt(l2_error_squared(scheme, T))
    norm = math.sqrt(T ** (2.0 * H) / (2.0 * H))
    return ErrorRecord(H, scheme.m, scheme.n, scheme.r, float(T), abs_error, abs_error / norm)


def error_sweep(H: float, m: int, n_list: Iterable[int], T: float = 1.0,
                r: float | None = None, workers: int = 1) -> list[ErrorRecord]:
    """One :class:`ErrorRecord` per ``n``; the result does not depend on ``workers``."""
    ns = [int(n) for n in n_list]
    if any(n < 2 for n in ns):
        raise ValueError(f"all interval counts must be >= 2, got {ns}")
    params = ModelParams(H, T)

    def one(n):
        return l2_error(build_scheme(params, n, m, r), T)

    if workers > 1 and len(ns) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, ns))
    return [one(n) for n in ns]


def fit_power_law(ns: Sequence[float], errors: Sequence[float]) -> RateFit:
    """Least-squares fit of ``log e = intercept - slope * log n``."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.size < 2:
        raise ValueError("need at least two points to fit a rate")
    if np.any(errors <= 0.0) or np.any(ns <= 0.0):
        raise ValueError("rate fit needs positive n and positive errors")
    if np.unique(ns).size < 2:
        raise ValueError("rate fit needs at least two distinct n")
    lx, ly = np.log(ns), np.log(errors)
    A = np.column_stack([lx, np.ones_like(lx)])
    (b, c), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (b * lx + c)
    return RateFit(float(-b), float(c), float(np.sqrt(np.mean(resid ** 2))))


def fit_rate(records: Sequence[ErrorRecord]) -> RateFit:
    return fit_power_law([rec.n for rec in records], [rec.rel_error for rec in records])
