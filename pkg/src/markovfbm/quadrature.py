"""Weighted Gauss rules on a geometric grid and the resulting OU-sum kernel.

The Volterra kernel ``t**(H - 1/2)`` is the Laplace transform of the measure
``x**(-alpha) dx / Gamma(1 - alpha)`` with ``alpha = H + 1/2``.  Truncating the
half line to ``[xi_0, xi_n]``, splitting it geometrically into ``n`` cells and
replacing the measure on every cell by an ``m``-point Gauss rule for the weight
``x**(-alpha)`` gives

    K_n(t) = sum_j kernel_weights[j] * exp(-t * nodes[j]),

a sum of ``n * m`` exponentials, i.e. of Ornstein-Uhlenbeck factors.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import NumericalFailure

#: Largest ``m`` for which double precision rules are known to be accurate.
MAX_STABLE_M = 10

# Discretization of the inner products used by the Stieltjes procedure:
# composite Gauss-Legendre in log(x), at most _PANEL_WIDTH per panel.
_PANEL_POINTS = 20
_MIN_PANELS = 10
_PANEL_WIDTH = 0.5
# keeps xi and its reciprocal comfortably inside double range
_MAX_LOG_SPAN = 600.0


@dataclass(frozen=True)
class ModelParams:
    """Hurst index and horizon, plus the exponents derived from them."""

    H: float
    T: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.H < 0.5):
            raise ValueError(f"Hurst index must lie in (0, 1/2), got H={self.H}")
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ValueError(f"horizon must be positive, got T={self.T}")

    @property
    def alpha(self) -> float:
        return self.H + 0.5

    @property
    def gamma(self) -> float:
        """Exponent of the truncation near zero."""
        return 0.5 - self.H

    @property
    def delta(self) -> float:
        """Exponent of the truncation near infinity."""
        return self.H


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GeometricGrid:
    n: int
    r: float
    xi: np.ndarray

    @property
    def ratio(self) -> float:
        """Common ratio xi[i+1] / xi[i]."""
        return (self.xi[-1] / self.xi[0]) ** (1.0 / self.n)


@dataclass(frozen=True, eq=False)
class QuadratureScheme:
    params: ModelParams
    n: int
    m: int
    r: float
    grid: GeometricGrid
    nodes: np.ndarray
    gauss_weights: np.ndarray
    kernel_weights: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.size

    def to_dict(self) -> dict:
        return {
            "H": self.params.H,
            "T": self.params.T,
            "n": self.n,
            "m": self.m,
            "r": self.r,
            "xi": self.grid.xi.tolist(),
            "nodes": self.nodes.tolist(),
            "gauss_weights": self.gauss_weights.tolist(),
            "kernel_weights": self.kernel_weights.tolist(),
        }

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "QuadratureScheme":
        params = ModelParams(float(d["H"]), float(d["T"]))
        n, m = int(d["n"]), int(d["m"])
        grid = GeometricGrid(n, float(d["r"]), _frozen(d["xi"]))
        nodes = _frozen(d["nodes"])
        gw = _frozen(d["gauss_weights"])
        kw = _frozen(d["kernel_weights"])
        if not (grid.xi.size == n + 1 and nodes.size == gw.size == kw.size == n * m):
            raise ValueError("scheme document has inconsistent array lengths")
        return cls(params, n, m, float(d["r"]), grid, nodes, gw, kw)

    @classmethod
    def from_json(cls, text: str) -> "QuadratureScheme":
        return cls.from_dict(json.loads(text))

    @property
    def scheme_id(self) -> str:
        """Short content hash, used as provenance in simulation outputs."""
        doc = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(doc).hexdigest()[:16]

    def with_kernel_weights(self, kernel_weights) -> "QuadratureScheme":
        """Copy with replaced kernel weights (e.g. zeros for a flat vol field)."""
        kw = _frozen(kernel_weights)
        if kw.shape != self.nodes.shape:
            raise ValueError("kernel weights must match the number of nodes")
        return QuadratureScheme(self.params, self.n, self.m, self.r, self.grid,
                                self.nodes, self.gauss_weights, kw)


def geometric_grid(params: ModelParams, n: int, r: float) -> GeometricGrid:
    """Log-equidistant breakpoints between ``n**(-r/gamma)`` and ``n**(r/delta)``."""
    if int(n) != n or n < 2:
        raise ValueError(f"need n >= 2 intervals, got n={n}")
    if not (r > 0.0 and math.isfinite(r)):
        raise ValueError(f"rate must be positive, got r={r}")
    n = int(n)
    log_lo = -r / params.gamma * math.log(n)
    log_hi = r / params.delta * math.log(n)
    if max(-log_lo, log_hi) > _MAX_LOG_SPAN:
        raise ValueError(f"grid endpoints for n={n}, r={r}, H={params.H} exceed double precision range")
    xi = np.exp(log_lo + (log_hi - log_lo) * np.arange(n + 1) / n)
    # pin the endpoints to their closed forms
    xi[0] = n ** (-r / params.gamma)
    xi[-1] = n ** (r / params.delta)
    return GeometricGrid(n, float(r), _frozen(xi))


def weighted_moments(a: float, b: float, alpha: float, count: int) -> np.ndarray:
    """Moments ``int_a^b x**(k - alpha) dx`` for ``k = 0 .. count-1``."""
    if not a > 0.0:
        raise ValueError(f"lower limit must be positive, got a={a}")
    if b < a:
        raise ValueError(f"need b >= a, got a={a}, b={b}")
    p = np.arange(count) + 1.0 - alpha
    log_ratio = math.log(b / a)
    out = np.empty(count)
    nz = p != 0.0
    # expm1 keeps narrow intervals accurate
    out[nz] = a ** p[nz] * np.expm1(p[nz] * log_ratio) / p[nz]
    out[~nz] = log_ratio
    return out


@lru_cache(maxsize=None)
def _legendre(points: int):
    g, gw = np.polynomial.legendre.leggauss(points)
    g.flags.writeable = False
    gw.flags.writeable = False
    return g, gw


def _log_panels(lam: float):
    """Nodes and weights of a composite Gauss-Legendre rule on [0, log(lam)]."""
    width = math.log(lam)
    panels = max(_MIN_PANELS, math.ceil(width / _PANEL_WIDTH))
    g, gw = _legendre(_PANEL_POINTS)
    edges = np.linspace(0.0, width, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * g[None, :]).ravel()
    ws = (half[:, None] * gw[None, :]).ravel()
    return s, ws


def _stieltjes(t: np.ndarray, w: np.ndarray, m: int):
    """Recurrence coefficients of polynomials orthonormal for sum_i w_i delta_{t_i}."""
    mu0 = w.sum()
    diag = np.empty(m)
    off = np.empty(max(m - 1, 0))
    basis = np.empty((m, t.size))
    basis[0] = 1.0 / math.sqrt(mu0)
    for k in range(m):
        q = basis[k]
        diag[k] = np.dot(w * q, t * q)
        if k == m - 1:
            break
        v = (t - diag[k]) * q
        if k > 0:
            v -= off[k - 1] * basis[k - 1]
        # one block pass of reorthogonalization against the whole basis
        done = basis[:k + 1]
        v -= (done @ (w * v)) @ done
        b = math.sqrt(np.dot(w * v, v))
        if not b > 0.0:
            raise NumericalFailure(f"Stieltjes procedure broke down at degree {k + 1}")
        off[k] = b
        basis[k + 1] = v / b
    return mu0, diag, off


def _unit_rule(lam: float, alpha: float, m: int):
    """Gauss rule for the weight x**(-alpha) on [1, lam]."""
    s, ws = _log_panels(lam)
    x = np.exp(s)
    w = ws * x ** (1.0 - alpha)  # dx = x ds
    half = 0.5 * (lam - 1.0)
    t = (x - 1.0) / half - 1.0
    mu0, diag, off = _stieltjes(t, w, m)
    if m == 1:
        tn, wn = diag.copy(), np.array([mu0])
    else:
        try:
            tn, vecs = eigh_tridiagonal(diag, off)
        except (LinAlgError, ValueError) as exc:
            raise NumericalFailure(
                f"tridiagonal eigensolver failed on [1, {lam}] with m={m}: {exc}"
            ) from exc
        wn = mu0 * vecs[0] ** 2
    xn = 1.0 + half * (tn + 1.0)
    return xn, wn


def gauss_rule_weighted(a: float, b: float, alpha: float, m: int):
    """Nodes and positive weights of the m-point Gauss rule for x**(-alpha) on [a, b].

    The rule is computed on ``[1, b/a]`` and mapped back with
    ``x -> a*x``, ``c -> a**(1-alpha) * c``.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"need m >= 1 points, got m={m}")
    if not a > 0.0:
        raise ValueError(f"lower limit must be positive, got a={a}")
    if not b > a:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    xn, wn = _unit_rule(b / a, alpha, int(m))
    nodes = a * xn
    weights = a ** (1.0 - alpha) * wn
    if not (np.all(weights > 0.0) and np.all(np.diff(nodes) > 0.0)
            and nodes[0] > a and nodes[-1] < b):
        raise NumericalFailure(
            f"Gauss rule on [{a}, {b}] with m={m}, alpha={alpha} lost positivity or containment: "
            f"nodes={nodes}, weights={weights}"
        )
    return nodes, weights


def default_rate(H: float, m: int) -> float:
    return 2.0 * H * m / 3.0


def build_scheme(params: ModelParams, n: int, m: int, r: float | None = None) -> QuadratureScheme:
    """Concatenate per-cell Gauss rules over the geometric grid."""
    if int(m) != m or m < 1:
        raise ValueError(f"need m >= 1 points per interval, got m={m}")
    m = int(m)
    if m > MAX_STABLE_M:
        warnings.warn(f"m={m} exceeds {MAX_STABLE_M}; moment residuals may exceed tolerance",
                      RuntimeWarning, stacklevel=2)
    if r is None:
        r = default_rate(params.H, m)
    grid = geometric_grid(params, n, r)
    alpha = params.alpha
    xi = grid.xi
    # every cell is xi[i] * [1, ratio], so one unit rule serves all of them
    unit_x, unit_c = gauss_rule_weighted(1.0, grid.ratio, alpha, m)
    nodes = np.multiply.outer(xi[:-1], unit_x).ravel()
    weights = np.multiply.outer(xi[:-1] ** (1.0 - alpha), unit_c).ravel()
    if not (nodes[-1] < xi[-1] and np.all(np.diff(nodes) > 0.0)):
        raise NumericalFailure(f"scaled Gauss nodes left the grid for n={grid.n}, m={m}")
    kernel_weights = weights / math.gamma(1.0 - alpha)
    return QuadratureScheme(params, grid.n, m, float(r), grid,
                            _frozen(nodes), _frozen(weights), _frozen(kernel_weights))


def moment_residuals(scheme: QuadratureScheme) -> np.ndarray:
    """Relative moment errors, shape (n, 2m), for k = 0 .. 2m-1 on every cell.

    Each cell is rescaled to [1, xi[i+1]/xi[i]] before taking powers so that
    high moments of far-out cells do not overflow.
    """
    m, alpha = scheme.m, scheme.params.alpha
    xi = scheme.grid.xi
    out = np.empty((scheme.n, 2 * m))
    powers = np.arange(2 * m)
    for i in range(scheme.n):
        a = xi[i]
        x = scheme.nodes[i * m:(i + 1) * m] / a
        c = scheme.gauss_weights[i * m:(i + 1) * m] / a ** (1.0 - alpha)
        exact = weighted_moments(1.0, xi[i + 1] / a, alpha, 2 * m)
        approx = (x[None, :] ** powers[:, None]) @ c
        out[i] = np.abs(approx - exact) / np.abs(exact)
    return out


def kernel_eval(scheme: QuadratureScheme, t):
    """Evaluate the exponential-sum kernel at ``t >= 0`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValueError("kernel is only defined for t >= 0")
    vals = np.exp(-np.multiply.outer(t_arr, scheme.nodes)) @ scheme.kernel_weights
    return float(vals) if t_arr.ndim == 0 else vals
