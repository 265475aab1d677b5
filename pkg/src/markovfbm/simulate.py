"""Exact-in-distribution simulation of the OU lift and of Volterra fBm.

Each OU factor ``Y_j`` with speed ``x_j`` is advanced over a step ``dt`` by

    Y_j <- exp(-dt x_j) Y_j + eps_j,

where ``(eps_1, ..., eps_nm, dW)`` is jointly Gaussian with a covariance that
is known in closed form.  The covariance has low numerical rank for small
``dt``, so it is factorized by pivoted Cholesky with the Brownian increment
forced to be the first pivot: the first standard normal of every step then
*is* ``dW / sqrt(dt)`` and can be shared across approximations of different
size (common random numbers).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.special import hyp2f1

from . import rng
from .analysis import cross_covariances, ou_covariance
from .errors import NotPSDError, NumericalFailure
from .quadrature import QuadratureScheme

DEFAULT_TOL_RANK = 1e-12
_JITTER = 1e-14
_JITTER_TRIES = 3


def pivoted_cholesky(matrix, tol: float = DEFAULT_TOL_RANK, leading=()):
    """Rank-revealing Cholesky ``A[perm][:, perm] ~= F @ F.T``.

    Pivots are chosen greedily by largest remaining diagonal, except that the
    indices in ``leading`` are eliminated first, in order.  Elimination stops
    once every remaining diagonal entry is ``<= tol * trace(A)``.

    Returns ``(F, rank, perm)`` with ``F`` of shape ``(d, rank)``, lower
    trapezoidal in the permuted order.
    """
    A = np.array(matrix, dtype=float)
    d = A.shape[0]
    if A.ndim != 2 or A.shape[1] != d:
        raise ValueError("pivoted_cholesky needs a square matrix")
    if not np.allclose(A, A.T, rtol=1e-12, atol=0.0):
        raise ValueError("pivoted_cholesky needs a symmetric matrix")
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    trace = float(np.trace(A))
    floor = tol * trace
    resid = np.diag(A).copy()
    if np.any(resid < -floor):
        raise NotPSDError(f"negative diagonal entry {resid.min():.3e}")
    cols = np.zeros((d, d))
    chosen = []
    free = np.ones(d, dtype=bool)
    leading = [int(i) for i in leading]
    for k in range(d):
        if k < len(leading):
            piv = leading[k]
            if resid[piv] <= 0.0:
                raise NotPSDError(f"forced pivot {piv} has non-positive residual {resid[piv]:.3e}")
        else:
            cand = np.where(free, resid, -np.inf)
            piv = int(np.argmax(cand))
            if resid[piv] <= floor:
                break
        col = (A[:, piv] - cols[:, :k] @ cols[piv, :k]) / math.sqrt(resid[piv])
        col[~free] = 0.0
        cols[:, k] = col
        free[piv] = False
        chosen.append(piv)
        resid -= col * col
        resid[piv] = 0.0
        if np.any(resid[free] < -floor):
            bad = np.flatnonzero(free & (resid < -floor))
            raise NotPSDError(f"matrix is not PSD: residual pivot {resid[bad[0]]:.3e} at index {bad[0]}")
    rank = len(chosen)
    perm = np.array(chosen + [i for i in range(d) if free[i]], dtype=int)
    return cols[perm, :rank], rank, perm


def increment_covariance(nodes: np.ndarray, dt: float) -> np.ndarray:
    """Joint covariance of the OU increments and ``dW`` (last index) over one step."""
    nodes = np.asarray(nodes, dtype=float)
    d = nodes.size
    cov = np.empty((d + 1, d + 1))
    cov[:d, :d] = ou_covariance(nodes, dt)
    cov[:d, d] = cov[d, :d] = -np.expm1(-dt * nodes) / nodes
    cov[d, d] = dt
    return cov


@dataclass(frozen=True, eq=False)
class IncrementModel:
    dt: float
    decay: np.ndarray
    cov_factor: np.ndarray
    perm: np.ndarray
    rank: int

    @property
    def loading(self) -> np.ndarray:
        """``(rank, nm)`` map from standard normals to OU increments, original order."""
        d = self.cov_factor.shape[0]
        g = np.zeros((self.rank, d))
        g[:, self.perm] = self.cov_factor.T
        return g[:, :d - 1]


def increment_model(scheme: QuadratureScheme, dt: float, tol_rank: float = DEFAULT_TOL_RANK) -> IncrementModel:
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got dt={dt}")
    cov = increment_covariance(scheme.nodes, dt)
    factor, rank, perm = pivoted_cholesky(cov, tol_rank, leading=[scheme.size])
    decay = np.exp(-dt * scheme.nodes)
    return IncrementModel(float(dt), decay, factor, perm, rank)


@dataclass(frozen=True, eq=False)
class LiftPathBatch:
    """Simulated ``W^{H,n}`` on a uniform grid plus the matching driver increments.

    ``state`` holds the OU factors at the last grid time so a run can be
    continued with ``simulate_lift(..., y0=batch.state, step_offset=k)``.
    """

    times: np.ndarray
    whn: np.ndarray
    dW: np.ndarray
    dB: np.ndarray
    state: np.ndarray
    seed: int
    scheme_id: str


def driver_block(seed: int, block: int, rows: int, k: int, dt: float, rho: float,
                 step_offset: int = 0):
    """Brownian increments ``dW`` and ``dB`` of one path block, shape ``(rows, k)``.

    Every vol source draws its driver through this function, which is what
    makes prices for different approximations use common random numbers.
    """
    sd = math.sqrt(dt)
    perp = math.sqrt(max(0.0, 1.0 - rho * rho))
    dW = np.empty((rows, k))
    dB = np.empty((rows, k))
    for i in range(k):
        z = rng.normals(seed, rng.DRIVER, block, step_offset + i, 2)[:rows]
        dW[:, i] = sd * z[:, 0]
        dB[:, i] = rho * dW[:, i] + perp * sd * z[:, 1]
    return dW, dB


def _lift_block(model: IncrementModel, weights: np.ndarray, seed: int, block: int, rows: int,
                k: int, rho: float, y0, step_offset: int):
    dW, dB = driver_block(seed, block, rows, k, model.dt, rho, step_offset)
    load = model.loading
    first, rest = load[0], load[1:]
    sd = math.sqrt(model.dt)
    y = np.zeros((rows, weights.size)) if y0 is None else np.array(y0, dtype=float)
    whn = np.empty((rows, k + 1))
    whn[:, 0] = y @ weights
    for i in range(k):
        eps = np.multiply.outer(dW[:, i] / sd, first)
        if model.rank > 1:
            z = rng.normals(seed, rng.RESIDUAL, block, step_offset + i, model.rank - 1)[:rows]
            eps += z @ rest
        y *= model.decay
        y += eps
        whn[:, i + 1] = y @ weights
    return whn, dW, dB, y


def _map_blocks(fn, N: int, workers: int):
    jobs = list(rng.blocks(N))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


def simulate_lift(scheme: QuadratureScheme, T: float, k: int, rho: float, N: int, seed: int, *,
                  tol_rank: float = DEFAULT_TOL_RANK, workers: int = 1,
                  y0=None, step_offset: int = 0) -> LiftPathBatch:
    """Simulate ``N`` paths of ``W^{H,n}`` over ``k`` steps of size ``T / k``.

    With ``y0`` and ``step_offset`` the run continues an earlier batch; the
    output is then bitwise equal to the tail of a single longer run.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"need k >= 1 steps, got k={k}")
    if int(N) != N or N < 1:
        raise ValueError(f"need N >= 1 paths, got N={N}")
    if not T > 0.0:
        raise ValueError(f"horizon must be positive, got T={T}")
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got rho={rho}")
    seed = rng.check_seed(seed)
    k, N = int(k), int(N)
    dt = T / k
    model = increment_model(scheme, dt, tol_rank)
    if y0 is not None:
        y0 = np.asarray(y0, dtype=float)
        if y0.shape != (N, scheme.size):
            raise ValueError(f"initial state must have shape {(N, scheme.size)}")

    def run(block, start, rows):
        init = None if y0 is None else y0[start:start + rows]
        return _lift_block(model, scheme.kernel_weights, seed, block, rows, k, rho, init, step_offset)

    parts = _map_blocks(run, N, workers)
    times = (step_offset + np.arange(k + 1)) * dt
    return LiftPathBatch(
        times=times,
        whn=np.concatenate([p[0] for p in parts]),
        dW=np.concatenate([p[1] for p in parts]),
        dB=np.concatenate([p[2] for p in parts]),
        state=np.concatenate([p[3] for p in parts]),
        seed=seed,
        scheme_id=scheme.scheme_id,
    )


def terminal_variance(scheme: QuadratureScheme, T: float) -> float:
    """Closed-form ``Var(W^{H,n}_T)``."""
    w = scheme.kernel_weights
    return math.fsum((np.outer(w, w) * ou_covariance(scheme.nodes, T)).ravel())


# --- exact Volterra fBm (Cholesky oracle) ---------------------------------

def rl_covariance(H: float, s, t):
    """``Cov(W^H_s, W^H_t) = int_0^{min(s,t)} ((t-u)(s-u))**(H-1/2) du``.

    With ``a = min(s,t)`` and ``b = max(s,t)`` this equals
    ``b**(H-1/2) a**(H+1/2) / (H+1/2) * 2F1(1/2-H, 1; H+3/2; a/b)``.
    """
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    alpha = H + 0.5
    out = np.zeros(lo.shape)
    pos = lo > 0.0
    z = lo[pos] / hi[pos]
    out[pos] = hi[pos] ** (H - 0.5) * lo[pos] ** alpha / alpha * hyp2f1(0.5 - H, 1.0, H + 1.5, z)
    diag = pos & (lo == hi)
    out[diag] = lo[diag] ** (2 * H) / (2 * H)
    return out if out.ndim else float(out)


def cholesky_jittered(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor, adding ``1e-14 * max diag`` to the diagonal up to three times."""
    bump = _JITTER * float(np.max(np.diag(cov)))
    for attempt in range(_JITTER_TRIES + 1):
        try:
            return np.linalg.cholesky(cov + attempt * bump * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NumericalFailure(
        f"Cholesky failed on a {cov.shape[0]}x{cov.shape[0]} covariance after {_JITTER_TRIES} jitters"
    )


def exact_rl_fbm(H: float, times, N: int, seed: int, workers: int = 1) -> np.ndarray:
    """Exact samples of ``W^H`` at ``times``, shape ``(N, len(times))``; O(len(times)**3)."""
    if not 0.0 < H < 0.5:
        raise ValueError(f"Hurst index must lie in (0, 1/2), got H={H}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] <= 0.0 or np.any(np.diff(times) <= 0.0):
        raise ValueError("times must be a non-empty, strictly increasing array of positive reals")
    if int(N) != N or N < 1:
        raise ValueError(f"need N >= 1 paths, got N={N}")
    seed = rng.check_seed(seed)
    L = cholesky_jittered(rl_covariance(H, times[:, None], times[None, :]))

    def run(block, start, rows):
        z = rng.normals(seed, rng.ORACLE, block, 0, times.size)[:rows]
        return z @ L.T

    return np.concatenate(_map_blocks(run, int(N), workers))


def rl_increment_cross(H: float, t: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """``Cov(W^H_t, W_b - W_a)`` for times ``t`` and steps ``[edges[j], edges[j+1]]``."""
    alpha = H + 0.5
    t = np.asarray(t, dtype=float)[:, None]
    a, b = edges[None, :-1], edges[None, 1:]
    upper = np.minimum(b, t)
    return np.where(a < t, (np.maximum(t - a, 0.0) ** alpha - np.maximum(t - upper, 0.0) ** alpha) / alpha, 0.0)


def exact_volterra_block(H: float, T: float, k: int, seed: int, block: int, rows: int, rho: float):
    """Exact ``W^H`` at ``t_0 .. t_{k-1}`` jointly with the shared driver of one block.

    Returns ``(V, dW, dB)`` with ``V`` of shape ``(rows, k)`` (``V[:, 0] = 0``).
    """
    dt = T / k
    dW, dB = driver_block(seed, block, rows, k, dt, rho)
    V = np.zeros((rows, k))
    if k > 1:
        t = dt * np.arange(1, k)
        edges = dt * np.arange(k + 1)
        C = rl_increment_cross(H, t, edges)
        cond = rl_covariance(H, t[:, None], t[None, :]) - C @ C.T / dt
        L = cholesky_jittered(0.5 * (cond + cond.T))
        z = rng.normals(seed, rng.ORACLE, block, 0, k - 1)[:rows]
        V[:, 1:] = dW @ (C.T / dt) + z @ L.T
    return V, dW, dB


def joint_terminal_error_mc(scheme: QuadratureScheme, T: float, N: int, seed: int,
                            tol_rank: float = DEFAULT_TOL_RANK, workers: int = 1):
    """Monte Carlo estimate of ``E|W^H_T - W^{H,n}_T|^2`` and its standard error.

    Samples ``(W^H_T, OU_1(T), ..., OU_nm(T))`` from their exact joint law.
    """
    if int(N) != N or N < 2:
        raise ValueError(f"need N >= 2 paths, got N={N}")
    if not T > 0.0:
        raise ValueError(f"horizon must be positive, got T={T}")
    seed = rng.check_seed(seed)
    H = scheme.params.H
    d = scheme.size
    cov = np.empty((d + 1, d + 1))
    cov[0, 0] = T ** (2 * H) / (2 * H)
    cov[0, 1:] = cov[1:, 0] = cross_covariances(scheme, T)
    cov[1:, 1:] = ou_covariance(scheme.nodes, T)
    try:
        factor, rank, perm = pivoted_cholesky(cov, tol_rank)
    except NotPSDError as exc:
        raise NumericalFailure(f"joint terminal covariance is not PSD: {exc}") from exc
    g = np.zeros((rank, d + 1))
    g[:, perm] = factor.T
    proj = g[:, 0] - g[:, 1:] @ scheme.kernel_weights

    def run(block, start, rows):
        z = rng.normals(seed, rng.JOINT, block, 0, rank)[:rows]
        return (z @ proj) ** 2

    sq = np.concatenate(_map_blocks(run, int(N), workers))
    mean = math.fsum(sq) / sq.size
    var = math.fsum((sq - mean) ** 2) / (sq.size - 1)
    return mean, math.sqrt(var / sq.size)


# --- pathwise representation ----------------------------------------------

def lift_from_path(w, dt: float, x: float, H: float) -> np.ndarray:
    """OU factor ``Y_t(x)`` computed from a Brownian path by integration by parts.

    ``Y_t = (W_t - int_0^t W_s x e^{-(t-s)x} ds) / Gamma(1/2 - H)`` with the
    integral evaluated by the trapezoid rule on the path's own uniform grid
    (``w[0]`` is the value at time 0).
    """
    w = np.asarray(w, dtype=float)
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if x < 0.0:
        raise ValueError("mean-reversion speed must be non-negative")
    scale = 1.0 / math.gamma(0.5 - H)
    if x == 0.0:
        return w * scale
    q = math.exp(-x * dt)
    # running sum_j w_j e^{-(t_i - t_j) x}
    acc = lfilter([1.0], [1.0, -q], w)
    ramp = np.exp(-x * dt * np.arange(w.size))
    integral = x * dt * (acc - 0.5 * w[0] * ramp - 0.5 * w)
    return scale * (w - integral)


def ou_recursion(dw, dt: float, x: float, H: float) -> np.ndarray:
    """``Y_{i+1} = e^{-x dt} Y_i + dW_i`` (scaled by ``1/Gamma(1/2-H)``), starting at 0."""
    dw = np.asarray(dw, dtype=float)
    q = math.exp(-x * dt)
    y = np.zeros(dw.size + 1)
    y[1:] = lfilter([1.0], [1.0, -q], dw)
    return y / math.gamma(0.5 - H)
