"""Monte Carlo puts and calls in the rough Bergomi model

    S_t = 1 + int_0^t S_s exp(V_s) dB_s,

with ``V`` the OU-sum approximation ``W^{H,n}``, the exact Volterra process,
or identically zero.  ``log S`` is advanced by log-Euler with the volatility
frozen at the left endpoint of each step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import rng
from .errors import NumericalFailure
from .quadrature import ModelParams, build_scheme, default_rate
from .simulate import (DEFAULT_TOL_RANK, _lift_block, _map_blocks, driver_block,
                       exact_volterra_block, increment_model)

VOL_SOURCES = ("scheme", "exact", "zero")
VOL_CLAMP = 40.0


@dataclass(frozen=True)
class PricingConfig:
    K: float
    T: float = 1.0
    k: int = 256
    N: int = 100_000
    rho: float = 0.0
    H: float = 0.1
    n: int = 16
    m: int = 5
    r: float | None = None
    vol_source: str = "scheme"
    seed: int = 0
    tol_rank: float = DEFAULT_TOL_RANK

    def __post_init__(self):
        if not (self.K >= 0.0 and math.isfinite(self.K)):
            raise ValueError(f"strike must be non-negative, got K={self.K}")
        if not self.T > 0.0:
            raise ValueError(f"horizon must be positive, got T={self.T}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"need k >= 1 steps, got k={self.k}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"need N >= 2 paths, got N={self.N}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"correlation must lie in [-1, 1], got rho={self.rho}")
        if self.vol_source not in VOL_SOURCES:
            raise ValueError(f"vol_source must be one of {VOL_SOURCES}, got {self.vol_source!r}")
        ModelParams(self.H, self.T)
        if self.vol_source == "scheme":
            if int(self.n) != self.n or self.n < 2:
                raise ValueError(f"need n >= 2 intervals, got n={self.n}")
            if int(self.m) != self.m or self.m < 1:
                raise ValueError(f"need m >= 1 points per interval, got m={self.m}")
            if self.r is not None and not self.r > 0.0:
                raise ValueError(f"rate must be positive, got r={self.r}")
        rng.check_seed(self.seed)

    @property
    def parity_safe(self) -> bool:
        """Non-positive correlation keeps S a true martingale, so parity holds."""
        return self.rho <= 0.0

    @property
    def rate(self) -> float:
        return default_rate(self.H, self.m) if self.r is None else self.r

    def provenance(self) -> dict:
        d = asdict(self)
        d["r"] = self.rate
        return d


@dataclass(frozen=True)
class TerminalPrices:
    values: np.ndarray
    clamped: int
    config: PricingConfig
    # exp may underflow to 0 on paths with very large vol; the log stays finite
    log_values: np.ndarray | None = None


@dataclass(frozen=True)
class PricingResult:
    price: float
    stderr: float
    N: int
    config: dict
    clamped: int = 0
    option: str = "put"

    def to_dict(self) -> dict:
        c = self.config
        return {
            "option": self.option,
            "price": self.price,
            "stderr": self.stderr,
            "N": self.N,
            "K": c.get("K"),
            "T": c.get("T"),
            "k": c.get("k"),
            "rho": c.get("rho"),
            "H": c.get("H"),
            "n": c.get("n"),
            "m": c.get("m"),
            "r": c.get("r"),
            "seed": c.get("seed"),
            "vol_source": c.get("vol_source"),
            "clamped": self.clamped,
        }


def _log_terminal(V: np.ndarray, dB: np.ndarray, dt: float):
    over = np.abs(V) > VOL_CLAMP
    if over.any():
        V = np.clip(V, -VOL_CLAMP, VOL_CLAMP)
    vol = np.exp(V)
    log_s = np.sum(vol * dB - 0.5 * vol * vol * dt, axis=1)
    if not np.all(np.isfinite(log_s)):
        raise NumericalFailure(f"log price overflowed on {int(np.sum(~np.isfinite(log_s)))} paths")
    return log_s, int(over.sum())


def simulate_terminal_prices(config: PricingConfig, workers: int = 1) -> TerminalPrices:
    """Samples of ``S_T``; all three vol sources share the same driver ``B``."""
    c = config
    dt = c.T / c.k
    if c.vol_source == "scheme":
        scheme = build_scheme(ModelParams(c.H, c.T), c.n, c.m, c.r)
        model = increment_model(scheme, dt, c.tol_rank)

        def run(block, start, rows):
            whn, _, dB, _ = _lift_block(model, scheme.kernel_weights, c.seed, block, rows,
                                        c.k, c.rho, None, 0)
            return _log_terminal(whn[:, :-1], dB, dt)
    elif c.vol_source == "exact":
        def run(block, start, rows):
            V, _, dB = exact_volterra_block(c.H, c.T, c.k, c.seed, block, rows, c.rho)
            return _log_terminal(V, dB, dt)
    else:
        def run(block, start, rows):
            _, dB = driver_block(c.seed, block, rows, c.k, dt, c.rho)
            return _log_terminal(np.zeros_like(dB), dB, dt)

    parts = _map_blocks(run, c.N, workers)
    log_s = np.concatenate([p[0] for p in parts])
    return TerminalPrices(np.exp(log_s), sum(p[1] for p in parts), c, log_s)


def _mean_stderr(x: np.ndarray):
    # fsum is exactly rounded, hence independent of summation order
    mean = math.fsum(x) / x.size
    var = math.fsum((x - mean) ** 2) / (x.size - 1)
    return mean, math.sqrt(var / x.size)


def put_price(samples, K: float) -> PricingResult:
    """Put estimate ``mean((K - S_T)_+)`` with standard error ``sd / sqrt(N)``."""
    if isinstance(samples, TerminalPrices):
        values, clamped, config = samples.values, samples.clamped, samples.config.provenance()
    else:
        values, clamped, config = np.asarray(samples, dtype=float), 0, {}
    if values.size == 0:
        raise ValueError("cannot price from an empty sample")
    if values.size < 2:
        raise ValueError("need at least two samples for a standard error")
    if not K >= 0.0:
        raise ValueError(f"strike must be non-negative, got K={K}")
    payoff = np.maximum(K - values, 0.0)
    price, stderr = _mean_stderr(payoff)
    return PricingResult(price, stderr, int(values.size), {**config, "K": K}, clamped, "put")


def call_via_parity(put_result: PricingResult, K: float) -> PricingResult:
    """``call = put + S_0 - K`` with ``S_0 = 1`` and zero rates."""
    rho = put_result.config.get("rho")
    if rho is not None and rho > 0.0:
        warnings.warn(f"rho={rho} > 0: S may fail to be a martingale and parity may not hold",
                      RuntimeWarning, stacklevel=2)
    return PricingResult(put_result.price + (1.0 - K), put_result.stderr, put_result.N,
                         {**put_result.config, "K": K}, put_result.clamped, "call")


def price(config: PricingConfig, option: str = "put", workers: int = 1) -> PricingResult:
    put = put_price(simulate_terminal_prices(config, workers), config.K)
    if option == "put":
        return put
    if option == "call":
        return call_via_parity(put, config.K)
    raise ValueError(f"option must be 'put' or 'call', got {option!r}")
