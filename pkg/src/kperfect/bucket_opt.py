"""Bucket assignment function for k-perfect bucket placement.

Model: keys are inserted into bins of capacity k by sampling bins until one
is not full; full bins still count the sample.  Bin counters are then
Poisson(mu).  For every mu we get

    p(mu) = P[Poisson(mu) <= k-1] = Q(k, mu)       (success probability)
    x(mu) = E[min(X, k)] / k                       (fraction inserted)

so p_k(x) is available parametrically.  Since d x / d mu = p / k, the
integral of ln p_k(x) over x is (1/k) * int p ln p d mu, evaluated on the
mu grid; normalizing it to 1 at x = 1 gives beta_k.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

DEFAULT_GRID = 4096
X_END = 1.0 - 1e-12


class IntegroDivergence(ArithmeticError):
    pass


@dataclass(frozen=True)
class CurveTable:
    xs: np.ndarray
    ys: np.ndarray
    attrs: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.xs[0] != 0.0 or self.xs[-1] != 1.0 or np.any(np.diff(self.xs) <= 0):
            raise ValueError("grid must increase strictly from 0 to 1")

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)

    def inverse(self, y):
        """x with curve(x) = y for a non-decreasing curve."""
        return np.interp(y, self.ys, self.xs)


def poisson_stats(k: int, mu):
    """(p, x) for counters Poisson(mu): P[X <= k-1] and E[min(X,k)]/k."""
    mu = np.asarray(mu, dtype=float)
    p = special.gammaincc(k, mu)
    tail = special.gammainc(k + 1, mu)  # P[X > k]
    x = (mu * p + k * tail) / k
    return p, x


@functools.lru_cache(maxsize=32)
def _mu_sweep(k: int):
    # uniform mu steps bound consecutive x spacing by step / k (dx/dmu = p/k <= 1/k)
    step = 1e-4 * k
    hi = float(k)
    while poisson_stats(k, hi)[1] < X_END:
        hi *= 1.25
    mu = np.arange(0.0, hi + step, step)
    p, x = poisson_stats(k, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(p > 0, p * np.log(p), 0.0) / k
    integral = integrate.cumulative_simpson(f, x=mu, initial=0.0)
    return mu, p, x, integral


def _grid(grid_size: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, grid_size + 1)


@functools.lru_cache(maxsize=32)
def pk_curve(k: int, grid_size: int = DEFAULT_GRID) -> CurveTable:
    if k < 1:
        raise ValueError("k must be positive")
    mu, p, x, _ = _mu_sweep(k)
    xs = _grid(grid_size)
    return CurveTable(xs, np.interp(xs, x, p), {"k": k, "mu_max": float(mu[-1])})


@functools.lru_cache(maxsize=32)
def beta_curve(k: int, grid_size: int = DEFAULT_GRID) -> CurveTable:
    """beta_k(x) proportional to int_0^x ln p_k(s) ds, scaled so beta_k(1) = 1."""
    if k < 1:
        raise ValueError("k must be positive")
    _, _, x, integral = _mu_sweep(k)
    total = integral[-1]
    xs = _grid(grid_size)
    ys = np.interp(xs, x, integral / total)
    ys[0] = 0.0
    ys[-1] = 1.0
    # ln C_k = total integral of ln p_k; kept for diagnostics only
    return CurveTable(xs, np.maximum.accumulate(ys), {"k": k, "ln_C": float(total)})


def pk_integro_check(k: int, steps: int) -> CurveTable:
    """Euler solution of p(x) = Q(k, k * int_0^x 1/p(s) ds) on ``steps`` intervals.

    Raises ``IntegroDivergence`` once p stops being a positive finite number.
    """
    h = 1.0 / steps
    p = np.empty(steps + 1)
    p[0] = 1.0
    mu = 0.0
    for j in range(steps):
        mu += k * h / p[j]
        p[j + 1] = special.gammaincc(k, mu)
        if not (p[j + 1] > 0.0 and np.isfinite(p[j + 1])):
            if j + 1 == steps:
                p[j + 1] = 0.0  # p_k(1) = 0 at the very end is expected
                break
            raise IntegroDivergence(f"p vanished at x = {(j + 1) * h:.6f} (k = {k})")
    return CurveTable(_grid(steps), p, {"k": k, "steps": steps})
