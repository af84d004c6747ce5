"""Optimal fingerprint thresholds for threshold-based bumping.

A bin receives Poisson(gamma * k) keys with uniform fingerprints.  The
(k+1)-smallest fingerprint follows Gamma(shape k+1, rate gamma*k), and the
bin keeps every key at or below the largest stored threshold that is still
smaller than it.  The threshold vector minimizing expected empty slots
satisfies a three-term recurrence.  Running it downward from T_t = 1 is
numerically unstable for large k (errors grow geometrically toward T_1), so
it is run upward from T_1 = 0 and the first free threshold is bisected until
the top lands on 1.

Integrals of the form  int phi_{k+1}(s) / s ds  reduce to gamma CDF
differences of shape k (same rate), scaled by gamma, so the recurrence and
the objective are evaluated in closed form; quadrature is only used as an
independent check in the tests.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special


class ThresholdSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class GammaDensity:
    shape: float
    rate: float

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (self.shape * math.log(self.rate) + (self.shape - 1) * np.log(x)
                   - self.rate * x - special.gammaln(self.shape))
        if self.shape == 1:
            out = np.where(x == 0, math.log(self.rate), out)
        return out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return special.gammainc(self.shape, self.rate * np.asarray(x, dtype=float))

    def sf(self, x):
        return special.gammaincc(self.shape, self.rate * np.asarray(x, dtype=float))

    def mass(self, a, b):
        """P[a < X <= b], accurate in both tails; ``b`` may be ``inf``."""
        if b == math.inf:
            return float(self.sf(a))
        if float(self.cdf(a)) < 0.5:
            return float(self.cdf(b) - self.cdf(a))
        return float(self.sf(a) - self.sf(b))


def gamma_pdf(d: GammaDensity, x: float) -> float:
    return float(d.pdf(x))


def gamma_cdf(d: GammaDensity, x: float) -> float:
    return float(d.cdf(x))


def kth_fingerprint_density(k: int, gamma: float) -> GammaDensity:
    """Law of the (k+1)-smallest fingerprint in a bin."""
    return GammaDensity(k + 1, gamma * k)


@dataclass(frozen=True)
class ThresholdVector:
    k: int
    gamma: float
    t: int
    T: np.ndarray

    def __post_init__(self):
        T = self.T
        if T.shape != (self.t,) or T[0] != 0.0 or T[-1] != 1.0 or np.any(np.diff(T) <= 0):
            raise ValueError("thresholds must be strictly increasing from 0 to 1")

    def residuals(self) -> np.ndarray:
        """Stationarity residuals of the inner thresholds (entries 1 .. t-2)."""
        lower = GammaDensity(self.k, self.gamma * self.k)
        phi = kth_fingerprint_density(self.k, self.gamma)
        return np.array([_residual(self.T, i, self.gamma, lower, phi)
                         for i in range(1, self.t - 1)])


def _residual(T, i: int, gamma: float, lower: GammaDensity, phi: GammaDensity) -> float:
    """T_{i-1} - (T_i - T_i / phi(T_i) * int_{T_i}^{T_{i+1}} phi(s)/s ds)."""
    log_step = math.log(T[i]) - float(phi.logpdf(T[i])) \
        + math.log(max(gamma * lower.mass(T[i], T[i + 1]), 1e-300))
    return T[i - 1] - (T[i] - math.exp(log_step))


def _forward_step(T_prev: float, T_i: float, gamma: float,
                  lower: GammaDensity, phi: GammaDensity) -> float:
    """Solve the stationarity condition at T_i for T_{i+1}.

    int_{T_i}^{T_{i+1}} phi(s)/s ds = (T_i - T_{i-1}) phi(T_i) / T_i, and the
    left side is gamma * (F(T_{i+1}) - F(T_i)) with F the shape-k CDF.
    Returns ``inf`` when no finite T_{i+1} exists.
    """
    log_rhs = math.log(T_i - T_prev) + float(phi.logpdf(T_i)) - math.log(T_i)
    mass = math.exp(log_rhs) / gamma
    if mass <= 0.0:
        return T_i
    a, rate = lower.shape, lower.rate
    below = float(lower.cdf(T_i))
    if below < 0.5:
        target = below + mass
        if target >= 1.0:
            return math.inf
        return float(special.gammaincinv(a, target)) / rate
    target = float(lower.sf(T_i)) - mass
    if target <= 0.0:
        return math.inf
    return float(special.gammainccinv(a, target)) / rate


def _shoot(candidate: float, t: int, gamma: float,
           lower: GammaDensity, phi: GammaDensity) -> np.ndarray:
    """Run the recurrence upward from (0, candidate); entries past an overflow are inf."""
    T = np.full(t, math.inf)
    T[0] = 0.0
    T[1] = candidate
    for i in range(1, t - 1):
        T[i + 1] = _forward_step(T[i - 1], T[i], gamma, lower, phi)
        if T[i + 1] > 1.0:
            break
    return T


@functools.lru_cache(maxsize=None)
def _optimal(k: int, gamma: float, t: int, tol: float) -> np.ndarray:
    if t == 2:
        return np.array([0.0, 1.0])
    lower = GammaDensity(k, gamma * k)
    phi = kth_fingerprint_density(k, gamma)
    # the top entry is monotone in the first free threshold; bisect on it and
    # accept once the last stationarity condition holds with T_t pinned to 1
    lo, hi = 0.0, 1.0
    best = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        T = _shoot(mid, t, gamma, lower, phi)
        if T[t - 2] < 1.0:
            T[t - 1] = 1.0
            if abs(_residual(T, t - 2, gamma, lower, phi)) <= tol:
                best = T
                break
            T[t - 1] = _forward_step(T[t - 3], T[t - 2], gamma, lower, phi)
        if T[t - 1] > 1.0:
            hi = mid
        else:
            lo = mid
    if best is None:
        raise ThresholdSearchError(
            f"no threshold vector with final residual <= {tol} for k={k}, gamma={gamma}, t={t}; "
            f"bracket [{lo!r}, {hi!r}]")
    return best


def optimal_thresholds(k: int, gamma: float, t: int, tol: float = 1e-9) -> ThresholdVector:
    if k < 1 or gamma <= 1.0 or t < 2:
        raise ValueError("need k >= 1, gamma > 1, t >= 2")
    return ThresholdVector(k, gamma, t, _optimal(k, float(gamma), t, tol))


def uniform_thresholds(k: int, gamma: float, t: int, lo: float = 2.0 / 3.0) -> ThresholdVector:
    """Ad-hoc baseline: T_1 = 0 then t-1 values evenly spaced on [lo, 1]."""
    T = np.concatenate([[0.0], np.linspace(lo, 1.0, t - 1)])
    return ThresholdVector(k, gamma, t, T)


def expected_empty_slots(tv: ThresholdVector) -> float:
    """Expected empty slots of one bin under the Poisson model.

    sum_i int_{T_i}^{T_{i+1}} k (s - T_i)/s phi(s) ds with T_{t+1} = inf,
    where phi is the density of the (k+1)-smallest fingerprint.
    """
    k, gamma = tv.k, tv.gamma
    phi = kth_fingerprint_density(k, gamma)
    lower = GammaDensity(k, gamma * k)
    T = list(tv.T) + [math.inf]
    total = 0.0
    for i in range(tv.t):
        a, b = T[i], T[i + 1]
        total += k * (phi.mass(a, b) - a * gamma * lower.mass(a, b))
    return total


def asymptotic_thresholds(k: int, gamma: float, t: int) -> ThresholdVector:
    """Thresholds sampled from the limiting density (inverse-CDF placement).

    The density is Gamma(shape (k+1)/2, rate gamma*k/2) truncated to [0, 1].
    """
    if t == 2:
        return ThresholdVector(k, gamma, t, np.array([0.0, 1.0]))
    shape, rate = (k + 1) / 2.0, gamma * k / 2.0
    top = special.gammainc(shape, rate)
    q = np.arange(t) / (t - 1)
    T = special.gammaincinv(shape, q * top) / rate
    T[0] = 0.0
    T[-1] = 1.0
    return ThresholdVector(k, gamma, t, T)
