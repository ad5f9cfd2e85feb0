"""Distribution-free empirical estimates shared by all verifiers.

Survival queries carry Dvoretzky-Kiefer-Wolfowitz bands (half-width
sqrt(ln(2/delta)/(2m)), simultaneous over the threshold), means carry
normal-approximation intervals, and high moments are evaluated in log
space so p = ln(n+2) up to n ~ 1e4 cannot overflow on heavy-tailed data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DegenerateInputError, ParameterError

DEFAULT_DELTA = 0.01


def dkw_epsilon(m: int, delta: float) -> float:
    """DKW simultaneous band half-width for an m-sample empirical CDF."""
    if m < 1:
        raise ParameterError(f"sample count must be >= 1, got {m}")
    if not (0 < delta < 1):
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * m))


def normal_survival(t):
    """P(|g| >= t) for a standard Gaussian g, via the complementary error function."""
    return special.erfc(np.asarray(t, dtype=np.float64) / math.sqrt(2.0))


class SurvivalEstimate(NamedTuple):
    estimate: float
    lower: float
    upper: float


@dataclass(frozen=True, eq=False)
class EmpiricalTail:
    """Sorted scalar samples with DKW-banded survival queries."""

    sorted_values: np.ndarray
    delta: float = DEFAULT_DELTA

    @classmethod
    def from_samples(cls, samples, delta: float = DEFAULT_DELTA) -> "EmpiricalTail":
        values = np.sort(np.asarray(samples, dtype=np.float64).ravel())
        if values.size == 0:
            raise ParameterError("empty sample")
        if not (0 < delta < 1):
            raise ParameterError(f"delta must be in (0, 1), got {delta}")
        return cls(sorted_values=values, delta=delta)

    @property
    def m(self) -> int:
        return self.sorted_values.size

    @property
    def epsilon(self) -> float:
        return dkw_epsilon(self.m, self.delta)

    def survival(self, t) -> SurvivalEstimate:
        return empirical_survival(self, t)

    def quantile(self, q):
        return np.quantile(self.sorted_values, q)


def empirical_survival(tail: EmpiricalTail, t) -> SurvivalEstimate:
    """Fraction of samples >= t with the DKW band, clipped to [0, 1].

    Accepts a scalar or array threshold; the band half-width is the same for
    every t (the DKW band is simultaneous).
    """
    t = np.asarray(t, dtype=np.float64)
    below = np.searchsorted(tail.sorted_values, t, side="left")
    est = (tail.m - below) / tail.m
    eps = tail.epsilon
    lower = np.clip(est - eps, 0.0, 1.0)
    upper = np.clip(est + eps, 0.0, 1.0)
    if t.ndim == 0:
        return SurvivalEstimate(float(est), float(lower), float(upper))
    return SurvivalEstimate(est, lower, upper)


def p_moment(samples, p: float) -> float:
    """(mean |v|^p)^(1/p), evaluated via log-sum-exp."""
    if p < 1:
        raise ParameterError(f"moment order must be >= 1, got {p}")
    values = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    if values.size == 0:
        raise ParameterError("empty sample")
    if not values.any():
        return 0.0
    with np.errstate(divide="ignore"):
        logs = np.log(values)
    log_mean = special.logsumexp(p * logs) - math.log(values.size)
    return float(math.exp(log_mean / p))


def log_indexed_norm(samples, n: int) -> float:
    """The ln(n+2)-moment norm of the samples (natural logarithm)."""
    if n < 1:
        raise ParameterError(f"index must be >= 1, got {n}")
    return p_moment(samples, math.log(n + 2.0))


class PaleyZygmundCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def paley_zygmund_check(samples, theta: float, band: float = 0.0) -> PaleyZygmundCheck:
    """Empirical two-sided check of P(Z >= theta E Z) >= (1-theta)^2 (EZ)^2 / E Z^2.

    Both sides are taken under the empirical measure, for which the
    inequality is a theorem, so with band = 0 `holds` can only fail through
    floating-point pathologies.
    """
    if not (0 < theta < 1):
        raise ParameterError(f"theta must be in (0, 1), got {theta}")
    z = np.asarray(samples, dtype=np.float64).ravel()
    if z.size == 0:
        raise ParameterError("empty sample")
    if np.any(z < 0):
        raise ParameterError("samples must be nonnegative")
    mean = z.mean()
    if mean == 0.0:
        raise DegenerateInputError("E Z = 0: Paley-Zygmund ratio undefined")
    second = (z * z).mean()
    lhs = float((z >= theta * mean).mean())
    rhs = float((1.0 - theta) ** 2 * mean * mean / second)
    return PaleyZygmundCheck(lhs=lhs, rhs=rhs, holds=lhs >= rhs - band)


@dataclass(frozen=True, eq=False)
class MomentReport:
    mean: float
    second_moment: float
    standard_error: float
    half_width: float
    count: int
    delta: float
    samples: np.ndarray | None = field(default=None, repr=False)

    def p_moment(self, p: float) -> float:
        if self.samples is None:
            raise ParameterError("report was built without retained samples")
        return p_moment(self.samples, p)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "second_moment": self.second_moment,
            "standard_error": self.standard_error,
            "half_width": self.half_width,
            "count": self.count,
            "delta": self.delta,
        }


def mean_with_ci(samples, delta: float = DEFAULT_DELTA, keep_samples: bool = False) -> MomentReport:
    """Mean, second moment and a normal-approximation CI at level 1 - delta."""
    values = np.asarray(samples, dtype=np.float64).ravel()
    if values.size == 0:
        raise ParameterError("empty sample")
    if not (0 < delta < 1):
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    mean = float(values.mean())
    second = float((values * values).mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    z = float(special.ndtri(1.0 - delta / 2.0))
    return MomentReport(
        mean=mean,
        second_moment=second,
        standard_error=se,
        half_width=z * se,
        count=values.size,
        delta=delta,
        samples=values if keep_samples else None,
    )


# ---------------------------------------------------------------------------
# the max of n iid draws under the empirical law
#
# With F-hat the empirical CDF of one scalar sample, the max of n iid draws
# has CDF F-hat^n; its moments and exceedance probabilities are available in
# closed form from the order statistics.  These plug-ins are used for the
# "max over n copies" quantities so that Paley-Zygmund style relations are
# exact identities of the empirical measure rather than noisy resamples.


def max_of_n_weights(m: int, n: int) -> np.ndarray:
    """P(max attains the k-th order statistic) = (k/m)^n - ((k-1)/m)^n."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    k = np.arange(m + 1, dtype=np.float64)
    powers = np.exp(n * np.log(k / m, out=np.full(m + 1, -np.inf), where=k > 0))
    return np.diff(powers)


def expect_max_of_n(sorted_values: np.ndarray, n: int, power: float = 1.0) -> float:
    """E[(max of n iid draws)^power] under the empirical law of the sample."""
    w = max_of_n_weights(sorted_values.size, n)
    return float((sorted_values**power) @ w)


def survival_max_of_n(sorted_values: np.ndarray, n: int, t: float) -> float:
    """P(max of n iid draws >= t) under the empirical law of the sample."""
    below = np.searchsorted(sorted_values, t, side="left")
    return float(1.0 - (below / sorted_values.size) ** n)
