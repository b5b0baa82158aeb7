"""Experiment statistics: moment accumulators, variance estimators, z-tests.

Accumulators keep exact rational sums so that merging partial accumulators
(field-wise addition) gives bit-identical results to a single pass, which is
what makes grouped and parallel aggregation safe. The variance formulas
themselves are evaluated in binary64 on the accumulated moments.

The normal z-test is used rather than Student's t: the intended scale is
large-sample experimentation, and sample sizes are surfaced in the scorecard
so small-n results can be judged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .diagnostics import MetriqError

#: Two-sided 95% normal quantile used for confidence intervals.
CONFIDENCE_Z = 1.959964

#: Relative floor under which a computed standard error is treated as zero.
#: Variance formulas over binary64 moment sums cancel catastrophically when
#: the true variance is zero (all units identical), leaving noise around
#: 1e-8 of the mean; anything below this floor is that noise, not signal.
STDERR_NOISE_FLOOR = 1e-7

_SQRT2 = math.sqrt(2.0)


class StatsError(MetriqError):
    pass


class InsufficientSampleError(StatsError):
    pass


class DegenerateVarianceError(StatsError):
    pass


class UndefinedRatioError(StatsError):
    pass


class MomentAccumulator:
    """Count, sum, and sum of squares of per-unit values."""

    __slots__ = ("n", "_sum_v", "_sum_v2")

    def __init__(self, n: int = 0, sum_v: Fraction | float = 0, sum_v2: Fraction | float = 0):
        self.n = n
        self._sum_v = Fraction(sum_v)
        self._sum_v2 = Fraction(sum_v2)

    def add(self, value: float | Fraction) -> None:
        v = Fraction(value)
        self.n += 1
        self._sum_v += v
        self._sum_v2 += v * v

    def __add__(self, other: "MomentAccumulator") -> "MomentAccumulator":
        return MomentAccumulator(
            self.n + other.n, self._sum_v + other._sum_v, self._sum_v2 + other._sum_v2
        )

    @property
    def sum_v(self) -> float:
        return float(self._sum_v)

    @property
    def sum_v2(self) -> float:
        return float(self._sum_v2)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MomentAccumulator):
            return NotImplemented
        return (self.n, self._sum_v, self._sum_v2) == (other.n, other._sum_v, other._sum_v2)

    def __repr__(self) -> str:
        return f"MomentAccumulator(n={self.n}, sum_v={self.sum_v}, sum_v2={self.sum_v2})"


class RatioMoments:
    """Moments of per-unit (numerator, denominator) pairs for ratio metrics."""

    __slots__ = ("n", "_sum_y", "_sum_x", "_sum_y2", "_sum_x2", "_sum_xy")

    def __init__(self, n=0, sum_y=0, sum_x=0, sum_y2=0, sum_x2=0, sum_xy=0):
        self.n = n
        self._sum_y = Fraction(sum_y)
        self._sum_x = Fraction(sum_x)
        self._sum_y2 = Fraction(sum_y2)
        self._sum_x2 = Fraction(sum_x2)
        self._sum_xy = Fraction(sum_xy)

    def add(self, y: float | Fraction, x: float | Fraction) -> None:
        yf, xf = Fraction(y), Fraction(x)
        self.n += 1
        self._sum_y += yf
        self._sum_x += xf
        self._sum_y2 += yf * yf
        self._sum_x2 += xf * xf
        self._sum_xy += yf * xf

    def __add__(self, other: "RatioMoments") -> "RatioMoments":
        return RatioMoments(
            self.n + other.n,
            self._sum_y + other._sum_y,
            self._sum_x + other._sum_x,
            self._sum_y2 + other._sum_y2,
            self._sum_x2 + other._sum_x2,
            self._sum_xy + other._sum_xy,
        )

    sum_y = property(lambda self: float(self._sum_y))
    sum_x = property(lambda self: float(self._sum_x))
    sum_y2 = property(lambda self: float(self._sum_y2))
    sum_x2 = property(lambda self: float(self._sum_x2))
    sum_xy = property(lambda self: float(self._sum_xy))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RatioMoments):
            return NotImplemented
        return (
            self.n, self._sum_y, self._sum_x, self._sum_y2, self._sum_x2, self._sum_xy
        ) == (
            other.n, other._sum_y, other._sum_x, other._sum_y2, other._sum_x2, other._sum_xy
        )

    def __repr__(self) -> str:
        return (
            f"RatioMoments(n={self.n}, sum_y={self.sum_y}, sum_x={self.sum_x}, "
            f"sum_y2={self.sum_y2}, sum_x2={self.sum_x2}, sum_xy={self.sum_xy})"
        )


@dataclass(frozen=True)
class TestResult:
    value_t: float
    value_c: float
    delta: float
    relative_delta: float | None
    stderr: float
    z: float
    p_value: float
    ci_low: float
    ci_high: float
    n_t: int
    n_c: int


def mean_and_variance(m: MomentAccumulator) -> tuple[float, float]:
    """Mean of per-unit values and the variance of that mean.

    The sample variance is s^2 = (sum_v2 - mean * sum_v) / (n - 1); tiny
    negatives from rounding clamp to zero.
    """
    if m.n < 2:
        raise InsufficientSampleError(f"need at least 2 units, got {m.n}")
    n = m.n
    sum_v, sum_v2 = m.sum_v, m.sum_v2
    mean = sum_v / n
    s2 = (sum_v2 - mean * sum_v) / (n - 1)
    if s2 < 0.0:
        s2 = 0.0
    return mean, s2 / n


def delta_ratio_variance(r: RatioMoments) -> tuple[float, float]:
    """Value and variance of a ratio of means over a clustered sample.

    The ratio is sum_y / sum_x. Its variance comes from the first-order
    Taylor expansion of y-bar / x-bar around the means:

        Var ~= (sigma_y^2 - 2 R sigma_yx + R^2 sigma_x^2) / (n mu_x^2)

    with R the ratio and sample (n-1) moments. The grouped form above is the
    standard expansion with the 1/mu_x^2 factored out; it cancels exactly
    when y is proportional to x. Tiny negatives clamp to zero.
    """
    if r.n < 2:
        raise InsufficientSampleError(f"need at least 2 units, got {r.n}")
    sum_y, sum_x = r.sum_y, r.sum_x
    if sum_x == 0.0:
        raise UndefinedRatioError("ratio denominator mean is zero")
    n = r.n
    mu_y = sum_y / n
    mu_x = sum_x / n
    ratio = sum_y / sum_x
    var_y = (r.sum_y2 - mu_y * sum_y) / (n - 1)
    var_x = (r.sum_x2 - mu_x * sum_x) / (n - 1)
    cov_yx = (r.sum_xy - mu_x * sum_y) / (n - 1)
    if var_y < 0.0:
        var_y = 0.0
    if var_x < 0.0:
        var_x = 0.0
    var = (var_y - 2.0 * ratio * cov_yx + ratio * ratio * var_x) / (n * mu_x * mu_x)
    if var < 0.0:
        var = 0.0
    return ratio, var


def normal_cdf(z: float) -> float:
    """Standard normal CDF, accurate to well below 1e-7 absolute."""
    return 0.5 * math.erfc(-z / _SQRT2)


def two_sample_test(
    t: tuple[float, float, int], c: tuple[float, float, int]
) -> TestResult:
    """Two-sided z-test comparing treatment and control metric values.

    Each argument is (value, variance of the value, unit count).
    """
    value_t, var_t, n_t = t
    value_c, var_c, n_c = c
    if var_t < 0 or var_c < 0:
        raise DegenerateVarianceError("negative variance")
    if n_t < 2 or n_c < 2:
        raise InsufficientSampleError(f"need at least 2 units per variant, got {n_t}/{n_c}")
    delta = value_t - value_c
    var_sum = var_t + var_c
    if var_sum == 0.0:
        if delta != 0.0:
            raise DegenerateVarianceError("zero variance with a non-zero delta")
        z = 0.0
        stderr = 0.0
        p = 1.0
    else:
        stderr = math.sqrt(var_sum)
        z = delta / stderr
        # 2 * (1 - Phi(|z|)), written via erfc so the far tail keeps precision.
        p = math.erfc(abs(z) / _SQRT2)
    relative = delta / value_c if value_c != 0.0 else None
    half = CONFIDENCE_Z * stderr
    return TestResult(
        value_t=value_t,
        value_c=value_c,
        delta=delta,
        relative_delta=relative,
        stderr=stderr,
        z=z,
        p_value=p,
        ci_low=delta - half,
        ci_high=delta + half,
        n_t=n_t,
        n_c=n_c,
    )


def percentile_nearest_rank(values: list[float], rank: float) -> float:
    """Nearest-rank percentile of an already sorted list.

    Picks the element at 1-based index ceil(rank / 100 * n).
    """
    if not values:
        raise InsufficientSampleError("percentile of an empty list")
    if not (0.0 < rank <= 100.0):
        raise ValueError(f"rank must be in (0, 100], got {rank}")
    n = len(values)
    idx = math.ceil(Fraction(rank) * n / 100)
    return values[idx - 1]
