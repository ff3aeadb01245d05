"""
Ensemble statistics for disorder studies.

Unbiased (n-1) variance estimators with delete-one jackknife standard
errors, ratio estimators, log-log trend fits and one-sided Richardson
extrapolation. Every function takes per-sample arrays in sample-index order
and returns plain floats, so results are deterministic given the inputs.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import logging

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Estimate:
    """
    Point estimate with its standard error.

    Attributes:
        value: Estimate
        std_error: Standard error (0 when undefined)
    """
    value: float
    std_error: float

    def exceeds(self, bound: float, multiplier: float) -> bool:
        """True when value > bound + multiplier * std_error."""
        return self.value > bound + multiplier * self.std_error


@dataclass(frozen=True)
class LogLogFit:
    """
    Least-squares fit log y = intercept + slope log N.

    Attributes:
        slope: Fitted exponent
        slope_se: Standard error of the slope (nan with two points)
        intercept: Fitted intercept
        n_points: Points used (positive y only)
    """
    slope: float
    slope_se: float
    intercept: float
    n_points: int


def unbiased_variance(values: Sequence[float]) -> float:
    """Sample variance with the (n-1) denominator."""
    array = np.asarray(values, dtype=float)
    if array.size < 2:
        return 0.0
    return float(np.var(array, ddof=1))


def jackknife(values: np.ndarray, statistic: Callable[[np.ndarray], float]) -> Estimate:
    """
    Delete-one jackknife standard error of ``statistic``.

    Args:
        values: Per-sample data, first axis indexes samples
        statistic: Function of a (sub)sample returning a float

    Returns:
        Estimate(statistic(values), jackknife SE)

    Examples:
        >>> est = jackknife(np.array([1.0, 2.0, 3.0, 4.0]), lambda x: float(np.mean(x)))
        >>> est.value
        2.5
    """
    data = np.asarray(values, dtype=float)
    n = data.shape[0]
    full = float(statistic(data))
    if n < 2:
        return Estimate(full, 0.0)
    mask = np.ones(n, dtype=bool)
    leave_one_out = np.empty(n)
    for i in range(n):
        mask[i] = False
        leave_one_out[i] = statistic(data[mask])
        mask[i] = True
    spread = float(np.sum((leave_one_out - leave_one_out.mean()) ** 2))
    return Estimate(full, float(np.sqrt((n - 1) / n * spread)))


def mean_estimate(values: Sequence[float]) -> Estimate:
    """Sample mean with SE = s / sqrt(n) (the jackknife SE of the mean)."""
    array = np.asarray(values, dtype=float)
    if array.size == 0:
        return Estimate(float("nan"), 0.0)
    if array.size < 2:
        return Estimate(float(array[0]), 0.0)
    return Estimate(float(array.mean()), float(stats.sem(array)))


def variance_estimate(values: Sequence[float]) -> Estimate:
    """Unbiased variance with a jackknife SE."""
    return jackknife(np.asarray(values, dtype=float), unbiased_variance)


def total_variance_decomposition(
    means: Sequence[float],
    second_moments: Sequence[float],
) -> Tuple[Estimate, Estimate, Estimate]:
    """
    Split E<(O - E<O>)^2> into a Gibbs term and a sample term.

        total  = E<(O - E<O>)^2>   (pooled over samples)
        gibbs  = E[<O^2> - <O>^2]
        sample = E[(<O> - E<O>)^2]  (unbiased)

    total and gibbs + sample agree up to sample / n, well inside the
    jackknife errors; callers check the additivity explicitly.

    Args:
        means: <O> per sample
        second_moments: <O^2> per sample

    Returns:
        (total, gibbs, sample) estimates with jackknife SEs
    """
    data = np.column_stack([np.asarray(means, float), np.asarray(second_moments, float)])

    def gibbs(block: np.ndarray) -> float:
        return float(np.mean(np.maximum(block[:, 1] - block[:, 0] ** 2, 0.0)))

    def sample(block: np.ndarray) -> float:
        return unbiased_variance(block[:, 0])

    def total(block: np.ndarray) -> float:
        centre = float(np.mean(block[:, 0]))
        return float(np.mean(block[:, 1])) - centre ** 2

    return jackknife(data, total), jackknife(data, gibbs), jackknife(data, sample)


def ratio_estimate(
    data: np.ndarray,
    parts: Callable[[np.ndarray], Tuple[float, float]],
) -> Optional[Estimate]:
    """
    Jackknife estimate of part / whole for two ensemble statistics.

    Args:
        data: Per-sample data, first axis indexes samples
        parts: Function of a (sub)sample returning (part, whole)

    Returns:
        Estimate, or None when the whole vanishes (0/0)
    """
    block = np.asarray(data, dtype=float)
    part, whole = parts(block)
    if not whole > 0:
        return None

    def ratio(sub: np.ndarray) -> float:
        p, w = parts(sub)
        return p / w if w > 0 else float("nan")

    estimate = jackknife(block, ratio)
    if not np.isfinite(estimate.std_error):
        return Estimate(part / whole, 0.0)
    return estimate


def loglog_slope(sizes: Sequence[int], values: Sequence[float]) -> LogLogFit:
    """
    Fit log(value) against log(N) by least squares.

    Nonpositive values are dropped (their logarithm is undefined).

    Examples:
        >>> fit = loglog_slope([2, 4, 8], [0.5, 0.25, 0.125])
        >>> round(fit.slope, 12)
        -1.0
    """
    n = np.asarray(sizes, dtype=float)
    y = np.asarray(values, dtype=float)
    keep = np.isfinite(y) & (y > 0)
    if not keep.all():
        logger.debug("Dropping nonpositive values from log-log fit", extra={"dropped": int((~keep).sum())})
    if keep.sum() < 2:
        return LogLogFit(float("nan"), float("nan"), float("nan"), int(keep.sum()))
    result = stats.linregress(np.log(n[keep]), np.log(y[keep]))
    slope_se = float(result.stderr) if keep.sum() > 2 else float("nan")
    return LogLogFit(float(result.slope), slope_se, float(result.intercept), int(keep.sum()))


def richardson_limit(points: Sequence[Tuple[float, float]]) -> float:
    """
    Linear two-point extrapolation of f(lambda) to lambda = 0.

    Args:
        points: (lambda, f) pairs on one side of 0; the two smallest |lambda|
            are used

    Returns:
        f(0) estimated from the line through the two points (or the single
        value when only one point exists)
    """
    ordered = sorted(points, key=lambda pair: abs(pair[0]))
    if not ordered:
        raise ValueError("richardson_limit needs at least one point")
    if len(ordered) == 1:
        return float(ordered[0][1])
    (x1, f1), (x2, f2) = ordered[:2]
    if x1 == x2:
        return float(f1)
    return float((x2 * f1 - x1 * f2) / (x2 - x1))


def second_differences(grid: Sequence[float], values: Sequence[float]) -> np.ndarray:
    """Second divided differences on a (possibly nonuniform) ascending grid."""
    x = np.asarray(grid, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 3:
        return np.zeros(0)
    left = (y[1:-1] - y[:-2]) / (x[1:-1] - x[:-2])
    right = (y[2:] - y[1:-1]) / (x[2:] - x[1:-1])
    return 2.0 * (right - left) / (x[2:] - x[:-2])


def central_derivative(grid: Sequence[float], values: Sequence[float]) -> np.ndarray:
    """
    Derivative at interior grid points from the neighboring points.

    On a nonuniform grid this is the second-order three-point formula.
    """
    x = np.asarray(grid, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 3:
        return np.zeros(0)
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    return (
        -h2 / (h1 * (h1 + h2)) * y[:-2]
        + (h2 - h1) / (h1 * h2) * y[1:-1]
        + h1 / (h2 * (h1 + h2)) * y[2:]
    )


def additivity_holds(
    total: Estimate,
    gibbs: Estimate,
    sample: Estimate,
    multiplier: float,
) -> bool:
    """|total - (gibbs + sample)| within multiplier times the combined SE."""
    combined = float(np.sqrt(total.std_error ** 2 + gibbs.std_error ** 2 + sample.std_error ** 2))
    return abs(total.value - gibbs.value - sample.value) <= multiplier * combined + 1e-12
