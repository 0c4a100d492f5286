"""Special functions shared by every power-allocation policy.

Three ingredients live here:

* the principal branch of the Lambert W function (Halley iteration),
* the negative-binomial law of the battery fill time, i.e. the number of
  slots a Bernoulli(p) arrival process needs to deliver r energy quanta,
  with pmf  q_n = C(n-1, n-r) p^r (1-p)^(n-r)  for n >= r and mean r/p,
* the throughput upper bound 0.5*log2(1+mu) and the worst-case gap

      G(r) = max_p -(p/2r) * sum_i  Fbar_{i-1} * log2(Fbar_{i-1}),

  where Fbar_i is the complementary CDF of the fill time.  G(r) separates
  the upper bound from the throughput of the proportional (suboptimal
  non-adaptive) schedule for every p.

All pmf/ccdf arithmetic is done in log space with log-gamma binomial
coefficients so that r up to 1e4 stays finite.  Infinite sums are truncated
once the dropped probability mass is below ``TruncationConfig.tail_epsilon``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "FillTimeLaw",
    "TruncationConfig",
    "DEFAULT_TRUNCATION",
    "lambert_w0",
    "fill_time_pmf",
    "fill_time_pmf_table",
    "fill_time_ccdf",
    "fill_time_ccdf_table",
    "throughput_upper_bound",
    "gap_bound_g",
    "gap_objective",
]

_INV_E = math.exp(-1.0)
_LN2 = math.log(2.0)


@dataclass(frozen=True, slots=True)
class FillTimeLaw:
    """Fill-time distribution: slots needed for r arrivals of probability p."""

    r: int
    p: float

    def __post_init__(self) -> None:
        if not (isinstance(self.r, (int, np.integer)) and self.r >= 1):
            raise ValueError(f"r must be a positive integer, got {self.r!r}")
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"p must lie in (0, 1], got {self.p!r}")

    @property
    def mean(self) -> float:
        return self.r / self.p


@dataclass(frozen=True, slots=True)
class TruncationConfig:
    """Tail control for the (formally infinite) fill-time sums.

    ``tail_epsilon`` is the probability mass we are willing to drop,
    ``n_max_cap`` an optional hard ceiling on the summation index.
    """

    tail_epsilon: float = 1e-12
    n_max_cap: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.tail_epsilon <= 1e-9):
            raise ValueError("tail_epsilon must lie in (0, 1e-9]")
        if self.n_max_cap is not None and self.n_max_cap < 1:
            raise ValueError("n_max_cap must be >= 1")

    def n_max(self, law: FillTimeLaw) -> int:
        """Summation horizon leaving at most ``tail_epsilon`` mass beyond it.

        The horizon is found by doubling k in n = mean + k*sigma and testing
        the geometric-majorant tail bound  P(C > n) <= q_n * rho/(1 - rho)
        with rho = (n/(n+1-r))*(1-p), which dominates the true ratio
        q_{m+1}/q_m for every m >= n past the mode.
        """
        r, p = law.r, law.p
        if p == 1.0:
            return r
        mean = r / p
        sigma = math.sqrt(r * (1.0 - p)) / p
        n = max(law.r + 50, int(math.ceil(mean + 2.0 * sigma)))
        k = 2.0
        while True:
            rho = (n / (n + 1.0 - r)) * (1.0 - p)
            if rho < 1.0:
                log_tail_bound = (
                    math.lgamma(n)
                    - math.lgamma(n - r + 1)
                    - math.lgamma(r)
                    + r * math.log(p)
                    + (n - r) * math.log1p(-p)
                    + math.log(rho / (1.0 - rho))
                )
                if log_tail_bound <= math.log(self.tail_epsilon):
                    break
            k *= 2.0
            n = max(n + 1, int(math.ceil(mean + k * sigma)))
        if self.n_max_cap is not None:
            n = min(n, max(self.n_max_cap, law.r))
        return n


DEFAULT_TRUNCATION = TruncationConfig()


def lambert_w0(x: float) -> float:
    """Principal branch W0 of the Lambert W function for real x >= -1/e.

    Halley iteration seeded piecewise: a branch-point series near -1/e,
    a Taylor seed near 0 and log(x) - log(log(x)) for large arguments.
    Converges to ~1e-15 relative accuracy in a handful of steps.
    """
    x = float(x)
    if math.isnan(x):
        raise ValueError("lambert_w0 is undefined for NaN")
    if x < -_INV_E:
        # Tolerate rounding just below the branch point.
        if x > -_INV_E - 1e-14 * max(1.0, abs(x)):
            return -1.0
        raise ValueError(f"lambert_w0 requires x >= -1/e, got {x}")
    if x == 0.0:
        return 0.0

    if x < -0.3:
        # Series around the branch point, Corless et al. Eq. (4.22).
        s = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + s - s * s / 3.0 + 11.0 / 72.0 * s**3
    elif x < 1.0:
        w = x * (1.0 - x * (1.0 - 1.5 * x))
        if w <= -1.0:
            w = -0.99
    else:
        lx = math.log(x)
        w = lx - math.log(lx) if lx > 1.0 else 0.5 + 0.3 * (x - 1.0)

    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 <= 1e-12:
            # Halley step degenerates at the branch point; series is exact there.
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        dw = f / denom
        w -= dw
        if abs(dw) <= 1e-16 * (1.0 + abs(w)):
            break
    return max(w, -1.0)


def _log_pmf_array(r: int, p: float, n: np.ndarray) -> np.ndarray:
    """log q_n over a contiguous integer range n >= r.

    Anchored with one log-gamma evaluation at the first index, then extended
    by the exact pmf ratio q_{m+1}/q_m = (m/(m+1-r))*(1-p) in log space, so
    a window of millions of terms costs one cumsum instead of per-element
    gamma calls.
    """
    n0 = int(n[0])
    log_q0 = (
        math.lgamma(n0)
        - math.lgamma(n0 - r + 1)
        - math.lgamma(r)
        + r * math.log(p)
        + (n0 - r) * math.log1p(-p)
    )
    if n.size == 1:
        return np.array([log_q0])
    m = n[:-1].astype(np.float64)
    ratios = np.log(m) - np.log(m + 1.0 - r) + math.log1p(-p)
    out = np.empty(n.size)
    out[0] = log_q0
    np.cumsum(ratios, out=out[1:])
    out[1:] += log_q0
    return out


def fill_time_pmf(law: FillTimeLaw, n: int) -> float:
    """P(fill time = n); zero below the support n < r."""
    if n < law.r:
        return 0.0
    if law.p == 1.0:
        return 1.0 if n == law.r else 0.0
    log_q = (
        math.lgamma(n)
        - math.lgamma(n - law.r + 1)
        - math.lgamma(law.r)
        + law.r * math.log(law.p)
        + (n - law.r) * math.log1p(-law.p)
    )
    return math.exp(log_q)


def fill_time_pmf_table(
    law: FillTimeLaw, trunc: TruncationConfig = DEFAULT_TRUNCATION
) -> tuple[np.ndarray, np.ndarray]:
    """(n values, q_n) over the truncated support n = r .. n_max."""
    if law.p == 1.0:
        return np.array([law.r]), np.array([1.0])
    n_max = trunc.n_max(law)
    n = np.arange(law.r, n_max + 1)
    return n, np.exp(_log_pmf_array(law.r, law.p, n))


def _ccdf_full(law: FillTimeLaw, trunc: TruncationConfig, i_max: int) -> np.ndarray:
    if law.p == 1.0:
        table = np.zeros(i_max + 1)
        table[: min(law.r, i_max + 1)] = 1.0
        return table
    n = np.arange(law.r, i_max + 2)
    pmf = np.exp(_log_pmf_array(law.r, law.p, n))
    # tail[k] = sum of pmf from index k to the end = P(fill >= r + k)
    tail = np.cumsum(pmf[::-1])[::-1]
    table = np.empty(i_max + 1)
    head = min(law.r, i_max + 1)
    table[:head] = 1.0
    if i_max >= law.r:
        m = i_max - law.r + 1
        table[law.r :] = tail[1 : m + 1]
    return table


@lru_cache(maxsize=512)
def _ccdf_default_span(law: FillTimeLaw, trunc: TruncationConfig) -> np.ndarray:
    table = _ccdf_full(law, trunc, trunc.n_max(law))
    table.flags.writeable = False
    return table


@lru_cache(maxsize=512)
def fill_time_ccdf_cumsum(
    law: FillTimeLaw, trunc: TruncationConfig = DEFAULT_TRUNCATION
) -> np.ndarray:
    """Cumulative sums sum_{i<=n} Fbar_{i-1}, cached; converges to r/p."""
    table = np.cumsum(_ccdf_default_span(law, trunc)[:-1])
    table.flags.writeable = False
    return table


def fill_time_ccdf_table(
    law: FillTimeLaw, trunc: TruncationConfig = DEFAULT_TRUNCATION, i_max: int | None = None
) -> np.ndarray:
    """Fbar_0 .. Fbar_{i_max} where Fbar_i = P(fill time > i).

    Computed by a reverse cumulative sum of the pmf so that small tail
    values keep full relative accuracy; the mass beyond the truncation
    horizon (at most ``tail_epsilon``) is dropped.  Tables up to the
    default horizon are cached per (law, trunc) and returned read-only.
    """
    n_max = trunc.n_max(law)
    if i_max is None or i_max <= n_max:
        table = _ccdf_default_span(law, trunc)
        return table if i_max is None else table[: i_max + 1]
    return _ccdf_full(law, trunc, i_max)


def fill_time_ccdf(
    law: FillTimeLaw, i: int, trunc: TruncationConfig = DEFAULT_TRUNCATION
) -> float:
    """Fbar_i = P(fill time > i); equals 1 for i < r, nonincreasing in i."""
    if i < 0:
        raise ValueError("i must be >= 0")
    if i < law.r:
        return 1.0
    table = fill_time_ccdf_table(law, trunc, i_max=i)
    return float(table[i])


def throughput_upper_bound(mu: float) -> float:
    """0.5*log2(1+mu): throughput with an unconstrained infinite battery."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    return 0.5 * math.log2(1.0 + mu)


def gap_objective(
    r: int, p: float, trunc: TruncationConfig = DEFAULT_TRUNCATION
) -> float:
    """-(p/2r) * sum_i Fbar_{i-1} log2 Fbar_{i-1} for one value of p.

    For laws whose support is long (small p, large r) only the window where
    Fbar transitions from 1 to 0 contributes; outside it Fbar*log2(Fbar) is
    zero to within the tail tolerance, so the sum is evaluated on a window
    of +-14 standard deviations around the mean fill time.
    """
    law = FillTimeLaw(r, p)
    if p == 1.0:
        return 0.0
    n_max = trunc.n_max(law)
    mean = r / p
    sigma = math.sqrt(r * (1.0 - p)) / p
    lo = max(law.r, int(mean - 14.0 * sigma))
    hi = n_max
    if hi - lo > 50_000_000:
        raise ValueError(
            f"fill-time window for r={r}, p={p} needs {hi - lo} terms; "
            "raise tail_epsilon or cap n_max_cap"
        )
    n = np.arange(lo, hi + 1)
    pmf = np.exp(_log_pmf_array(r, p, n))
    tail = np.cumsum(pmf[::-1])[::-1]
    # tail[k] = P(fill >= lo + k) = Fbar_{lo+k-1}; windowing drops only
    # indices where Fbar is 1 or 0 to within tail accuracy.
    fbar = np.clip(tail, 0.0, 1.0)
    nz = fbar > 0.0
    s = -np.sum(fbar[nz] * np.log2(fbar[nz]))
    return float(p / (2.0 * r) * s)


@lru_cache(maxsize=256)
def gap_bound_g(
    r: int,
    trunc: TruncationConfig = DEFAULT_TRUNCATION,
    p_bounds: tuple[float, float] = (1e-4, 1.0 - 1e-4),
    p_tol: float = 1e-6,
) -> float:
    """Worst-case (over p) gap G(r) between the upper bound and the
    proportional schedule's throughput.

    A coarse scan over ``p_bounds`` locates the best bracket, which a
    golden-section search then refines to ``p_tol`` in p.  The scan guards
    against the maximiser sitting at either end of the admissible range
    (which is where it in fact sits: the objective is observed to decrease
    monotonically in p, so the supremum is approached as p -> 0).
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    lo, hi = p_bounds
    if not (0.0 < lo < hi < 1.0):
        raise ValueError("p_bounds must satisfy 0 < lo < hi < 1")

    # Log-spaced scan: the objective varies fastest at small p.
    grid = np.unique(
        np.concatenate(
            [np.geomspace(lo, hi, 25), np.linspace(lo, hi, 15)]
        )
    )
    values = [gap_objective(r, float(p), trunc) for p in grid]
    k = int(np.argmax(values))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1 = gap_objective(r, x1, trunc)
    f2 = gap_objective(r, x2, trunc)
    while b - a > p_tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = gap_objective(r, x2, trunc)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = gap_objective(r, x1, trunc)
    best = max(values[k], f1, f2)
    return float(best)
