"""Unit-delay allocation for continuous-valued packet-size laws.

The discrete level recursion has a quantile-integral limit: align user
1's CDF as phi1~(b) = 1 - alpha + alpha*phi1(b) against phi2~ = phi2,
pair the inverse CDFs at common quantiles, and integrate the differential
of 2^(2(b1~ + b2~)) - 1 split between the users in proportion to their
local rate growth.  Splitting the exact differential (rather than
sampling the integrand) keeps the per-quantile received-sum identity
P1 + alpha*P2 = 2^(2(b1~ + b2~)) - 1 tight to rounding, which is also
the outage-freeness certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .alloc_unit import pw2

BISECT_TOL = 1e-10


class ContinuousAllocError(ValueError):
    """Bad CDF spec (non-monotone, wrong limits) or failed quadrature."""


@dataclass(frozen=True)
class ContinuousLawSpec:
    """CDF callable with support bounds and a quadrature resolution."""

    cdf: Callable[[float], float]
    b_min: float
    b_max: float
    n_grid: int = 1024

    def __post_init__(self) -> None:
        if self.n_grid < 64:
            raise ContinuousAllocError("n_grid must be at least 64")
        if self.b_min < 0 or self.b_max <= self.b_min:
            raise ContinuousAllocError("need 0 <= b_min < b_max")
        lo = self.cdf(self.b_min)
        hi = self.cdf(self.b_max)
        if not (abs(hi - 1.0) <= 1e-9 and lo >= -1e-12):
            raise ContinuousAllocError(
                f"cdf must reach 1 at b_max (got {hi}) and be nonnegative at b_min"
            )


def _inverse(spec: ContinuousLawSpec, x: float) -> float:
    """Smallest rate whose CDF reaches x, by bisection."""
    if x <= 0.0:
        x = 0.0
    if spec.cdf(spec.b_min) >= x:
        return spec.b_min
    lo, hi = spec.b_min, spec.b_max
    while hi - lo > BISECT_TOL * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        c = spec.cdf(mid)
        if not np.isfinite(c):
            raise ContinuousAllocError(f"cdf returned non-finite value at {mid}")
        if c < x:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class ContinuousAllocation:
    """Power curves sampled on the uniform quantile grid."""

    quantiles: np.ndarray
    rate1: np.ndarray
    power1: np.ndarray
    rate2: np.ndarray
    power2: np.ndarray
    alpha: float
    avg_sum_power: float

    def sum_equality_residual(self) -> float:
        target = 2.0 ** (2.0 * (self.rate1 + self.rate2)) - 1.0
        return float(np.abs(self.power1 + self.alpha * self.power2 - target).max())

    def rows(self):
        for j in range(len(self.quantiles)):
            yield (
                float(self.quantiles[j]),
                float(self.rate1[j]),
                float(self.power1[j]),
                float(self.rate2[j]),
                float(self.power2[j]),
            )


def allocate_continuous(
    spec1: ContinuousLawSpec, spec2: ContinuousLawSpec, alpha: float
) -> ContinuousAllocation:
    """Minimum average sum-power curves for gains (1, alpha), 0 < alpha <= 1.

    User 2 starts at its single-user floor; from there each quantile
    segment adds the increment of 2^(2(b1~ + b2~)) - 1 split between the
    users in the ratio of their rate increments (a user whose inverse CDF
    is flat on the segment pays nothing).
    """
    if not 0.0 < alpha <= 1.0:
        raise ContinuousAllocError(f"gain ratio {alpha} outside (0, 1]")
    n = max(spec1.n_grid, spec2.n_grid)

    def b1t(x: float) -> float:
        # offset inverse: rate 0 below quantile 1 - alpha
        if x <= 1.0 - alpha + 1e-15:
            return 0.0
        return _inverse(spec1, (x - (1.0 - alpha)) / alpha)

    def b2t(x: float) -> float:
        return _inverse(spec2, x) if x > 0 else _inverse(spec2, 0.0)

    # Merged quantile knots: the uniform grid plus the images of uniform
    # rate grids under each transformed CDF, so steep and flat CDF
    # stretches are both resolved.
    knots = set(np.linspace(0.0, 1.0, n))
    for spec, offset, scale in ((spec1, 1.0 - alpha, alpha), (spec2, 0.0, 1.0)):
        prev = -np.inf
        for r in np.linspace(spec.b_min, spec.b_max, n):
            c = float(spec.cdf(float(r)))
            if c < prev - 1e-9:
                raise ContinuousAllocError(f"cdf decreases near rate {r}")
            prev = c
            knots.add(min(1.0, max(0.0, offset + scale * c)))
    xs = np.array(sorted(knots))

    r1 = np.array([b1t(float(x)) for x in xs])
    r2 = np.array([b2t(float(x)) for x in xs])
    if np.any(np.diff(r1) < -1e-12) or np.any(np.diff(r2) < -1e-12):
        raise ContinuousAllocError("inverse CDF came out non-monotone")

    total = 2.0 ** (2.0 * (r1 + r2)) - 1.0
    p1 = np.empty_like(xs)
    p2 = np.empty_like(xs)
    p2[0] = pw2(r2[0]) / alpha
    p1[0] = total[0] - alpha * p2[0]
    for j in range(1, len(xs)):
        d_total = total[j] - total[j - 1]
        d1 = r1[j] - r1[j - 1]
        d2 = r2[j] - r2[j - 1]
        if d1 + d2 <= 0.0:
            share1 = 0.0
            d_total = 0.0
        else:
            share1 = d1 / (d1 + d2)
        p1[j] = p1[j - 1] + d_total * share1
        p2[j] = p2[j - 1] + d_total * (1.0 - share1) / alpha
    if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
        raise ContinuousAllocError("quadrature produced non-finite powers")

    # Expectations: user 2 mass is dx, user 1 mass is dx/alpha above 1-alpha.
    dx = np.diff(xs)
    mid2 = 0.5 * (p2[1:] + p2[:-1])
    e2 = float(np.sum(mid2 * dx))
    mask = xs[1:] > 1.0 - alpha + 1e-15
    mid1 = 0.5 * (p1[1:] + p1[:-1])
    e1 = float(np.sum((mid1 * dx)[mask]) / alpha)

    uniform = np.linspace(0.0, 1.0, n)
    sel = np.searchsorted(xs, uniform)
    sel = np.clip(sel, 0, len(xs) - 1)
    return ContinuousAllocation(
        quantiles=xs[sel],
        rate1=r1[sel],
        power1=p1[sel],
        rate2=r2[sel],
        power2=p2[sel],
        alpha=alpha,
        avg_sum_power=e1 + e2,
    )


def staircase_cdf(pairs: Sequence[tuple[float, float]], width: float) -> Callable[[float], float]:
    """Smooth a discrete law into a continuous CDF with linear ramps.

    Each atom's mass rises linearly over [v - width/2, v + width/2];
    useful for feeding discrete laws to the continuous allocator.
    """
    vs = [float(v) for v, _ in pairs]
    ps = [float(p) for _, p in pairs]
    if any(vs[i] + width >= vs[i + 1] for i in range(len(vs) - 1)):
        raise ContinuousAllocError("smoothing width overlaps adjacent atoms")

    def cdf(b: float) -> float:
        total = 0.0
        for v, p in zip(vs, ps):
            lo, hi = v - 0.5 * width, v + 0.5 * width
            if b >= hi:
                total += p
            elif b > lo:
                total += p * (b - lo) / width
        return total

    return cdf
