"""Comparison schemes: centralized corner allocation and TDMA variants.

Both TDMA flavours ship each user's bits in a dedicated slot fraction, so
their per-slot average powers are feasible (Jensen) but generally above
the decentralized optimum.  The centralized scheme sees all rate demands
and operates on the dominant-face corner, a lower bound no distributed
scheme can beat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .alloc_unit import AllocationError, pw2
from .dist import DiscreteLaw, Numeric, as_fraction

LN2 = math.log(2.0)


def centralized_power(b1, b2, gain1: Numeric, gain2: Numeric) -> tuple[float, float]:
    """Minimum-sum power pair supporting (b1, b2) with full knowledge.

    Corner rule: the sum constraint is tight and the stronger user's
    partner sits at its single-user floor; equal gains deterministically
    pick the user-2 corner.
    """
    a1, a2 = as_fraction(gain1), as_fraction(gain2)
    if a1 <= 0 or a2 <= 0:
        raise AllocationError("channel power gains must be positive")
    total = pw2(as_fraction(b1) + as_fraction(b2))
    if a1 < a2:
        r1 = pw2(b1)
        r2 = total - r1
    else:
        r2 = pw2(b2)
        r1 = total - r2
    return r1 / float(a1), r2 / float(a2)


def centralized_average(
    rate_law1: DiscreteLaw, rate_law2: DiscreteLaw, gain1: Numeric, gain2: Numeric
) -> float:
    """Expected centralized sum power over the product of the rate laws."""
    total = 0.0
    for b1, p1 in rate_law1.support():
        for b2, p2 in rate_law2.support():
            q1, q2 = centralized_power(b1, b2, gain1, gain2)
            total += float(p1 * p2) * (q1 + q2)
    return total


@dataclass(frozen=True)
class TdmaCurve:
    """Rate-power curve of a user owning a fixed fraction of each slot.

    P(b) = share * (2^(2 b / share) - 1) / gain: transmitting b bits in a
    share-long burst costs the bursted AWGN power averaged over the slot.
    """

    gain: float
    share: float

    def __call__(self, rate) -> float:
        r = float(rate)
        if r < 0:
            raise ValueError(f"negative rate {rate}")
        if r == 0.0:
            return 0.0
        return self.share * pw2(r / self.share) / self.gain

    def derivative(self, rate) -> float:
        r = float(rate)
        return 2.0 * LN2 * 2.0 ** (2.0 * r / self.share) / self.gain


def stdm_curve(gain: Numeric, share: Numeric = Fraction(1, 2)) -> TdmaCurve:
    g = float(as_fraction(gain))
    s = float(as_fraction(share))
    if not 0 < s <= 1:
        raise ValueError(f"slot share {share!r} outside (0, 1]")
    if g <= 0:
        raise ValueError("channel power gain must be positive")
    return TdmaCurve(g, s)


def stdm_average(
    rate_laws: Sequence[DiscreteLaw], gains: Sequence[Numeric]
) -> float:
    """Average sum power of equal-share TDMA at unit delay."""
    share = Fraction(1, len(rate_laws))
    total = 0.0
    for law, g in zip(rate_laws, gains):
        curve = stdm_curve(g, share)
        total += sum(float(p) * curve(b) for b, p in law.support())
    return total


def gtdm_cost(
    rate_laws: Sequence[DiscreteLaw], gains: Sequence[Numeric], tau: float
) -> float:
    """Two-user TDMA average sum power at time split (tau, 1 - tau)."""
    law1, law2 = rate_laws
    g1, g2 = (float(as_fraction(g)) for g in gains)
    c1 = sum(float(p) * tau * pw2(float(b) / tau) for b, p in law1.support())
    c2 = sum(float(p) * (1.0 - tau) * pw2(float(b) / (1.0 - tau)) for b, p in law2.support())
    return c1 / g1 + c2 / g2


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo: float = 1e-9, hi: float = 1.0 - 1e-9, tol: float = 1e-6):
    """Minimize a convex scalar function on (lo, hi) by golden section."""
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    x = 0.5 * (lo + hi)
    return x, f(x)


def gtdm_optimize(
    rate_laws: Sequence[DiscreteLaw],
    gains: Sequence[Numeric],
    tol: float = 1e-6,
    eps: float = 1e-9,
) -> tuple[float, float]:
    """Optimal TDMA time fraction for user 1 and the resulting cost.

    The cost is convex in tau (slot-share perspective of a convex power
    function), so a golden-section search on (eps, 1 - eps) suffices.
    """
    return golden_section(
        lambda tau: gtdm_cost(rate_laws, gains, tau), eps, 1.0 - eps, tol
    )
