"""Alternating optimization of schedulers and power allocations.

For delay budgets beyond one slot the transmitter splits into a bit
scheduler (drives the rate marginal) and an encoder (prices each rate).
Alternating between the optimal unit-delay allocation for the current
marginals and the optimal single-user scheduler for the current curves
descends the average sum power to a fixed point.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import baselines
from .alloc_unit import AllocationReport, allocate_fixed, pw2
from .dist import DiscreteLaw, Numeric, as_fraction
from .mdp import SchedulerPolicy, VIConfig, stationary_rate_law, value_iteration

LN2 = math.log(2.0)


class CurveError(ValueError):
    """Rate outside a curve's domain or unusable allocation input."""


class IterOptError(RuntimeError):
    """Alternating descent failed (objective rose or never settled)."""


@dataclass(frozen=True)
class PowerCurve:
    """Convex, piecewise-linear rate-power law with an exact upper tail.

    Knots are the received powers assigned to a user's rates; queries
    between knots time-share the two neighbours.  Beyond the last knot
    the level recursion keeps running against the partner's top pair,
    giving received power 2^(2(r + tail_rate)) - 1 - tail_received; that
    is what dummy zero-probability rates would produce, so the tail is
    exact rather than sampled.
    """

    knots: tuple[tuple[float, float], ...]  # (rate, received power), ascending
    tail_rate: float
    tail_received: float
    gain: float
    r_max: float

    def _received(self, r: float) -> float:
        if r < -1e-12 or r > self.r_max + 1e-12:
            raise CurveError(f"rate {r} outside [0, {self.r_max}]")
        top = self.knots[-1][0]
        if r >= top:
            return pw2(r + self.tail_rate) - self.tail_received
        xs = [k[0] for k in self.knots]
        i = bisect.bisect_right(xs, r)
        (x0, y0), (x1, y1) = self.knots[i - 1], self.knots[i]
        w = (r - x0) / (x1 - x0)
        return y0 + w * (y1 - y0)

    def __call__(self, rate) -> float:
        return self._received(float(rate)) / self.gain

    def received(self, rate) -> float:
        return self._received(float(rate))

    def derivative(self, rate, gain=None) -> float:
        """Right-derivative of transmit power at the given fading gain."""
        g = self.gain if gain is None else float(gain)
        r = float(rate)
        top = self.knots[-1][0]
        if r >= top:
            slope = 2.0 * LN2 * 2.0 ** (2.0 * (min(r, self.r_max) + self.tail_rate))
        else:
            xs = [k[0] for k in self.knots]
            i = bisect.bisect_right(xs, r)
            (x0, y0), (x1, y1) = self.knots[i - 1], self.knots[i]
            slope = (y1 - y0) / (x1 - x0)
        return slope / g


def rate_power_curve(report: AllocationReport, user: int, r_max: Numeric) -> PowerCurve:
    """Continuous rate-power characteristic of one user's allocation.

    Received power per rate is gain-independent in the level recursion,
    so entries with several fading gains collapse onto one curve; time
    sharing fills the gaps and the recursion extends past the support up
    to r_max.
    """
    rmax = float(as_fraction(r_max))
    points: dict[float, float] = {0.0: 0.0}
    for rate, gain, power in report.user_points(user):
        recv = float(gain) * power
        r = float(rate)
        if r in points and abs(points[r] - recv) > 1e-9 * max(1.0, recv):
            raise CurveError(f"conflicting received powers at rate {rate}")
        points[r] = recv
    top = max(points)
    if rmax < top:
        raise CurveError(f"r_max {r_max} below largest assigned rate {top}")

    other = 1 - user if len(report.laws) == 2 else None
    if other is None:
        raise CurveError("curves need a two-user allocation")
    other_pts = report.user_points(other)
    if other_pts:
        ob, og, op = other_pts[-1]
        tail_rate, tail_recv = float(ob), float(og) * op
    else:
        tail_rate, tail_recv = 0.0, 0.0

    gain = float(report.table.fixed_gains[user]) if report.table.fixed_gains else 1.0
    knots = tuple(sorted(points.items()))
    return PowerCurve(knots, tail_rate, tail_recv, gain, rmax)


@dataclass(frozen=True)
class IterOptRound:
    policies: tuple[SchedulerPolicy, SchedulerPolicy]
    rate_laws: tuple[DiscreteLaw, DiscreteLaw]
    report: AllocationReport
    avg_sum_power: float


@dataclass(frozen=True)
class IterOptTrace:
    rounds: tuple[IterOptRound, ...]
    halt_reason: str

    @property
    def final(self) -> IterOptRound:
        return self.rounds[-1]

    def powers(self) -> list[float]:
        return [r.avg_sum_power for r in self.rounds]

    def to_json(self) -> dict:
        return {
            "halt_reason": self.halt_reason,
            "rounds": [
                {
                    "avg_sum_power": r.avg_sum_power,
                    "rate_laws": [
                        [[str(v), str(p)] for v, p in law.atoms] for law in r.rate_laws
                    ],
                    "schedulers": [p.to_json() for p in r.policies],
                }
                for r in self.rounds
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _curves_from_report(
    report: AllocationReport, r_max: Fraction
) -> tuple[PowerCurve, PowerCurve]:
    return tuple(rate_power_curve(report, u, r_max) for u in range(2))


def iteropt(
    arrival_laws: Sequence[DiscreteLaw],
    gains: Sequence[Numeric],
    dmax: int,
    cfg: VIConfig = VIConfig(),
    halt_tol: float = 1e-6,
    max_rounds: int = 50,
    init: str = "unitdelay",
) -> IterOptTrace:
    """Alternate unit-delay allocation and per-user value iteration.

    Each round prices rates with the allocation built for the previous
    round's stationary marginals, re-solves both schedulers, and
    reallocates.  Halts once the average sum power moves by less than
    halt_tol; any increase beyond tolerance is a hard failure.
    """
    law1, law2 = arrival_laws
    g1, g2 = (as_fraction(g) for g in gains)
    r_max = Fraction(dmax) * max(law1.max_value(), law2.max_value())

    if init == "unitdelay":
        curves = _curves_from_report(allocate_fixed(law1, law2, g1, g2), r_max)
    elif init == "tdma":
        curves = tuple(baselines.stdm_curve(g, Fraction(1, 2)) for g in (g1, g2))
    else:
        raise IterOptError(f"unknown initialization {init!r}")

    rounds: list[IterOptRound] = []
    halt_reason = f"max_rounds {max_rounds} reached"
    prev_power = None
    for _ in range(max_rounds):
        policies = tuple(
            value_iteration(curve, law, dmax, cfg)
            for curve, law in zip(curves, (law1, law2))
        )
        marginals = tuple(
            stationary_rate_law(pol, law) for pol, law in zip(policies, (law1, law2))
        )
        report = allocate_fixed(marginals[0], marginals[1], g1, g2)
        power = report.achieved
        rounds.append(IterOptRound(policies, marginals, report, power))

        if prev_power is not None:
            if power > prev_power + 1e-9 * max(1.0, abs(prev_power)):
                raise IterOptError(
                    f"average sum power rose from {prev_power} to {power}"
                )
            if abs(prev_power - power) < halt_tol:
                halt_reason = "objective invariant"
                break
        prev_power = power
        curves = _curves_from_report(report, r_max)
    return IterOptTrace(tuple(rounds), halt_reason)
