"""Finite discrete probability laws on nonnegative rationals.

Rates (bits per symbol) and fading power gains are modelled as exact
rationals so that cumulative levels, quantile grids and stationary
distributions come out exact.  Real-valued inputs are snapped to rationals
within SNAP_TOL; anything further from a rational is rejected.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

SNAP_TOL = 1e-12

Numeric = int | float | str | Fraction


class DistributionError(ValueError):
    """Raised for malformed laws or out-of-range quantile arguments."""


def as_fraction(x: Numeric) -> Fraction:
    """Convert a number to an exact Fraction.

    Ints, Fractions and strings like "3/16" convert exactly.  Floats are
    snapped to the nearest small-denominator rational; the snap must stay
    within SNAP_TOL of the input.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        if x != x or x in (float("inf"), float("-inf")):
            raise DistributionError(f"non-finite value {x!r}")
        snapped = Fraction(x).limit_denominator(10**12)
        if abs(float(snapped) - x) > SNAP_TOL:
            raise DistributionError(f"cannot snap {x!r} to a rational within {SNAP_TOL}")
        return snapped
    raise DistributionError(f"unsupported numeric type {type(x).__name__}")


@dataclass(frozen=True)
class DiscreteLaw:
    """Finite law on strictly increasing nonnegative rational values.

    Zero-probability atoms are allowed: they occupy an ordering position
    (used to extrapolate power curves past the true support) but carry no
    mass.  ``cumulative[k]`` is the CDF evaluated at ``values[k]``.
    """

    atoms: tuple[tuple[Fraction, Fraction], ...]
    cumulative: tuple[Fraction, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.atoms:
            raise DistributionError("law needs at least one atom")
        total = Fraction(0)
        prev = None
        cum = []
        for value, prob in self.atoms:
            if not isinstance(value, Fraction) or not isinstance(prob, Fraction):
                raise DistributionError("atoms must hold exact Fractions; use from_pairs")
            if value < 0:
                raise DistributionError(f"negative value {value}")
            if prob < 0:
                raise DistributionError(f"negative probability {prob}")
            if prev is not None and value <= prev:
                raise DistributionError("values must be strictly increasing")
            prev = value
            total += prob
            cum.append(total)
        if abs(total - 1) > SNAP_TOL:
            raise DistributionError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "cumulative", tuple(cum))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[Numeric]]) -> "DiscreteLaw":
        atoms = tuple(sorted((as_fraction(v), as_fraction(p)) for v, p in pairs))
        return cls(atoms)

    @classmethod
    def singleton(cls, value: Numeric) -> "DiscreteLaw":
        return cls(((as_fraction(value), Fraction(1)),))

    @property
    def values(self) -> tuple[Fraction, ...]:
        return tuple(v for v, _ in self.atoms)

    @property
    def probs(self) -> tuple[Fraction, ...]:
        return tuple(p for _, p in self.atoms)

    def support(self) -> tuple[tuple[Fraction, Fraction], ...]:
        """Atoms with positive probability."""
        return tuple((v, p) for v, p in self.atoms if p > 0)

    def cdf(self, b: Numeric) -> Fraction:
        """Right-continuous CDF: total mass of values <= b."""
        x = as_fraction(b)
        total = Fraction(0)
        for value, prob in self.atoms:
            if value > x:
                break
            total += prob
        return total

    def inverse_cdf(self, x: Numeric) -> Fraction:
        """Quantile at x.

        Returns the value whose cumulative-mass interval (c_{k-1}, c_k]
        contains x; at x == 0 returns the smallest positive-probability
        value.  Zero-probability atoms have empty intervals and are never
        returned.
        """
        q = as_fraction(x)
        if q < 0 or q > 1:
            raise DistributionError(f"quantile {x!r} outside [0, 1]")
        if q == 0:
            for value, prob in self.atoms:
                if prob > 0:
                    return value
            raise DistributionError("law has no positive-probability atom")
        k = bisect.bisect_left(self.cumulative, q)
        if k >= len(self.atoms):  # cumulative may top out slightly below 1
            k = len(self.atoms) - 1
        return self.atoms[k][0]

    def expect(self, f: Callable[[Fraction], object] | None = None):
        """Expectation of f over the law (f defaults to the identity)."""
        if f is None:
            return sum(p * v for v, p in self.atoms)
        total = None
        for value, prob in self.atoms:
            term = prob * f(value) if prob else 0
            total = term if total is None else total + term
        return total

    def mean(self) -> Fraction:
        return self.expect()

    def max_value(self) -> Fraction:
        return self.atoms[-1][0]


# Module-level aliases matching the operation names used elsewhere.
def cdf(law: DiscreteLaw, b: Numeric) -> Fraction:
    return law.cdf(b)


def inverse_cdf(law: DiscreteLaw, x: Numeric) -> Fraction:
    return law.inverse_cdf(x)


def expected_value(law: DiscreteLaw, f: Callable[[Fraction], object]):
    return law.expect(f)


@dataclass(frozen=True)
class RateFadingLaw:
    """Independent pair of a rate law and a fading power-gain law.

    Fading values are power gains (h^2, linear scale) and must be
    strictly positive.  Fixed fading is a singleton gain law.
    """

    rate_law: DiscreteLaw
    fading_law: DiscreteLaw

    def __post_init__(self) -> None:
        if any(v <= 0 for v in self.fading_law.values):
            raise DistributionError("fading power gains must be positive")

    @classmethod
    def fixed(cls, rate_law: DiscreteLaw, gain: Numeric) -> "RateFadingLaw":
        return cls(rate_law, DiscreteLaw.singleton(gain))

    def pairs(self) -> tuple[tuple[Fraction, Fraction, Fraction], ...]:
        """Lexicographic (rate-major) enumeration of (rate, gain, prob)."""
        out = []
        for b, pb in self.rate_law.atoms:
            for h, ph in self.fading_law.atoms:
                out.append((b, h, pb * ph))
        return tuple(out)

    def support_pairs(self) -> tuple[tuple[Fraction, Fraction, Fraction], ...]:
        return tuple(t for t in self.pairs() if t[2] > 0)


@dataclass(frozen=True)
class QueueState:
    """Backlog vector of a transmitter queue.

    entries[d] (0-indexed) is the rate mass that must leave within d+1
    more slots; the last entry is the packet that arrived this slot.
    """

    entries: tuple

    def __post_init__(self) -> None:
        if not self.entries:
            raise DistributionError("queue state needs at least one entry")
        if any(e < 0 for e in self.entries):
            raise DistributionError(f"negative backlog in {self.entries}")

    @property
    def dmax(self) -> int:
        return len(self.entries)

    @property
    def due_now(self):
        return self.entries[0]

    def backlog(self):
        return sum(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]
