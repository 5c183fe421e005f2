"""Shared generators and checks for randomized instance tests."""

import random
from fractions import Fraction

import pytest

from macsched.dist import DiscreteLaw, RateFadingLaw

GAIN_POOL = [Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3), Fraction(4)]


def rand_probs(rng: random.Random, n: int) -> list[Fraction]:
    weights = [rng.randint(1, 9) for _ in range(n)]
    total = sum(weights)
    return [Fraction(w, total) for w in weights]


def rand_rate_law(rng: random.Random, max_atoms: int = 6, allow_zero: bool = False) -> DiscreteLaw:
    n = rng.randint(1, max_atoms)
    pool = [Fraction(k, 4) for k in range(0 if allow_zero else 1, 13)]
    values = sorted(rng.sample(pool, n))
    return DiscreteLaw(tuple(zip(values, rand_probs(rng, n))))


def rand_fading_law(rng: random.Random, max_atoms: int = 4) -> DiscreteLaw:
    n = rng.randint(1, max_atoms)
    values = sorted(rng.sample(GAIN_POOL, n))
    return DiscreteLaw(tuple(zip(values, rand_probs(rng, n))))


def rand_rate_fading_law(rng: random.Random) -> RateFadingLaw:
    return RateFadingLaw(rand_rate_law(rng), rand_fading_law(rng))


def rand_gain_pair(rng: random.Random) -> tuple[Fraction, Fraction]:
    a, b = rng.sample(GAIN_POOL, 2)
    return (max(a, b), min(a, b))


def assert_convex_nondecreasing(points, tol: float = 1e-9, label: str = ""):
    """points: sorted (rate, power) pairs for one user and fading gain."""
    pts = sorted((float(r), p) for r, p in points)
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        assert y1 >= y0 - tol * max(1.0, abs(y0)), f"{label}: power drops at {x1}"
    slopes = [
        (y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(pts, pts[1:]) if x1 > x0
    ]
    for s0, s1 in zip(slopes, slopes[1:]):
        assert s1 >= s0 - 1e-9 * max(1.0, abs(s0)), f"{label}: slope drops ({s0} -> {s1})"


def table_points_by_gain(report, user: int):
    """Group a user's (rate, power) table entries by fading gain."""
    groups: dict = {}
    for rate, gain, power in report.user_points(user):
        groups.setdefault(gain, []).append((rate, power))
    return groups


@pytest.fixture
def rng():
    return random.Random(20260809)
