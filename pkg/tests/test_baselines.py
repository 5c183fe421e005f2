from fractions import Fraction

import pytest

from macsched.alloc_unit import allocate_fixed, pw2
from macsched.baselines import (
    centralized_average,
    centralized_power,
    gtdm_optimize,
    stdm_average,
    stdm_curve,
)
from macsched.dist import DiscreteLaw
from conftest import rand_gain_pair, rand_rate_law

F = Fraction
BERN = DiscreteLaw.from_pairs([(1, 0.75), (2, 0.25)])


def test_centralized_corner_examples():
    p1, p2 = centralized_power(1, 1, 1, 1)
    assert (p1, p2) == (12.0, 3.0)
    p1, p2 = centralized_power(2, 0, 4, 1)
    assert p2 == 0.0 and abs(p1 - pw2(2) / 4) < 1e-12
    assert centralized_power(0, 0, 1, 1) == (0.0, 0.0)


def test_centralized_weak_first_user():
    # gain1 < gain2 puts user 1 at its single-user floor instead
    p1, p2 = centralized_power(1, 1, 1, 4)
    assert abs(p1 - 3.0) < 1e-12
    assert abs(1 * p1 + 4 * p2 - 15.0) < 1e-12


def test_centralized_satisfies_all_constraints(rng):
    for _ in range(40):
        b1, b2 = rng.randint(0, 3), rng.randint(0, 3)
        a1, a2 = rand_gain_pair(rng)
        p1, p2 = centralized_power(b1, b2, a1, a2)
        r1, r2 = float(a1) * p1, float(a2) * p2
        assert r1 >= pw2(b1) - 1e-9
        assert r2 >= pw2(b2) - 1e-9
        assert abs(r1 + r2 - pw2(b1 + b2)) < 1e-9 * max(1.0, pw2(b1 + b2))


def test_stdm_curve_values():
    curve = stdm_curve(1, F(1, 2))
    assert curve(0) == 0.0
    assert abs(curve(1) - 7.5) < 1e-12
    full = stdm_curve(2, 1)
    assert abs(full(1) - pw2(1) / 2) < 1e-12
    with pytest.raises(ValueError):
        stdm_curve(1, 0)


def test_gtdm_symmetric_instance():
    tau, cost = gtdm_optimize([BERN, BERN], [1, 1])
    assert abs(tau - 0.5) < 1e-5
    assert abs(cost - stdm_average([BERN, BERN], [1, 1])) < 1e-6


def test_gtdm_degenerate_silent_user():
    silent = DiscreteLaw.singleton(0)
    law = DiscreteLaw.from_pairs([(1, 0.5), (2, 0.5)])
    tau, cost = gtdm_optimize([law, silent], [1, 1])
    assert tau > 0.999
    single = float(law.expect(lambda b: 2 ** (2 * b) - 1))
    assert abs(cost - single) < 1e-3 * single


def test_scheme_ordering_random(rng):
    for _ in range(40):
        law1, law2 = rand_rate_law(rng), rand_rate_law(rng)
        a1, a2 = rand_gain_pair(rng)
        cent = centralized_average(law1, law2, a1, a2)
        dec = allocate_fixed(law1, law2, a1, a2).achieved
        _, gtdm = gtdm_optimize([law1, law2], [a1, a2])
        stdm = stdm_average([law1, law2], [a1, a2])
        assert cent <= dec + 1e-9 * max(1.0, dec)
        assert dec <= gtdm + 1e-9 * max(1.0, gtdm)
        assert gtdm <= stdm + 1e-9 * max(1.0, stdm)
