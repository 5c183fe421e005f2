import numpy as np
import pytest

from macsched.alloc_continuous import (
    ContinuousAllocError,
    ContinuousLawSpec,
    allocate_continuous,
    staircase_cdf,
)
from macsched.alloc_unit import allocate_fixed
from macsched.dist import DiscreteLaw


def bernoulli_spec(n_grid=4096, width=1e-3):
    cdf = staircase_cdf([(1, 0.75), (2, 0.25)], width)
    return ContinuousLawSpec(cdf, b_min=1 - width, b_max=2 + width, n_grid=n_grid)


def test_staircase_matches_discrete_optimum():
    spec = bernoulli_spec()
    alloc = allocate_continuous(spec, spec, alpha=1.0)
    assert abs(alloc.avg_sum_power - 75.0) <= 0.005 * 75.0
    assert alloc.sum_equality_residual() < 1e-6


def test_point_mass_matches_fixed_allocation():
    w = 1e-12
    s1 = ContinuousLawSpec(staircase_cdf([(2.0, 1.0)], w), 2 - w, 2 + w, 128)
    s2 = ContinuousLawSpec(staircase_cdf([(1.0, 1.0)], w), 1 - w, 1 + w, 128)
    alloc = allocate_continuous(s1, s2, alpha=0.5)
    rep = allocate_fixed(DiscreteLaw.singleton(2), DiscreteLaw.singleton(1), 1, "1/2")
    assert abs(alloc.power1[-1] - rep.user_points(0)[0][2]) < 1e-6
    assert abs(alloc.power2[-1] - rep.user_points(1)[0][2]) < 1e-6


def test_symmetric_uniform_laws():
    spec = ContinuousLawSpec(lambda b: min(1.0, max(0.0, b)), 0.0, 1.0, n_grid=256)
    alloc = allocate_continuous(spec, spec, alpha=1.0)
    assert np.abs(alloc.power1 - alloc.power2).max() < 1e-9


def test_single_user_floors_and_monotonicity():
    spec = bernoulli_spec(n_grid=512)
    alloc = allocate_continuous(spec, spec, alpha=0.5)
    assert np.all(alloc.power1 >= 2.0 ** (2 * alloc.rate1) - 1 - 1e-9)
    assert np.all(0.5 * alloc.power2 >= 2.0 ** (2 * alloc.rate2) - 1 - 1e-9)
    assert np.all(np.diff(alloc.power1) >= -1e-9)
    assert np.all(np.diff(alloc.power2) >= -1e-9)


def test_curves_convex_in_rate():
    spec = ContinuousLawSpec(lambda b: min(1.0, max(0.0, b / 2)), 0.0, 2.0, n_grid=512)
    alloc = allocate_continuous(spec, spec, alpha=1.0)
    r, p = alloc.rate1, alloc.power1
    keep = np.concatenate(([True], np.diff(r) > 1e-12))
    r, p = r[keep], p[keep]
    slopes = np.diff(p) / np.diff(r)
    assert np.all(np.diff(slopes) >= -1e-6 * np.maximum(1.0, np.abs(slopes[1:])))


def test_quadrature_refinement_is_stable():
    def spec(n):
        return ContinuousLawSpec(lambda b: min(1.0, max(0.0, b - 1)), 1.0, 2.0, n_grid=n)

    coarse = allocate_continuous(spec(256), spec(256), alpha=0.8).avg_sum_power
    fine = allocate_continuous(spec(512), spec(512), alpha=0.8).avg_sum_power
    assert abs(fine - coarse) <= 0.001 * coarse


def test_bad_specs_rejected():
    with pytest.raises(ContinuousAllocError):
        ContinuousLawSpec(lambda b: 0.5, 0.0, 1.0, 128)  # never reaches 1
    with pytest.raises(ContinuousAllocError):
        ContinuousLawSpec(lambda b: b, 0.0, 1.0, 16)  # grid too coarse
    spec = ContinuousLawSpec(lambda b: min(1.0, max(0.0, b)), 0.0, 1.0, 128)
    with pytest.raises(ContinuousAllocError):
        allocate_continuous(spec, spec, alpha=1.5)


def test_non_monotone_cdf_rejected():
    wiggle = ContinuousLawSpec(
        lambda b: min(1.0, max(0.0, b + 0.3 * np.sin(8 * b))), 0.0, 1.0, 128
    )
    flat = ContinuousLawSpec(lambda b: min(1.0, max(0.0, b)), 0.0, 1.0, 128)
    with pytest.raises(ContinuousAllocError):
        allocate_continuous(wiggle, flat, alpha=1.0)
