from fractions import Fraction

import pytest

from macsched.alloc_unit import allocate_fixed, pw2, verify_outage_free
from macsched.dist import DiscreteLaw
from macsched.iteropt import CurveError, IterOptError, iteropt, rate_power_curve
from macsched.mdp import VIConfig, policy_from_matrix, stationary_rate_law, value_iteration

F = Fraction
UNIFORM123 = DiscreteLaw.from_pairs([(1, "1/3"), (2, "1/3"), (3, "1/3")])
FIG_START = [[1, 2, 2], [2, 2, 2], [2, 2, 2], [3, 3, 3]]
FIG_FINAL_S1 = [[1, 2, 2], [2, 2, 2], [2, 2, 3], [3, 3, 3]]


def reference_curve_report():
    start = policy_from_matrix(FIG_START, [1, 2, 3])
    marginal = stationary_rate_law(start, UNIFORM123)
    return allocate_fixed(marginal, marginal, 10, 1)


class TestRatePowerCurve:
    def test_reference_curve_values(self):
        curve = rate_power_curve(reference_curve_report(), 0, 4)
        targets = {1: 19.2, 2: 96.0, 3: 403.0, 4: 1632.0}
        for rate, want in targets.items():
            assert abs(curve(rate) - want) <= 0.01 * want

    def test_midpoint_time_sharing(self):
        curve = rate_power_curve(reference_curve_report(), 0, 4)
        want = (19.2 + 96.0) / 2
        assert abs(curve(1.5) - want) <= 0.01 * want

    def test_singleton_exact_at_assigned_rate(self):
        one = DiscreteLaw.singleton(1)
        rep = allocate_fixed(one, one, 1, 1)
        curve = rate_power_curve(rep, 0, 2)
        assert curve(1) == pytest.approx(rep.user_points(0)[0][2], abs=1e-12)
        assert curve(0) == 0.0

    def test_r_max_below_support_rejected(self):
        with pytest.raises(CurveError):
            rate_power_curve(reference_curve_report(), 0, 2)

    def test_curve_is_convex_including_tail(self):
        curve = rate_power_curve(reference_curve_report(), 0, 6)
        xs = [k / 4 for k in range(25)]
        ys = [curve(x) for x in xs]
        slopes = [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:]))]
        for s0, s1 in zip(slopes, slopes[1:]):
            assert s1 >= s0 - 1e-9
        assert curve.derivative(0.5, None) == pytest.approx(19.2)


class TestIterOpt:
    def test_dmax1_degenerates_to_unit_delay(self):
        trace = iteropt([UNIFORM123, UNIFORM123], [10, 1], dmax=1)
        direct = allocate_fixed(UNIFORM123, UNIFORM123, 10, 1)
        assert trace.final.avg_sum_power == pytest.approx(direct.achieved, rel=1e-12)
        assert trace.final.rate_laws[0].atoms == UNIFORM123.atoms

    def test_monotone_descent_and_fixed_point(self):
        trace = iteropt([UNIFORM123, UNIFORM123], [10, 1], dmax=2, init="tdma")
        powers = trace.powers()
        for p0, p1 in zip(powers, powers[1:]):
            assert p1 <= p0 + 1e-9 * max(1.0, p0)
        assert trace.halt_reason == "objective invariant"
        # one more full round must leave schedulers and objective alone
        final = trace.final
        r_max = F(6)
        for u in range(2):
            curve = rate_power_curve(final.report, u, r_max)
            again = value_iteration(curve, UNIFORM123, dmax=2, cfg=VIConfig())
            assert again.actions == final.policies[u].actions
        assert verify_outage_free(final.report.table, final.report.laws).ok

    def test_reference_instance_converges_to_reference_cost(self):
        trace = iteropt([UNIFORM123, UNIFORM123], [10, 1], dmax=2, init="tdma")
        assert len(trace.rounds) <= 5
        assert trace.final.avg_sum_power == pytest.approx(140.6, abs=1e-9)
        assert trace.final.rate_laws[0].atoms == (
            (F(1), F(1, 9)), (F(2), F(7, 9)), (F(3), F(1, 9)),
        )
        # the weak user's final scheduler matches the reference exactly
        assert trace.final.policies[1].as_matrix() == [[F(v) for v in r] for r in FIG_START]

    def test_symmetric_users_are_label_invariant(self):
        # per-user powers split along the deterministic dominant-face
        # corner, so symmetry shows up as identical schedulers and
        # marginals and a label-swap-invariant objective, not as equal
        # per-user power values
        law = DiscreteLaw.from_pairs([(1, "1/2"), (2, "1/2")])
        trace = iteropt([law, law], [1, 1], dmax=2)
        final = trace.final
        assert final.policies[0].actions == final.policies[1].actions
        assert final.rate_laws[0].atoms == final.rate_laws[1].atoms
        for row in final.report.trace:
            if sum(row.rates) > 0:
                assert row.received_sum == pytest.approx(pw2(sum(row.rates)))
        rerun = iteropt([law, law], [1, 1], dmax=2)
        assert rerun.final.avg_sum_power == final.avg_sum_power

    def test_unitdelay_init_matches_tdma_init_result(self):
        a = iteropt([UNIFORM123, UNIFORM123], [10, 1], dmax=2, init="unitdelay")
        b = iteropt([UNIFORM123, UNIFORM123], [10, 1], dmax=2, init="tdma")
        assert a.final.avg_sum_power == pytest.approx(b.final.avg_sum_power, rel=1e-9)

    def test_unknown_init_rejected(self):
        with pytest.raises(IterOptError):
            iteropt([UNIFORM123, UNIFORM123], [10, 1], dmax=2, init="nonsense")
