from fractions import Fraction

import pytest

from macsched import sim
from macsched.alloc_unit import (
    PowerTable,
    allocate_dynamic,
    allocate_fixed,
    build_pseudo_cdf,
)
from macsched.dist import DiscreteLaw, RateFadingLaw
from macsched.iteropt import rate_power_curve
from macsched.mdp import policy_from_matrix

F = Fraction
BERN = DiscreteLaw.from_pairs([(1, "3/4"), (2, "1/4")])


def bernoulli_config(slots=20_000, seed=7, **kw):
    rep = allocate_fixed(BERN, BERN, 1, 1)
    users = [sim.SimUser(BERN, sim.TablePower(rep.table, u)) for u in range(2)]
    return sim.SimConfig(users, dmax=1, slots=slots, seed=seed, **kw), rep


def test_reproducible_bitwise():
    cfg, _ = bernoulli_config(slots=3000)
    a, b = sim.run(cfg), sim.run(cfg)
    assert a.dumps() == b.dumps()
    assert a.rep_means == b.rep_means


def test_seed_changes_stream():
    cfg1, _ = bernoulli_config(slots=3000, seed=1)
    cfg2, _ = bernoulli_config(slots=3000, seed=2)
    assert sim.run(cfg1).avg_sum_power != sim.run(cfg2).avg_sum_power


def test_bernoulli_matches_analytic_value():
    cfg, rep = bernoulli_config(slots=100_000)
    out = sim.run(cfg)
    assert out.outage_count == 0
    assert out.delay_violation_count == 0
    assert abs(out.avg_sum_power - rep.achieved) <= 3 * out.std_err
    assert abs(out.avg_sum_power - 75.0) <= 0.01 * 75.0


def test_zero_arrivals_zero_power():
    zero = DiscreteLaw.singleton(0)
    rep = allocate_fixed(zero, zero, 1, 1)
    users = [sim.SimUser(zero, sim.TablePower(rep.table, u)) for u in range(2)]
    out = sim.run(sim.SimConfig(users, dmax=1, slots=500, seed=0))
    assert out.avg_sum_power == 0.0
    assert out.outage_count == 0


def test_replication_means_and_stderr():
    cfg, _ = bernoulli_config(slots=2000, reps=4)
    out = sim.run(cfg)
    assert len(out.rep_means) == 4
    assert out.std_err > 0


def test_corrupted_table_detected_as_outage():
    one = DiscreteLaw.singleton(1)
    rep = allocate_fixed(one, one, 1, 1)
    entries = [dict(e) for e in rep.table.entries]
    for key in entries[0]:
        entries[0][key] *= 0.5
    users = [
        sim.SimUser(one, sim.TablePower(PowerTable(tuple(entries)), u)) for u in range(2)
    ]
    out = sim.run(sim.SimConfig(users, dmax=1, slots=100, seed=0))
    assert out.outage_count == 100


def test_missing_power_entry_is_hard_failure():
    rep = allocate_fixed(BERN, BERN, 1, 1)
    entries = [dict(e) for e in rep.table.entries]
    del entries[0][(F(2), F(1))]
    users = [
        sim.SimUser(BERN, sim.TablePower(PowerTable(tuple(entries)), u)) for u in range(2)
    ]
    with pytest.raises(sim.SimError):
        sim.run(sim.SimConfig(users, dmax=1, slots=2000, seed=0))


def test_via_policy_runs_delay_free():
    uni = DiscreteLaw.from_pairs([(1, "1/3"), (2, "1/3"), (3, "1/3")])
    pol = policy_from_matrix([[1, 2, 2], [2, 2, 2], [2, 2, 2], [3, 3, 3]], [1, 2, 3])
    rep = allocate_fixed(uni, uni, 10, 1)
    users = [
        sim.SimUser(uni, sim.CurvePower(rate_power_curve(rep, u, 6)), pol) for u in range(2)
    ]
    out = sim.run(sim.SimConfig(users, dmax=2, slots=5000, seed=3))
    assert out.delay_violation_count == 0
    assert out.outage_count == 0


def test_trace_rows():
    cfg, _ = bernoulli_config(slots=5, collect_trace=True)
    out = sim.run(cfg)
    csv_text = out.trace_csv()
    lines = csv_text.strip().splitlines()
    assert lines[0] == "slot,user,arrival,fading,rate,power,outage_flag"
    assert len(lines) == 1 + 5 * 2


def dyn_setup():
    arr = DiscreteLaw.from_pairs([(k, "1/5") for k in range(5)])
    h1 = DiscreteLaw.from_pairs([(3, "1/2"), (4, "1/2")])
    h2 = DiscreteLaw.from_pairs([(1, "1/2"), (2, "1/2")])
    rep = allocate_dynamic(
        build_pseudo_cdf(RateFadingLaw(arr, h1), RateFadingLaw(arr, h2))
    )
    return arr, (h1, h2), rep


class TestDDFading:
    def test_avg_power_nonincreasing_in_delay_budget(self):
        arr, fadings, rep = dyn_setup()
        results = []
        for dmax in (1, 2, 3):
            users = [
                sim.SimUser(
                    arr,
                    sim.ReceivedCurvePower(rate_power_curve(rep, u, 4 * dmax)),
                    "dd",
                    fadings[u],
                )
                for u in range(2)
            ]
            out = sim.run_dd_fading(
                sim.SimConfig(users, dmax=dmax, slots=15_000, seed=11)
            )
            assert out.outage_count == 0
            assert out.delay_violation_count == 0
            results.append(out.avg_sum_power)
        assert results[0] >= results[1] >= results[2]

    def test_dmax1_dd_equals_identity(self):
        arr, fadings, rep = dyn_setup()
        users_dd = [
            sim.SimUser(arr, sim.ReceivedCurvePower(rate_power_curve(rep, u, 4)), "dd", fadings[u])
            for u in range(2)
        ]
        users_id = [
            sim.SimUser(arr, sim.TablePower(rep.table, u), "identity", fadings[u])
            for u in range(2)
        ]
        a = sim.run_dd_fading(sim.SimConfig(users_dd, dmax=1, slots=4000, seed=5))
        b = sim.run(sim.SimConfig(users_id, dmax=1, slots=4000, seed=5))
        assert a.rate_histograms == b.rate_histograms
        assert a.avg_sum_power == pytest.approx(b.avg_sum_power, rel=1e-12)

    def test_beta_one_freezes_derivative_estimate(self):
        arr, fadings, rep = dyn_setup()

        class SpyCurve(sim.ReceivedCurvePower):
            pass

        users = [
            sim.SimUser(
                arr,
                SpyCurve(rate_power_curve(rep, u, 8)),
                "dd",
                fadings[u],
                dd_beta=1.0,
                dd_init=3.0,
            )
            for u in range(2)
        ]
        out = sim.run_dd_fading(sim.SimConfig(users, dmax=2, slots=200, seed=2))
        assert out.delay_violation_count == 0

    def test_non_dd_user_rejected(self):
        arr, fadings, rep = dyn_setup()
        users = [
            sim.SimUser(arr, sim.TablePower(rep.table, u), "identity", fadings[u])
            for u in range(2)
        ]
        with pytest.raises(sim.SimError):
            sim.run_dd_fading(sim.SimConfig(users, dmax=1, slots=10, seed=0))


def test_bad_config_rejected():
    with pytest.raises(sim.SimError):
        sim.SimConfig([], dmax=1, slots=0, seed=0)
    cfg, _ = bernoulli_config()
    with pytest.raises(sim.SimError):
        sim.SimConfig(cfg.users, dmax=0, slots=10)
