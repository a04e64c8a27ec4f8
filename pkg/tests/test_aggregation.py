import numpy as np
import pytest
from hypothesis import given, strategies as st

from elicitagg.aggregation import (
    AgentReportSet,
    aggregate_end_to_end,
    hyper_rel_error,
    non_aggregability_demo,
    oracle_global,
    partition,
    pool,
    ppd_discrepancy,
)
from elicitagg.errors import AggregationError
from elicitagg.families import DirichletHyper, FamilySpec, Hyper, batch_update, ppd_moments
from elicitagg.mechanisms import MechKind, Mechanism, elicit, probe_injectivity

NORMAL, POISSON, UNIFORM = FamilySpec.normal(), FamilySpec.poisson(), FamilySpec.uniform()
CAT3 = FamilySpec.categorical(3)


def test_pool_examples():
    assert pool(DirichletHyper((1, 1, 1)), [DirichletHyper((8, 8, 4)), DirichletHyper((3, 1, 1))], CAT3) \
        == DirichletHyper((10, 8, 4))
    assert pool(Hyper(2, 3), [Hyper(5, 5), Hyper(9, 4)], UNIFORM) == Hyper(9, 6)
    g = pool(Hyper(0, 1), [Hyper(4, 3), Hyper(-1, 2)], NORMAL)
    assert g == Hyper(3, 4)
    assert ppd_moments(NORMAL, g, 1)[0] == pytest.approx(3 / 4)


def test_single_agent_is_identity():
    assert pool(Hyper(1, 1), [Hyper(7, 4)], POISSON) == Hyper(7, 4)


def test_zero_agents_gives_prior():
    assert pool(Hyper(1, 1), [], POISSON) == Hyper(1, 1)
    m = Mechanism(MechKind.TWO_SAMPLE, CAT3, DirichletHyper((1, 2, 3)))
    assert aggregate_end_to_end(m, []).hyper == DirichletHyper((1, 2, 3))


def test_prior_discount():
    prior = DirichletHyper((1, 1, 1))
    agents = [DirichletHyper((4, 1, 2))]
    assert pool(prior, agents + [prior], CAT3) == pool(prior, agents, CAT3)


def test_oracle_examples():
    assert oracle_global(DirichletHyper((1, 1, 1)), [1, 1, 2], CAT3) == DirichletHyper((3, 2, 1))
    assert oracle_global(Hyper(1, 1), [2, 0, 4], POISSON) == Hyper(7, 4)
    assert oracle_global(Hyper(2, 3), [1, 9, 4], UNIFORM) == Hyper(9, 6)


def test_coin_example():
    m = Mechanism(MechKind.TWO_SAMPLE, FamilySpec.bernoulli(), DirichletHyper((1, 1)))
    bob, carol = DirichletHyper((10, 10)), DirichletHyper((20, 2))
    g = aggregate_end_to_end(m, [elicit(m, bob), elicit(m, carol)])
    assert g.hyper == DirichletHyper((29, 11))
    flips = [1] * 9 + [2] * 9 + [1] * 19 + [2] * 1
    assert oracle_global(DirichletHyper((1, 1)), flips, m.spec) == g.hyper


def test_reachability_checks():
    with pytest.raises(AggregationError):
        pool(Hyper(1, 2), [Hyper(1, 1.5)], POISSON)
    with pytest.raises(AggregationError):
        pool(Hyper(1, 1), [Hyper(2.5, 2)], POISSON)  # half a count
    with pytest.raises(AggregationError):
        pool(Hyper(0, 1), [Hyper(1, 1.5)], NORMAL)
    with pytest.raises(AggregationError):
        pool(Hyper(2, 3), [Hyper(1, 4)], UNIFORM)
    # without the integer-sample assumption fractional increments pass through
    assert pool(Hyper(0, 1), [Hyper(1, 1.5)], NORMAL, integer_samples=False) == Hyper(1, 1.5)


def test_pool_snaps_float_residue():
    h = DirichletHyper((8.000000000001, 7.999999999999, 4.0))
    assert pool(DirichletHyper((1, 1, 1)), [h], CAT3) == DirichletHyper((8, 8, 4))


@given(st.lists(st.integers(1, 3), max_size=30), st.integers(0, 5), st.randoms())
def test_agent_order_and_partition_invariance(xs, m, rnd):
    prior = DirichletHyper((1, 1, 1))
    rng = np.random.default_rng(rnd.getrandbits(32))
    parts = partition(xs, m, rng) if m else []
    decoded = [batch_update(CAT3, prior, p) for p in parts]
    shuffled = list(decoded)
    rnd.shuffle(shuffled)
    got = pool(prior, decoded, CAT3)
    assert got == pool(prior, shuffled, CAT3)
    if m:
        assert got == oracle_global(prior, xs, CAT3)


def test_ebird_three_agents():
    rng = np.random.default_rng(5)
    prior = Hyper(1, 1)
    m = Mechanism(MechKind.SINGLE_MOMENTS, POISSON, prior)
    lam = rng.gamma(1, 1)
    obs = rng.poisson(lam, 24).tolist()
    parts = partition(obs, 3, rng)
    reports = [elicit(m, batch_update(POISSON, prior, p)) for p in parts]
    g = aggregate_end_to_end(m, reports).hyper
    assert hyper_rel_error(g, oracle_global(prior, obs, POISSON)) <= 1e-12


def test_hyper_rel_error_and_discrepancy():
    assert hyper_rel_error(Hyper(2, 3), Hyper(2, 3)) == 0.0
    assert hyper_rel_error(Hyper(0.5, 3), Hyper(0.25, 3)) == pytest.approx(0.25)
    assert hyper_rel_error(Hyper(200, 3), Hyper(100, 3)) == pytest.approx(0.5)
    assert ppd_discrepancy(POISSON, Hyper(2, 1), Hyper(2, 1)) == 0.0
    assert ppd_discrepancy(CAT3, DirichletHyper((1, 1, 2)), DirichletHyper((1, 1, 1))) == pytest.approx(
        0.5 * (1 / 12 + 1 / 12 + 1 / 6))
    assert ppd_discrepancy(NORMAL, Hyper(0, 1), Hyper(1, 1)) > 0.1


def test_report_set_pools():
    s = AgentReportSet(Hyper(1, 1), (Hyper(3, 2), Hyper(4, 3)))
    assert s.pooled(POISSON) == Hyper(6, 4)


def test_non_aggregability_demo():
    prior = DirichletHyper((1, 1))
    spec = FamilySpec.bernoulli()
    w = probe_injectivity(spec, prior).witness
    demo = non_aggregability_demo(spec, prior, w)
    assert demo.report_gap <= 1e-12
    assert demo.global_a != demo.global_b
    assert demo.global_tv > 1e-3
