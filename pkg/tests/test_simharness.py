import json
import math

import numpy as np
import pytest

from elicitagg.errors import ConfigError
from elicitagg.families import DirichletHyper, FamilySpec, Hyper
from elicitagg.mechanisms import MechKind
from elicitagg.scoring import LOG
from elicitagg.simharness import (
    ScenarioConfig,
    draw_trial,
    margin_table,
    parse_config,
    propriety_sweep,
    record_lines,
    run_scenario,
    summarize,
)

DIRICHLET_INI = """
[family]
name = CategoricalDirichlet
K = 3

[prior]
alpha = 1, 1, 1

[scenario]
mechanism = TwoSampleDirichlet
agents = 2
samples = 20, 22
trials = 100
seed = 42
"""


def _cfg(**kw):
    base = dict(spec=FamilySpec.poisson(), prior=Hyper(2.0, 1.0), mechanism=MechKind.SINGLE_MOMENTS,
                agents=3, trials=20, seed=9)
    base.update(kw)
    return ScenarioConfig(**base)


def test_parse_dirichlet_config():
    cfg = parse_config(DIRICHLET_INI)
    assert cfg.spec == FamilySpec.categorical(3)
    assert cfg.prior == DirichletHyper((1, 1, 1))
    assert cfg.sample_counts == (20, 22) and cfg.sample_range is None
    assert cfg.trials == 100 and cfg.seed == 42


def test_dirichlet_scenario_all_pass():
    cfg = parse_config(DIRICHLET_INI)
    res = run_scenario(cfg)
    assert len(res) == 100
    assert all(r.passed and r.max_rel_error <= 1e-10 for r in res)
    assert all(sum(len(a.samples) for a in r.agents) == 42 for r in res)
    assert all(len(r.principal_samples) == 2 for r in res)


@pytest.mark.parametrize("text,fragment", [
    (DIRICHLET_INI.replace("TwoSampleDirichlet", "SingleSampleMoments"), "scaling the Dirichlet"),
    (DIRICHLET_INI.replace("samples = 20, 22", "samples = 20"), "sample counts"),
    (DIRICHLET_INI.replace("trials = 100", "trials = 0"), "trial"),
    (DIRICHLET_INI.replace("alpha = 1, 1, 1", "alpha = 1, 1"), "prior"),
    (DIRICHLET_INI.replace("[prior]", "[priors]"), "bad config"),
    ("not an ini file", "bad config"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_two_sample_needs_categorical():
    with pytest.raises(ConfigError):
        _cfg(mechanism=MechKind.TWO_SAMPLE)


def test_zero_agents_pool_to_prior():
    cfg = _cfg(agents=0, trials=5)
    for r in run_scenario(cfg):
        assert r.pooled == cfg.prior and r.passed


def test_deterministic_records():
    cfg = _cfg(trials=15, sample_range=(0, 12))
    assert record_lines(cfg, run_scenario(cfg)) == record_lines(cfg, run_scenario(cfg))
    other = cfg.with_overrides(seed=10)
    assert record_lines(cfg, run_scenario(cfg)) != record_lines(other, run_scenario(other))


def test_agent_streams_are_independent():
    # adding a fourth agent leaves theta and the first three agents' samples alone
    a = _cfg(agents=3, trials=3)
    b = _cfg(agents=4, trials=3)
    for t in range(3):
        ta, sa, pa = draw_trial(a, t)
        tb, sb, pb = draw_trial(b, t)
        assert ta == tb and pa == pb and sa == sb[:3]


def test_header_and_summary_records():
    cfg = _cfg(trials=4)
    lines = record_lines(cfg, run_scenario(cfg))
    head, *trials, tail = [json.loads(s) for s in lines]
    assert head["type"] == "header" and head["config"]["seed"] == 9
    assert head["config"]["family"] == "PoissonGamma" and head["config"]["prior"] == {"nu": [2.0], "n": 1.0}
    assert len(trials) == 4 and all(t["type"] == "trial" for t in trials)
    assert tail["type"] == "summary" and tail["pass_rate"] == 1.0


@pytest.mark.parametrize("cfg", [
    _cfg(),
    _cfg(spec=FamilySpec.normal(0.5), prior=Hyper(1.0, 1.0)),
    _cfg(spec=FamilySpec.uniform(), prior=Hyper(1.0, 3.0)),
    _cfg(spec=FamilySpec.uniform(), prior=Hyper(1.0, 3.0), mechanism=MechKind.SINGLE_PPD),
    _cfg(spec=FamilySpec.bernoulli(), prior=DirichletHyper((1, 1)), mechanism=MechKind.TWO_SAMPLE),
    _cfg(spec=FamilySpec.categorical(5), prior=DirichletHyper((1, 2, 1, 1, 0.5)),
         mechanism=MechKind.TWO_SAMPLE),
], ids=["poisson", "normal", "uniform", "uniform-ppd", "bernoulli", "cat5"])
def test_every_pair_passes_with_positive_margins(cfg):
    res = run_scenario(cfg)
    s = summarize(cfg, res)
    assert s["pass_rate"] == 1.0
    assert s["min_margin"] is None or s["min_margin"] > 0
    assert all(r.ppd_gap >= 0 and r.max_rel_error >= 0 for r in res)


@pytest.mark.parametrize("cfg", [
    _cfg(spec=FamilySpec.bernoulli(), prior=DirichletHyper((2, 3)), mechanism=MechKind.TWO_SAMPLE,
         agents=1, sample_counts=(5,), trials=10_000, propriety=False),
    _cfg(prior=Hyper(6.0, 3.0), agents=1, sample_counts=(8,), trials=10_000, propriety=False),
    _cfg(prior=Hyper(6.0, 3.0), mechanism=MechKind.SINGLE_PPD, agents=1, sample_counts=(8,),
         trials=10_000, propriety=False),
], ids=["two-sample", "brier-moments", "log"])
def test_realized_score_tracks_expected_score(cfg):
    res = run_scenario(cfg)
    diff = np.array([a.realized_score - a.expected_score for r in res for a in r.agents])
    assert abs(diff.mean()) < 3 * diff.std() / math.sqrt(diff.size)


def test_log_mesh_sweep_positive():
    cfg = _cfg(spec=FamilySpec.categorical(3), prior=DirichletHyper((1, 1, 1)),
               mechanism=MechKind.TWO_SAMPLE, agents=1, trials=100, sample_range=(0, 20))
    rows = propriety_sweep(cfg, rule=LOG, mesh_step=0.05)
    table = margin_table(rows)
    assert table["rows"] == 100 and table["all_positive"]


def test_default_rule_sweep():
    rows = propriety_sweep(_cfg(trials=5))
    assert len(rows) == 15 and all(r.margin > 0 for r in rows)
