"""Seeded Monte Carlo driver for end-to-end elicitation and aggregation.

Each trial draws ``theta*`` from the prior, hands each agent its own samples,
collects truthful reports, scores them against the principal's sample(s),
decodes, pools, and compares the pooled hyper to the one obtained from all
samples directly.

Randomness is split by ``SeedSequence(seed, spawn_key=(trial, stream, index))``
so that changing one agent's configuration does not disturb any other draw.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .aggregation import hyper_rel_error, oracle_global, pool, ppd_discrepancy
from .errors import ConfigError, DomainError
from .families import (
    AnyHyper,
    Belief,
    DirichletHyper,
    Family,
    FamilySpec,
    Hyper,
    batch_update,
    check_hyper,
    hyper_from_record,
    sample_theta,
    sample_x,
)
from .mechanisms import (
    NON_IDENTIFIABLE_MSG,
    SINGLE_SAMPLE_FAMILIES,
    MechKind,
    Mechanism,
    decode,
    elicit,
)
from .scoring import (
    DEFAULT_DELTAS,
    LOG,
    RuleKind,
    ScoreRule,
    expected_score,
    perturbation_grid,
    propriety_margin,
    report_to_record,
    score,
    simplex_mesh,
    truthful_report,
)

#: Pooled hypers of continuous families must match the oracle to this level.
PASS_TOL = 1e-10

_THETA, _AGENT, _PRINCIPAL = 0, 1, 2


@dataclass(frozen=True)
class ScenarioConfig:
    spec: FamilySpec
    prior: AnyHyper
    mechanism: MechKind
    agents: int = 2
    sample_counts: tuple | None = None
    sample_range: tuple | None = (0, 30)
    trials: int = 100
    seed: int = 0
    out: str | None = None
    propriety: bool = True
    deltas: tuple = DEFAULT_DELTAS

    def __post_init__(self):
        object.__setattr__(self, "mechanism", MechKind(self.mechanism))
        if self.sample_counts is not None:
            object.__setattr__(self, "sample_counts", tuple(int(c) for c in self.sample_counts))
            object.__setattr__(self, "sample_range", None)
        elif self.sample_range is not None:
            object.__setattr__(self, "sample_range", tuple(int(c) for c in self.sample_range))
        self.validate()

    def validate(self):
        try:
            check_hyper(self.spec, self.prior)
        except DomainError as exc:
            raise ConfigError(f"invalid prior: {exc}") from exc
        if self.agents < 0:
            raise ConfigError("agent count must be nonnegative")
        if self.trials < 1:
            raise ConfigError("trial count must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.sample_counts is not None:
            if len(self.sample_counts) != self.agents:
                raise ConfigError(
                    f"{len(self.sample_counts)} sample counts given for {self.agents} agents")
            if any(c < 0 for c in self.sample_counts):
                raise ConfigError("sample counts must be nonnegative")
        elif self.sample_range is not None:
            lo, hi = self.sample_range
            if not 0 <= lo <= hi:
                raise ConfigError(f"bad sample range {self.sample_range}")
        else:
            raise ConfigError("either sample counts or a sample range is required")
        if self.mechanism is MechKind.TWO_SAMPLE:
            if not self.spec.is_categorical:
                raise ConfigError("TwoSampleDirichlet pairs only with categorical families")
        elif self.spec.family not in SINGLE_SAMPLE_FAMILIES:
            raise ConfigError(NON_IDENTIFIABLE_MSG.format(family=self.spec.family.value))
        try:
            Mechanism(self.mechanism, self.spec, self.prior)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def mech(self) -> Mechanism:
        return Mechanism(self.mechanism, self.spec, self.prior)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        fields = dict(self.__dict__)
        fields.update({k: v for k, v in kw.items() if v is not None})
        if "sample_counts" in kw and kw["sample_counts"] is not None:
            fields["sample_range"] = None
        return ScenarioConfig(**fields)

    def to_record(self) -> dict:
        return {
            **self.spec.to_record(),
            "prior": self.prior.to_record(),
            "mechanism": self.mechanism.value,
            "agents": self.agents,
            "sample_counts": None if self.sample_counts is None else list(self.sample_counts),
            "sample_range": None if self.sample_range is None else list(self.sample_range),
            "trials": self.trials,
            "seed": self.seed,
            "propriety": self.propriety,
            "deltas": list(self.deltas),
        }


# ---------------------------------------------------------------------------
# config files


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


def parse_config(text: str) -> ScenarioConfig:
    """Parse the ``[family] / [prior] / [scenario]`` key=value format.

    Example::

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
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
        fam = cp["family"]
        spec = FamilySpec(
            Family(fam.get("name", fam.get("family"))),
            sigma2=float(fam.get("sigma2", 1.0)),
            K=int(fam["K"]) if "K" in fam else None,
        )
        pri = cp["prior"]
        if spec.is_categorical:
            prior = DirichletHyper(_floats(pri["alpha"]))
        else:
            prior = Hyper(_floats(pri["nu"]), float(pri["n"]))
        sc = cp["scenario"]
        kw = dict(
            spec=spec,
            prior=prior,
            mechanism=MechKind(sc["mechanism"]),
            agents=sc.getint("agents", 2),
            trials=sc.getint("trials", 100),
            seed=int(sc.get("seed", "0"), 0),
            propriety=sc.getboolean("propriety", True),
        )
        if "deltas" in sc:
            kw["deltas"] = _floats(sc["deltas"])
        if "samples" in sc:
            kw["sample_counts"] = _ints(sc["samples"])
        elif "samples_range" in sc:
            kw["sample_range"] = _ints(sc["samples_range"])
        if cp.has_section("output") and "path" in cp["output"]:
            kw["out"] = cp["output"]["path"]
        return ScenarioConfig(**kw)
    except ConfigError:
        raise
    except (configparser.Error, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# trials


def _rng(seed: int, trial: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, stream, index)))


@dataclass(frozen=True)
class AgentOutcome:
    samples: tuple
    true_hyper: AnyHyper
    report: object
    decoded: AnyHyper
    realized_score: float
    expected_score: float
    margin: float | None

    def to_record(self) -> dict:
        return {
            "n_samples": len(self.samples),
            "true_hyper": self.true_hyper.to_record(),
            "report": report_to_record(self.report),
            "decoded": self.decoded.to_record(),
            "realized_score": self.realized_score,
            "expected_score": self.expected_score,
            "margin": _finite_or_none(self.margin),
        }


@dataclass(frozen=True)
class TrialResult:
    trial: int
    family: str
    mechanism: str
    theta: object
    principal_samples: tuple
    agents: tuple
    pooled: AnyHyper
    oracle: AnyHyper
    max_rel_error: float
    ppd_gap: float
    passed: bool

    def to_record(self) -> dict:
        theta = [float(v) for v in self.theta] if np.ndim(self.theta) else float(self.theta)
        return {
            "type": "trial",
            "trial": self.trial,
            "family": self.family,
            "mechanism": self.mechanism,
            "theta": theta,
            "principal_samples": list(self.principal_samples),
            "agents": [a.to_record() for a in self.agents],
            "pooled": self.pooled.to_record(),
            "oracle": self.oracle.to_record(),
            "max_rel_error": self.max_rel_error,
            "ppd_gap": self.ppd_gap,
            "passed": self.passed,
        }


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else float(v)


def _agent_samples(cfg: ScenarioConfig, trial: int, theta) -> list:
    out = []
    for i in range(cfg.agents):
        rng = _rng(cfg.seed, trial, _AGENT, i)
        if cfg.sample_counts is not None:
            size = cfg.sample_counts[i]
        else:
            lo, hi = cfg.sample_range
            size = int(rng.integers(lo, hi + 1))
        out.append(tuple(sample_x(cfg.spec, theta, rng, size=size)))
    return out


def draw_trial(cfg: ScenarioConfig, trial: int):
    """``(theta*, per-agent samples, principal samples)`` for one trial."""
    theta = sample_theta(cfg.spec, cfg.prior, _rng(cfg.seed, trial, _THETA))
    samples = _agent_samples(cfg, trial, theta)
    n_principal = 2 if cfg.mechanism is MechKind.TWO_SAMPLE else 1
    principal = tuple(sample_x(cfg.spec, theta, _rng(cfg.seed, trial, _PRINCIPAL), size=n_principal))
    return theta, samples, principal


def run_trial(cfg: ScenarioConfig, trial: int) -> TrialResult:
    spec, prior, mech = cfg.spec, cfg.prior, cfg.mech
    rule = mech.rule
    theta, samples, principal = draw_trial(cfg, trial)
    agents = []
    for xs in samples:
        h = batch_update(spec, prior, xs)
        belief = Belief(spec, h)
        r = elicit(mech, h)
        margin = None
        if cfg.propriety:
            margin = propriety_margin(rule, belief, r, perturbation_grid(r, cfg.deltas))
        agents.append(AgentOutcome(
            samples=xs,
            true_hyper=h,
            report=r,
            decoded=decode(mech, r),
            realized_score=score(rule, r, *principal),
            expected_score=expected_score(rule, r, belief),
            margin=margin,
        ))
    pooled = pool(prior, [a.decoded for a in agents], spec)
    oracle = oracle_global(prior, [x for xs in samples for x in xs], spec)
    err = hyper_rel_error(pooled, oracle)
    passed = pooled == oracle if spec.integer_statistic else err <= PASS_TOL
    return TrialResult(
        trial=trial,
        family=spec.family.value,
        mechanism=cfg.mechanism.value,
        theta=theta,
        principal_samples=principal,
        agents=tuple(agents),
        pooled=pooled,
        oracle=oracle,
        max_rel_error=err,
        ppd_gap=ppd_discrepancy(spec, pooled, oracle),
        passed=bool(passed),
    )


def run_scenario(cfg: ScenarioConfig) -> list:
    """Run every trial of ``cfg`` in trial order."""
    return [run_trial(cfg, t) for t in range(cfg.trials)]


def summarize(cfg: ScenarioConfig, results: Sequence[TrialResult]) -> dict:
    margins = [a.margin for r in results for a in r.agents if a.margin is not None]
    realized = [a.realized_score for r in results for a in r.agents]
    expected = [a.expected_score for r in results for a in r.agents]
    return {
        "type": "summary",
        "family": cfg.spec.family.value,
        "mechanism": cfg.mechanism.value,
        "trials": len(results),
        "pass_rate": sum(r.passed for r in results) / len(results) if results else 1.0,
        "max_rel_error": max((r.max_rel_error for r in results), default=0.0),
        "max_ppd_gap": max((r.ppd_gap for r in results), default=0.0),
        "min_margin": _finite_or_none(min(margins)) if margins else None,
        "mean_realized_score": float(np.mean(realized)) if realized else None,
        "mean_expected_score": float(np.mean(expected)) if expected else None,
    }


def dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), allow_nan=False)


def record_lines(cfg: ScenarioConfig, results: Sequence[TrialResult]) -> list:
    """Header, one line per trial, summary; all deterministic given ``cfg``."""
    lines = [dumps({"type": "header", "config": cfg.to_record()})]
    lines.extend(dumps(r.to_record()) for r in results)
    lines.append(dumps(summarize(cfg, results)))
    return lines


def write_records(path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# propriety sweeps


@dataclass(frozen=True)
class MarginRow:
    trial: int
    agent: int
    rule: str
    margin: float

    def to_record(self) -> dict:
        return {"type": "margin", "trial": self.trial, "agent": self.agent,
                "rule": self.rule, "margin": _finite_or_none(self.margin)}


def propriety_sweep(cfg: ScenarioConfig, deltas: Sequence[float] | None = None,
                    rule: ScoreRule | None = None, mesh_step: float | None = None) -> list:
    """Expected-score margin of the truthful report for every simulated agent.

    The default rule is the mechanism's own.  With ``mesh_step`` and a
    categorical log-score sweep the candidates are a regular simplex mesh
    instead of perturbations of the truth.
    """
    rule = rule or cfg.mech.rule
    deltas = tuple(deltas or cfg.deltas)
    if rule.kind is RuleKind.TWO_SAMPLE and not cfg.spec.is_categorical:
        raise ConfigError("TwoSampleComposite needs a categorical family")
    rows = []
    for t in range(cfg.trials):
        _, samples, _ = draw_trial(cfg, t)
        for i, xs in enumerate(samples):
            belief = Belief(cfg.spec, batch_update(cfg.spec, cfg.prior, xs))
            truth = truthful_report(rule, belief)
            if mesh_step is not None and rule == LOG and cfg.spec.is_categorical:
                grid = [truth, *simplex_mesh(cfg.spec.K, mesh_step)]
            else:
                grid = perturbation_grid(truth, deltas)
            rows.append(MarginRow(t, i, str(rule), propriety_margin(rule, belief, truth, grid)))
    return rows


def margin_table(rows: Sequence[MarginRow]) -> dict:
    finite = [r.margin for r in rows if math.isfinite(r.margin)]
    return {
        "type": "propriety",
        "rows": len(rows),
        "min_margin": min(finite) if finite else None,
        "all_positive": all(r.margin > 0 for r in rows),
    }


__all__ = [
    "ScenarioConfig", "TrialResult", "AgentOutcome", "MarginRow", "parse_config",
    "load_config", "run_trial", "run_scenario", "summarize", "record_lines",
    "write_records", "propriety_sweep", "margin_table", "draw_trial", "hyper_from_record",
    "PASS_TOL", "field",
]
