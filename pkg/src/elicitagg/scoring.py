"""Strictly proper scoring rules and the machinery to check their propriety.

Rules
-----
``Log``
    ``log r(x)`` for a categorical vector or a parametric :class:`Belief`.
``BrierMean``
    ``2 r x - r**2``; elicits the mean.
``BrierMoments(k)``
    ``sum_i 2 r_i x**i - r_i**2``; elicits the first ``k`` raw moments.
``TwoSampleComposite``
    ``log p(x1) + 2 b [x1 == x2] - b**2``; elicits the predictive of the first
    sample together with the probability that two samples coincide.

Categorical outcomes are the integers ``1..K``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np
from scipy import integrate

from .errors import DomainError, PreconditionError
from .families import (
    Belief,
    DirichletHyper,
    Family,
    Hyper,
    as_probs,
)

#: Finite stand-in for ``log 0``; keeps expected-score arithmetic total.
LOG_FLOOR = -1e12

_QUAD_TOL = 1e-11
_POISSON_TERM = 1e-19


class RuleKind(str, Enum):
    LOG = "Log"
    BRIER_MEAN = "BrierMean"
    BRIER_MOMENTS = "BrierMoments"
    TWO_SAMPLE = "TwoSampleComposite"


@dataclass(frozen=True)
class ScoreRule:
    kind: RuleKind
    k: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.kind is RuleKind.BRIER_MOMENTS and self.k not in (1, 2):
            raise PreconditionError(f"BrierMoments supports k in {{1, 2}}, got {self.k}")
        if self.kind is not RuleKind.BRIER_MOMENTS:
            object.__setattr__(self, "k", 1)

    @property
    def outcome_arity(self) -> int:
        return 2 if self.kind is RuleKind.TWO_SAMPLE else 1

    def __str__(self):
        if self.kind is RuleKind.BRIER_MOMENTS:
            return f"BrierMoments({self.k})"
        return self.kind.value


LOG = ScoreRule(RuleKind.LOG)
BRIER_MEAN = ScoreRule(RuleKind.BRIER_MEAN)
TWO_SAMPLE = ScoreRule(RuleKind.TWO_SAMPLE)


def brier_moments(k: int) -> ScoreRule:
    return ScoreRule(RuleKind.BRIER_MOMENTS, k)


@dataclass(frozen=True)
class MomentReport:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in np.ravel(self.values)))

    def to_record(self) -> dict:
        return {"moments": list(self.values)}


@dataclass(frozen=True)
class CompositeReport:
    """Predictive ``p`` of the first sample and match probability ``b``."""

    p: tuple
    b: float

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in as_probs(self.p)))
        object.__setattr__(self, "b", float(self.b))
        if not 0.0 <= self.b <= 1.0:
            raise DomainError(f"match probability must lie in [0, 1], got {self.b}")

    def to_record(self) -> dict:
        return {"p": list(self.p), "b": self.b}


Report = Union[Sequence[float], np.ndarray, Belief, MomentReport, CompositeReport]


def report_to_record(r) -> dict:
    if isinstance(r, (MomentReport, CompositeReport)):
        return r.to_record()
    if isinstance(r, Belief):
        return {"belief": r.to_record()}
    return {"probs": [float(v) for v in np.ravel(r)]}


# ---------------------------------------------------------------------------
# realized scores


def _log_mass(r, x) -> float:
    if isinstance(r, Belief):
        mass = r.density(x)
    else:
        probs = as_probs(r)
        if isinstance(x, bool) or int(x) != x or not 1 <= x <= probs.size:
            raise DomainError(f"categorical outcome must be in 1..{probs.size}, got {x!r}")
        mass = float(probs[int(x) - 1])
    return math.log(mass) if mass > 0 else LOG_FLOOR


def _moment_values(r, k: int) -> tuple:
    if isinstance(r, MomentReport):
        vals = r.values
    elif np.ndim(r) == 0:
        vals = (float(r),)
    else:
        vals = tuple(float(v) for v in np.ravel(r))
    if len(vals) != k:
        raise PreconditionError(f"expected a report with {k} moment(s), got {len(vals)}")
    return vals


def score(rule: ScoreRule, r, x, x2=None) -> float:
    """Realized score of report ``r`` once the outcome(s) are revealed."""
    if rule.kind is RuleKind.TWO_SAMPLE:
        if not isinstance(r, CompositeReport):
            raise PreconditionError("TwoSampleComposite scores a CompositeReport")
        if x2 is None:
            raise PreconditionError("TwoSampleComposite needs two outcomes")
        match = 1.0 if x == x2 else 0.0
        return _log_mass(r.p, x) + 2.0 * r.b * match - r.b * r.b
    if x2 is not None:
        raise PreconditionError(f"{rule} scores a single outcome")
    if rule.kind is RuleKind.LOG:
        return _log_mass(r, x)
    k = rule.k
    vals = _moment_values(r, k)
    x = float(x)
    return math.fsum(2.0 * v * x ** (i + 1) - v * v for i, v in enumerate(vals))


# ---------------------------------------------------------------------------
# expectations under a belief


def _belief_probs(belief) -> np.ndarray | None:
    if isinstance(belief, Belief):
        return belief.probs() if belief.spec.is_categorical else None
    return as_probs(belief)


def expect(belief: Belief, f) -> float:
    """``E[f(x)]`` under a parametric predictive.

    Categorical sums are exact, Poisson sums run past the mean until a single
    term drops below ``1e-19``, continuous families use adaptive quadrature.
    """
    spec, h = belief.spec, belief.hyper
    probs = _belief_probs(belief)
    if probs is not None:
        return math.fsum(p * f(i + 1) for i, p in enumerate(probs) if p > 0)
    fam = spec.family
    if fam is Family.POISSON:
        terms, x = [], 0
        mean = h.scalar / h.n
        while True:
            px = belief.density(x)
            terms.append(px * f(x))
            x += 1
            if x > mean + 10 and px < _POISSON_TERM:
                break
            if x > 10_000_000:
                raise PreconditionError("Poisson expectation failed to converge")
        return math.fsum(terms)
    if fam is Family.NORMAL:
        m = h.scalar / h.n
        sd = math.sqrt(spec.sigma2 * (1 + 1 / h.n))
        g = lambda z: belief.density(m + sd * z) * f(m + sd * z) * sd  # noqa: E731
        parts = [integrate.quad(g, a, b, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200)[0]
                 for a, b in ((-np.inf, -8), (-8, 0), (0, 8), (8, np.inf))]
        return math.fsum(parts)
    nu = h.scalar
    g = lambda x: belief.density(x) * f(x)  # noqa: E731
    low = integrate.quad(g, 0.0, nu, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200)[0]
    high = integrate.quad(g, nu, np.inf, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200)[0]
    return low + high


def belief_moments(belief, k: int) -> tuple:
    if isinstance(belief, Belief):
        return belief.moments(k)
    p = as_probs(belief)
    idx = np.arange(1, p.size + 1, dtype=float)
    return tuple(float(p @ idx ** (i + 1)) for i in range(k))


def pair_match_probability(belief) -> float:
    """Believed probability that two future samples coincide.

    For a Dirichlet belief this is ``E[sum theta_i^2]`` under the posterior;
    a bare probability vector is treated as a known parameter.
    """
    if isinstance(belief, Belief):
        if not isinstance(belief.hyper, DirichletHyper):
            raise PreconditionError("match probability needs a categorical belief")
        return dirichlet_match_probability(belief.hyper)
    p = as_probs(belief)
    return float(p @ p)


def dirichlet_match_probability(h: DirichletHyper) -> float:
    p = h.mean
    sq = float(p @ p)
    return (1.0 - sq) / (h.n + 1.0) + sq


def expected_score(rule: ScoreRule, r, belief) -> float:
    """Expected score of report ``r`` for an agent holding ``belief``.

    ``belief`` is a :class:`Belief` or a categorical probability vector.
    Brier-type rules are linear in the outcome's moments, so they are
    evaluated exactly from the belief's moments.
    """
    kind = rule.kind
    if kind is RuleKind.LOG:
        if isinstance(belief, Belief) and not belief.spec.is_categorical:
            return expect(belief, lambda x: _log_mass(r, x))
        p = _belief_probs(belief)
        return math.fsum(pi * _log_mass(r, i + 1) for i, pi in enumerate(p) if pi > 0)
    if kind is RuleKind.TWO_SAMPLE:
        if not isinstance(r, CompositeReport):
            raise PreconditionError("TwoSampleComposite scores a CompositeReport")
        p = _belief_probs(belief)
        if p is None:
            raise PreconditionError("TwoSampleComposite needs a categorical belief")
        if len(r.p) != p.size:
            raise PreconditionError("report and belief have different outcome counts")
        log_part = math.fsum(pi * _log_mass(r.p, i + 1) for i, pi in enumerate(p) if pi > 0)
        return log_part + 2.0 * r.b * pair_match_probability(belief) - r.b * r.b
    k = rule.k
    vals = _moment_values(r, k)
    mom = belief_moments(belief, k)
    return math.fsum(2.0 * v * m - v * v for v, m in zip(vals, mom))


# ---------------------------------------------------------------------------
# propriety checks


def best_response(rule: ScoreRule, belief, grid: Sequence):
    """Grid element with the highest expected score under ``belief``."""
    grid = list(grid)
    if not grid:
        raise ValueError("best_response needs a non-empty grid")
    scores = [expected_score(rule, r, belief) for r in grid]
    return grid[int(np.argmax(scores))]


def simplex_mesh(K: int, step: float) -> list:
    """All probability vectors of length ``K`` on a regular mesh of ``step``."""
    m = round(1.0 / step)
    if not math.isclose(m * step, 1.0):
        raise ValueError(f"step must divide 1, got {step}")
    out = []
    for cuts in itertools.combinations(range(m + K - 1), K - 1):
        parts = np.diff((-1, *cuts, m + K - 1)) - 1
        out.append(parts / m)
    return out


DEFAULT_DELTAS = (0.01, 0.05, 0.1)


def _vector_perturbations(p: np.ndarray, deltas) -> list:
    out = []
    for d in deltas:
        for i, j in itertools.permutations(range(p.size), 2):
            if p[j] - d >= 0:
                q = p.copy()
                q[i] += d
                q[j] -= d
                out.append(q / q.sum())
    return out


def perturbation_grid(truth, deltas=DEFAULT_DELTAS) -> list:
    """Candidate reports around ``truth``; ``truth`` itself comes first.

    Probability vectors shift mass ``d`` between pairs of outcomes, moment
    reports move each coordinate by ``+-d``, composite reports combine both,
    and parametric beliefs scale each hyperparameter by ``1 +- d``.
    """
    grid = [truth]
    if isinstance(truth, MomentReport):
        for d in deltas:
            for i in range(len(truth.values)):
                for s in (-d, d):
                    v = list(truth.values)
                    v[i] += s
                    grid.append(MomentReport(tuple(v)))
    elif isinstance(truth, CompositeReport):
        p = np.asarray(truth.p)
        ps = [p, *_vector_perturbations(p, deltas)]
        bs = [truth.b] + [truth.b + s for d in deltas for s in (-d, d) if 0 <= truth.b + s <= 1]
        for q, b in itertools.product(ps, bs):
            if q is p and b == truth.b:
                continue
            grid.append(CompositeReport(tuple(q), b))
    elif isinstance(truth, Belief):
        h = truth.hyper
        if isinstance(h, DirichletHyper):
            grid.extend(_vector_perturbations(h.mean, deltas))
        else:
            for d in deltas:
                for s in (1 - d, 1 + d):
                    for cand in (Hyper(h.scalar * s, h.n), Hyper(h.scalar, h.n * s)):
                        try:
                            grid.append(Belief(truth.spec, cand))
                        except DomainError:
                            pass
    else:
        grid.extend(_vector_perturbations(as_probs(truth), deltas))
    return grid


def _same_report(a, b) -> bool:
    if isinstance(a, CompositeReport):
        return (isinstance(b, CompositeReport) and abs(a.b - b.b) <= 1e-13
                and np.allclose(a.p, b.p, rtol=0, atol=1e-13))
    if isinstance(a, MomentReport):
        return isinstance(b, MomentReport) and np.allclose(a.values, b.values, rtol=0, atol=1e-13)
    if isinstance(a, Belief) or isinstance(b, (Belief, CompositeReport, MomentReport)):
        return a == b
    return np.allclose(np.ravel(a), np.ravel(b), rtol=0, atol=1e-13)


def propriety_margin(rule: ScoreRule, belief, truth, grid: Sequence) -> float:
    """Expected-score advantage of ``truth`` over the best other grid point.

    Returns ``inf`` if the grid holds nothing but the truth.
    """
    best_truth = expected_score(rule, truth, belief)
    others = [expected_score(rule, r, belief) for r in grid if not _same_report(r, truth)]
    return best_truth - max(others) if others else math.inf


def truthful_report(rule: ScoreRule, belief):
    """The report an expected-score maximizer gives under ``rule``."""
    if rule.kind is RuleKind.LOG:
        probs = _belief_probs(belief)
        return belief if probs is None else probs
    if rule.kind is RuleKind.TWO_SAMPLE:
        return CompositeReport(tuple(_belief_probs(belief)), pair_match_probability(belief))
    return MomentReport(belief_moments(belief, rule.k))


__all__ = [
    "LOG", "BRIER_MEAN", "TWO_SAMPLE", "LOG_FLOOR", "RuleKind", "ScoreRule",
    "MomentReport", "CompositeReport", "brier_moments", "score", "expected_score",
    "expect", "best_response", "simplex_mesh", "perturbation_grid",
    "propriety_margin", "truthful_report", "pair_match_probability",
    "dirichlet_match_probability",
]
