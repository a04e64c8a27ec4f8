"""Elicitation mechanisms: truthful reports in, hyperparameters out.

A single principal sample suffices when the predictive determines the
hyperparameters, which holds for the Normal, Poisson and Uniform families; the
inverse maps live here as ``invert_*``.  For categorical outcomes the
predictive ``alpha / n`` forgets ``n``; a second principal sample recovers it
through the believed match probability ``b = E[sum theta_i^2]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DomainError, InversionDomainError
from .families import (
    AnyHyper,
    Belief,
    DirichletHyper,
    Family,
    FamilySpec,
    Hyper,
    as_probs,
    batch_update,
    check_hyper,
    ppd_density_array,
    ppd_moments,
    sample_theta,
    sample_x,
)
from .scoring import (
    LOG,
    TWO_SAMPLE,
    CompositeReport,
    MomentReport,
    ScoreRule,
    brier_moments,
    dirichlet_match_probability,
)

SINGLE_SAMPLE_FAMILIES = frozenset({Family.NORMAL, Family.POISSON, Family.UNIFORM})

NON_IDENTIFIABLE_MSG = (
    "single-sample mechanisms cannot aggregate {family}: scaling the Dirichlet "
    "pseudo-counts by any c > 0 leaves the predictive alpha/n unchanged, so one "
    "principal sample cannot reveal how many samples an agent saw; use "
    "TwoSampleDirichlet"
)


class MechKind(str, Enum):
    SINGLE_MOMENTS = "SingleSampleMoments"
    SINGLE_PPD = "SingleSampleFullPPD"
    TWO_SAMPLE = "TwoSampleDirichlet"


@dataclass(frozen=True)
class Mechanism:
    kind: MechKind
    spec: FamilySpec
    prior: AnyHyper

    def __post_init__(self):
        object.__setattr__(self, "kind", MechKind(self.kind))
        check_hyper(self.spec, self.prior)
        if self.kind is MechKind.TWO_SAMPLE:
            if not self.spec.is_categorical:
                raise DomainError(
                    f"TwoSampleDirichlet needs a categorical family, got {self.spec.family.value}")
        elif self.spec.family not in SINGLE_SAMPLE_FAMILIES:
            raise DomainError(NON_IDENTIFIABLE_MSG.format(family=self.spec.family.value))
        elif self.spec.family is Family.UNIFORM and self.prior.n <= 2:
            raise DomainError("UniformPareto inversion needs prior n > 2")

    @property
    def rule(self) -> ScoreRule:
        if self.kind is MechKind.SINGLE_MOMENTS:
            return brier_moments(2)
        if self.kind is MechKind.SINGLE_PPD:
            return LOG
        return TWO_SAMPLE

    @property
    def principal_samples(self) -> int:
        return 2 if self.kind is MechKind.TWO_SAMPLE else 1


# ---------------------------------------------------------------------------
# inverse maps


def invert_normal(mu1: float, v: float, sigma2: float = 1.0) -> Hyper:
    """Hyperparameters of a Normal predictive with mean ``mu1`` and variance ``v``.

    The predictive variance is ``sigma2 * (1 + 1/n)``, so it must exceed the
    observation variance.
    """
    if not v > sigma2:
        raise InversionDomainError(
            f"predictive variance {v} must exceed observation variance {sigma2}")
    n = sigma2 / (v - sigma2)
    return Hyper(n * mu1, n)


def invert_poisson(mu1: float, mu2: float) -> Hyper:
    """Hyperparameters of a negative-binomial predictive from its raw moments.

    With ``mu1 = nu/n`` and ``mu2 = nu (nu + n + 1) / n**2`` one gets
    ``mu2 - mu1**2 - mu1 = mu1 / n``.
    """
    if not mu1 > 0:
        raise InversionDomainError(f"Poisson predictive mean must be positive, got {mu1}")
    excess = mu2 - mu1 * mu1 - mu1
    if not excess > 0:
        raise InversionDomainError(
            f"moments ({mu1}, {mu2}) are not over-dispersed; no Gamma prior matches")
    n = mu1 / excess
    return Hyper(n * mu1, n)


def invert_uniform(mu1: float, mu2: float) -> Hyper:
    """Hyperparameters of the uniform/Pareto mixture predictive from its moments.

    Eliminating ``nu`` from ``mu1 = n nu / 2(n-1)`` and ``mu2 = n nu**2 / 3(n-2)``
    leaves ``(3 rho - 4) n**2 + (8 - 6 rho) n - 4 = 0`` with ``rho = mu2 / mu1**2``;
    its one positive root exceeds 2 exactly when ``rho > 4/3``.
    """
    if not mu1 > 0:
        raise InversionDomainError(f"uniform predictive mean must be positive, got {mu1}")
    rho = mu2 / (mu1 * mu1)
    a = 3.0 * rho - 4.0
    if not a > 0:
        raise InversionDomainError(
            f"moment ratio mu2/mu1^2 = {rho} must exceed 4/3 for a root with n > 2")
    b = 8.0 - 6.0 * rho
    n = (-b + math.sqrt(b * b + 16.0 * a)) / (2.0 * a)
    if not n > 2:
        raise InversionDomainError(f"quadratic root n = {n} does not exceed 2")
    return Hyper(2.0 * mu1 * (n - 1.0) / n, n)


def match_probability(h: DirichletHyper) -> float:
    """``E[sum theta_i^2]`` under ``Dirichlet(alpha)``, i.e. ``Pr[x1 == x2]``.

    Equals ``(1 - |p|^2) / (n + 1) + |p|^2`` with ``p = alpha / n``.
    """
    return dirichlet_match_probability(h)


def invert_dirichlet_two_sample(p: Sequence[float], b: float) -> DirichletHyper:
    """Pseudo-counts from a predictive ``p`` and match probability ``b``."""
    p = as_probs(p)
    if not b < 1:
        raise DomainError(f"match probability must be below 1, got {b}")
    sq = float(p @ p)
    if not b > sq:
        raise InversionDomainError(
            f"match probability {b} must exceed |p|^2 = {sq}; equality means infinite confidence")
    if np.any(p <= 0):
        raise InversionDomainError("a zero predictive mass is unreachable from a positive prior")
    n = (1.0 - b) / (b - sq)
    return DirichletHyper(tuple(n * p))


# ---------------------------------------------------------------------------
# truthful agents and the principal's decoder


def elicit(mech: Mechanism, agent_hyper: AnyHyper):
    """Report of a truthful expected-score maximizer holding ``agent_hyper``."""
    spec = mech.spec
    check_hyper(spec, agent_hyper)
    if mech.kind is MechKind.SINGLE_MOMENTS:
        return MomentReport(ppd_moments(spec, agent_hyper, 2))
    if mech.kind is MechKind.SINGLE_PPD:
        return Belief(spec, agent_hyper)
    return CompositeReport(tuple(agent_hyper.mean), match_probability(agent_hyper))


def _invert_moments(spec: FamilySpec, mu1: float, mu2: float) -> Hyper:
    fam = spec.family
    if fam is Family.NORMAL:
        return invert_normal(mu1, mu2 - mu1 * mu1, spec.sigma2)
    if fam is Family.POISSON:
        return invert_poisson(mu1, mu2)
    return invert_uniform(mu1, mu2)


def decode(mech: Mechanism, r) -> AnyHyper:
    """Principal's inverse of :func:`elicit`."""
    if mech.kind is MechKind.TWO_SAMPLE:
        if not isinstance(r, CompositeReport):
            raise InversionDomainError(f"expected a CompositeReport, got {type(r).__name__}")
        if len(r.p) != mech.spec.K:
            raise InversionDomainError(f"expected {mech.spec.K} outcome probabilities")
        return invert_dirichlet_two_sample(r.p, r.b)
    if mech.kind is MechKind.SINGLE_MOMENTS:
        if not isinstance(r, MomentReport) or len(r.values) != 2:
            raise InversionDomainError("expected a two-moment report")
        return _invert_moments(mech.spec, *r.values)
    if not isinstance(r, Belief) or r.spec != mech.spec:
        raise InversionDomainError("expected a predictive of the mechanism's family")
    # A reported predictive is read through its first two moments.
    return _invert_moments(mech.spec, *r.moments(2))


# ---------------------------------------------------------------------------
# injectivity probes


@dataclass(frozen=True)
class InjectivityWitness:
    """Two reachable hypers with the same predictive that later diverge."""

    first: AnyHyper
    second: AnyHyper
    samples_first: tuple
    samples_second: tuple
    distinguishing: tuple
    ppd_gap: float
    discrepancy: float

    def to_record(self) -> dict:
        return {
            "first": self.first.to_record(),
            "second": self.second.to_record(),
            "samples_first": list(self.samples_first),
            "samples_second": list(self.samples_second),
            "distinguishing": list(self.distinguishing),
            "ppd_gap": self.ppd_gap,
            "discrepancy": self.discrepancy,
        }


@dataclass(frozen=True)
class ProbeResult:
    family: str
    budget: int
    checked: int
    min_gap: float
    witness: InjectivityWitness | None = field(default=None)

    @property
    def ok(self) -> bool:
        return self.witness is None

    def to_record(self) -> dict:
        return {
            "type": "probe",
            "family": self.family,
            "budget": self.budget,
            "checked": self.checked,
            "min_gap": self.min_gap,
            "ok": self.ok,
            "witness": None if self.witness is None else self.witness.to_record(),
        }


def _multisets(K: int, max_size: int, min_size: int = 0):
    """Count vectors over ``1..K`` ordered by size, then lexicographically."""
    for size in range(min_size, max_size + 1):
        for combo in itertools.combinations_with_replacement(range(1, K + 1), size):
            yield combo


def _exact_ppd(alpha: Sequence[Fraction]) -> tuple:
    total = sum(alpha)
    return tuple(a / total for a in alpha)


def _probe_categorical(spec: FamilySpec, prior: DirichletHyper, budget: int) -> ProbeResult:
    base = [Fraction(a) for a in prior.alpha]
    seen: dict[tuple, tuple] = {}
    checked = 0
    for xs in _multisets(spec.K, budget):
        checked += 1
        alpha = list(base)
        for x in xs:
            alpha[x - 1] += 1
        key = _exact_ppd(alpha)
        if key not in seen:
            seen[key] = (xs, alpha)
            continue
        xs0, alpha0 = seen[key]
        for x1 in _multisets(spec.K, budget, min_size=1):
            a0, a1 = list(alpha0), list(alpha)
            for x in x1:
                a0[x - 1] += 1
                a1[x - 1] += 1
            p0, p1 = _exact_ppd(a0), _exact_ppd(a1)
            if p0 != p1:
                witness = InjectivityWitness(
                    first=DirichletHyper(tuple(float(a) for a in alpha0)),
                    second=DirichletHyper(tuple(float(a) for a in alpha)),
                    samples_first=xs0,
                    samples_second=xs,
                    distinguishing=x1,
                    ppd_gap=0.0,
                    discrepancy=float(max(abs(u - v) for u, v in zip(p0, p1))),
                )
                return ProbeResult(spec.family.value, budget, checked, 0.0, witness)
    return ProbeResult(spec.family.value, budget, checked, math.inf)


def _signature_points(spec: FamilySpec, hypers: np.ndarray, n_points: int) -> np.ndarray:
    if spec.family is Family.POISSON:
        return np.arange(n_points, dtype=float)
    nus, ns = hypers[:, 0], hypers[:, 1]
    if spec.family is Family.NORMAL:
        means = nus / ns
        lo, hi = means.min() - 4 * math.sqrt(2 * spec.sigma2), means.max() + 4 * math.sqrt(2 * spec.sigma2)
        return np.linspace(lo, hi, n_points)
    return np.linspace(0.0, 2.0 * nus.max(), n_points)


def _reachable_scalar(spec, prior: Hyper, budget: int, rng, count: int):
    """Random reachable hypers, each with the multiset that reaches it."""
    out = []
    for _ in range(count):
        theta = sample_theta(spec, prior, rng)
        size = int(rng.integers(0, budget + 1))
        xs = tuple(sample_x(spec, theta, rng, size=size))
        out.append((batch_update(spec, prior, xs), xs))
    return out


def _enumerate_poisson(prior: Hyper, budget: int):
    out = []
    for size in range(budget + 1):
        # every total count 0..budget**2 is reachable with `size` samples (size >= 1)
        totals = range(budget * budget + 1) if size else (0,)
        for s in totals:
            xs = (s,) + (0,) * (size - 1) if size else ()
            out.append((Hyper(prior.scalar + s, prior.n + size), xs))
    return out


def _distinguish_scalar(spec: FamilySpec, h1: Hyper, h2: Hyper, pts: np.ndarray):
    """First single outcome after which the two predictives differ."""
    outcomes = np.unique(np.round(pts)) if spec.family is Family.POISSON else pts
    for x in outcomes:
        x = int(x) if spec.family is Family.POISSON else float(x)
        u, v = batch_update(spec, h1, [x]), batch_update(spec, h2, [x])
        gap = np.abs(ppd_density_array(spec, u.scalar, u.n, pts)
                     - ppd_density_array(spec, v.scalar, v.n, pts)).max()
        if gap > 1e-6:
            return (x,), float(gap)
    return (), 0.0


def probe_injectivity(spec: FamilySpec, prior: AnyHyper, budget: int = 6,
                      pairs: int = 10_000, n_points: int = 64, seed: int = 0,
                      tol: float = 1e-12) -> ProbeResult:
    """Search for reachable hypers whose predictives coincide.

    Categorical families are enumerated exactly with rational arithmetic over
    every multiset of at most ``budget`` samples; a collision is returned as an
    :class:`InjectivityWitness` together with the first multiset that
    separates the two predictives afterwards.  Poisson hypers are enumerated
    over sample counts up to ``budget``; Normal and Uniform hypers are drawn as
    ``pairs`` random pairs.  Predictives are compared at ``n_points`` points.
    """
    check_hyper(spec, prior)
    if spec.is_categorical:
        return _probe_categorical(spec, prior, budget)
    if spec.family is Family.POISSON:
        cands = _enumerate_poisson(prior, budget)
        hyp = np.array([[h.scalar, h.n] for h, _ in cands])
        pts = _signature_points(spec, hyp, n_points)
        sig = ppd_density_array(spec, hyp[:, :1], hyp[:, 1:], pts[None, :])
        i, j = np.triu_indices(len(cands), k=1)
        gaps = np.abs(sig[i] - sig[j]).max(axis=1)
        same_hyper = np.all(hyp[i] == hyp[j], axis=1)
    else:
        rng = np.random.default_rng(seed)
        cands = _reachable_scalar(spec, prior, budget, rng, 2 * pairs)
        hyp = np.array([[h.scalar, h.n] for h, _ in cands])
        pts = _signature_points(spec, hyp, n_points)
        sig = ppd_density_array(spec, hyp[:, :1], hyp[:, 1:], pts[None, :])
        i, j = np.arange(0, 2 * pairs, 2), np.arange(1, 2 * pairs, 2)
        gaps = np.abs(sig[i] - sig[j]).max(axis=1)
        same_hyper = np.all(hyp[i] == hyp[j], axis=1)
    distinct = ~same_hyper
    min_gap = float(gaps[distinct].min()) if distinct.any() else math.inf
    hits = np.flatnonzero(distinct & (gaps <= tol))
    witness = None
    if hits.size:
        a, b = int(i[hits[0]]), int(j[hits[0]])
        (h1, xs1), (h2, xs2) = cands[a], cands[b]
        x1, disc = _distinguish_scalar(spec, h1, h2, pts)
        witness = InjectivityWitness(h1, h2, xs1, xs2, x1, float(gaps[hits[0]]), disc)
    return ProbeResult(spec.family.value, budget, int(len(gaps)), min_gap, witness)
