"""Pooling decoded hyperparameters into the global predictive.

Each decoded hyper ``(nu_i, n_i)`` carries the agent's evidence as
``nu_i - nu_0`` and ``n_i - n_0``; the global hyper adds those increments back
onto the shared prior.  The Uniform/Pareto family pools its scale by a maximum
instead of a sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AggregationError
from .families import (
    AnyHyper,
    Belief,
    DirichletHyper,
    Family,
    FamilySpec,
    Hyper,
    batch_update,
    check_hyper,
    ppd_density_array,
    sample_theta,
    sample_x,
)
from .mechanisms import Mechanism, decode

#: Tolerance for reachability and integrality checks on decoded hypers.
REACH_TOL = 1e-9


@dataclass(frozen=True)
class AgentReportSet:
    prior: AnyHyper
    decoded: tuple

    def pooled(self, spec: FamilySpec, integer_samples: bool = True) -> AnyHyper:
        return pool(self.prior, self.decoded, spec, integer_samples)


def _increment(value: float, base: float, what: str, integral: bool) -> float:
    """``value - base``, checked nonnegative and snapped to an integer if asked."""
    d = value - base
    tol = REACH_TOL * max(1.0, abs(value), abs(base))
    if d < -tol:
        raise AggregationError(f"{what} {value} is below the prior's {base}")
    if integral:
        k = round(d)
        if abs(d - k) > tol:
            raise AggregationError(f"{what} increment {d} is not a whole number of samples")
        return float(k)
    return max(d, 0.0)


def pool(prior: AnyHyper, decoded: Sequence[AnyHyper], spec: FamilySpec,
         integer_samples: bool = True) -> AnyHyper:
    """Global hyper from the prior and every agent's decoded hyper.

    With ``integer_samples`` the implied sample counts (and, for integer
    statistics, the implied sufficient statistics) must be whole numbers to
    within ``1e-9`` and are rounded to them, which removes the floating-point
    residue the inversion maps leave behind.
    """
    check_hyper(spec, prior)
    decoded = [check_hyper(spec, h) for h in decoded]
    if spec.is_categorical:
        totals = [0.0] * spec.K
        for h in decoded:
            for i, (a, a0) in enumerate(zip(h.alpha, prior.alpha)):
                totals[i] += _increment(a, a0, f"pseudo-count {i + 1}", integer_samples)
        return DirichletHyper(tuple(a0 + t for a0, t in zip(prior.alpha, totals)))

    n_inc = math.fsum(_increment(h.n, prior.n, "n", integer_samples) for h in decoded)
    if spec.family is Family.UNIFORM:
        for h in decoded:
            if h.scalar < prior.scalar * (1 - REACH_TOL):
                raise AggregationError(f"Pareto scale {h.scalar} is below the prior's {prior.scalar}")
        nu = max([prior.scalar, *(h.scalar for h in decoded)])
        return Hyper(nu, prior.n + n_inc)
    integral_nu = integer_samples and spec.integer_statistic
    if spec.family is Family.POISSON:
        nu_inc = [_increment(h.scalar, prior.scalar, "nu", integral_nu) for h in decoded]
    else:
        nu_inc = [h.scalar - prior.scalar for h in decoded]
    return Hyper(prior.scalar + math.fsum(nu_inc), prior.n + n_inc)


def oracle_global(prior: AnyHyper, all_samples, spec: FamilySpec) -> AnyHyper:
    """Hyper the principal would hold after seeing every agent's samples."""
    return batch_update(spec, prior, all_samples)


def aggregate_end_to_end(mech: Mechanism, reports: Sequence, integer_samples: bool = True) -> Belief:
    """Decode every report and pool them into the global predictive."""
    decoded = [decode(mech, r) for r in reports]
    return Belief(mech.spec, pool(mech.prior, decoded, mech.spec, integer_samples))


# ---------------------------------------------------------------------------
# discrepancy measures


def hyper_rel_error(a: AnyHyper, b: AnyHyper) -> float:
    """Largest componentwise ``|a - b| / max(|a|, |b|, 1)``."""
    if isinstance(a, DirichletHyper):
        u, v = np.asarray(a.alpha), np.asarray(b.alpha)
    else:
        u, v = np.array([*a.nu, a.n]), np.array([*b.nu, b.n])
    scale = np.maximum(np.maximum(np.abs(u), np.abs(v)), 1.0)
    return float(np.max(np.abs(u - v) / scale))


def ppd_discrepancy(spec: FamilySpec, a: AnyHyper, b: AnyHyper, n_points: int = 257) -> float:
    """Distance between two predictives of one family.

    Total variation for the discrete families (the Poisson sum is truncated
    once both tails are negligible); the largest density gap on a grid for
    the continuous ones.
    """
    if spec.is_categorical:
        return 0.5 * float(np.abs(a.mean - b.mean).sum())
    nus = np.array([a.scalar, b.scalar])
    ns = np.array([a.n, b.n])
    if spec.family is Family.POISSON:
        top = int(np.max(nus / ns) * 10 + 200)
        xs = np.arange(top + 1, dtype=float)
        pa, pb = (ppd_density_array(spec, nu, n, xs) for nu, n in zip(nus, ns))
        return 0.5 * float(np.abs(pa - pb).sum())
    if spec.family is Family.NORMAL:
        means = nus / ns
        sd = math.sqrt(2 * spec.sigma2)
        xs = np.linspace(means.min() - 8 * sd, means.max() + 8 * sd, n_points)
    else:
        xs = np.unique(np.concatenate([np.linspace(0, 4 * nus.max(), n_points), nus]))
    pa, pb = (ppd_density_array(spec, nu, n, xs) for nu, n in zip(nus, ns))
    return float(np.abs(pa - pb).max())


# ---------------------------------------------------------------------------
# the single-sample failure for categorical outcomes


@dataclass(frozen=True)
class NonAggregability:
    """Two worlds one single-sample principal cannot tell apart."""

    agent1_samples: tuple
    agent2_world_a: tuple
    agent2_world_b: tuple
    report_gap: float
    global_a: DirichletHyper
    global_b: DirichletHyper
    global_tv: float

    def to_record(self) -> dict:
        return {
            "type": "non_aggregability",
            "agent1_samples": list(self.agent1_samples),
            "agent2_world_a": list(self.agent2_world_a),
            "agent2_world_b": list(self.agent2_world_b),
            "report_gap": self.report_gap,
            "global_a": self.global_a.to_record(),
            "global_b": self.global_b.to_record(),
            "global_tv": self.global_tv,
        }


def non_aggregability_demo(spec: FamilySpec, prior: DirichletHyper, witness) -> NonAggregability:
    """Play out an injectivity witness as two indistinguishable worlds.

    Agent 1 sees the witness's distinguishing multiset; agent 2 sees one of the
    two colliding multisets.  Agent 2's full predictive, the most a single
    principal sample can extract, is identical in both worlds while the
    global predictives are not.
    """
    x1 = tuple(witness.distinguishing)
    xa, xb = tuple(witness.samples_first), tuple(witness.samples_second)
    report_a = batch_update(spec, prior, xa).mean
    report_b = batch_update(spec, prior, xb).mean
    ga = oracle_global(prior, x1 + xa, spec)
    gb = oracle_global(prior, x1 + xb, spec)
    return NonAggregability(
        agent1_samples=x1,
        agent2_world_a=xa,
        agent2_world_b=xb,
        report_gap=float(np.abs(report_a - report_b).max()),
        global_a=ga,
        global_b=gb,
        global_tv=ppd_discrepancy(spec, ga, gb),
    )


def partition(samples: Sequence, m: int, rng: np.random.Generator) -> list:
    """Split ``samples`` among ``m`` agents by independent uniform assignment."""
    owners = rng.integers(0, m, size=len(samples)) if m else np.zeros(0, dtype=int)
    return [tuple(s for s, o in zip(samples, owners) if o == k) for k in range(m)]


def draw_world(spec: FamilySpec, prior: AnyHyper, size: int, rng: np.random.Generator):
    """``theta*`` from the prior and ``size`` outcomes from ``p(x | theta*)``."""
    theta = sample_theta(spec, prior, rng)
    return theta, tuple(sample_x(spec, theta, rng, size=size))
