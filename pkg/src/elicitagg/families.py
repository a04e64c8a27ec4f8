"""Conjugate family / prior pairs used throughout the package.

Five families are supported:

==========================  ===================  ==============================
family                      outcome space        hyperparameters
==========================  ===================  ==============================
``NormalKnownVar``          real line            ``Hyper(nu, n)``; posterior
                                                 ``N(nu/n, sigma2/n)``
``PoissonGamma``            ``{0, 1, 2, ...}``   ``Hyper(nu, n)``; Gamma shape
                                                 ``nu``, rate ``n``
``UniformPareto``           ``[0, inf)``         ``Hyper(nu, n)``; Pareto scale
                                                 ``nu``, shape ``n``
``CategoricalDirichlet``    ``{1, ..., K}``      ``DirichletHyper(alpha)``
``BernoulliBeta``           ``{1, 2}``           ``DirichletHyper(alpha)``, K=2
==========================  ===================  ==============================

Every function here is pure; randomness comes in through an explicit
:class:`numpy.random.Generator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, PreconditionError


class Family(str, Enum):
    NORMAL = "NormalKnownVar"
    POISSON = "PoissonGamma"
    UNIFORM = "UniformPareto"
    CATEGORICAL = "CategoricalDirichlet"
    BERNOULLI = "BernoulliBeta"


#: Families whose hyperparameter vector is a sum of integer statistics.
INTEGER_STATISTIC = frozenset({Family.POISSON, Family.CATEGORICAL, Family.BERNOULLI})


@dataclass(frozen=True)
class FamilySpec:
    """A family tag together with its fixed constants.

    ``sigma2`` is only meaningful for ``NormalKnownVar`` and ``K`` only for the
    categorical families (``BernoulliBeta`` always has ``K = 2``).
    """

    family: Family
    sigma2: float = 1.0
    K: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.BERNOULLI:
            if self.K not in (None, 2):
                raise DomainError("BernoulliBeta has exactly two outcomes")
            object.__setattr__(self, "K", 2)
        if self.family is Family.CATEGORICAL:
            if self.K is None or int(self.K) != self.K or self.K < 2:
                raise DomainError(f"CategoricalDirichlet needs integer K >= 2, got {self.K!r}")
            object.__setattr__(self, "K", int(self.K))
        elif self.family is not Family.BERNOULLI:
            object.__setattr__(self, "K", None)
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise DomainError(f"sigma2 must be positive, got {self.sigma2!r}")

    @classmethod
    def normal(cls, sigma2: float = 1.0) -> "FamilySpec":
        return cls(Family.NORMAL, sigma2=sigma2)

    @classmethod
    def poisson(cls) -> "FamilySpec":
        return cls(Family.POISSON)

    @classmethod
    def uniform(cls) -> "FamilySpec":
        return cls(Family.UNIFORM)

    @classmethod
    def categorical(cls, K: int) -> "FamilySpec":
        return cls(Family.CATEGORICAL, K=K)

    @classmethod
    def bernoulli(cls) -> "FamilySpec":
        return cls(Family.BERNOULLI)

    @property
    def is_categorical(self) -> bool:
        return self.family in (Family.CATEGORICAL, Family.BERNOULLI)

    @property
    def is_discrete(self) -> bool:
        return self.is_categorical or self.family is Family.POISSON

    @property
    def integer_statistic(self) -> bool:
        return self.family in INTEGER_STATISTIC

    def constants(self) -> dict:
        if self.family is Family.NORMAL:
            return {"sigma2": self.sigma2}
        if self.is_categorical:
            return {"K": self.K}
        return {}

    def to_record(self) -> dict:
        return {"family": self.family.value, "constants": self.constants()}

    @classmethod
    def from_record(cls, rec: dict) -> "FamilySpec":
        try:
            family = Family(rec["family"])
        except (KeyError, ValueError) as exc:
            raise DomainError(f"unknown family record {rec!r}") from exc
        consts = dict(rec.get("constants") or {})
        return cls(family, sigma2=float(consts.get("sigma2", 1.0)), K=consts.get("K"))


@dataclass(frozen=True)
class Hyper:
    """Conjugate hyperparameters ``(nu, n)``; ``nu`` is stored as a tuple."""

    nu: tuple
    n: float

    def __post_init__(self):
        nu = self.nu
        if np.ndim(nu) == 0:
            nu = (nu,)
        object.__setattr__(self, "nu", tuple(float(v) for v in nu))
        object.__setattr__(self, "n", float(self.n))
        if not (self.n > 0 and math.isfinite(self.n)):
            raise DomainError(f"n must be positive and finite, got {self.n!r}")
        if not all(math.isfinite(v) for v in self.nu):
            raise DomainError(f"nu must be finite, got {self.nu!r}")

    @property
    def scalar(self) -> float:
        """``nu`` as a float, for the one-dimensional families."""
        if len(self.nu) != 1:
            raise DomainError("hyper is not scalar")
        return self.nu[0]

    def to_record(self) -> dict:
        return {"nu": list(self.nu), "n": self.n}


@dataclass(frozen=True)
class DirichletHyper:
    """Dirichlet pseudo-counts; ``n`` is their total."""

    alpha: tuple

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.ravel(self.alpha))
        if len(alpha) < 2:
            raise DomainError("Dirichlet needs at least two pseudo-counts")
        if not all(a > 0 and math.isfinite(a) for a in alpha):
            raise DomainError(f"all pseudo-counts must be positive, got {alpha!r}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def n(self) -> float:
        return math.fsum(self.alpha)

    @property
    def K(self) -> int:
        return len(self.alpha)

    @property
    def nu(self) -> tuple:
        return self.alpha[:-1]

    @property
    def mean(self) -> np.ndarray:
        a = np.asarray(self.alpha)
        return a / a.sum()

    def scaled(self, c: float) -> "DirichletHyper":
        return DirichletHyper(tuple(c * a for a in self.alpha))

    def to_record(self) -> dict:
        return {"alpha": list(self.alpha)}


AnyHyper = Union[Hyper, DirichletHyper]


def hyper_from_record(spec: FamilySpec, rec: dict) -> AnyHyper:
    if spec.is_categorical:
        return DirichletHyper(tuple(rec["alpha"]))
    return Hyper(tuple(rec["nu"]), rec["n"])


@dataclass(frozen=True)
class SampleSet:
    """A validated multiset of outcomes of one family."""

    spec: FamilySpec
    samples: tuple

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(check_outcome(self.spec, x) for x in self.samples))

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return self.spec == other.spec and sorted(self.samples) == sorted(other.samples)

    def __hash__(self):
        return hash((self.spec, tuple(sorted(self.samples))))

    def __add__(self, other: "SampleSet") -> "SampleSet":
        if other.spec != self.spec:
            raise DomainError("cannot join samples of different families")
        return SampleSet(self.spec, self.samples + other.samples)


# ---------------------------------------------------------------------------
# validation


def check_outcome(spec: FamilySpec, x):
    """Return ``x`` normalized to the family's outcome type, or raise."""
    fam = spec.family
    if spec.is_categorical:
        if isinstance(x, bool) or not _is_integral(x) or not 1 <= int(x) <= spec.K:
            raise DomainError(f"categorical outcome must be in 1..{spec.K}, got {x!r}")
        return int(x)
    if fam is Family.POISSON:
        if isinstance(x, bool) or not _is_integral(x) or int(x) < 0:
            raise DomainError(f"Poisson outcome must be a nonnegative integer, got {x!r}")
        return int(x)
    try:
        xf = float(x)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"outcome must be real, got {x!r}") from exc
    if not math.isfinite(xf):
        raise DomainError(f"outcome must be finite, got {x!r}")
    if fam is Family.UNIFORM and xf < 0:
        raise DomainError(f"uniform outcome must be nonnegative, got {x!r}")
    return xf


def _is_integral(x) -> bool:
    try:
        return float(x) == int(x)
    except (TypeError, ValueError, OverflowError):
        return False


def check_hyper(spec: FamilySpec, h: AnyHyper) -> AnyHyper:
    if spec.is_categorical:
        if not isinstance(h, DirichletHyper):
            raise DomainError(f"{spec.family.value} needs DirichletHyper, got {type(h).__name__}")
        if h.K != spec.K:
            raise DomainError(f"expected {spec.K} pseudo-counts, got {h.K}")
        return h
    if not isinstance(h, Hyper) or len(h.nu) != 1:
        raise DomainError(f"{spec.family.value} needs a scalar Hyper, got {h!r}")
    if spec.family in (Family.POISSON, Family.UNIFORM) and not h.scalar > 0:
        raise DomainError(f"{spec.family.value} needs nu > 0, got {h.scalar}")
    return h


# ---------------------------------------------------------------------------
# updates


def posterior_update(spec: FamilySpec, h: AnyHyper, x) -> AnyHyper:
    """Condition ``h`` on a single outcome ``x``."""
    check_hyper(spec, h)
    x = check_outcome(spec, x)
    if spec.is_categorical:
        alpha = list(h.alpha)
        alpha[x - 1] += 1.0
        return DirichletHyper(tuple(alpha))
    if spec.family is Family.UNIFORM:
        return Hyper(max(h.scalar, x), h.n + 1)
    return Hyper(h.scalar + x, h.n + 1)


def batch_update(spec: FamilySpec, h: AnyHyper, xs: Iterable) -> AnyHyper:
    """Condition ``h`` on a multiset of outcomes.

    Statistics are accumulated with :func:`math.fsum`, so the result does not
    depend on the order of ``xs``.
    """
    check_hyper(spec, h)
    xs = [check_outcome(spec, x) for x in xs]
    if not xs:
        return h
    if spec.is_categorical:
        counts = np.bincount(np.asarray(xs) - 1, minlength=spec.K)
        return DirichletHyper(tuple(a + int(c) for a, c in zip(h.alpha, counts)))
    if spec.family is Family.UNIFORM:
        return Hyper(max(h.scalar, max(xs)), h.n + len(xs))
    return Hyper(math.fsum([h.scalar, *xs]), h.n + len(xs))


# ---------------------------------------------------------------------------
# posterior predictive


def ppd_density(spec: FamilySpec, h: AnyHyper, x) -> float:
    """Density (or mass) of the posterior predictive at ``x``."""
    check_hyper(spec, h)
    x = check_outcome(spec, x)
    fam = spec.family
    if spec.is_categorical:
        return h.alpha[x - 1] / h.n
    nu, n = h.scalar, h.n
    if fam is Family.NORMAL:
        var = spec.sigma2 * (1.0 + 1.0 / n)
        return math.exp(-0.5 * (x - nu / n) ** 2 / var) / math.sqrt(2 * math.pi * var)
    if fam is Family.POISSON:
        # negative binomial with nu "successes" and success probability n/(n+1)
        logp = (gammaln(nu + x) - gammaln(nu) - gammaln(x + 1.0)
                + nu * math.log(n / (n + 1.0)) - x * math.log1p(n))
        return float(math.exp(logp))
    # Uniform(0, theta) against Pareto(nu, n): flat below nu, power-law tail above.
    top = max(nu, x)
    return n / ((n + 1.0) * nu) * (nu / top) ** (n + 1.0)


def ppd_density_array(spec: FamilySpec, nu, n, x) -> np.ndarray:
    """Vectorized predictive density for the scalar families.

    ``nu``, ``n`` and ``x`` broadcast against each other; inputs are assumed
    valid.
    """
    nu, n, x = (np.asarray(v, dtype=float) for v in (nu, n, x))
    fam = spec.family
    if fam is Family.NORMAL:
        var = spec.sigma2 * (1.0 + 1.0 / n)
        return np.exp(-0.5 * (x - nu / n) ** 2 / var) / np.sqrt(2 * np.pi * var)
    if fam is Family.POISSON:
        return np.exp(gammaln(nu + x) - gammaln(nu) - gammaln(x + 1.0)
                      + nu * np.log(n / (n + 1.0)) - x * np.log1p(n))
    if fam is Family.UNIFORM:
        return n / ((n + 1.0) * nu) * (nu / np.maximum(nu, x)) ** (n + 1.0)
    raise DomainError(f"{fam.value} has no scalar density")


def ppd_probs(spec: FamilySpec, h: DirichletHyper) -> np.ndarray:
    """Full predictive mass vector of a categorical family."""
    check_hyper(spec, h)
    return h.mean


def ppd_moments(spec: FamilySpec, h: AnyHyper, k: int = 2) -> tuple:
    """First ``k`` raw moments ``(E[x], E[x^2])[:k]`` of the predictive."""
    if k not in (1, 2):
        raise PreconditionError(f"moment order must be 1 or 2, got {k}")
    check_hyper(spec, h)
    fam = spec.family
    if spec.is_categorical:
        p = h.mean
        idx = np.arange(1, spec.K + 1, dtype=float)
        mom = (float(p @ idx), float(p @ idx ** 2))
        return mom[:k]
    nu, n = h.scalar, h.n
    if fam is Family.NORMAL:
        m1 = nu / n
        mom = (m1, spec.sigma2 * (1.0 + 1.0 / n) + m1 * m1)
    elif fam is Family.POISSON:
        mom = (nu / n, nu * (nu + n + 1.0) / (n * n))
    else:
        if n <= 1 or (k == 2 and n <= 2):
            raise PreconditionError(
                f"UniformPareto moment {k} needs n > {k}, got n={n}")
        m1 = n * nu / (2.0 * (n - 1.0))
        mom = (m1, n * nu * nu / (3.0 * (n - 2.0)) if k == 2 else math.nan)
    return mom[:k]


def ppd_mean_var(spec: FamilySpec, h: AnyHyper) -> tuple:
    m1, m2 = ppd_moments(spec, h, 2)
    return m1, m2 - m1 * m1


# ---------------------------------------------------------------------------
# sampling


def sample_theta(spec: FamilySpec, h: AnyHyper, rng: np.random.Generator):
    """Draw a parameter from ``p(theta | h)``."""
    check_hyper(spec, h)
    fam = spec.family
    if spec.is_categorical:
        return rng.dirichlet(h.alpha)
    nu, n = h.scalar, h.n
    if fam is Family.NORMAL:
        return float(rng.normal(nu / n, math.sqrt(spec.sigma2 / n)))
    if fam is Family.POISSON:
        return float(rng.gamma(shape=nu, scale=1.0 / n))
    # numpy's pareto is the Lomax form; shift and scale to Pareto(nu, n)
    return float(nu * (1.0 + rng.pareto(n)))


def sample_x(spec: FamilySpec, theta, rng: np.random.Generator, size: int | None = None):
    """Draw one outcome (or ``size`` outcomes as a list) from ``p(x | theta)``."""
    m = 1 if size is None else size
    fam = spec.family
    if spec.is_categorical:
        theta = np.asarray(theta, dtype=float)
        out = [int(v) + 1 for v in rng.choice(spec.K, size=m, p=theta / theta.sum())]
    elif fam is Family.NORMAL:
        out = [float(v) for v in rng.normal(theta, math.sqrt(spec.sigma2), size=m)]
    elif fam is Family.POISSON:
        out = [int(v) for v in rng.poisson(theta, size=m)]
    else:
        out = [float(v) for v in rng.uniform(0.0, theta, size=m)]
    return out[0] if size is None else out


# ---------------------------------------------------------------------------
# beliefs


@dataclass(frozen=True)
class Belief:
    """An agent's predictive distribution, carried by its hyperparameters."""

    spec: FamilySpec
    hyper: AnyHyper

    def __post_init__(self):
        check_hyper(self.spec, self.hyper)

    def density(self, x) -> float:
        return ppd_density(self.spec, self.hyper, x)

    def moments(self, k: int = 2) -> tuple:
        return ppd_moments(self.spec, self.hyper, k)

    def probs(self) -> np.ndarray:
        return ppd_probs(self.spec, self.hyper)

    def to_record(self) -> dict:
        return {**self.spec.to_record(), **self.hyper.to_record()}


def as_probs(p: Sequence[float]) -> np.ndarray:
    """Validate a categorical probability vector."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise DomainError("probability vector must be one-dimensional with K >= 2")
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-12:
        raise DomainError(f"not a probability vector: {p!r}")
    return arr
