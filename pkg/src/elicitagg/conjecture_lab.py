"""Numerical probes for finite-support exponential families.

A family is given by its statistic matrix ``phi`` (one row per outcome).  The
conjugate prior ``p(theta | nu, n) ~ exp(<theta, nu> - n g(theta))`` is handled
by trapezoidal quadrature on a box around the prior's mode; everything here is
restricted to ``k = dim phi <= 2``.

The sweeps produce evidence tables about open questions; they never assert
that a conjecture holds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .errors import DomainError, InversionDomainError, PreconditionError

#: Log-density drop (nats) from the mode that the quadrature box must reach.
BOX_DROP = 40.0
DEFAULT_GRID = 201
MAX_STEP = 0.5
MAX_POINTS = {1: 20001, 2: 1201}


def _lse_rows(s: np.ndarray) -> np.ndarray:
    top = s.max(axis=1)
    return top + np.log(np.exp(s - top[:, None]).sum(axis=1))


@dataclass(frozen=True, eq=False)
class FiniteExpFamily:
    """Exponential family on ``{0, ..., |X|-1}`` with statistic matrix ``phi``."""

    phi: np.ndarray
    grid_points: int = DEFAULT_GRID

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None]
        if phi.ndim != 2 or phi.shape[1] == 0:
            raise DomainError("phi must be a non-empty |X| x k matrix")
        if phi.shape[1] > 2:
            raise DomainError("quadrature supports k <= 2 only")
        aug = np.hstack([phi, np.ones((phi.shape[0], 1))])
        if np.linalg.matrix_rank(aug) != phi.shape[1] + 1:
            raise DomainError("phi is not minimal: some theta makes <theta, phi(x)> constant")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def k(self) -> int:
        return self.phi.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.phi.shape[0]

    @property
    def full_dimensional(self) -> bool:
        return self.k == self.n_outcomes - 1

    def cumulant(self, theta) -> np.ndarray:
        """``g(theta) = log sum_x exp(<phi(x), theta>)``, vectorized over rows."""
        return _lse_rows(np.atleast_2d(theta) @ self.phi.T)

    def likelihood(self, theta) -> np.ndarray:
        """``p(x | theta)`` as rows of a matrix, one per theta."""
        s = np.atleast_2d(theta) @ self.phi.T
        return np.exp(s - _lse_rows(s)[:, None])

    def mean_parameter(self, theta) -> np.ndarray:
        """``grad g(theta) = E[phi | theta]``, the softmax-weighted mean."""
        return self.likelihood(theta) @ self.phi

    def fisher(self, theta) -> np.ndarray:
        """``Hessian g(theta) = Cov[phi | theta]`` at a single theta."""
        p = self.likelihood(theta)[0]
        mu = p @ self.phi
        centered = self.phi - mu
        return (centered * p[:, None]).T @ centered


def cumulant(fam: FiniteExpFamily, theta) -> float:
    return float(fam.cumulant(np.asarray(theta, dtype=float))[0])


def cumulant_grad(fam: FiniteExpFamily, theta) -> np.ndarray:
    return fam.mean_parameter(np.asarray(theta, dtype=float))[0]


@dataclass(frozen=True)
class ExpFamHyper:
    nu: tuple
    n: float

    def __post_init__(self):
        object.__setattr__(self, "nu", tuple(float(v) for v in np.ravel(self.nu)))
        object.__setattr__(self, "n", float(self.n))
        if not self.n > 0:
            raise DomainError(f"n must be positive, got {self.n}")

    @property
    def mean(self) -> np.ndarray:
        return np.asarray(self.nu) / self.n


# ---------------------------------------------------------------------------
# conjugate prior on a grid


def _in_hull_interior(fam: FiniteExpFamily, mu: np.ndarray) -> bool:
    """Whether ``mu`` is a strict convex combination of the rows of ``phi``."""
    m = fam.n_outcomes
    # maximize t subject to w >= t, sum w = 1, phi^T w = mu
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
    a_eq = np.vstack([np.hstack([fam.phi.T, np.zeros((fam.k, 1))]),
                      np.hstack([np.ones((1, m)), np.zeros((1, 1))])])
    b_eq = np.concatenate([mu, [1.0]])
    res = optimize.linprog(c, A_ub=a_ub, b_ub=np.zeros(m), A_eq=a_eq, b_eq=b_eq,
                           bounds=[(0, None)] * m + [(None, None)], method="highs")
    return bool(res.status == 0 and -res.fun > 1e-12)


def prior_mode(fam: FiniteExpFamily, hyper: ExpFamHyper) -> np.ndarray:
    """Maximizer of ``<theta, nu> - n g(theta)``, found numerically.

    At the mode ``E[phi | theta] = nu / n``.
    """
    mu = hyper.mean
    if not _in_hull_interior(fam, mu):
        raise InversionDomainError(f"nu/n = {mu} is not realizable as E[phi | theta]")

    def obj(t):
        return float(hyper.n * fam.cumulant(t)[0] - np.dot(t, hyper.nu))

    def jac(t):
        return hyper.n * fam.mean_parameter(t)[0] - np.asarray(hyper.nu)

    def hess(t):
        return hyper.n * fam.fisher(t)

    res = optimize.minimize(obj, np.zeros(fam.k), jac=jac, hess=hess, method="trust-exact",
                            options={"gtol": 1e-12})
    return res.x


@dataclass
class PriorGrid:
    """Quadrature nodes, weights and normalized log-density of a prior."""

    nodes: np.ndarray       # (M, k)
    weights: np.ndarray     # (M,)
    log_density: np.ndarray  # (M,), normalized: sum(w * exp(.)) == 1
    log_normalizer: float   # h(nu, n) on the grid

    @property
    def mass(self) -> np.ndarray:
        return self.weights * np.exp(self.log_density)


def _trapezoid_axis(lo: float, hi: float, m: int):
    x = np.linspace(lo, hi, m)
    w = np.full(m, (hi - lo) / (m - 1))
    w[0] = w[-1] = w[0] / 2
    return x, w


def _box_boundary(axes: list) -> np.ndarray:
    """Grid nodes lying on the faces of a tensor box (k <= 2)."""
    if len(axes) == 1:
        return np.array([[axes[0][0]], [axes[0][-1]]])
    x, y = axes
    faces = [np.column_stack([np.full_like(y, x[0]), y]), np.column_stack([np.full_like(y, x[-1]), y]),
             np.column_stack([x, np.full_like(x, y[0])]), np.column_stack([x, np.full_like(x, y[-1])])]
    return np.vstack(faces)


def prior_grid(fam: FiniteExpFamily, hyper: ExpFamHyper) -> PriorGrid:
    """Tensor trapezoid grid for ``p(theta | nu, n)``.

    The box is centered on the mode and widened until the log-density on its
    boundary sits ``BOX_DROP`` nats below the peak.  Each axis gets at least
    ``fam.grid_points`` nodes, more when needed to keep the spacing below
    ``MAX_STEP / spread(phi)`` (the integrand is analytic in a strip of that
    width, where the trapezoid rule converges geometrically).
    """
    if len(hyper.nu) != fam.k:
        raise DomainError(f"nu has length {len(hyper.nu)}, family has k = {fam.k}")
    mode = prior_mode(fam, hyper)
    curv = np.linalg.eigvalsh(hyper.n * fam.fisher(mode))
    half = np.full(fam.k, math.sqrt(2 * BOX_DROP / max(curv.min(), 1e-300)))
    m = fam.grid_points

    def logp(t):
        return t @ np.asarray(hyper.nu) - hyper.n * fam.cumulant(t)

    spread = max(np.linalg.norm(a - b) for a, b in itertools.combinations(fam.phi, 2))
    step = MAX_STEP / spread
    cap = MAX_POINTS[fam.k]
    peak = float(logp(mode[None, :])[0])
    for _ in range(60):
        axes = [_trapezoid_axis(c - h, c + h, int(min(cap, max(m, math.ceil(2 * h / step) + 1))))
                for c, h in zip(mode, half)]
        if peak - logp(_box_boundary([a[0] for a in axes])).max() >= BOX_DROP:
            break
        half = half * 1.5
    else:
        raise PreconditionError("prior is not normalizable on any tested box")
    nodes = np.stack([g.ravel() for g in np.meshgrid(*(a[0] for a in axes), indexing="ij")], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in np.meshgrid(*(a[1] for a in axes), indexing="ij")],
                               axis=1), axis=1)
    lp = logp(nodes)
    keep = lp > peak - 2 * BOX_DROP
    nodes, weights, lp = nodes[keep], weights[keep], lp[keep]
    log_z = float(logsumexp(lp, b=weights))
    if not math.isfinite(log_z):
        raise PreconditionError("prior normalizer is not finite on the grid")
    return PriorGrid(nodes, weights, lp - log_z, log_z)


def ppd(fam: FiniteExpFamily, hyper: ExpFamHyper, grid: PriorGrid | None = None) -> np.ndarray:
    """``p(x | nu, n) = int p(x | theta) p(theta | nu, n) dtheta`` over outcomes."""
    grid = grid or prior_grid(fam, hyper)
    return grid.mass @ fam.likelihood(grid.nodes)


def credible_mean_check(fam: FiniteExpFamily, hyper: ExpFamHyper) -> float:
    """Largest deviation of ``sum_x phi(x) p(x | nu, n)`` from ``nu / n``."""
    expected_phi = ppd(fam, hyper) @ fam.phi
    return float(np.max(np.abs(expected_phi - hyper.mean)))


def credible_mean_via_gradient(fam: FiniteExpFamily, hyper: ExpFamHyper) -> np.ndarray:
    """``int grad g(theta) p(theta | nu, n) dtheta`` on the prior grid."""
    grid = prior_grid(fam, hyper)
    return grid.mass @ fam.mean_parameter(grid.nodes)


# ---------------------------------------------------------------------------
# evidence sweeps


@dataclass(frozen=True)
class InjectivitySweep:
    n_grid: tuple
    ppds: np.ndarray         # (len(n_grid), |X|)
    distances: np.ndarray    # pairwise sup-distances
    kl_to_limit: tuple       # KL(p(x | n mu, n) || p(x | theta_hat))
    flag: str                # "injective", "non-injective" or "mixed"
    full_dimensional: bool
    tol: float

    def rows(self) -> list:
        out = []
        for i, j in itertools.combinations(range(len(self.n_grid)), 2):
            out.append({"n_a": self.n_grid[i], "n_b": self.n_grid[j],
                        "sup_distance": float(self.distances[i, j])})
        return out

    def to_record(self) -> dict:
        return {
            "type": "evidence",
            "probe": "injectivity_sweep",
            "full_dimensional": self.full_dimensional,
            "flag": self.flag,
            "tol": self.tol,
            "n_grid": list(self.n_grid),
            "kl_to_limit": list(self.kl_to_limit),
            "pairs": self.rows(),
        }


def injectivity_sweep(fam: FiniteExpFamily, mu, n_grid=(1, 2, 4, 8), tol: float = 1e-6) -> InjectivitySweep:
    """Predictives ``p(x | n mu, n)`` along a ray of fixed mean.

    Distances all above ``tol`` are evidence that the hyper-to-predictive map
    is injective along the ray; all below is evidence that it is not.
    """
    mu = np.ravel(np.asarray(mu, dtype=float))
    if mu.size != fam.k or not _in_hull_interior(fam, mu):
        raise InversionDomainError(f"mean {mu} is not realizable for this family")
    n_grid = tuple(float(n) for n in n_grid)
    ppds = np.array([ppd(fam, ExpFamHyper(n * mu, n)) for n in n_grid])
    dist = np.abs(ppds[:, None, :] - ppds[None, :, :]).max(axis=-1)
    theta_hat = prior_mode(fam, ExpFamHyper(mu, 1.0))
    limit = fam.likelihood(theta_hat)[0]
    kl = tuple(float(np.sum(p * np.log(p / limit))) for p in ppds)
    off = dist[np.triu_indices(len(n_grid), k=1)]
    if off.size and np.all(off > tol):
        flag = "injective"
    elif np.all(off <= tol):
        flag = "non-injective"
    else:
        flag = "mixed"
    return InjectivitySweep(n_grid, ppds, dist, kl, flag, fam.full_dimensional, tol)


def second_moment_variance(r1, R2, tol: float = 1e-9) -> np.ndarray:
    """Posterior variance of the mean parameter, ``R2 - r1 r1^T``.

    ``r1`` and ``R2`` are reports of ``E[phi(x1)]`` and ``E[phi(x1) phi(x2)^T]``.
    """
    r1 = np.ravel(np.asarray(r1, dtype=float))
    R2 = np.atleast_2d(np.asarray(R2, dtype=float))
    if R2.shape != (r1.size, r1.size):
        raise DomainError("R2 must be a k x k matrix matching r1")
    if not np.allclose(R2, R2.T, rtol=0, atol=tol):
        raise InversionDomainError("R2 is not symmetric")
    var = R2 - np.outer(r1, r1)
    if np.linalg.eigvalsh((var + var.T) / 2).min() < -tol:
        raise InversionDomainError("R2 - r1 r1^T is not positive semidefinite")
    return var


def dirichlet_second_moments(alpha) -> tuple:
    """``(r1, R2)`` for the categorical family with ``phi`` = first K-1 indicators."""
    a = np.asarray(alpha, dtype=float)
    n = a.sum()
    second = np.outer(a, a) + np.diag(a)
    R2 = second / (n * (n + 1.0))
    return (a / n)[:-1], R2[:-1, :-1]


def exp_family_second_moments(fam: FiniteExpFamily, hyper: ExpFamHyper) -> tuple:
    """``(E[mu(theta)], E[mu(theta) mu(theta)^T])`` under the prior, by quadrature."""
    grid = prior_grid(fam, hyper)
    mus = fam.mean_parameter(grid.nodes)
    w = grid.mass
    return w @ mus, (mus * w[:, None]).T @ mus


@dataclass(frozen=True)
class VarianceSweep:
    n_grid: tuple
    traces: tuple
    strictly_decreasing: bool
    source: str

    def to_record(self) -> dict:
        return {
            "type": "evidence",
            "probe": "variance_sweep",
            "source": self.source,
            "n_grid": list(self.n_grid),
            "traces": list(self.traces),
            "strictly_decreasing": self.strictly_decreasing,
        }


def dirichlet_variance_sweep(p, n_grid=range(2, 101)) -> VarianceSweep:
    """Trace of ``Var[mu(theta)]`` for Dirichlet ``alpha = n p`` along ``n``."""
    p = np.asarray(p, dtype=float)
    traces = []
    for n in n_grid:
        r1, R2 = dirichlet_second_moments(n * p)
        traces.append(float(np.trace(second_moment_variance(r1, R2))))
    dec = bool(np.all(np.diff(traces) < 0))
    return VarianceSweep(tuple(float(n) for n in n_grid), tuple(traces), dec, "dirichlet")


def exp_family_variance_sweep(fam: FiniteExpFamily, mu, n_grid=(1, 2, 4, 8, 16, 32)) -> VarianceSweep:
    """Same sweep for a generic family, with moments from quadrature."""
    mu = np.ravel(np.asarray(mu, dtype=float))
    traces = []
    for n in n_grid:
        r1, R2 = exp_family_second_moments(fam, ExpFamHyper(n * mu, n))
        traces.append(float(np.trace(second_moment_variance(r1, R2, tol=1e-7))))
    dec = bool(np.all(np.diff(traces) < 0))
    return VarianceSweep(tuple(float(n) for n in n_grid), tuple(traces), dec, "exp_family")


# ---------------------------------------------------------------------------
# stock families and the default evidence run


def bernoulli_family() -> FiniteExpFamily:
    return FiniteExpFamily(np.array([[0.0], [1.0]]))


def categorical_family(K: int) -> FiniteExpFamily:
    """Full-dimensional family: ``phi`` is the first ``K-1`` indicators."""
    return FiniteExpFamily(np.vstack([np.eye(K - 1), np.zeros((1, K - 1))]))


def linear_family(m: int) -> FiniteExpFamily:
    """``phi(x) = x`` on ``{0, ..., m-1}``."""
    return FiniteExpFamily(np.arange(m, dtype=float)[:, None])


def quadratic_family(m: int) -> FiniteExpFamily:
    """``phi(x) = (x, x^2)`` on ``{0, ..., m-1}`` (scaled to unit range)."""
    x = np.arange(m, dtype=float) / (m - 1)
    return FiniteExpFamily(np.column_stack([x, x * x]))


def default_evidence() -> list:
    """Evidence records for the stock families."""
    cases = [
        ("categorical K=3", categorical_family(3), [0.3, 0.5]),
        ("categorical K=2", categorical_family(2), [0.4]),
        ("linear |X|=3", linear_family(3), [0.8]),
        ("linear |X|=4", linear_family(4), [1.2]),
        ("quadratic |X|=4", quadratic_family(4), [0.45, 0.35]),
    ]
    out = []
    for name, fam, mu in cases:
        rec = injectivity_sweep(fam, mu).to_record()
        rec.update(family=name, outcomes=fam.n_outcomes, k=fam.k)
        out.append(rec)
    out.append(dirichlet_variance_sweep([0.5, 0.3, 0.2]).to_record())
    rec = exp_family_variance_sweep(linear_family(3), [0.8]).to_record()
    rec.update(family="linear |X|=3")
    out.append(rec)
    return out
