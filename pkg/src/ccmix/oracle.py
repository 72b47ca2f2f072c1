"""Exact finite-state verification of the sampler kernels.

Discretizing the continuous component to a grid turns every kernel into
a row-stochastic matrix, so reversibility, invariance, kernel orderings
and asymptotic variances can all be checked by plain linear algebra at
machine precision.  States are enumerated as (m, g) -> (m - 1) * G + g
with component labels m in 1..n and grid indices g in 0..G-1.

Kernels built here:

* ``build_P3``: the index-selection sweep shared by the MCC and FCC
  samplers (auxiliary refresh + index draw), marginalized exactly over
  the refreshed points.
* ``build_Q3``: the within-component Metropolis-Hastings refresh, block
  diagonal over the labels.
* ``build_Q4``: the frozen (identity) refresh.
* ``build_gibbs_index_kernel``: the induced label chain of the plain
  Gibbs sampler.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

__all__ = [
    "FiniteMixtureSpec",
    "FiniteKernel",
    "TooLarge",
    "NotReversible",
    "NonErgodic",
    "DimensionMismatch",
    "OrderingViolation",
    "build_P3",
    "build_Q3",
    "build_Q4",
    "build_gibbs_index_kernel",
    "target_distribution",
    "index_marginal",
    "index_function_vector",
    "check_reversibility",
    "check_covariance_ordering",
    "check_offdiagonal_dominance",
    "exact_asymptotic_variance_alternating",
    "lag_covariances",
    "index_lag1_autocorrelation",
    "check_gibbs_iid_bound",
    "random_spec",
    "spec_from_log_densities",
    "save_spec",
    "load_spec",
]

MAX_ENUMERATION_TERMS = 10_000_000


class TooLarge(ValueError):
    """Exact enumeration over the auxiliary grid would be too expensive."""


class NotReversible(ValueError):
    pass


class NonErgodic(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class OrderingViolation(AssertionError):
    """A machine-checked kernel or variance ordering failed."""


@dataclass(frozen=True)
class FiniteMixtureSpec:
    """A mixture target discretized to ``grid``.

    ``prob`` (n x G) holds the joint masses pi*(m, z_g) and sums to one;
    each row of ``pseudo`` (n x G) is a pseudo-prior mass function; each
    slice ``proposal[m-1]`` (G x G), when present, is a row-stochastic
    proposal kernel on the grid.
    """

    n: int
    grid: np.ndarray
    prob: np.ndarray
    pseudo: np.ndarray
    proposal: Optional[np.ndarray] = None

    def __post_init__(self):
        G = len(self.grid)
        if self.prob.shape != (self.n, G) or self.pseudo.shape != (self.n, G):
            raise DimensionMismatch("prob and pseudo must have shape (n, G)")
        if np.any(self.prob < 0) or np.any(self.pseudo < 0):
            raise ValueError("masses must be nonnegative")
        if abs(self.prob.sum() - 1.0) > 1e-9:
            raise ValueError("prob must sum to 1")
        if np.max(np.abs(self.pseudo.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("each pseudo-prior row must sum to 1")
        if self.proposal is not None:
            if self.proposal.shape != (self.n, G, G):
                raise DimensionMismatch("proposal must have shape (n, G, G)")
            if np.any(self.proposal < 0):
                raise ValueError("proposal masses must be nonnegative")
            if np.max(np.abs(self.proposal.sum(axis=2) - 1.0)) > 1e-9:
                raise ValueError("proposal slices must be row-stochastic")

    @property
    def grid_size(self) -> int:
        return len(self.grid)

    @property
    def n_states(self) -> int:
        return self.n * len(self.grid)

    def state_index(self, m: int, g: int) -> int:
        return (m - 1) * len(self.grid) + g


@dataclass(frozen=True)
class FiniteKernel:
    """A row-stochastic matrix over the (m, g) states."""

    matrix: np.ndarray
    n: int
    grid_size: int

    def __post_init__(self):
        size = self.n * self.grid_size
        if self.matrix.shape != (size, size):
            raise DimensionMismatch(
                f"kernel matrix must be {size}x{size}, got {self.matrix.shape}"
            )
        if np.any(self.matrix < -1e-15):
            raise ValueError("kernel entries must be nonnegative")
        if np.max(np.abs(self.matrix.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("kernel rows must sum to 1")

    def state_index(self, m: int, g: int) -> int:
        return (m - 1) * self.grid_size + g


def target_distribution(spec: FiniteMixtureSpec) -> np.ndarray:
    """pi* as a vector over the (m, g) states."""
    return spec.prob.reshape(-1).copy()


def index_marginal(spec: FiniteMixtureSpec) -> np.ndarray:
    return spec.prob.sum(axis=1)


def index_function_vector(spec: FiniteMixtureSpec, h) -> np.ndarray:
    """Lift a function of the label, h(m), to a vector over the (m, g) states."""
    vals = np.array([float(h(m)) for m in range(1, spec.n + 1)])
    return np.repeat(vals, spec.grid_size)


def _cond_z_given_m(spec: FiniteMixtureSpec) -> np.ndarray:
    row_sums = spec.prob.sum(axis=1, keepdims=True)
    if np.any(row_sums == 0):
        raise ValueError("a component has zero total mass")
    return spec.prob / row_sums


def build_P3(spec: FiniteMixtureSpec) -> FiniteKernel:
    """Exact kernel of the shared selection sweep (steps (i)-(ii)).

    For each start state (m, z) the refreshed auxiliary points u_j,
    j != m, are enumerated over the full grid; the index-move weights
    are proportional to pi*(k, u_k) / rho_k(u_k).
    """
    n, G = spec.n, spec.grid_size
    if G ** (n - 1) * n * G > MAX_ENUMERATION_TERMS:
        raise TooLarge("auxiliary-grid enumeration exceeds the term budget")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            spec.pseudo > 0,
            spec.prob / np.where(spec.pseudo > 0, spec.pseudo, 1.0),
            0.0,
        )
    if np.any((spec.pseudo == 0) & (spec.prob > 0)):
        raise ValueError("a pseudo-prior vanishes where the target does not")

    P = np.zeros((n * G, n * G))
    for m in range(1, n + 1):
        others = [j for j in range(1, n + 1) if j != m]
        # All assignments of grid indices to the refreshed components.
        combos = np.array(list(product(range(G), repeat=len(others))), dtype=int)
        w_prior = np.ones(len(combos))
        ratio_others = np.empty((len(combos), len(others)))
        for c, j in enumerate(others):
            w_prior *= spec.pseudo[j - 1, combos[:, c]]
            ratio_others[:, c] = ratio[j - 1, combos[:, c]]
        sum_others = ratio_others.sum(axis=1)
        for g in range(G):
            row = spec.state_index(m, g)
            r_m = ratio[m - 1, g]
            total = sum_others + r_m
            ok = total > 0
            # Move to the current component: the auxiliary point is z itself.
            P[row, spec.state_index(m, g)] += np.sum(
                w_prior[ok] * r_m / total[ok]
            )
            for c, j in enumerate(others):
                contrib = np.zeros(len(combos))
                contrib[ok] = w_prior[ok] * ratio_others[ok, c] / total[ok]
                np.add.at(P[row, (j - 1) * G : j * G], combos[:, c], contrib)
    return FiniteKernel(P, n, G)


def build_Q3(spec: FiniteMixtureSpec) -> FiniteKernel:
    """Exact within-component Metropolis-Hastings refresh, block diagonal."""
    if spec.proposal is None:
        raise ValueError("spec has no proposal table")
    n, G = spec.n, spec.grid_size
    cond = _cond_z_given_m(spec)
    Q = np.zeros((n * G, n * G))
    for m in range(1, n + 1):
        R = spec.proposal[m - 1]
        pm = cond[m - 1]
        K = np.zeros((G, G))
        for g in range(G):
            if pm[g] == 0.0:
                # Zero-mass current point: park the chain (never reached
                # under pi*, but rows must still be stochastic).
                K[g, g] = 1.0
                continue
            for g2 in range(G):
                if g2 == g or R[g, g2] == 0.0:
                    continue
                if pm[g2] == 0.0 or R[g2, g] == 0.0:
                    alpha = 0.0
                else:
                    alpha = min(1.0, pm[g2] * R[g2, g] / (pm[g] * R[g, g2]))
                K[g, g2] = R[g, g2] * alpha
            K[g, g] = 1.0 - K[g].sum()
        Q[(m - 1) * G : m * G, (m - 1) * G : m * G] = K
    return FiniteKernel(Q, n, G)


def build_Q4(spec: FiniteMixtureSpec) -> FiniteKernel:
    """The frozen refresh: identity on the whole state space."""
    return FiniteKernel(np.eye(spec.n_states), spec.n, spec.grid_size)


def build_gibbs_index_kernel(spec: FiniteMixtureSpec) -> FiniteKernel:
    """Induced label chain of the Gibbs sampler: G(m, m') = sum_z pi*(z|m) pi*(m'|z)."""
    cond_z = _cond_z_given_m(spec)
    col_sums = spec.prob.sum(axis=0, keepdims=True)
    if np.any(col_sums == 0):
        # Grid points with zero mass under every component contribute nothing.
        col_sums = np.where(col_sums == 0, 1.0, col_sums)
    cond_m = spec.prob / col_sums
    return FiniteKernel(cond_z @ cond_m.T, spec.n, 1)


def check_reversibility(kernel: FiniteKernel, pi: np.ndarray) -> float:
    """Max absolute detailed-balance deviation |pi_i K_ij - pi_j K_ji|."""
    pi = np.asarray(pi, dtype=float)
    if len(pi) != kernel.matrix.shape[0]:
        raise DimensionMismatch("distribution length does not match the kernel")
    flow = pi[:, None] * kernel.matrix
    return float(np.max(np.abs(flow - flow.T)))


def check_offdiagonal_dominance(
    P1: FiniteKernel, P0: FiniteKernel, tol: float = 1e-14
) -> bool:
    """True iff P1 puts at least as much mass as P0 on every off-diagonal entry."""
    if P1.matrix.shape != P0.matrix.shape:
        raise DimensionMismatch("kernels have different sizes")
    diff = P1.matrix - P0.matrix
    np.fill_diagonal(diff, 0.0)
    return bool(np.min(diff) >= -tol)


def check_covariance_ordering(
    P1: FiniteKernel, P0: FiniteKernel, pi: np.ndarray, rev_tol: float = 1e-8
) -> float:
    """Smallest eigenvalue of sym(D (P0 - P1)), D = diag(pi).

    Nonnegative (within tolerance) iff P1 dominates P0 in the covariance
    ordering.  Both kernels must be pi-reversible, which makes the
    matrix symmetric up to rounding.
    """
    if P1.matrix.shape != P0.matrix.shape:
        raise DimensionMismatch("kernels have different sizes")
    for K in (P1, P0):
        dev = check_reversibility(K, pi)
        if dev > rev_tol:
            raise NotReversible(f"kernel deviates from detailed balance by {dev:g}")
    D = np.diag(np.asarray(pi, dtype=float))
    A = D @ (P0.matrix - P1.matrix)
    A = 0.5 * (A + A.T)
    return float(np.linalg.eigvalsh(A)[0])


def _complement_norm_and_radius(T: np.ndarray, pi: np.ndarray) -> tuple[float, float]:
    """Operator norm and spectral radius of T restricted to the pi-orthogonal
    complement of the constants in L2(pi)."""
    s = np.sqrt(pi)
    Ts = s[:, None] * T / np.where(s > 0, s, 1.0)[None, :]
    proj = np.eye(len(pi)) - np.outer(s, s)
    Tperp = proj @ Ts @ proj
    norm = float(np.linalg.svd(Tperp, compute_uv=False)[0])
    radius = float(np.max(np.abs(np.linalg.eigvals(Tperp))))
    return norm, radius


def exact_asymptotic_variance_alternating(
    P: FiniteKernel,
    Q: FiniteKernel,
    pi: np.ndarray,
    f: np.ndarray,
    tol: float = 1e-10,
    max_terms: int = 2_000_000,
):
    """Asymptotic variance of path averages of f along the alternating chain.

    The chain starts at pi and applies P on even steps and Q on odd
    steps; both kernels must preserve pi.  The lag-covariance series is
    summed exactly via matrix-vector products and truncated once a
    geometric tail bound falls below ``tol``.  With P == Q this is the
    ordinary homogeneous-chain asymptotic variance.

    ``f`` may be a single state vector or a (k, n_states) stack, in
    which case an array of k variances is returned.
    """
    pi = np.asarray(pi, dtype=float)
    f = np.asarray(f, dtype=float)
    single = f.ndim == 1
    F = np.atleast_2d(f)
    if F.shape[1] != len(pi) or len(pi) != P.matrix.shape[0]:
        raise DimensionMismatch("pi, f and the kernels must share one state space")
    Fbar = F - (F @ pi)[:, None]
    norm2 = Fbar * Fbar @ pi
    if np.all(norm2 == 0.0):
        return 0.0 if single else np.zeros(F.shape[0])
    A, B = P.matrix, Q.matrix
    sigma_norm, radius = _complement_norm_and_radius(A @ B, pi)
    if radius >= 1.0 - 1e-12:
        raise NonErgodic(
            f"product kernel has spectral radius {radius:.15f} on the "
            "complement of the constants"
        )
    # Contraction factor for the tail bound; P and Q themselves are
    # L2(pi)-contractions by reversibility.  When the one-step operator
    # norm is not itself contracting, the spectral radius still governs
    # the asymptotic decay.
    decay = sigma_norm if sigma_norm < 1.0 else (1.0 + radius) / 2.0

    sigma2 = norm2.copy()
    lev = Fbar * pi  # left vectors of the even-start covariance terms
    lodd = Fbar * pi
    t = 1
    scale = float(np.max(norm2))
    while True:
        if t % 2 == 1:
            lev = lev @ A
            lodd = lodd @ B
        else:
            lev = lev @ B
            lodd = lodd @ A
        sigma2 += (lev * Fbar).sum(axis=1) + (lodd * Fbar).sum(axis=1)
        tail = 8.0 * scale * decay ** (t // 2) / (1.0 - decay)
        if tail < tol:
            break
        if t >= max_terms:
            raise NonErgodic("covariance series failed to converge")
        t += 1
    return float(sigma2[0]) if single else sigma2


def lag_covariances(
    kernel: FiniteKernel, pi: np.ndarray, f: np.ndarray, max_lag: int
) -> np.ndarray:
    """Exact stationary covariances Cov(f(X_0), f(X_k)), k = 0..max_lag."""
    pi = np.asarray(pi, dtype=float)
    fbar = np.asarray(f, dtype=float) - pi @ f
    out = np.empty(max_lag + 1)
    left = pi * fbar
    out[0] = float(left @ fbar)
    for k in range(1, max_lag + 1):
        left = left @ kernel.matrix
        out[k] = float(left @ fbar)
    return out


def index_lag1_autocorrelation(spec: FiniteMixtureSpec) -> float:
    """Exact lag-1 autocorrelation of the label series under the Gibbs sampler."""
    G = build_gibbs_index_kernel(spec)
    pim = index_marginal(spec)
    h = np.arange(1, spec.n + 1, dtype=float)
    cov = lag_covariances(G, pim, h, 1)
    return float(cov[1] / cov[0])


def check_gibbs_iid_bound(
    spec: FiniteMixtureSpec, h, tol: float = 1e-10
) -> tuple[float, float]:
    """Exact Gibbs-chain asymptotic variance of h(m) vs its i.i.d. variance.

    Returns (sigma2_gibbs, var_iid) and raises OrderingViolation if the
    Gibbs variance falls below the i.i.d. one, which exact theory
    forbids.
    """
    G = build_gibbs_index_kernel(spec)
    pim = index_marginal(spec)
    hv = np.array([float(h(m)) for m in range(1, spec.n + 1)])
    var_iid = float(pim @ (hv - pim @ hv) ** 2)
    sigma2 = exact_asymptotic_variance_alternating(G, G, pim, hv, tol=min(tol, 1e-12))
    if sigma2 < var_iid - tol:
        raise OrderingViolation(
            f"Gibbs asymptotic variance {sigma2:g} below i.i.d. variance {var_iid:g}"
        )
    return sigma2, var_iid


def random_spec(
    rng: np.random.Generator, n: int, grid_size: int, with_proposal: bool = True
) -> FiniteMixtureSpec:
    """Random strictly positive spec: flat-Dirichlet masses throughout."""
    G = grid_size
    prob = rng.dirichlet(np.ones(n * G)).reshape(n, G)
    pseudo = np.stack([rng.dirichlet(np.ones(G)) for _ in range(n)])
    proposal = None
    if with_proposal:
        proposal = np.stack(
            [
                np.stack([rng.dirichlet(np.ones(G)) for _ in range(G)])
                for _ in range(n)
            ]
        )
    return FiniteMixtureSpec(n, np.arange(G, dtype=float), prob, pseudo, proposal)


def spec_from_log_densities(
    n: int,
    grid: np.ndarray,
    log_target,
    log_pseudo,
    log_proposal=None,
) -> FiniteMixtureSpec:
    """Discretize continuous densities to grid masses (normalized pointwise).

    ``log_target(m, z)`` and ``log_pseudo(j, u)`` are evaluated at the
    grid points; ``log_proposal(l, u, z)``, when given, fills the
    proposal slices.
    """
    grid = np.asarray(grid, dtype=float)
    G = len(grid)
    prob = np.array(
        [[np.exp(log_target(m, z)) for z in grid] for m in range(1, n + 1)]
    )
    prob /= prob.sum()
    pseudo = np.array(
        [[np.exp(log_pseudo(j, u)) for u in grid] for j in range(1, n + 1)]
    )
    pseudo /= pseudo.sum(axis=1, keepdims=True)
    proposal = None
    if log_proposal is not None:
        proposal = np.array(
            [
                [[np.exp(log_proposal(l, u, z)) for z in grid] for u in grid]
                for l in range(1, n + 1)
            ]
        )
        proposal /= proposal.sum(axis=2, keepdims=True)
    return FiniteMixtureSpec(n, grid, prob, pseudo, proposal)


def save_spec(spec: FiniteMixtureSpec, path) -> None:
    """Write a spec as tab-separated blocks with #grid/#pi/#pseudo/#proposal headers."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#grid\n")
        fh.write("\t".join(repr(float(v)) for v in spec.grid) + "\n")
        fh.write("#pi\n")
        for row in spec.prob:
            fh.write("\t".join(repr(float(v)) for v in row) + "\n")
        fh.write("#pseudo\n")
        for row in spec.pseudo:
            fh.write("\t".join(repr(float(v)) for v in row) + "\n")
        if spec.proposal is not None:
            fh.write("#proposal\n")
            for block in spec.proposal:
                for row in block:
                    fh.write("\t".join(repr(float(v)) for v in row) + "\n")


def load_spec(path) -> FiniteMixtureSpec:
    """Read a spec written by :func:`save_spec`."""
    sections: dict[str, list[list[float]]] = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                current = line[1:]
                sections[current] = []
                continue
            if current is None:
                raise ValueError(f"{path}: data before the first section header")
            sections[current].append([float(v) for v in line.split("\t")])
    for name in ("grid", "pi", "pseudo"):
        if name not in sections:
            raise ValueError(f"{path}: missing #{name} section")
    grid = np.array(sections["grid"][0])
    prob = np.array(sections["pi"])
    pseudo = np.array(sections["pseudo"])
    n, G = prob.shape
    proposal = None
    if "proposal" in sections:
        proposal = np.array(sections["proposal"]).reshape(n, G, G)
    return FiniteMixtureSpec(n, grid, prob, pseudo, proposal)
