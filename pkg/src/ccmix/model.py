"""Mixture targets, pseudo-priors, proposals and the shared probability computations.

A mixture target is a (possibly unnormalized) density pi*(m, z) on
{1..n} x Z, where m is a discrete component label and z a continuous
value (a float for one-dimensional problems, an ndarray otherwise).
All probability arithmetic is done in log-space with max-subtraction so
that well-separated modes do not underflow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

_NEG_INF = float("-inf")

__all__ = [
    "MixtureTarget",
    "PseudoPriorSet",
    "ProposalFamily",
    "State",
    "AllZeroMass",
    "PseudoPriorZero",
    "InvalidCurrentState",
    "conditional_index_weights",
    "cc_index_weights",
    "mh_log_acceptance",
    "extended_log_density",
    "draw_index",
]


class AllZeroMass(ValueError):
    """Every component has zero target mass at the given point."""


class PseudoPriorZero(ValueError):
    """A pseudo-prior vanishes where the target does not."""


class InvalidCurrentState(ValueError):
    """The current state has zero target or proposal density."""


@dataclass(frozen=True)
class MixtureTarget:
    """Unnormalized density pi*(m, z) on {1..n} x Z.

    ``log_density(m, z)`` may return -inf for zero-mass points but never
    NaN.  ``conditional_sampler(m, rng)``, when present, draws exactly
    from pi*(dz | m); samplers that need exact conditional draws (Gibbs,
    CC, MCC) require it.
    """

    n: int
    z_dim: int
    log_density: Callable[[int, object], float]
    conditional_sampler: Optional[Callable[[int, np.random.Generator], object]] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("component count must be positive")
        if self.z_dim < 1:
            raise ValueError("z_dim must be positive")


@dataclass(frozen=True)
class PseudoPriorSet:
    """The n linking densities rho_j, each a proper probability density."""

    n: int
    log_density: Callable[[int, object], float]
    sampler: Callable[[int, np.random.Generator], object]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("component count must be positive")


@dataclass(frozen=True)
class ProposalFamily:
    """Proposal kernels R_l(u, dz) with transition densities r_l(u, z)."""

    n: int
    log_density: Callable[[int, object, object], float]
    sampler: Callable[[int, object, np.random.Generator], object]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("component count must be positive")


@dataclass(frozen=True)
class State:
    """A chain state (m, z) with component label m in {1..n}."""

    m: int
    z: object

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"component label must be >= 1, got {self.m}")
        z = self.z
        finite = math.isfinite(z) if isinstance(z, float) else bool(
            np.all(np.isfinite(z))
        )
        if not finite:
            raise ValueError("state z must be finite")


def _normalize_log_weights(logw: Sequence[float]) -> np.ndarray:
    top = max(logw)
    w = [0.0 if lw == _NEG_INF else math.exp(lw - top) for lw in logw]
    total = sum(w)
    return np.array([wi / total for wi in w])


def draw_index(weights: Sequence[float], rng: np.random.Generator) -> int:
    """Draw a component label 1..n by inverse CDF with a single uniform.

    Ties in the cumulative sums are resolved deterministically in label
    order, so the draw is reproducible given the RNG stream.
    """
    total = sum(weights)
    u = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i + 1
    return len(weights)


def conditional_index_weights(target: MixtureTarget, z) -> np.ndarray:
    """Conditional probabilities pi*(. | z) over the component labels.

    Raises AllZeroMass if every component has -inf log-density at z.
    """
    logw = [target.log_density(m, z) for m in range(1, target.n + 1)]
    if max(logw) == _NEG_INF:
        raise AllZeroMass(f"target has zero mass at z={z!r} for every component")
    return _normalize_log_weights(logw)


def cc_index_weights(
    target: MixtureTarget, pseudo: PseudoPriorSet, u: Sequence
) -> np.ndarray:
    """Index-move probabilities pi(. | u) of the Carlin & Chib sweep.

    Entry m is proportional to pi*(m, u_m) / rho_m(u_m); the ratio makes
    the result invariant under rescaling of the unnormalized target.
    ``u`` holds one point per component, u[m - 1] for label m.
    """
    if len(u) != target.n:
        raise ValueError(f"expected {target.n} auxiliary points, got {len(u)}")
    logw = [0.0] * target.n
    for m in range(1, target.n + 1):
        lt = target.log_density(m, u[m - 1])
        lr = pseudo.log_density(m, u[m - 1])
        if lr == _NEG_INF:
            if lt == _NEG_INF:
                # Both vanish; the ratio is undefined and the paper gives no
                # guidance, so the move gets zero weight.
                warnings.warn(
                    f"target and pseudo-prior both vanish at component {m}; "
                    "assigning zero move weight",
                    RuntimeWarning,
                )
                logw[m - 1] = _NEG_INF
                continue
            raise PseudoPriorZero(
                f"pseudo-prior {m} vanishes at u={u[m - 1]!r} "
                "where the target does not"
            )
        logw[m - 1] = lt - lr
    if max(logw) == _NEG_INF:
        raise AllZeroMass("every index-move weight is zero")
    return _normalize_log_weights(logw)


def mh_log_acceptance(
    target: MixtureTarget, proposal: ProposalFamily, ell: int, u, z
) -> float:
    """Log Metropolis-Hastings acceptance for the move u -> z within component ell.

    Returns min(0, log pi*(ell, z) + log r_ell(z, u)
                   - log pi*(ell, u) - log r_ell(u, z)).
    A proposed move to a zero-mass point gets log-acceptance -inf (never NaN).
    """
    lt_u = target.log_density(ell, u)
    lr_uz = proposal.log_density(ell, u, z)
    if lt_u == _NEG_INF or lr_uz == _NEG_INF:
        raise InvalidCurrentState(
            f"zero target or proposal density at current point (ell={ell})"
        )
    lt_z = target.log_density(ell, z)
    lr_zu = proposal.log_density(ell, z, u)
    if lt_z == _NEG_INF or lr_zu == _NEG_INF:
        return _NEG_INF
    return min(0.0, lt_z + lr_zu - lt_u - lr_uz)


def extended_log_density(
    target: MixtureTarget, pseudo: PseudoPriorSet, m: int, u: Sequence
) -> float:
    """Log-density of the extended target: log pi*(m, u_m) + sum_{j != m} log rho_j(u_j)."""
    if len(u) != target.n:
        raise ValueError(f"expected {target.n} auxiliary points, got {len(u)}")
    total = target.log_density(m, u[m - 1])
    for j in range(1, target.n + 1):
        if j != m:
            total += pseudo.log_density(j, u[j - 1])
    return total
