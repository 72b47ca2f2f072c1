"""Carlin & Chib-type MCMC samplers for mixture targets, with an exact
finite-state oracle for machine-checking reversibility, invariance and
asymptotic-variance orderings."""

from .model import (
    AllZeroMass,
    InvalidCurrentState,
    MixtureTarget,
    ProposalFamily,
    PseudoPriorSet,
    PseudoPriorZero,
    State,
    cc_index_weights,
    conditional_index_weights,
    draw_index,
    extended_log_density,
    mh_log_acceptance,
)
from .samplers import (
    ChainTrace,
    ConfigError,
    MissingConditionalSampler,
    ModelBundle,
    SamplerConfig,
    SamplerId,
    cc_step,
    fcc_step,
    gibbs_step,
    mcc_step,
    mwg_step,
    run_chain,
)
from .diagnostics import (
    AcfEstimate,
    AsymptoticVarianceEstimate,
    acf,
    asymptotic_variance_batch_means,
    kde,
    trace_mean,
)

__version__ = "0.1.0"
