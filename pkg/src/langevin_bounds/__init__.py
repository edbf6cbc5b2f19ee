"""Explicit convergence bounds for Euler-Maruyama chains via reflection coupling."""

from .errors import BoundViolation, ConsistencyError, PreconditionError
from .kernel import ChainConfig, CoupleState, Schedule, coupled_step, em_step, simulate_chain, simulate_coupled
from .lyapunov import LyapunovCertificate, certificate_C1, certificate_C2, certificate_C3, pairify, verify_drift_mc
from .minorize import alpha_lower, coalescence_upper_bound, minorization_eps, tv_decay_bound, xi, xi_schedule
from .model import (
    DriftSpec,
    KappaProfile,
    MixtureSpec,
    ProjectionSpec,
    StepMapSpec,
    classify_kappa,
    gaussian_mixture_drift,
    project,
)
from .rates import (
    PsiSpec,
    RateReport,
    asymptotic_and_competitor_rates,
    bound_curve,
    eps_inf,
    limit_constants,
    psi,
    theorem8_constants,
    w_constants,
)

__version__ = "0.1.0"

__all__ = [
    "BoundViolation", "ChainConfig", "ConsistencyError", "CoupleState", "DriftSpec", "KappaProfile",
    "LyapunovCertificate", "MixtureSpec", "PreconditionError", "ProjectionSpec", "PsiSpec", "RateReport",
    "Schedule", "StepMapSpec", "alpha_lower", "asymptotic_and_competitor_rates", "bound_curve",
    "certificate_C1", "certificate_C2", "certificate_C3", "classify_kappa", "coalescence_upper_bound",
    "coupled_step", "em_step", "eps_inf", "gaussian_mixture_drift", "limit_constants", "minorization_eps",
    "pairify", "project", "psi", "simulate_chain", "simulate_coupled", "theorem8_constants", "tv_decay_bound",
    "verify_drift_mc", "w_constants", "xi", "xi_schedule",
]
