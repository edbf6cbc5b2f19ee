"""Coalescence-time calculus for the reflection coupling.

The central quantity is the accumulated noise-to-contraction ratio

    xi_n = gamma * sum_{k=1..n} (1 + gamma kappa)^(-k),

which controls how likely the coupled pair is to have merged after ``n``
steps. Blocks of ``ell * ceil(1/gamma)`` steps are the natural unit.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import PreconditionError
from .kernel import Schedule
from .model import KappaProfile
from .normal import norm_cdf

LINEAR_SWITCH = 1e-12


def steps_per_unit(gamma: float) -> int:
    """``ceil(1 / gamma)``, robust to ``1/gamma`` landing a hair above an integer."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    inv = 1.0 / gamma
    nearest = round(inv)
    if nearest >= 1 and abs(inv - nearest) <= 1e-9 * nearest:
        return int(nearest)
    return int(math.ceil(inv))


def _one_minus_exp_over(expo: float, kappa: float) -> float:
    """``(1 - e^(-expo)) / kappa`` for ``expo`` and ``kappa`` of the same sign, inf on overflow."""
    if -expo > 709.0:
        return math.inf
    return -math.expm1(-expo) / kappa


def xi_closed_form(kappa: float, gamma: float, n: int) -> float:
    """Closed-form ``xi_n`` for a fixed value of ``kappa``."""
    gk = gamma * kappa
    if gk <= -1.0:
        raise PreconditionError(f"explosive profile: gamma kappa = {gk} <= -1")
    if abs(gk) < LINEAR_SWITCH:
        return gamma * n
    return _one_minus_exp_over(n * math.log1p(gk), kappa)


def xi(profile: KappaProfile, gamma: float, n: int | None = None, ell: int | None = None) -> float:
    """``xi_n`` for ``n`` raw steps, or for ``ell`` blocks of ``ceil(1/gamma)`` steps."""
    if (n is None) == (ell is None):
        raise ValueError("give exactly one of n or ell")
    if n is None:
        n = ell * steps_per_unit(gamma)
    if n < 0:
        raise ValueError("n must be nonnegative")
    return xi_closed_form(profile(gamma), gamma, n)


def xi_limit(profile: KappaProfile, ell: int) -> float:
    """Limit of ``xi`` over ``ell`` blocks as ``gamma -> 0``."""
    k0 = profile.limit
    if math.isinf(k0):
        return 0.0
    if abs(k0) < LINEAR_SWITCH:
        return float(ell)
    return _one_minus_exp_over(ell * k0, k0)


def alpha_lower(profile: KappaProfile, gamma: float, ell: int) -> float:
    """Lower bound on ``xi`` over ``ell`` blocks that only depends on the sign class."""
    kappa = profile(gamma)
    if profile.sign_class == "ii":
        return float(ell)
    if abs(kappa) < LINEAR_SWITCH:
        return float(ell)
    if profile.sign_class == "i":
        return _one_minus_exp_over(ell * kappa, kappa)
    return _one_minus_exp_over(ell * kappa / (1.0 + gamma * kappa), kappa)


def coalescence_upper_bound(t: float, xi_value: float) -> float:
    """Bound on the probability that pairs started at distance ``t`` have not merged."""
    if not xi_value > 0:
        raise ValueError("xi must be positive")
    if t == 0:
        return 0.0
    return 1.0 - 2.0 * norm_cdf(-t / (2.0 * math.sqrt(xi_value)))


EPS_BLOCK = 2.0 * norm_cdf(-0.5)


def minorization_eps(
    mode: str,
    *,
    radius: float | None = None,
    ell: int | None = None,
    t: float | None = None,
    kappa_plus: float | None = None,
    gamma_bar: float | None = None,
) -> float:
    """Uniform probability that the pair merges within ``ell`` blocks.

    Mode ``"a"`` holds for pairs within distance ``radius`` once
    ``ell >= ceil(radius^2)`` and gives ``2 Phi(-1/2)``. Mode ``"b"`` uses
    the supremum ``kappa_plus`` of a positive profile and the pair
    distance ``t``.
    """
    if mode == "a":
        if radius is None or ell is None:
            raise ValueError("mode a needs radius and ell")
        if ell < math.ceil(radius * radius):
            raise PreconditionError(
                f"block length too short: ell={ell} < ceil(radius^2)={math.ceil(radius * radius)}"
            )
        if t is not None and t > radius:
            raise ValueError("mode a only covers distances t <= radius")
        return EPS_BLOCK
    if mode == "b":
        if kappa_plus is None or gamma_bar is None or t is None:
            raise ValueError("mode b needs kappa_plus, gamma_bar and t")
        if math.isinf(kappa_plus):
            return 0.0 if t > 0 else 1.0
        scale = math.sqrt(1.0 + gamma_bar) * math.sqrt(1.0 + max(kappa_plus, 0.0))
        return 2.0 * norm_cdf(-scale * t / 2.0)
    raise ValueError(f"unknown mode {mode!r}")


def tv_decay_bound(mode: str, x, samples, ell: int, kappa_minus: float | None = None) -> float:
    """Monte Carlo bound on the distance to stationarity after ``ell`` blocks.

    ``samples`` stand in for the invariant law of the chain. Mode ``"a"``
    is for a negative profile (pass its supremum ``kappa_minus``), mode
    ``"b"`` for a nonpositive one.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.size == 0:
        raise PreconditionError("empty sample set")
    x = np.asarray(x, dtype=float).reshape(-1)
    if pts.ndim == 1:
        pts = pts[:, None] if x.size == 1 else pts[None, :]
    dist = np.linalg.norm(pts - x, axis=1)
    if mode == "a":
        if kappa_minus is None or not kappa_minus < 0:
            raise ValueError("mode a needs a negative kappa_minus")
        scale = math.sqrt(-kappa_minus) / (2.0 * math.sqrt(math.expm1(-ell * kappa_minus)))
    elif mode == "b":
        scale = 1.0 / (2.0 * math.sqrt(ell))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(1.0 - 2.0 * np.mean(norm_cdf(-scale * dist)))


def xi_schedule(sched: Schedule, k: int) -> float:
    """Inhomogeneous ``xi``: ``sum_i sigma_i^2 / prod_{j<=i} (1 + w_j)`` over ``i <= k``."""
    if not 0 <= k <= len(sched):
        raise ValueError("k exceeds the schedule length")
    if k == 0:
        return 0.0
    sig = np.asarray(sched.sigmas[:k])
    warp = np.asarray(sched.warps[:k])
    log_prod = np.cumsum(np.log1p(warp))
    return float(math.fsum(sig**2 * np.exp(-log_prod)))
