"""Assembly of explicit geometric convergence constants.

The main path combines a drift certificate ``(lam, A, small set)`` with a
uniform coupling probability ``eps`` over the small set into

    W_c(delta_x R^k, delta_y R^k)
        <= lam^(k g/4) [D1 c(x,y) + D2 1{x != y}] + C1 rho^(k g/4) 1{x != y},

and derives Wasserstein constants, small-stepsize limits, alternative
constants from cruder Harris-type arguments and the rates of competing
analyses.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping

import numpy as np
from scipy.integrate import quad

from .errors import ConsistencyError, PreconditionError
from .lyapunov import LyapunovCertificate, MomentConstants, c1_moment_constants, certificate_C1, expansion_cap
from .minorize import EPS_BLOCK, LINEAR_SWITCH, steps_per_unit, xi, xi_limit
from .model import DriftSpec, KappaProfile, kappa_profile
from .normal import norm_cdf, norm_pdf

PSI_MODES = ("b3", "b4")


# --------------------------------------------------------------------------
# Coupling probability over a block and its infimum
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PsiSpec:
    """Lower bound on the probability of merging within ``ell`` blocks.

    Mode ``b3`` is ``2 Phi(-t / (2 sqrt(xi)))``. Mode ``b4`` adds the
    constant ``2 Phi(-1/2)`` for distances ``t <= radius`` once
    ``ell >= ceil(radius)^2``; its profile should then be ``kappa = 0``.
    """

    mode: str
    ell: int
    profile: KappaProfile
    radius: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in PSI_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError("ell must be a positive integer")
        if self.mode == "b4" and self.radius is None:
            raise ValueError("b4 mode needs the small-set radius")

    @property
    def constant_branch(self) -> bool:
        return self.mode == "b4" and self.ell >= math.ceil(self.radius) ** 2


def psi(spec: PsiSpec, gamma: float, t: float) -> float:
    """Merging-probability bound for a pair at distance ``t``."""
    if t == 0:
        return 1.0
    if spec.constant_branch and t <= spec.radius:
        return EPS_BLOCK
    value = xi(spec.profile, gamma, ell=spec.ell)
    if value <= 0:
        return 0.0
    return 2.0 * norm_cdf(-t / (2.0 * math.sqrt(value)))


@dataclass(frozen=True)
class XiInfimum:
    value: float
    gamma: float
    grid_value: float

    @property
    def agrees(self) -> bool:
        return self.value <= self.grid_value * (1.0 + 1e-12)


def _xi_vector(kappa: np.ndarray, gamma: np.ndarray, n: np.ndarray) -> np.ndarray:
    gk = gamma * kappa
    if np.any(gk <= -1.0):
        raise PreconditionError("explosive profile: gamma kappa(gamma) <= -1")
    small = np.abs(gk) < LINEAR_SWITCH
    safe = np.where(small, 1.0, kappa)
    closed = -np.expm1(-n * np.log1p(np.where(small, 0.0, gk))) / safe
    return np.where(small, gamma * n, closed)


def xi_infimum(profile: KappaProfile, gamma_bar: float, ell: int) -> XiInfimum:
    """Infimum over ``gamma`` in ``(0, gamma_bar]`` of ``xi`` over ``ell`` blocks.

    For the closed-form profiles the block count ``ceil(1/gamma)`` is
    piecewise constant, so the infimum is attained at, or approached
    towards, the endpoints ``1/j`` of those pieces, at ``gamma_bar`` or in
    the ``gamma -> 0`` limit; all of these are evaluated. A 64-point grid
    value is reported alongside as a cross-check. Callable profiles use
    the grid only.
    """
    if gamma_bar == 0:
        lim = xi_limit(profile, ell)
        return XiInfimum(lim, 0.0, lim)
    grid = gamma_bar * np.arange(1, 65) / 64.0
    grid_vals = np.array([xi(profile, g, ell=ell) for g in grid])
    grid_min = float(grid_vals.min())
    if profile.func is not None:
        i = int(np.argmin(grid_vals))
        return XiInfimum(grid_min, float(grid[i]), grid_min)
    j0 = steps_per_unit(gamma_bar)
    dense = np.arange(j0, j0 + 4096, dtype=float)
    sparse = np.unique(np.geomspace(j0 + 4096, 1e9, 600).astype(np.int64)).astype(float)
    js = np.concatenate([dense, sparse])
    gam = 1.0 / js
    kap = profile.c0 + profile.c1 * gam + profile.c_inv * js
    at_left = _xi_vector(kap, gam, ell * js)
    towards = _xi_vector(kap, gam, ell * (js + 1.0))
    cand_vals = [float(at_left.min()), float(towards.min()),
                 xi(profile, gamma_bar, ell=ell), xi_limit(profile, ell)]
    cand_gam = [float(gam[np.argmin(at_left)]), float(gam[np.argmin(towards)]), gamma_bar, 0.0]
    i = int(np.argmin(cand_vals))
    return XiInfimum(cand_vals[i], cand_gam[i], grid_min)


@dataclass(frozen=True)
class EpsInf:
    """Uniform merging probability over the small set."""

    value: float
    xi: float | None
    gamma: float | None
    grid_value: float
    agrees: bool


def eps_inf(spec: PsiSpec, gamma_bar: float, diameter: float) -> EpsInf:
    """Infimum of ``psi`` over stepsizes up to ``gamma_bar`` and distances up to ``diameter``.

    ``psi`` decreases in the distance, so the distance infimum sits at
    ``diameter``.
    """
    if diameter == 0:
        return EpsInf(1.0, None, None, 1.0, True)
    if spec.constant_branch and diameter <= spec.radius:
        return EpsInf(EPS_BLOCK, None, None, EPS_BLOCK, True)
    inf = xi_infimum(spec.profile, gamma_bar, spec.ell)

    def from_xi(v: float) -> float:
        return 0.0 if v <= 0 else 2.0 * norm_cdf(-diameter / (2.0 * math.sqrt(v)))

    value, grid_value = from_xi(inf.value), from_xi(inf.grid_value)
    if spec.constant_branch:
        value, grid_value = min(value, EPS_BLOCK), min(grid_value, EPS_BLOCK)
    return EpsInf(value, inf.value, inf.gamma, grid_value, inf.agrees)


# --------------------------------------------------------------------------
# Main rate assembly
# --------------------------------------------------------------------------


def harris_rate(lam: float, eps: float, c: float) -> float:
    """``rho`` with ``log rho = log(lam) log(1-eps) / (log(1-eps) - log c)``.

    Degenerate inputs: ``eps <= 0`` gives 1 and ``eps >= 1`` gives ``lam``.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    if not c >= 1.0:
        raise ValueError("the small-set constant c must be at least 1")
    if eps <= 0:
        return 1.0
    if eps >= 1:
        return lam
    log_one_minus = math.log1p(-eps)
    log_c = math.log(c)
    # Factored as lam * correction so that c = 1 returns lam exactly.
    return lam * math.exp(math.log(lam) * log_c / (log_one_minus - log_c))


def _log_harris_rate(lam: float, eps: float, log_c: float) -> float:
    if eps <= 0:
        return 0.0
    if eps >= 1:
        return math.log(lam)
    lo = math.log1p(-eps)
    return math.log(lam) * lo / (lo - log_c)


@dataclass(frozen=True)
class RateReport:
    """Constants of the two-rate bound and their ingredients.

    ``log_inv_rate`` is ``1 / log(1/rho)``; ``log_inv_bound`` is the
    closed-form upper bound on it when available.
    """

    lam: float
    rho: float
    D1: float
    D2: float
    C1: float
    eps: float
    B_d: float
    c1: float
    A: float
    ell: int
    gamma_bar: float
    log_inv_rate: float
    log_inv_bound: float | None = None
    warnings: tuple[str, ...] = ()
    extras: Mapping[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["warnings"] = list(self.warnings)
        out["extras"] = dict(self.extras)
        return out


def theorem8_constants(
    cert: LyapunovCertificate | None,
    eps: float,
    ell: int,
    gamma_bar: float | None = None,
    *,
    lam: float | None = None,
    A: float | None = None,
    B_d: float | None = None,
) -> RateReport:
    """Constants ``(rho, D1, D2, C1)`` from a certificate and a merging probability.

    Either pass a certificate or the three numbers ``lam``, ``A`` and
    ``B_d = sup_C V``.
    """
    if cert is not None:
        lam = cert.lam if lam is None else lam
        A = cert.A if A is None else A
        B_d = cert.sup_on_small_set if B_d is None else B_d
        gamma_bar = cert.gamma_bar if gamma_bar is None else gamma_bar
    if lam is None or A is None or B_d is None or gamma_bar is None:
        raise ValueError("need lam, A, B_d and gamma_bar")
    if not 0.0 < lam < 1.0:
        raise PreconditionError(f"rate lam={lam} must lie in (0, 1)")
    if not B_d >= 1.0:
        raise PreconditionError(f"small-set supremum B_d={B_d} of a Lyapunov function must be at least 1")
    if not (0.0 <= eps <= 1.0):
        raise ValueError("eps must lie in [0, 1]")
    warnings: list[str] = []
    log_inv_lam = -math.log(lam)
    D1 = 1.0 + 4.0 * A / (log_inv_lam * lam**gamma_bar)
    horizon = (1.0 + gamma_bar) * ell
    if A > 0:
        log_growth = math.log(A) + horizon * log_inv_lam + math.log(horizon)
        log_c1 = float(np.logaddexp(math.log(B_d), log_growth))
        growth = _safe_exp(log_growth)
    else:
        growth, log_c1 = 0.0, math.log(B_d)
    c1 = _safe_exp(log_c1)
    D2 = D1 * growth
    log_rho = _log_harris_rate(lam, eps, log_c1)
    if eps <= 0:
        warnings.append("eps is 0: no geometric rate (rho = 1)")
    if eps >= 1:
        warnings.append("eps is 1: immediate coupling, rho = lam")
    rho = math.exp(log_rho)
    if A == 0:
        C1 = 0.0
    elif log_rho == 0:
        C1 = math.inf
    else:
        C1 = 8.0 * A / (-log_rho * rho**gamma_bar)
    log_inv_rate = math.inf if log_rho == 0 else -1.0 / log_rho
    bound = None
    if gamma_bar <= 1 and 0 < eps <= 1 - math.exp(-1):
        bound = (1.0 + math.log(B_d) + math.log1p(2.0 * A * ell) + 2.0 * ell * log_inv_lam) / (
            log_inv_lam * eps
        )
    return RateReport(
        lam=lam, rho=rho, D1=D1, D2=D2, C1=C1, eps=eps, B_d=B_d, c1=c1, A=A, ell=ell,
        gamma_bar=gamma_bar, log_inv_rate=log_inv_rate, log_inv_bound=bound, warnings=tuple(warnings),
    )


def _safe_exp(v: float) -> float:
    return math.exp(v) if v < 709.0 else math.inf


def bound_curve(
    report: RateReport, c_value: float, off_diagonal: float, k, gamma: float, collapsed: bool = False
):
    """Bound on the ``c``-Wasserstein distance after ``k`` steps of size ``gamma``.

    ``c_value`` is ``c(x0, y0)`` and ``off_diagonal`` is ``1{x0 != y0}``.
    ``collapsed`` uses the single-rate form ``(D1 + D2 + C1) rho^(k g/4) c``.
    """
    k = np.asarray(k, dtype=float)
    if off_diagonal == 0 and c_value == 0:
        out = np.zeros_like(k)
    else:
        lam_pow = np.exp(k * gamma / 4.0 * math.log(report.lam))
        rho_pow = np.exp(k * gamma / 4.0 * math.log(report.rho))
        if collapsed:
            out = (report.D1 + report.D2 + report.C1) * rho_pow * c_value
        else:
            first = report.D1 * c_value + (report.D2 * off_diagonal if off_diagonal else 0.0)
            out = lam_pow * first + (report.C1 * rho_pow * off_diagonal if off_diagonal else 0.0)
    return float(out) if out.ndim == 0 else out


def falsified(report: RateReport, power: float = 2.0) -> RateReport:
    """Copy of a report with ``rho`` raised to ``power`` (a control bound)."""
    return replace(report, rho=report.rho**power)


# --------------------------------------------------------------------------
# Wasserstein constants
# --------------------------------------------------------------------------


def psi_slope_bound(profile: KappaProfile, gamma_bar: float) -> float:
    """Lower bound ``-(pi inf xi)^(-1/2)`` on the slope of ``psi`` at ``t = 0`` over one block."""
    inf = xi_infimum(profile, gamma_bar, 1).value
    if inf <= 0:
        return -math.inf
    return -1.0 / math.sqrt(math.pi * inf)


@dataclass(frozen=True)
class WpConstant:
    p: int
    alpha: float
    q: float
    q_bar: int
    B: float
    D4: float
    exponent: float


@dataclass(frozen=True)
class WConstants:
    """``W1 <= D3 rho^(k g/4) (|x-y| + ...)`` and the ``Wp`` constants ``D4``."""

    D3: float
    branch_short: float
    branch_long: float
    slope: float
    theta: float
    varkappa: float
    wp: tuple[WpConstant, ...] = ()


def _moment_lookup(table, q: int) -> tuple[float, float]:
    if callable(table):
        entry = table(q)
    elif table is not None and q in table:
        entry = table[q]
    else:
        raise PreconditionError(f"insufficient moment data: order {q} is not tabulated")
    if isinstance(entry, MomentConstants):
        return entry.lam, entry.A
    return float(entry[0]), float(entry[1])


def w_constants(
    report: RateReport,
    theta: float,
    varkappa: float,
    slope: float,
    moment_table: Mapping[int, Any] | Callable[[int], Any] | None = None,
    p_alpha: Iterable[tuple[int, float]] = (),
) -> WConstants:
    """Wasserstein-1 and Wasserstein-p constants from a rate report.

    ``theta`` is the weight in ``V = 1 + theta |x-y|``, ``varkappa`` the
    one-step expansion cap of ``|x-y|`` and ``slope`` the (nonpositive)
    slope bound of :func:`psi_slope_bound`; its magnitude is used.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    g = report.gamma_bar
    rho_q = report.rho**0.25
    short = math.exp(varkappa * (1.0 + g)) / report.rho ** ((1.0 + g) / 4.0)
    total = report.D1 + report.D2 + report.C1
    long = (abs(slope) * total / rho_q + theta * report.D1 * short) / theta
    D3 = max(short, long)
    entries = []
    for p, alpha in p_alpha:
        if not alpha > p:
            raise PreconditionError(f"invalid interpolation exponent: alpha={alpha} must exceed p={p}")
        q = p * (alpha - 1.0) / (alpha - p)
        q_bar = int(math.ceil(q - 1e-12))
        lam_q, A_q = _moment_lookup(moment_table, q_bar)
        if not math.isfinite(A_q):
            # Jensen's step holds for any integer order >= q; use the next one.
            q_bar += 1
            lam_q, A_q = _moment_lookup(moment_table, q_bar)
        B = A_q / (math.log(1.0 / lam_q) * lam_q**g)
        D4p = D3 ** (p / alpha) * max(1.0, B ** ((1.0 - 1.0 / alpha) * p / q_bar))
        entries.append(WpConstant(int(p), float(alpha), q, q_bar, B, D4p ** (1.0 / p), 1.0 / (4.0 * alpha)))
    return WConstants(D3, short, long, slope, theta, varkappa, tuple(entries))


# --------------------------------------------------------------------------
# Small-stepsize limits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitReport:
    values: dict[str, float]
    grid: dict[float, dict[str, float]]
    extrapolated: dict[str, float]
    max_rel_error: float
    agrees: bool


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(b), 1e-300)


def limit_constants(
    builder: Callable[[float], Mapping[str, float]],
    gamma_grid: Iterable[float] = (1e-1, 1e-2, 1e-3),
    extrapolation_grid: Iterable[float] = (2e-3, 1e-3, 5e-4),
    rtol: float = 1e-6,
) -> LimitReport:
    """Constants at ``gamma_bar = 0`` with convergence and extrapolation checks.

    ``builder(gamma_bar)`` returns a mapping of named constants. Values at
    the decreasing ``gamma_grid`` must approach the substituted limit
    monotonically; a polynomial extrapolation through
    ``extrapolation_grid`` must match it to ``rtol``.
    """
    limit = {k: float(v) for k, v in builder(0.0).items()}
    grid = {float(g): {k: float(v) for k, v in builder(g).items()} for g in gamma_grid}
    for key, v0 in limit.items():
        errs = [_rel(grid[g][key], v0) for g in sorted(grid, reverse=True)]
        if errs[-1] > errs[0] + 1e-15 or any(b > a * (1 + 1e-9) + 1e-15 for a, b in zip(errs, errs[1:])):
            raise ConsistencyError(f"internal consistency failure: {key} does not converge to its limit")
    hs = np.array(sorted(float(h) for h in extrapolation_grid))
    samples = [builder(h) for h in hs]
    extrapolated = {}
    worst = 0.0
    for key, v0 in limit.items():
        ys = np.array([float(s[key]) for s in samples])
        coeffs = np.polyfit(hs, ys, len(hs) - 1)
        extrapolated[key] = float(np.polyval(coeffs, 0.0))
        worst = max(worst, _rel(extrapolated[key], v0))
    return LimitReport(limit, grid, extrapolated, worst, worst <= rtol)


def c1_rate_builder(drift: DriftSpec, ell: int | None = None, mode: str = "b3") -> Callable[[float], dict]:
    """``gamma_bar -> {lam, rho, D1, D2, C1, eps}`` for the contraction-at-infinity regime."""
    m1, r1 = drift.conv_inf
    ell = math.ceil(r1 * r1) if ell is None else ell
    regime = "cocoercive" if mode == "b4" else "lipschitz"

    def build(gamma_bar: float) -> dict:
        cert = certificate_C1(drift, gamma_bar)
        profile = kappa_profile(drift, gamma_bar, regime)
        spec = PsiSpec(mode, ell, profile, radius=r1)
        eps = eps_inf(spec, gamma_bar, cert.diameter).value
        rep = theorem8_constants(cert, eps, ell, gamma_bar)
        return {"lam": rep.lam, "rho": rep.rho, "D1": rep.D1, "D2": rep.D2, "C1": rep.C1, "eps": rep.eps}

    return build


# --------------------------------------------------------------------------
# Closed-form summaries and competing analyses
# --------------------------------------------------------------------------

PHI_HALF = norm_cdf(-0.5)


def c1_constant() -> float:
    """``(1/16) int_{1/4}^{3/8} (1 - e^(u - 1/2)) phi(u) du``."""
    val, _ = quad(lambda u: (1.0 - math.exp(u - 0.5)) * norm_pdf(u), 0.25, 0.375, epsabs=1e-8)
    return val / 16.0


def c2_constant() -> float:
    """``4 min(int_0^{1/2} u^2 (1 - e^(u-1/2)) phi, (1 - 1/e) int_0^{1/2} u^3 phi)``."""
    a, _ = quad(lambda u: u * u * (1.0 - math.exp(u - 0.5)) * norm_pdf(u), 0.0, 0.5, epsabs=1e-8)
    b, _ = quad(lambda u: u**3 * norm_pdf(u), 0.0, 0.5, epsabs=1e-8)
    return 4.0 * min(a, (1.0 - math.exp(-1.0)) * b)


def _tail_denominator(m: float, r: float) -> float:
    """``Phi(-sqrt(-m) r / sqrt(2 - 2 exp(2 m r^2)))`` for ``m < 0``."""
    if m >= 0:
        raise PreconditionError("the curvature-dependent bound needs m < 0")
    return norm_cdf(-math.sqrt(-m) * r / math.sqrt(-2.0 * math.expm1(2.0 * m * r * r)))


def _over(num: float, den: float) -> float:
    return num / den if den > 0 else math.inf


def ours_log_inv_bounds(m: float, m_plus: float, L: float, R: float, mode: str, gamma_bar: float) -> dict:
    """Upper bounds on ``1/log(1/rho)`` under contraction at infinity.

    ``mode`` is ``"B4"`` (nonexpansive step) or ``"B3"`` (one-sided
    curvature ``m < 0``). Keys ending in ``_limit`` are the
    ``gamma_bar -> 0`` versions.
    """
    base = 1.0 + math.log(2.0)
    eff = m_plus - gamma_bar * L * L / 2.0
    if eff <= 0:
        raise PreconditionError("stepsize-cap violation: gamma_bar L^2 / 2 must stay below m_plus")
    r2 = 1.0 + R * R
    out: dict[str, float] = {}
    if mode == "B4":
        out["discrete"] = (base + math.log1p(2.0 * r2 * m_plus) + 2.0 * r2 * eff) / (eff * PHI_HALF)
        out["discrete_limit"] = base / (m_plus * PHI_HALF) + 4.0 * r2 / PHI_HALF
        out["continuous"] = base / (PHI_HALF * m_plus) + 4.0 * R * R / PHI_HALF
        return out
    if mode != "B3":
        raise ValueError("mode must be 'B4' or 'B3'")
    ell = math.ceil(R * R)
    profile = KappaProfile.affine_profile(-2.0 * m, L * L, max(gamma_bar, 1e-300))
    xi_val = xi(profile, gamma_bar, ell=ell) if gamma_bar > 0 else xi_limit(profile, ell)
    denom = norm_cdf(-R / (2.0 * math.sqrt(xi_val)))
    shift = m_plus - m
    out["discrete"] = _over(base + math.log1p(2.0 * r2 * shift) + 2.0 * r2 * eff, eff * denom)
    tail = _tail_denominator(m, R)
    out["discrete_limit_printed"] = _over(base + math.log1p(2.0 * shift) + 2.0 * m_plus, m_plus * tail)
    out["continuous"] = _over(base + math.log1p(2.0 * shift * r2) + 2.0 * m_plus * r2, m_plus * tail)
    return out


def c2_log_inv_bounds(m2_plus: float, A: float, R: float, m: float | None = None) -> dict:
    """Upper bounds on ``1/log(1/rho)`` in the radial regime (limit versions)."""
    num = 1.0 + 2.0 * math.log1p(R * R) + math.log1p(2.0 * A) + 2.0 * (1.0 + 4.0 * R * R) * m2_plus
    out = {"nonexpansive": num / (m2_plus * PHI_HALF)}
    if m is not None and m < 0:
        out["curvature"] = _over(num, m2_plus * norm_cdf(-2.0 * math.sqrt(-m) * R / math.sqrt(-2.0 * math.expm1(2.0 * m * R * R))))
    return out


def c3_log_inv_bounds(m3: float, A: float, R: float, m: float | None = None) -> dict:
    """Upper bounds on ``1/log(1/rho)`` in the weak radial regime (limit versions)."""
    num = 2.0 * (1.0 + m3 * (1.0 + R) / 4.0 + math.log1p(2.0 * A) + (1.0 + 4.0 * R * R) * m3)
    out = {"nonexpansive": num / (m3 * PHI_HALF)}
    if m is not None and m < 0:
        out["curvature"] = _over(num, m3 * norm_cdf(-2.0 * math.sqrt(-m) * R / math.sqrt(-2.0 * math.expm1(2.0 * m * R * R))))
    return out


def _rate_from_loglog(v: float) -> float:
    """``rho`` with ``log(1/log(1/rho)) = v``."""
    if -v > 709.0:
        return 0.0
    return math.exp(-math.exp(-v))


def asymptotic_and_competitor_rates(
    m: float, m_plus: float, L: float, R: float, mode: str = "B3", gamma_bar: float = 0.0
) -> dict:
    """Leading-order ``log(1/log(1/rho))`` of ours and of competing analyses.

    Returns the quadrature constants, the closed-form bounds of
    :func:`ours_log_inv_bounds` (when ``gamma_bar > 0`` or the regime
    allows), the asymptotic values and the normalised rates
    ``beta = -4 log(1/log(1/rho)) / (m R^2)``.
    """
    c1, c2 = c1_constant(), c2_constant()
    mr2 = m * R * R
    lr2 = L * R * R
    ours = -(mr2 / 4.0) / (-math.expm1(2.0 * mr2)) if m != 0 else R * R / 8.0
    asym = {
        "ours": ours,
        "eberle_majka_tv": -mr2 / c1,
        "eberle_majka_w1": -49.0 * mr2 / (6.0 * c2),
        "majka_mijatovic_szpruch": lr2 / (6.0 * c2),
        "eberle": -mr2 / 4.0,
        "luo_wang": (-m + max(m_plus, 0.0)) * R * R / 4.0 if m_plus is not None else math.nan,
    }
    if gamma_bar > 0 and m < 0:
        grid = np.linspace(gamma_bar / 256.0, gamma_bar, 256)
        vals = (1.0 - grid * L * L / (2.0 * m)) / (
            -np.expm1(R * R * (2.0 * m - grid * L * L) / (1.0 - 2.0 * m * grid + grid**2 * L * L))
        )
        asym["ours_discrete"] = float(-(mr2 / 4.0) * vals.max())
    beta = {
        "ours": 1.0 / (-math.expm1(2.0 * mr2)) if m != 0 else math.inf,
        "luo_wang": 1.0 - m_plus / m if m != 0 else math.inf,
        "eberle": 1.0,
        "eberle_majka_tv": 4.0 / c1,
        "eberle_majka_w1": 4.0 * 49.0 / (6.0 * c2),
        "majka_mijatovic_szpruch": 4.0 / (6.0 * c2),
    }
    out: dict[str, Any] = {
        "c1": c1,
        "c2": c2,
        "log_log_inv": asym,
        "rho": {k: _rate_from_loglog(v) for k, v in asym.items()},
        "beta": beta,
    }
    try:
        out["log_inv_bounds"] = ours_log_inv_bounds(m, m_plus, L, R, mode, gamma_bar)
    except PreconditionError as exc:
        out["log_inv_bounds"] = {"unavailable": str(exc)}
    return out


# --------------------------------------------------------------------------
# Generic Harris-type constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HarrisConstants:
    """Constants of the drift-plus-minorization argument on a general kernel."""

    lam1: float
    A1: float
    eps: float
    n0: int
    M: float
    rho: float
    lam2: float | None = None
    A2: float | None = None
    rho_tilde: float | None = None
    lam_tilde: float | None = None
    r_rho: float | None = None
    r_lam: float | None = None

    def xi_value(self, v1: float) -> float:
        return v1 + self.A1 * self.lam1 ** (-self.n0) * self.n0

    def single_bound(self, n, d_xy: float, v1_xy: float):
        """``min(rho^n (M Xi + d), rho^(n/2)(1 + d) + lam1^(n/2) Xi)``."""
        n = np.asarray(n, dtype=float)
        x = self.xi_value(v1_xy)
        first = self.rho**n * (self.M * x + d_xy)
        second = self.rho ** (n / 2.0) * (1.0 + d_xy) + self.lam1 ** (n / 2.0) * x
        return np.minimum(first, second)

    def two_function_bound(self, n, d_xy: float, v1_xy: float, v2_xy: float):
        if self.lam2 is None:
            raise ValueError("no second drift condition was supplied")
        n = np.asarray(n, dtype=float)
        x = self.xi_value(v1_xy)
        rt = self.rho_tilde ** (n / 4.0)
        first = rt * self.r_rho * (d_xy + x)
        second = rt * self.r_rho * (1.0 + d_xy) + self.lam_tilde ** (n / 4.0) * self.r_lam * x
        return self.lam2**n * v2_xy + self.A2 * np.minimum(first, second)


def generic_harris_constants(
    sup_v1: float,
    lam1: float,
    A1: float,
    eps: float,
    n0: int,
    lam2: float | None = None,
    A2: float | None = None,
) -> HarrisConstants:
    """Constants from a drift on ``V1``, an ``n0``-step minorization and optionally a drift on ``V2``.

    ``sup_v1`` is the supremum of ``V1`` over the small set.
    """
    M = sup_v1 + A1 * lam1 ** (-n0) * n0
    rho = harris_rate(lam1, eps, M)
    if lam2 is None:
        return HarrisConstants(lam1, A1, eps, n0, M, rho)
    rho_t = max(lam2, rho)
    lam_t = max(lam1, lam2)
    r_rho = 4.0 / (math.log(1.0 / rho_t) * rho_t)
    r_lam = 4.0 / (math.log(1.0 / lam_t) * lam_t)
    return HarrisConstants(lam1, A1, eps, n0, M, rho, lam2, A2, rho_t, lam_t, r_rho, r_lam)


# --------------------------------------------------------------------------
# Constants from an iterated drift on the whole space
# --------------------------------------------------------------------------


def _iterated_rate(eps: float, lam_l: float, c_l: float) -> float:
    if eps <= 0:
        return 1.0
    lo = math.log1p(-eps)
    ll = math.log(lam_l)
    return math.exp(lo * ll / (lo + ll - math.log(c_l)))


@dataclass(frozen=True)
class IteratedDrift:
    """Constant ``C`` and rate ``rho`` per block for the iterated-drift argument."""

    C: float
    rho: float
    lam_block: float
    A_block: float
    c_block: float


def theorem45_constants(lam: float, A: float, M: float, eps: float, ell: int) -> IteratedDrift:
    """``W_c <= C rho^floor(n/ell) V`` for a kernel with a drift on the whole space."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    if M < 2.0 * A / (1.0 - lam) * (1.0 - 1e-12):
        raise PreconditionError(f"level M={M} must be at least 2A/(1-lam)={2.0 * A / (1.0 - lam)}")
    lam_l = (lam**ell + 1.0) / 2.0
    A_l = A * (1.0 - lam**ell) / (1.0 - lam)
    c_l = lam**ell * M + A_l
    C = 2.0 * (1.0 + A_l) * (1.0 + c_l / ((1.0 - eps) * (1.0 - lam_l)))
    return IteratedDrift(C, _iterated_rate(eps, lam_l, c_l), lam_l, A_l, c_l)


@dataclass(frozen=True)
class AppendixFReport:
    B_d: float
    per_gamma: IteratedDrift
    uniform: IteratedDrift
    log_inv_bound: float | None
    eps: float
    notes: tuple[str, ...] = ()


def iterated_level(A: float, gamma_bar: float, lam: float) -> float:
    """Level ``B_d = 2 A (1 + gamma_bar)(1 + 1/log(1/lam))`` of the small set."""
    return 2.0 * A * (1.0 + gamma_bar) * (1.0 + 1.0 / math.log(1.0 / lam))


def appendix_f_constants(
    lam: float, A: float, eps2: float, ell: int, gamma: float, gamma_bar: float
) -> AppendixFReport:
    """Constants from the drift of the iterated coupling on the whole space.

    ``eps2`` must be the merging probability over the level set
    ``{V <= B_d}``; see :func:`iterated_level`. A value that rounds to 1
    makes ``C`` infinite, so it is lowered to ``1 - 1/e``, which is still
    a valid merging probability.
    """
    notes: tuple[str, ...] = ()
    if eps2 >= 1.0:
        eps2 = 1.0 - math.exp(-1.0)
        notes = ("merging probability rounded to 1; lowered to 1 - 1/e",)
    log_inv = math.log(1.0 / lam)
    B_d = iterated_level(A, gamma_bar, lam)
    if B_d < 1.0:
        raise PreconditionError(f"empty level set: B_d={B_d} is below the minimum 1 of the Lyapunov function")
    horizon = gamma * ell * steps_per_unit(gamma)
    lam_h = lam**horizon
    A_g = A * gamma * (1.0 - lam_h) / (1.0 - lam**gamma)
    c_g = lam_h * A_g + B_d
    lam_g = (lam_h + 1.0) / 2.0
    C_g = 2.0 * (1.0 + A_g) * (1.0 + c_g / ((1.0 - eps2) * (1.0 - lam_g)))
    per_gamma = IteratedDrift(C_g, _iterated_rate(eps2, lam_g, c_g), lam_g, A_g, c_g)
    A_bar = A * (1.0 + gamma_bar) * min(ell, 1.0 + 1.0 / log_inv)
    c_bar = A_bar + B_d
    lam_bar = (lam + 1.0) / 2.0
    C_bar = 2.0 * (1.0 + A_bar) * (1.0 + c_bar / ((1.0 - eps2) * (1.0 - lam_bar)))
    uniform = IteratedDrift(C_bar, _iterated_rate(eps2, lam_bar, c_bar), lam_bar, A_bar, c_bar)
    bound = None
    if gamma_bar <= 1 and 0 <= log_inv <= math.log(2.0) and A >= 1 and 0 < eps2 <= 1 - math.exp(-1):
        bound = 12.0 * math.log(2.0) * math.log(6.0 * A * (1.0 + 1.0 / log_inv)) / (log_inv * eps2)
    return AppendixFReport(B_d, per_gamma, uniform, bound, eps2, notes)


def level_set_diameter(cert: LyapunovCertificate, level: float) -> float:
    """Bound on ``|x - y|`` over ``{V <= level}``."""
    if level < 1:
        return 0.0
    if cert.v_kind == "pair_linear":
        return (level - 1.0) * cert.scale
    if cert.v_kind == "pair_quadratic":
        return 2.0 * math.sqrt(level - 1.0)
    if cert.v_kind == "pair_exponential":
        r = math.sqrt(max((math.log(2.0 * level) / cert.scale) ** 2 - 1.0, 0.0))
        return 2.0 * r
    grid = np.linspace(0.0, 1e6, 200001)
    inside = grid[cert.profile(grid) <= 2.0 * level]
    return 2.0 * float(inside.max()) if inside.size else 0.0


# --------------------------------------------------------------------------
# Full report used by the command line
# --------------------------------------------------------------------------


def assemble_report(
    drift: DriftSpec,
    gamma_bar: float,
    *,
    certificate: str = "C1",
    ell: int | None = None,
    p_alpha: Iterable[tuple[int, float]] = ((1, 2.0), (2, 3.0)),
    gamma: float | None = None,
    m3: float | None = None,
) -> dict[str, Any]:
    """Every constant available for a drift, as a JSON-ready mapping."""
    from .lyapunov import certificate_C2, certificate_C3

    gamma = gamma_bar if gamma is None else gamma
    if certificate == "C1":
        cert = certificate_C1(drift, gamma_bar)
    elif certificate == "C2":
        cert = certificate_C2(drift, gamma_bar)
    elif certificate == "C3":
        cert = certificate_C3(drift, gamma_bar, m3=m3)
    else:
        raise ValueError(f"unknown certificate {certificate!r}")
    ell = ell if ell is not None else max(1, math.ceil(cert.diameter**2))
    modes = []
    if drift.lipschitz is not None and drift.one_sided is not None:
        modes.append(("b3", "lipschitz"))
    if drift.cocoercivity is not None and gamma_bar <= 2.0 * drift.cocoercivity:
        modes.append(("b4", "cocoercive"))
    if not modes:
        raise PreconditionError("insufficient drift metadata: need (L, m) or m_b for the coupling bound")
    out: dict[str, Any] = {
        "certificate": {
            "kind": certificate, "v_kind": cert.v_kind, "lam": cert.lam, "A": cert.A,
            "small_set": cert.small_set, "radius": cert.radius, "diameter": cert.diameter,
            "gamma_bar": gamma_bar, "gamma_cap": cert.gamma_cap, "notes": list(cert.notes),
        },
        "ell": ell,
        "modes": {},
    }
    for mode, regime in modes:
        profile = kappa_profile(drift, gamma_bar, regime)
        spec = PsiSpec(mode, ell, profile, radius=cert.diameter)
        e = eps_inf(spec, gamma_bar, cert.diameter)
        rep = theorem8_constants(cert, e.value, ell, gamma_bar)
        entry: dict[str, Any] = {
            "kappa": {"class": profile.sign_class, "sup": profile.kappa_sup, "inf": profile.kappa_inf},
            "eps": {"value": e.value, "xi": e.xi, "gamma": e.gamma, "grid_value": e.grid_value, "agrees": e.agrees},
            "theorem8": rep.as_dict(),
        }
        if certificate == "C1" and rep.rho < 1:
            theta = 1.0 / drift.conv_inf[1]
            slope = psi_slope_bound(profile, gamma_bar)
            try:
                wc = w_constants(
                    rep, theta, expansion_cap(drift, gamma_bar), slope,
                    lambda q: c1_moment_constants(drift, gamma_bar, q), p_alpha,
                )
                entry["wasserstein"] = asdict(wc)
            except PreconditionError as exc:
                entry["wasserstein"] = {"unavailable": str(exc)}
        level = iterated_level(cert.A, gamma_bar, cert.lam) if cert.A > 0 else 1.0
        diam2 = level_set_diameter(cert, level)
        e2 = eps_inf(spec, gamma_bar, diam2).value
        if cert.A > 0:
            try:
                f = appendix_f_constants(cert.lam, cert.A, e2, ell, gamma, gamma_bar)
                entry["iterated_drift"] = {"diameter": diam2, **asdict(f)}
            except PreconditionError as exc:
                entry["iterated_drift"] = {"unavailable": str(exc)}
        out["modes"][mode] = entry
    if certificate == "C1" and drift.one_sided is not None:
        m1, r1 = drift.conv_inf
        comp_mode = "B3" if drift.one_sided < 0 else "B4"
        out["competitors"] = asymptotic_and_competitor_rates(
            drift.one_sided, m1, drift.lipschitz, r1, comp_mode, gamma_bar
        )
        if ("b3", "lipschitz") in modes and drift.one_sided <= 0:
            try:
                lim = limit_constants(c1_rate_builder(drift, ell, "b3"))
                out["limit"] = {"values": lim.values, "extrapolated": lim.extrapolated,
                                "max_rel_error": lim.max_rel_error, "agrees": lim.agrees}
            except (ConsistencyError, PreconditionError) as exc:
                out["limit"] = {"unavailable": str(exc)}
    elif certificate == "C2":
        out["closed_form"] = c2_log_inv_bounds(drift.radial[0], cert.A, cert.radius, drift.one_sided)
    elif certificate == "C3":
        out["closed_form"] = c3_log_inv_bounds(cert.scale, cert.A, cert.radius, drift.one_sided)
    return out
