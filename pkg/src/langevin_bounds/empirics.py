"""Empirical distances and the two-mode Gaussian mixture experiment.

Total variation to a one-dimensional reference law is estimated from
histograms with fixed edges, so that replica blocks can be binned
independently and their counts merged. Rates are read off as the slope
of ``log TV`` before the curve saturates at the discretisation bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import BoundViolation, PreconditionError
from .kernel import ChainConfig, simulate_chain, simulate_coupled
from .lyapunov import LyapunovCertificate
from .model import MixtureSpec, StepMapSpec, gaussian_mixture_drift
from .normal import norm_cdf
from .rates import (
    RateReport,
    asymptotic_and_competitor_rates,
    bound_curve,
    falsified,
)

Array = np.ndarray

MIN_SAMPLES = 1000
DEFAULT_BINS = 400
BOOTSTRAP = 100


# --------------------------------------------------------------------------
# Reference law
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureLaw1D:
    """Finite mixture of Gaussians with a common standard deviation."""

    weights: tuple[float, ...]
    means: tuple[float, ...]
    sd: float

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.means) or not self.weights:
            raise ValueError("weights and means must have the same positive length")
        if not self.sd > 0:
            raise ValueError("sd must be positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12 or min(self.weights) < 0:
            raise ValueError("weights must be a probability vector")

    def cdf(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        return sum(w * norm_cdf((x - mu) / self.sd) for w, mu in zip(self.weights, self.means))

    def pdf(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        c = 1.0 / (self.sd * math.sqrt(2.0 * math.pi))
        return sum(w * c * np.exp(-0.5 * ((x - mu) / self.sd) ** 2) for w, mu in zip(self.weights, self.means))

    @property
    def support(self) -> tuple[float, float]:
        """Histogram range: five standard deviations beyond the outer means."""
        return min(self.means) - 5.0 * self.sd, max(self.means) + 5.0 * self.sd

    def sample(self, rng: np.random.Generator, n: int) -> Array:
        comp = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        return np.asarray(self.means)[comp] + self.sd * rng.standard_normal(n)


def mixture_drift(spec: MixtureSpec, x):
    """Drift ``-U'`` of the mixture potential in centred coordinates."""
    c = spec.m / (2.0 * spec.sigma**2)
    x = np.asarray(x, dtype=float)
    return -x / spec.sigma**2 + c * np.tanh(c * x)


def GaussianMixture1D(sigma: float, m: float) -> MixtureLaw1D:
    """Equal-weight mixture of ``N(-m/2, sigma^2)`` and ``N(m/2, sigma^2)``.

    This is the mixture law in coordinates centred between the modes.
    """
    return MixtureLaw1D((0.5, 0.5), (-m / 2.0, m / 2.0), sigma)


def chain_target(sigma: float, m: float) -> MixtureLaw1D:
    """Law proportional to ``exp(-2 U)`` for the mixture potential ``U``.

    The diffusion ``dX = -U'(X) dt + dB``, which the chain discretises,
    leaves this law invariant rather than the mixture itself. Squaring the
    ``cosh`` term gives three Gaussians of variance ``sigma^2 / 2`` at
    ``0`` and ``+-m/2``.
    """
    a = m * m / (4.0 * sigma * sigma)
    w0 = 1.0 / (1.0 + math.exp(a)) if a < 700 else 0.0
    side = (1.0 - w0) / 2.0
    return MixtureLaw1D((side, w0, side), (-m / 2.0, 0.0, m / 2.0), sigma / math.sqrt(2.0))


@dataclass(frozen=True)
class Binning:
    """Fixed histogram edges plus two overflow cells, with reference cell masses."""

    edges: Array
    probs: Array

    @classmethod
    def for_law(cls, cdf: Callable[[Array], Array], lo: float, hi: float, bins: int = DEFAULT_BINS) -> "Binning":
        edges = np.linspace(lo, hi, bins + 1)
        c = np.asarray(cdf(edges), dtype=float)
        probs = np.concatenate([[c[0]], np.diff(c), [1.0 - c[-1]]])
        return cls(edges, np.clip(probs, 0.0, None))

    def counts(self, samples) -> Array:
        s = np.asarray(samples, dtype=float).reshape(-1)
        lo, hi = self.edges[0], self.edges[-1]
        bins = self.edges.size - 1
        idx = np.floor((s - lo) / (hi - lo) * bins).astype(np.int64) + 1
        idx = np.where(s < lo, 0, np.where(s >= hi, bins + 1, np.clip(idx, 1, bins)))
        return np.bincount(idx, minlength=bins + 2).astype(np.int64)


@dataclass(frozen=True)
class TVEstimate:
    tv: float
    stderr: float
    n: int


def tv_from_counts(counts: Array, probs: Array, rng: np.random.Generator | None = None,
                   n_boot: int = BOOTSTRAP) -> TVEstimate:
    """``1/2 sum |p_hat - pi|`` over histogram cells with a bootstrap standard error."""
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    if n < MIN_SAMPLES:
        raise PreconditionError(f"insufficient samples: {n} < {MIN_SAMPLES}")
    p_hat = counts / n
    tv = 0.5 * float(np.sum(np.abs(p_hat - probs)))
    rng = np.random.default_rng(0) if rng is None else rng
    boot = rng.multinomial(n, p_hat, size=n_boot) / n
    tvs = 0.5 * np.sum(np.abs(boot - probs), axis=1)
    return TVEstimate(tv, float(np.std(tvs, ddof=1)), n)


def estimate_tv(samples, cdf: Callable[[Array], Array], support: tuple[float, float],
                bins: int = DEFAULT_BINS, seed: int = 0) -> TVEstimate:
    """Histogram estimate of the total variation between samples and a reference law.

    ``support`` is the histogram range; mass outside it is compared in two
    overflow cells.
    """
    s = np.asarray(samples, dtype=float).reshape(-1)
    if s.size < MIN_SAMPLES:
        raise PreconditionError(f"insufficient samples: {s.size} < {MIN_SAMPLES}")
    binning = Binning.for_law(cdf, support[0], support[1], bins)
    return tv_from_counts(binning.counts(s), binning.probs, np.random.default_rng(seed))


def estimate_tv_two_sample(a, b, support: tuple[float, float], bins: int = DEFAULT_BINS) -> float:
    """Histogram total variation between two sample clouds on common edges."""
    edges = np.linspace(support[0], support[1], bins + 1)
    binning = Binning(edges, np.zeros(bins + 2))
    a, b = np.asarray(a, dtype=float).reshape(-1), np.asarray(b, dtype=float).reshape(-1)
    if min(a.size, b.size) < MIN_SAMPLES:
        raise PreconditionError("insufficient samples")
    return 0.5 * float(np.sum(np.abs(binning.counts(a) / a.size - binning.counts(b) / b.size)))


def tv_noise_floor(probs: Array, n: int, draws: int = 200, seed: int = 0) -> float:
    """Expected histogram TV between ``n`` exact draws from the reference law and the law itself."""
    rng = np.random.default_rng(seed)
    p = np.asarray(probs, dtype=float)
    p = p / p.sum()
    sim = rng.multinomial(n, p, size=draws) / n
    return float(np.mean(0.5 * np.sum(np.abs(sim - p), axis=1)))


def estimate_w1_1d(samples_x, samples_y) -> float:
    """Exact Wasserstein-1 distance between two equal-size empirical measures on the line."""
    x = np.sort(np.asarray(samples_x, dtype=float).reshape(-1))
    y = np.sort(np.asarray(samples_y, dtype=float).reshape(-1))
    if x.size != y.size:
        raise ValueError("unequal sample counts")
    if x.size == 0:
        raise PreconditionError("empty sample set")
    return float(np.mean(np.abs(x - y)))


# --------------------------------------------------------------------------
# Rate fitting
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Geometric rate per step read off a TV curve.

    ``saturated`` tells whether the end of the curve is flat. When it is
    not, the chain has not reached its plateau within the horizon and the
    fit window extends to the last point.
    """

    rho_exp: float
    slope: float
    window: tuple[int, int]
    plateau: float
    residual: float
    n_points: int
    saturated: bool = True


TAIL_FLATNESS = 0.05


def _tail_is_flat(n: Array, tv: Array) -> bool:
    tail = slice(tv.size - max(3, tv.size // 10), tv.size)
    xs, ys = n[tail], np.log(np.maximum(tv[tail], 1e-300))
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = float(np.std(ys - (slope * xs + intercept)))
    drop = -slope * (xs[-1] - xs[0])
    return bool(drop <= max(TAIL_FLATNESS, 3.0 * resid))


def fit_log_rate(tv, steps: Sequence[int] | None = None, upper: float = 0.5) -> RateFit:
    """Least-squares slope of ``log TV`` against the step index before saturation.

    The plateau is the median of the last tenth of the curve and the fit
    uses the longest contiguous run of points with TV in
    ``[3 plateau, upper]``. If the last tenth is still decaying the lower
    limit is dropped.
    """
    tv = np.asarray(tv, dtype=float)
    if tv.size < 20:
        raise ValueError("curve must have at least 20 points")
    n = np.arange(tv.size, dtype=float) if steps is None else np.asarray(steps, dtype=float)
    if n.size != tv.size:
        raise ValueError("steps and curve differ in length")
    tail = tv[-max(1, tv.size // 10):]
    plateau = float(np.median(tail))
    saturated = _tail_is_flat(n, tv) if np.all(tv > 0) else True
    floor = 3.0 * plateau if saturated else 0.0
    ok = (tv >= floor) & (tv <= upper) & (tv > 0)
    best, start = (0, 0), None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    lo, hi = best
    if hi - lo < 2:
        raise PreconditionError("no linear regime: too few points between the start and the plateau")
    xs, ys = n[lo:hi], np.log(tv[lo:hi])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = float(np.sqrt(np.mean((ys - (slope * xs + intercept)) ** 2)))
    if not slope < 0:
        raise PreconditionError("no linear regime: the fitted slope is not negative")
    return RateFit(
        float(math.exp(slope)), float(slope), (int(n[lo]), int(n[hi - 1])), plateau, resid, hi - lo, saturated
    )


def log_log_inv(rho: float) -> float:
    """``log(1 / log(1 / rho))``."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    return -math.log(-math.log(rho))


# --------------------------------------------------------------------------
# Mixture experiment
# --------------------------------------------------------------------------


def default_record_steps(n: int) -> list[int]:
    """Every step up to 500, then every tenth step."""
    return sorted(set(range(0, min(n, 500) + 1)) | set(range(500, n + 1, 10)))


@dataclass(frozen=True)
class MixtureResult:
    m: float
    sigma: float
    gamma: float
    steps: Array
    tv: Array
    stderr: Array
    fit: RateFit | None
    noise_floor: float
    theory: dict[str, float]
    empirical_log_log_inv: float | None
    notes: tuple[str, ...] = ()

    def closest(self) -> str | None:
        """Name of the theoretical rate closest to the empirical one in ``log(1/log(1/rho))``."""
        if self.empirical_log_log_inv is None:
            return None
        v = self.empirical_log_log_inv
        return min(self.theory, key=lambda k: abs(self.theory[k] - v))

    def summary(self) -> dict[str, Any]:
        out = {
            "m": self.m, "sigma": self.sigma, "gamma": self.gamma, "noise_floor": self.noise_floor,
            "theory_log_log_inv": dict(self.theory), "empirical_log_log_inv": self.empirical_log_log_inv,
            "closest": self.closest(), "notes": list(self.notes),
        }
        if self.fit is not None:
            out["fit"] = {
                "rho_exp_per_step": self.fit.rho_exp,
                "rho_exp_per_unit_time": self.fit.rho_exp ** (1.0 / self.gamma),
                "slope": self.fit.slope, "window": list(self.fit.window),
                "plateau": self.fit.plateau, "residual": self.fit.residual, "n_points": self.fit.n_points,
                "saturated": self.fit.saturated,
            }
        return out


THEORY_KEYS = {"ours": "ours", "eberle_majka_tv": "eberle_majka_tv", "majka_mijatovic_szpruch": "majka_mijatovic_szpruch"}


def mixture_theory(spec: MixtureSpec) -> dict[str, float]:
    """Asymptotic ``log(1/log(1/rho))`` of our rate and two competitors for the mixture."""
    rates = asymptotic_and_competitor_rates(spec.one_sided, spec.m_plus, spec.lipschitz, spec.radius)
    return {k: rates["log_log_inv"][v] for k, v in THEORY_KEYS.items()}


def run_mixture_experiment(
    specs: Sequence[MixtureSpec],
    gamma: float = 0.1,
    n: int = 10000,
    x0: float = 0.0,
    replicas: int = 10**6,
    seed: int = 0,
    bins: int = DEFAULT_BINS,
    record_steps: Sequence[int] | None = None,
    threads: int = 1,
    reference: str = "diffusion",
) -> list[MixtureResult]:
    """TV curves to the mixture law, fitted rates and theoretical comparisons.

    ``x0`` is given in the original coordinates, where the modes sit at 0
    and ``m``; the chain runs in coordinates centred between them. TV is
    measured to the invariant law of the diffusion, see
    :func:`chain_target`, or to the mixture itself with
    ``reference="mixture"``. Rates are compared per unit time,
    ``rho_exp^(1/gamma)``.
    """
    if reference not in ("diffusion", "mixture"):
        raise ValueError("reference must be 'diffusion' or 'mixture'")
    record = default_record_steps(n) if record_steps is None else sorted(set(record_steps))
    out = []
    for spec in specs:
        if reference == "diffusion":
            law = chain_target(spec.sigma, spec.m)
        else:
            law = GaussianMixture1D(spec.sigma, spec.m)
        binning = Binning.for_law(law.cdf, *law.support, bins=bins)
        drift = gaussian_mixture_drift(spec.sigma, spec.m)
        cfg = ChainConfig(drift, StepMapSpec("euler", gamma), n_steps=n, n_replicas=replicas, seed=seed)
        counts = simulate_chain(cfg, [x0 - spec.m / 2.0], record, binning.counts, threads=threads)
        rng = np.random.default_rng(seed)
        ests = [tv_from_counts(counts[k], binning.probs, rng) for k in record]
        tv = np.array([e.tv for e in ests])
        se = np.array([e.stderr for e in ests])
        notes: list[str] = []
        try:
            fit = fit_log_rate(tv, record)
            emp = log_log_inv(fit.rho_exp ** (1.0 / gamma))
        except PreconditionError as exc:
            fit, emp = None, None
            notes.append(str(exc))
        out.append(MixtureResult(
            spec.m, spec.sigma, gamma, np.array(record), tv, se, fit,
            tv_noise_floor(binning.probs, replicas, seed=seed), mixture_theory(spec), emp, tuple(notes),
        ))
    return out


def mixture_csv_rows(results: Sequence[MixtureResult]) -> list[tuple]:
    rows = []
    for r in results:
        for k, tv, se in zip(r.steps, r.tv, r.stderr):
            rows.append((r.m, int(k), float(tv), float(se)))
    return rows


# --------------------------------------------------------------------------
# Domination check of a bound against the coupled chain
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    """Comparison of ``E[1{X_k != Y_k} V(X_k, Y_k)]`` with the bound at each step."""

    ok: bool
    steps: Array
    empirical: Array
    stderr: Array
    bound: Array
    worst_margin: float
    worst_step: int
    control_bound: Array | None = None
    control_violated: bool | None = None
    control_first_step: int | None = None
    details: dict = field(default_factory=dict)


def validate_bound(
    cfg: ChainConfig,
    cert: LyapunovCertificate,
    report: RateReport,
    x0,
    y0,
    steps: Sequence[int] | None = None,
    *,
    slack: float = 3.0,
    control_power: float | None = 2.0,
    raise_on_violation: bool = False,
    threads: int = 1,
) -> BoundCheck:
    """Check the two-rate bound against a coupled simulation.

    The empirical side is the mean of ``1{X_k != Y_k} V(X_k, Y_k)`` over
    replicas, which upper bounds ``W_c`` for ``c = 1{x != y} V``. A step
    violates the bound when that mean exceeds the bound by more than
    ``slack`` standard errors. With ``control_power`` the same test is run
    against the bound whose second rate is raised to that power.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    steps = np.arange(cfg.n_steps + 1) if steps is None else np.asarray(sorted(set(int(k) for k in steps)))
    if steps.size and (steps[0] < 0 or steps[-1] > cfg.n_steps):
        raise ValueError("steps must lie in [0, n_steps]")
    off = float(np.any(x0 != y0))
    c_value = float(cert.V(x0, y0)[0]) * off
    run = simulate_coupled(cfg, x0, y0, functional=lambda x, y: cert.V(x, y), threads=threads)
    emp = run.functional_mean[steps]
    se = run.functional_stderr[steps]
    gamma = cfg.gamma
    bound = np.atleast_1d(bound_curve(report, c_value, off, steps, gamma))
    margin = bound + slack * se - emp
    i = int(np.argmin(margin)) if steps.size else 0
    ok = bool(np.all(margin >= 0))
    ctrl = viol = first = None
    if control_power is not None:
        ctrl = np.atleast_1d(bound_curve(falsified(report, control_power), c_value, off, steps, gamma))
        bad = np.flatnonzero(emp > ctrl + slack * se)
        viol = bool(bad.size)
        first = int(steps[bad[0]]) if bad.size else None
    check = BoundCheck(
        ok, steps, emp, se, bound, float(margin[i]) if steps.size else 0.0, int(steps[i]) if steps.size else 0,
        ctrl, viol, first, {"c_value": c_value, "off_diagonal": off, "n_replicas": cfg.n_replicas},
    )
    if raise_on_violation and not ok:
        bad_k = int(steps[np.flatnonzero(margin < 0)[0]])
        raise BoundViolation(f"bound violated at step {bad_k}", step=bad_k)
    return check
