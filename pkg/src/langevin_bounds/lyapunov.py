"""Foster-Lyapunov certificates for the coupled kernel and a Monte Carlo audit.

A certificate asserts ``K V <= lam^gamma V + A gamma 1_C`` for every
stepsize ``gamma`` up to ``gamma_bar``, where ``K`` is the reflection
coupling kernel and ``C`` a small set of pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import PreconditionError
from .kernel import ChainConfig, _coupled_update, block_generator, stream_key
from .model import DriftSpec, step_map

Array = np.ndarray

V_KINDS = ("pair_linear", "pair_quadratic", "pair_exponential", "pair_sum")
SMALL_SETS = ("distance_ball", "product_ball", "everything")


@dataclass(frozen=True)
class LyapunovCertificate:
    """Drift certificate for the coupled kernel.

    Attributes
    ----------
    v_kind:
        ``pair_linear`` is ``1 + |x-y| / scale``; ``pair_quadratic`` is
        ``1 + |x|^2/2 + |y|^2/2``; ``pair_exponential`` averages
        ``exp(scale sqrt(1 + |.|^2))`` over the two states; ``pair_sum``
        averages a user radial profile.
    lam, A:
        Rate and additive constant of the drift inequality.
    small_set, radius:
        ``distance_ball`` is ``{|x-y| <= radius}``, ``product_ball`` is
        ``{|x| <= radius, |y| <= radius}``, ``everything`` is the whole space.
    diameter:
        Bound on ``|x-y|`` over the small set.
    gamma_cap:
        Stepsizes must stay strictly below this value.
    """

    v_kind: str
    lam: float
    A: float
    small_set: str
    radius: float
    diameter: float
    gamma_bar: float
    gamma_cap: float
    scale: float = 1.0
    profile: Callable[[Array], Array] | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.v_kind not in V_KINDS:
            raise ValueError(f"unknown Lyapunov kind {self.v_kind!r}")
        if self.small_set not in SMALL_SETS:
            raise ValueError(f"unknown small set {self.small_set!r}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lam must lie in (0, 1), got {self.lam}")
        if not self.A >= 0:
            raise ValueError("A must be nonnegative")

    def V(self, x: Array, y: Array) -> Array:
        """Lyapunov function on rows of ``x`` and ``y``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.v_kind == "pair_linear":
            return 1.0 + np.linalg.norm(x - y, axis=1) / self.scale
        if self.v_kind == "pair_quadratic":
            return 1.0 + 0.5 * np.sum(x * x, axis=1) + 0.5 * np.sum(y * y, axis=1)
        if self.v_kind == "pair_exponential":
            vx = np.exp(self.scale * np.sqrt(1.0 + np.sum(x * x, axis=1)))
            vy = np.exp(self.scale * np.sqrt(1.0 + np.sum(y * y, axis=1)))
            return 0.5 * (vx + vy)
        rx = np.linalg.norm(x, axis=1)
        ry = np.linalg.norm(y, axis=1)
        return 0.5 * (self.profile(rx) + self.profile(ry))

    def in_small_set(self, x: Array, y: Array) -> Array:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.small_set == "everything":
            return np.ones(x.shape[0], dtype=bool)
        if self.small_set == "distance_ball":
            return np.linalg.norm(x - y, axis=1) <= self.radius
        return (np.linalg.norm(x, axis=1) <= self.radius) & (np.linalg.norm(y, axis=1) <= self.radius)

    @property
    def sup_on_small_set(self) -> float:
        """Supremum of ``V`` over the small set."""
        r = self.radius
        if self.small_set == "everything":
            return math.inf
        if self.v_kind == "pair_linear":
            return 1.0 + r / self.scale if self.small_set == "distance_ball" else 1.0 + 2.0 * r / self.scale
        if self.small_set == "distance_ball":
            return math.inf
        if self.v_kind == "pair_quadratic":
            return 1.0 + r * r
        if self.v_kind == "pair_exponential":
            return math.exp(self.scale * math.sqrt(1.0 + r * r))
        return float(self.profile(np.array([r]))[0])


# --------------------------------------------------------------------------
# Certificates for the three curvature regimes
# --------------------------------------------------------------------------


def _cap_check(gamma_bar: float, cap: float, what: str) -> None:
    if not gamma_bar >= 0:
        raise ValueError("gamma_bar must be nonnegative")
    if not gamma_bar < cap:
        raise PreconditionError(f"stepsize-cap violation: gamma_bar={gamma_bar} must be < {what}={cap}")


def _need(value, what: str):
    if value is None:
        raise PreconditionError(f"insufficient drift metadata: need {what}")
    return value


def certificate_C1(drift: DriftSpec, gamma_bar: float) -> LyapunovCertificate:
    """Certificate for drifts that contract pairs at distance beyond ``R1``.

    Uses ``V = 1 + |x-y| / R1`` with small set ``{|x-y| <= R1}``.
    """
    m1, r1 = _need(drift.conv_inf, "conv_inf (m1_plus, R1)")
    L = _need(drift.lipschitz, "lipschitz L")
    m = _need(drift.one_sided, "one-sided m")
    cap = 2.0 * m1 / L**2 if L > 0 else math.inf
    _cap_check(gamma_bar, cap, "2 m1_plus / L^2")
    lam = math.exp(-(m1 - gamma_bar * L**2 / 2.0) / 2.0)
    notes = ()
    # On the small set the excess is affine in |x-y|/R1, so the worst case
    # is either the boundary (m1 - m) or the diagonal, where V stays at 1.
    A = m1 - m
    if A < m1 / 2.0:
        notes = ("m exceeds m1_plus / 2; A raised to m1_plus / 2 to cover the diagonal",)
        A = m1 / 2.0
    return LyapunovCertificate(
        "pair_linear", lam, A, "distance_ball", r1, r1, gamma_bar, cap, scale=r1, notes=notes
    )


def double_factorial(k: int) -> int:
    """``(k-1)!!`` style product ``k (k-2) (k-4) ...`` down to 1 or 2."""
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def gaussian_even_moment(k: int) -> int:
    """``E[Z^k]`` for a standard normal and even ``k``, that is ``(k-1)!!``."""
    if k % 2:
        raise ValueError("only even moments are tabulated")
    return double_factorial(k - 1)


@dataclass(frozen=True)
class MomentConstants:
    """Drift constants of ``|x-y|^p`` under the contraction-at-infinity regime."""

    p: int
    lam: float
    A: float
    A_inner: float
    A_outer: float


def c1_moment_constants(drift: DriftSpec, gamma_bar: float, p: int) -> MomentConstants:
    """Constants ``(lam_p, A_p)`` with ``K |x-y|^p <= lam_p^gamma |x-y|^p + A_p gamma``."""
    if int(p) != p or p < 1:
        raise ValueError("moment order must be a positive integer")
    m1, r1 = _need(drift.conv_inf, "conv_inf (m1_plus, R1)")
    L = _need(drift.lipschitz, "lipschitz L")
    m = _need(drift.one_sided, "one-sided m")
    cap = 2.0 * m1 / L**2 if L > 0 else math.inf
    _cap_check(gamma_bar, cap, "2 m1_plus / L^2")
    lam = math.exp(-m1 / 2.0 + gamma_bar * L**2 / 4.0)
    g1 = max(1.0, gamma_bar)
    c = gaussian_even_moment(2 * p) * 2.0 ** (2 * p) * g1**p
    # sup_t { c t^(p-2) - m1 t^p / 2 }
    if p == 1:
        inner = math.inf
    elif p == 2:
        inner = c
    else:
        t2 = 2.0 * c * (p - 2) / (p * m1)
        inner = c * t2 ** ((p - 2) / 2.0) - m1 * t2 ** (p / 2.0) / 2.0
    kappa2 = max(1.0, 1.0 - gamma_bar * m + gamma_bar**2 * L**2 / 2.0)
    rbar = max(1.0, r1)
    outer = c * kappa2**p * rbar ** (p - 2) + rbar**p * (
        g1**p * (1.0 - m / 2.0 + L**2 * gamma_bar / 4.0) ** p + m1
    )
    return MomentConstants(int(p), lam, max(inner, outer), inner, outer)


def expansion_cap(drift: DriftSpec, gamma_bar: float) -> float:
    """``varkappa`` with ``K |x-y| <= (1 + gamma varkappa) |x-y|``."""
    L = _need(drift.lipschitz, "lipschitz L")
    m = _need(drift.one_sided, "one-sided m")
    return max(0.0, -m + gamma_bar * L**2 / 2.0)


def certificate_C2(drift: DriftSpec, gamma_bar: float, d: int | None = None) -> LyapunovCertificate:
    """Certificate for drifts with a linear inward radial pull beyond ``R2``.

    Uses ``V = 1 + |x|^2/2 + |y|^2/2`` with a product-ball small set. The
    curvature term enters through its positive part.
    """
    m2, r2 = _need(drift.radial, "radial (m2_plus, R2)")
    L = _need(drift.lipschitz, "lipschitz L")
    m = _need(drift.one_sided, "one-sided m")
    d = drift.dim if d is None else d
    cap = 2.0 * m2 / L**2 if L > 0 else math.inf
    _cap_check(gamma_bar, cap, "2 m2_plus / L^2")
    lam = math.exp(-(m2 - gamma_bar * L**2 / 2.0))
    A = d + 2.0 * r2**2 * max(m2 - m, 0.0) + 2.0 * m2
    radius = math.sqrt(2.0) * lam ** (-gamma_bar) * math.sqrt(A) / math.sqrt(math.log(1.0 / lam))
    return LyapunovCertificate(
        "pair_quadratic", lam, A, "product_ball", radius, 2.0 * radius, gamma_bar, cap,
        notes=("positive part taken in the curvature term of A",),
    )


def c3_constant(drift: DriftSpec, gamma_bar: float, d: int, m3: float) -> tuple[float, float]:
    """Return ``(A, C_a)`` where ``C_a`` is the stepsize-free factor of ``A``."""
    k1, k2, a, r3 = _need(drift.weak, "weak (k1, k2, a, R3)")
    r4 = max(1.0, r3, (d + a) / k1)
    c_a = (m3 * (d + a) / 2.0 + m3**2) * math.exp(m3 * math.sqrt(1.0 + r4**2))
    A = math.exp(gamma_bar * (m3 * (d + a) + m3**2) / 2.0 + m3 * math.sqrt(1.0 + r4**2)) * (
        m3 * (d + a) / 2.0 + m3**2
    )
    return A, c_a


def certificate_C3(
    drift: DriftSpec, gamma_bar: float, d: int | None = None, m3: float | None = None
) -> LyapunovCertificate:
    """Certificate for drifts with only a weak radial pull.

    Uses the average of ``exp(m3 sqrt(1 + |.|^2))`` over both states;
    ``m3`` defaults to the largest admissible value ``k1 / 2``.
    """
    k1, k2, a, r3 = _need(drift.weak, "weak (k1, k2, a, R3)")
    d = drift.dim if d is None else d
    m3 = k1 / 2.0 if m3 is None else m3
    if not 0.0 < m3 <= k1 / 2.0:
        raise PreconditionError(f"exponential rate m3={m3} must lie in (0, k1/2={k1 / 2.0}]")
    _cap_check(gamma_bar, 2.0 * k2, "2 k2")
    lam = math.exp(-(m3**2) / 2.0)
    A, _ = c3_constant(drift, gamma_bar, d, m3)
    radius = math.log(2.0 * lam ** (-2.0 * gamma_bar) * A / math.log(1.0 / lam))
    return LyapunovCertificate(
        "pair_exponential", lam, A, "product_ball", radius, 2.0 * radius, gamma_bar, 2.0 * k2, scale=m3
    )


# --------------------------------------------------------------------------
# From one chain to the pair
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SingleDrift:
    """Single-chain drift certificate ``R V <= lam^gamma V + A gamma`` with radial ``V``."""

    profile: Callable[[Array], Array]
    lam: float
    A: float


def level_set_radius(profile: Callable[[Array], Array], threshold: float, r_max: float = 1e12) -> float:
    """Smallest ``r`` with ``profile >= threshold`` on ``(r, inf)``."""
    def f(r: float) -> float:
        return float(profile(np.array([r]))[0]) - threshold

    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > r_max:
            raise PreconditionError("non-coercive Lyapunov function: level set is unbounded")
    grid = np.linspace(0.0, hi, 4097)
    below = np.flatnonzero(profile(grid) < threshold)
    if below.size == 0:
        return 0.0
    i = int(below[-1])
    return float(brentq(f, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15))


def pairify(single: SingleDrift, gamma_bar: float, branch: str = "b") -> LyapunovCertificate:
    """Lift a single-chain certificate to the pair ``(V(x) + V(y)) / 2``.

    Branch ``"a"`` keeps ``(lam, A)`` with the whole space as small set.
    Branch ``"b"`` trades the rate for ``sqrt(lam)`` and a product ball
    outside which ``V`` exceeds ``4 lam^(-gamma_bar) A / log(1/lam)``.
    """
    if branch == "a":
        return LyapunovCertificate(
            "pair_sum", single.lam, single.A, "everything", math.inf, math.inf, gamma_bar, math.inf,
            profile=single.profile,
        )
    if branch != "b":
        raise ValueError(f"unknown branch {branch!r}")
    threshold = 4.0 * single.lam ** (-gamma_bar) * single.A / math.log(1.0 / single.lam)
    radius = level_set_radius(single.profile, threshold)
    return LyapunovCertificate(
        "pair_sum", math.sqrt(single.lam), single.A, "product_ball", radius, 2.0 * radius,
        gamma_bar, math.inf, profile=single.profile,
    )


# --------------------------------------------------------------------------
# Monte Carlo audit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftAudit:
    """Result of :func:`verify_drift_mc`.

    ``worst_margin`` is the largest ``(K V - rhs) / stderr`` over pairs,
    ``status`` one of ``pass``, ``violation`` or ``inconclusive``.
    """

    certificate: str
    worst_margin: float
    stderr: float
    status: str
    n_violations: int
    n_pairs: int
    resolution: float
    details: dict = field(default_factory=dict)


def _sample_pairs(cert: LyapunovCertificate, d: int, n: int, rng: np.random.Generator, spread: float):
    half = n // 2
    directions = rng.standard_normal((n, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    if cert.small_set == "distance_ball":
        r = cert.radius
        centre = spread * rng.uniform(-1.0, 1.0, (n, d))
        inside = r * rng.uniform(0.0, 1.0, half)
        outside = r * rng.uniform(1.0, 3.0, n - half)
        dist = np.concatenate([inside, outside])
        x = centre
        y = centre + dist[:, None] * directions
        return x, y
    r = cert.radius if math.isfinite(cert.radius) else spread
    def ball_points(k: int, lo: float, hi: float) -> Array:
        u = rng.standard_normal((k, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * rng.uniform(lo, hi, (k, 1))
    x_in, y_in = ball_points(half, 0.0, r), ball_points(half, 0.0, r)
    x_out, y_out = ball_points(n - half, r, 3.0 * r), ball_points(n - half, 0.0, 3.0 * r)
    return np.concatenate([x_in, x_out]), np.concatenate([y_in, y_out])


def verify_drift_mc(
    cert: LyapunovCertificate,
    cfg: ChainConfig,
    n_outer: int = 512,
    n_inner: int = 4096,
    seed: int | None = None,
    spread: float | None = None,
    pairs: tuple[Array, Array] | None = None,
) -> DriftAudit:
    """Spot-check ``K V <= lam^gamma V + A gamma 1_C`` by nested Monte Carlo.

    Outer pairs are split evenly between the small set and its
    complement; each gets ``n_inner`` coupled transitions. A pair is a
    violation when the estimate exceeds the right side by more than three
    standard errors. The audit is ``inconclusive`` when three standard
    errors exceed 5% of the right side for some pair.
    """
    seed = cfg.seed if seed is None else seed
    gamma = cfg.gamma
    d = cfg.dim
    rng = np.random.Generator(np.random.Philox(key=stream_key(seed), counter=[0, 7, 0, 0]))
    if pairs is None:
        spread = spread if spread is not None else 3.0 * max(1.0, cert.radius if math.isfinite(cert.radius) else 1.0)
        xs, ys = _sample_pairs(cert, d, n_outer, rng, spread)
    else:
        xs, ys = (np.atleast_2d(np.asarray(p, dtype=float)) for p in pairs)
    t = step_map(cfg.drift, cfg.step)
    sigma = math.sqrt(gamma)
    key = stream_key(seed)
    margins = np.empty(len(xs))
    errors = np.empty(len(xs))
    rel = np.empty(len(xs))
    for i, (x, y) in enumerate(zip(xs, ys)):
        gen = block_generator(key, 8, i, 0)
        z = gen.standard_normal((n_inner, d))
        u = gen.random(n_inner)
        xr = np.tile(x, (n_inner, 1))
        yr = np.tile(y, (n_inner, 1))
        start_same = bool(np.array_equal(x, y))
        nx, ny, _, _ = _coupled_update(t, cfg.proj, sigma, xr, yr, np.full(n_inner, start_same), z, u)
        vals = cert.V(nx, ny)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n_inner))
        rhs = cert.lam**gamma * float(cert.V(x, y)[0]) + cert.A * gamma * float(cert.in_small_set(x, y)[0])
        margins[i] = mean - rhs
        errors[i] = se
        rel[i] = 3.0 * se / rhs
    scaled = np.where(errors > 0, margins / np.where(errors > 0, errors, 1.0), np.where(margins > 0, np.inf, 0.0))
    worst = int(np.argmax(scaled))
    n_viol = int(np.count_nonzero(scaled > 3.0))
    resolution = float(rel.max())
    if n_viol:
        status = "violation"
    elif resolution > 0.05:
        status = "inconclusive"
    else:
        status = "pass"
    return DriftAudit(
        certificate=cert.v_kind,
        worst_margin=float(margins[worst]),
        stderr=float(errors[worst]),
        status=status,
        n_violations=n_viol,
        n_pairs=len(xs),
        resolution=resolution,
        details={"worst_pair": [xs[worst].tolist(), ys[worst].tolist()], "worst_z": float(scaled[worst])},
    )


def falsify(cert: LyapunovCertificate, factor: float = 0.5) -> LyapunovCertificate:
    """Copy of a certificate with its rate multiplied by ``factor`` (a control)."""
    return replace(cert, lam=cert.lam * factor)
