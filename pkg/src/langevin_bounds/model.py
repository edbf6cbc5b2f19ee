"""Problem specifications: drifts, projections, step maps and contraction profiles.

Everything here is immutable after construction. Drift callables act on
arrays of shape ``(..., d)`` and must be pure so that the simulation
workers can share them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import PreconditionError

Array = np.ndarray
DriftFn = Callable[[Array], Array]

SCHEMES = ("euler", "tamed", "approx")
PROJECTIONS = ("identity", "ball", "box", "soft_threshold")
REGIMES = ("lipschitz", "cocoercive", "tamed")


# --------------------------------------------------------------------------
# Drifts
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftSpec:
    """A drift together with the regularity constants declared for it.

    Parameters
    ----------
    dim:
        State dimension ``d``.
    eval:
        Vectorised drift map acting on the last axis, or ``None`` for a
        metadata-only specification (enough for the rate calculus).
    lipschitz:
        Global Lipschitz constant ``L`` (the map must vanish at 0).
    one_sided:
        One-sided curvature ``m``: ``<b(x)-b(y), x-y> <= -m |x-y|^2``.
    cocoercivity:
        ``m_b`` with ``<b(x)-b(y), x-y> <= -m_b |b(x)-b(y)|^2``.
    conv_inf:
        ``(m1_plus, R1)``: strong contraction for pairs at distance ``>= R1``.
    radial:
        ``(m2_plus, R2)``: ``<b(x), x> <= -m2_plus |x|^2`` outside radius ``R2``.
    weak:
        ``(k1, k2, a, R3)`` for the weak radial condition
        ``<b(x), x> <= -k1 |x| 1{|x| > R3} - k2 |b(x)|^2 + a / 2``.
    tamed_meta:
        ``(L_tilde, ell_tilde, M)`` for polynomially Lipschitz drifts, with
        ``M = sup (1 + |x|^ell_tilde) / (1 + |b(x)|)``.
    """

    dim: int
    eval: DriftFn | None = None
    lipschitz: float | None = None
    one_sided: float | None = None
    cocoercivity: float | None = None
    conv_inf: tuple[float, float] | None = None
    radial: tuple[float, float] | None = None
    weak: tuple[float, float, float, float] | None = None
    tamed_meta: tuple[float, float, float] | None = None
    builtin: str | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if isinstance(self.dim, bool) or int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        L, m = self.lipschitz, self.one_sided
        if L is not None and not L >= 0:
            raise ValueError(f"lipschitz constant must be nonnegative, got {L}")
        if L is not None and m is not None and m < -L - 1e-12 * max(1.0, L):
            raise ValueError(f"one-sided constant m={m} must satisfy m >= -L={-L}")
        if self.cocoercivity is not None and not self.cocoercivity > 0:
            raise ValueError("cocoercivity constant m_b must be positive")
        if self.conv_inf is not None:
            m1, r1 = self.conv_inf
            if not (m1 > 0 and r1 > 0):
                raise ValueError("conv_inf requires m1_plus > 0 and R1 > 0")
        if self.radial is not None:
            m2, r2 = self.radial
            if not (m2 > 0 and r2 >= 0):
                raise ValueError("radial requires m2_plus > 0 and R2 >= 0")
        if self.weak is not None:
            k1, k2, a, r3 = self.weak
            if not (k1 > 0 and k2 > 0 and a >= 0 and r3 >= 0):
                raise ValueError("weak requires k1 > 0, k2 > 0, a >= 0, R3 >= 0")
        if self.tamed_meta is not None:
            lt, et, big_m = self.tamed_meta
            if not (lt >= 0 and et >= 0 and big_m >= 1):
                raise ValueError("tamed_meta requires L~ >= 0, l~ >= 0 and M >= 1")
        if L is not None and self.eval is not None:
            b0 = np.asarray(self.eval(np.zeros(self.dim)), dtype=float)
            if not np.all(np.abs(b0) <= 1e-12):
                raise ValueError("a drift with a declared Lipschitz constant must vanish at 0")

    def __call__(self, x: Array) -> Array:
        if self.eval is None:
            raise PreconditionError("insufficient drift metadata: drift has no evaluable map")
        return self.eval(np.asarray(x, dtype=float))

    def with_constants(self, **overrides: Any) -> "DriftSpec":
        """Copy with some declared constants replaced."""
        return replace(self, **overrides)


def linear_drift(dim: int = 1, theta: float = 1.0, r1: float = 1.0) -> DriftSpec:
    """Ornstein-Uhlenbeck drift ``b(x) = -theta x``.

    ``r1`` only fixes the radius reported for the contraction-at-infinity
    metadata, which holds for every radius.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")

    def b(x: Array) -> Array:
        return -theta * x

    return DriftSpec(
        dim=dim,
        eval=b,
        lipschitz=theta,
        one_sided=theta,
        cocoercivity=1.0 / theta,
        conv_inf=(theta, r1),
        radial=(theta, 0.0),
        weak=(theta / 2.0, 1.0 / (2.0 * theta), 0.0, 1.0),
        builtin="linear",
        params={"theta": theta, "r1": r1},
    )


def gaussian_mixture_drift(sigma: float = 2.0, m: float = 6.0) -> DriftSpec:
    """Drift of the symmetric two-component mixture in centred coordinates.

    The target is ``0.5 N(-m/2, sigma^2) + 0.5 N(m/2, sigma^2)``, whose
    potential is ``x^2 / (2 sigma^2) - log cosh(m x / (2 sigma^2))``.
    """
    spec = MixtureSpec(sigma=sigma, m=m)
    c = m / (2.0 * sigma**2)
    inv_var = 1.0 / sigma**2

    def b(x: Array) -> Array:
        return -inv_var * x + c * np.tanh(c * x)

    return DriftSpec(
        dim=1,
        eval=b,
        lipschitz=spec.lipschitz,
        one_sided=spec.one_sided,
        cocoercivity=(1.0 / spec.lipschitz) if spec.convex else None,
        conv_inf=(spec.m_plus, spec.radius),
        radial=(spec.m_plus, m),
        builtin="gaussian-mixture",
        params={"sigma": sigma, "m": m},
    )


def double_well_drift(dim: int = 1, damping: float = 0.0) -> DriftSpec:
    """Double-well drift ``b(x) = x (1 - |x|^2) / (1 + damping |x|^2)``.

    Without damping the drift grows cubically and only the polynomial
    Lipschitz metadata used by the tamed scheme is declared. With
    ``damping > 0`` it is globally Lipschitz and behaves like
    ``-x / damping`` at infinity.
    """
    if damping < 0:
        raise ValueError("damping must be nonnegative")
    delta = float(damping)

    def b(x: Array) -> Array:
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        return x * (1.0 - r2) / (1.0 + delta * r2)

    params = {"dim": dim, "damping": delta}
    if delta == 0.0:
        # |Db(z)| <= 1 + 3|z|^2 and (1 + r^2) / (1 + r|1 - r^2|) peaks at r = 1.
        return DriftSpec(
            dim=dim, eval=b, tamed_meta=(3.0, 2.0, 2.0), builtin="double-well", params=params
        )

    def h(r: float) -> float:
        return (1.0 - r * r) / (1.0 + delta * r * r)

    def radial_eig(r: float) -> float:
        # d/dr (r h(r)), the Jacobian eigenvalue along x.
        return h(r) - 2.0 * r * r * (1.0 + delta) / (1.0 + delta * r * r) ** 2

    grid = np.linspace(0.0, 50.0, 20001)
    vals = np.array([radial_eig(r) for r in grid])
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(radial_eig, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    most_negative = min(float(res.fun), float(vals.min()), -1.0 / delta)
    lipschitz = max(1.0, -most_negative)
    return DriftSpec(
        dim=dim,
        eval=b,
        lipschitz=lipschitz,
        one_sided=-1.0,
        radial=(1.0 / (2.0 * delta), math.sqrt(2.0 + 1.0 / delta)),
        builtin="double-well",
        params=params,
    )


BUILTINS: dict[str, Callable[..., DriftSpec]] = {
    "linear": linear_drift,
    "gaussian-mixture": gaussian_mixture_drift,
    "double-well": double_well_drift,
}


def drift_from_dict(doc: Mapping[str, Any]) -> DriftSpec:
    """Build a drift from its JSON document.

    The document has the shape
    ``{"dim": d, "builtin": {"name": ..., "params": {...}} | null,
    "constants": {"L", "m", "m_b", "c1", "c2", "c3"}}``. Declared
    constants override the ones a built-in drift provides.
    """
    dim = int(doc["dim"])
    builtin = doc.get("builtin")
    if builtin is not None:
        name = builtin["name"]
        if name not in BUILTINS:
            raise ValueError(f"unknown builtin drift {name!r}")
        kwargs = dict(builtin.get("params") or {})
        if name in ("linear", "double-well"):
            kwargs.setdefault("dim", dim)
        spec = BUILTINS[name](**kwargs)
        if spec.dim != dim:
            raise ValueError(f"builtin {name!r} has dim {spec.dim}, document says {dim}")
    else:
        spec = DriftSpec(dim=dim)
    consts = doc.get("constants") or {}
    overrides: dict[str, Any] = {}
    for key, attr in (("L", "lipschitz"), ("m", "one_sided"), ("m_b", "cocoercivity")):
        if consts.get(key) is not None:
            overrides[attr] = float(consts[key])
    for key, attr in (("c1", "conv_inf"), ("c2", "radial"), ("c3", "weak")):
        if consts.get(key) is not None:
            overrides[attr] = tuple(float(v) for v in consts[key])
    return replace(spec, **overrides) if overrides else spec


def drift_to_dict(spec: DriftSpec) -> dict[str, Any]:
    """Inverse of :func:`drift_from_dict` (the callable is named, not stored)."""
    consts: dict[str, Any] = {}
    if spec.lipschitz is not None:
        consts["L"] = spec.lipschitz
    if spec.one_sided is not None:
        consts["m"] = spec.one_sided
    if spec.cocoercivity is not None:
        consts["m_b"] = spec.cocoercivity
    if spec.conv_inf is not None:
        consts["c1"] = list(spec.conv_inf)
    if spec.radial is not None:
        consts["c2"] = list(spec.radial)
    if spec.weak is not None:
        consts["c3"] = list(spec.weak)
    builtin = None
    if spec.builtin is not None:
        params = {k: v for k, v in spec.params.items() if k != "dim"}
        builtin = {"name": spec.builtin, "params": params}
    return {"dim": spec.dim, "builtin": builtin, "constants": consts}


# --------------------------------------------------------------------------
# Gaussian mixture parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureSpec:
    """Symmetric two-component Gaussian mixture with common scale ``sigma``.

    ``m`` is the distance between the two means.
    """

    sigma: float
    m: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.m >= 0:
            raise ValueError("mode separation m must be nonnegative")

    @property
    def theta(self) -> float:
        return self.m / (2.0 * self.sigma)

    @property
    def lipschitz(self) -> float:
        return max(1.0, self.theta**2 - 1.0) / self.sigma**2

    @property
    def one_sided(self) -> float:
        """Smallest second derivative of the potential."""
        return (1.0 - self.theta**2) / self.sigma**2

    @property
    def radius(self) -> float:
        return 2.0 * self.m

    @property
    def m_plus(self) -> float:
        return 1.0 / (2.0 * self.sigma**2)

    @property
    def convex(self) -> bool:
        return self.m <= 2.0 * self.sigma


# --------------------------------------------------------------------------
# Projections
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionSpec:
    """A non-expansive map applied after every step."""

    variant: str = "identity"
    radius: float | None = None
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None
    tau: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in PROJECTIONS:
            raise ValueError(f"unknown projection {self.variant!r}")
        if self.variant == "ball" and not (self.radius is not None and self.radius > 0):
            raise ValueError("ball projection needs a positive radius")
        if self.variant == "box":
            if self.lo is None or self.hi is None or len(self.lo) != len(self.hi):
                raise ValueError("box projection needs lo and hi of equal length")
            if any(a > b for a, b in zip(self.lo, self.hi)):
                raise ValueError("box projection needs lo <= hi coordinatewise")
        if self.variant == "soft_threshold" and not (self.tau is not None and self.tau >= 0):
            raise ValueError("soft threshold needs tau >= 0")

    @classmethod
    def identity(cls) -> "ProjectionSpec":
        return cls("identity")

    @classmethod
    def ball(cls, radius: float) -> "ProjectionSpec":
        return cls("ball", radius=float(radius))

    @classmethod
    def box(cls, lo, hi) -> "ProjectionSpec":
        return cls("box", lo=tuple(float(v) for v in lo), hi=tuple(float(v) for v in hi))

    @classmethod
    def soft_threshold(cls, tau: float) -> "ProjectionSpec":
        return cls("soft_threshold", tau=float(tau))

    def __call__(self, x: Array) -> Array:
        return project(self, x)


def project(proj: ProjectionSpec, x: Array) -> Array:
    """Apply the projection to a point or to rows of an array."""
    x = np.asarray(x, dtype=float)
    if proj.variant == "identity":
        return x
    if proj.variant == "ball":
        r = proj.radius
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
        scale = np.divide(r, norm, out=np.ones_like(norm), where=norm > r)
        return x * scale
    if proj.variant == "box":
        return np.clip(x, np.asarray(proj.lo), np.asarray(proj.hi))
    return np.sign(x) * np.maximum(np.abs(x) - proj.tau, 0.0)


# --------------------------------------------------------------------------
# Step maps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepMapSpec:
    """Deterministic part of one step and the stepsize range it is used on.

    ``gamma_bar`` is the upper end of the stepsize range that bounds are
    uniform over; it defaults to ``gamma``.
    """

    scheme: str = "euler"
    gamma: float = 0.1
    gamma_bar: float | None = None
    cutoff: int | None = None
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.gamma_bar is None:
            object.__setattr__(self, "gamma_bar", float(self.gamma))
        if self.gamma > self.gamma_bar * (1.0 + 1e-12):
            raise ValueError(f"gamma={self.gamma} exceeds gamma_bar={self.gamma_bar}")
        if self.scheme == "approx":
            if self.cutoff is None or int(self.cutoff) != self.cutoff or self.cutoff < 0:
                raise ValueError("approx scheme needs a nonnegative integer cutoff")
            _check_taming_exponent(self.alpha)

    def with_gamma(self, gamma: float) -> "StepMapSpec":
        return replace(self, gamma=float(gamma))


def _check_taming_exponent(alpha: float | None) -> None:
    if alpha is None or not (0.0 < alpha < 0.5):
        raise PreconditionError(f"invalid taming exponent: alpha={alpha} must lie in (0, 1/2)")


def build_approx_drift(drift: DriftSpec | DriftFn, n: int, alpha: float, gamma: float) -> DriftFn:
    """Drift equal to ``b`` on the radius-``n`` ball and tamed beyond ``n + 1``.

    The blend weight is ``clamp(n + 1 - |x|, 0, 1)`` and the tamed part is
    ``b / (1 + gamma^alpha |b|)``.
    """
    _check_taming_exponent(alpha)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    b = drift
    scale = gamma**alpha

    def approx(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        bx = b(x)
        norm = np.linalg.norm(bx, axis=-1, keepdims=True)
        weight = np.clip(n + 1.0 - np.linalg.norm(x, axis=-1, keepdims=True), 0.0, 1.0)
        return weight * bx + (1.0 - weight) * bx / (1.0 + scale * norm)

    return approx


def step_map(drift: DriftSpec, step: StepMapSpec) -> Callable[[Array], Array]:
    """Return the map ``T`` with one chain step ``x -> proj(T(x) + sqrt(gamma) z)``."""
    g = step.gamma
    if step.scheme == "euler":

        def euler(x: Array) -> Array:
            return x + g * drift(x)

        return euler
    if step.scheme == "tamed":

        def tamed(x: Array) -> Array:
            bx = drift(x)
            return x + g * bx / (1.0 + g * np.linalg.norm(bx, axis=-1, keepdims=True))

        return tamed
    approx_b = build_approx_drift(drift, step.cutoff, step.alpha, g)

    def approx(x: Array) -> Array:
        return x + g * approx_b(x)

    return approx


# --------------------------------------------------------------------------
# Contraction profiles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KappaProfile:
    """Squared-Lipschitz profile ``|T(x)-T(y)|^2 <= (1 + gamma kappa(gamma)) |x-y|^2``.

    The built-in regimes produce ``kappa(g) = c0 + c1 g + c_inv / g``;
    arbitrary profiles go through ``func``. ``kappa_sup`` and
    ``kappa_inf`` are taken over ``(0, gamma_bar]``.
    """

    sign_class: str
    gamma_bar: float
    kappa_sup: float
    kappa_inf: float
    c0: float = 0.0
    c1: float = 0.0
    c_inv: float = 0.0
    func: Callable[[float], float] | None = None

    def __call__(self, gamma: float) -> float:
        if self.func is not None:
            return float(self.func(gamma))
        value = self.c0 + self.c1 * gamma
        if self.c_inv:
            value += self.c_inv / gamma
        return value

    @property
    def affine(self) -> bool:
        return self.func is None and self.c_inv == 0.0

    @property
    def kappa_minus(self) -> float:
        """Supremum of kappa, the quantity used when the profile is negative."""
        return self.kappa_sup

    @property
    def kappa_plus(self) -> float:
        """Supremum of kappa, the quantity used when the profile is positive."""
        return self.kappa_sup

    @property
    def limit(self) -> float:
        """``kappa`` as the stepsize goes to zero (infinite when it blows up)."""
        if self.func is not None:
            raise PreconditionError("profile given by a callable has no closed-form limit")
        if self.c_inv > 0:
            return math.inf
        return self.c0

    @classmethod
    def constant(cls, kappa: float, gamma_bar: float) -> "KappaProfile":
        return cls.affine_profile(kappa, 0.0, gamma_bar)

    @classmethod
    def affine_profile(cls, c0: float, c1: float, gamma_bar: float) -> "KappaProfile":
        ends = (c0, c0 + c1 * gamma_bar)
        sup, inf = max(ends), min(ends)
        _check_not_explosive(c0, c1, gamma_bar)
        return cls(_sign_class(sup, inf), gamma_bar, sup, inf, c0=c0, c1=c1)

    @classmethod
    def from_function(cls, func: Callable[[float], float], gamma_bar: float) -> "KappaProfile":
        grid = gamma_bar * np.arange(1, 65) / 64.0
        vals = np.array([float(func(g)) for g in grid])
        if np.any(grid * vals <= -1.0):
            raise PreconditionError("explosive profile: gamma kappa(gamma) <= -1 on the grid")
        return cls(_sign_class(vals.max(), vals.min()), gamma_bar, float(vals.max()), float(vals.min()), func=func)


def _sign_class(sup: float, inf: float) -> str:
    if sup < 0:
        return "i"
    if sup <= 0:
        return "ii"
    if inf > 0:
        return "iii"
    # Mixed sign: only the nonnegative bound is usable.
    return "iii"


def _check_not_explosive(c0: float, c1: float, gamma_bar: float) -> None:
    # min over (0, gamma_bar] of 1 + c0 g + c1 g^2 must stay positive.
    candidates = [gamma_bar]
    if c1 > 0:
        vertex = -c0 / (2.0 * c1)
        if 0 < vertex < gamma_bar:
            candidates.append(vertex)
    low = min(1.0 + c0 * g + c1 * g * g for g in candidates)
    if low <= 0:
        raise PreconditionError(
            f"explosive profile: 1 + gamma kappa(gamma) reaches {low:.3g} on (0, {gamma_bar}]"
        )


def classify_kappa(drift: DriftSpec, step: StepMapSpec, regime: str | None = None) -> KappaProfile:
    """Contraction profile of the step map and its sign class.

    ``regime`` selects the argument: ``"lipschitz"`` uses ``(L, m)`` and
    gives ``kappa = -2m + L^2 gamma``; ``"cocoercive"`` uses ``m_b`` and
    gives ``kappa = 0``; ``"tamed"`` uses the polynomial Lipschitz
    metadata. By default the tamed scheme uses ``"tamed"``, otherwise
    ``"lipschitz"`` when ``(L, m)`` are declared and ``"cocoercive"``
    when only ``m_b`` is.
    """
    return kappa_profile(drift, float(step.gamma_bar), regime, step.scheme)


def kappa_profile(
    drift: DriftSpec, gamma_bar: float, regime: str | None = None, scheme: str = "euler"
) -> KappaProfile:
    """Profile over ``(0, gamma_bar]``; ``gamma_bar = 0`` is allowed for limits."""
    gbar = float(gamma_bar)
    if gbar < 0:
        raise ValueError("gamma_bar must be nonnegative")
    if regime is None:
        if scheme == "tamed":
            regime = "tamed"
        elif drift.lipschitz is not None and drift.one_sided is not None:
            regime = "lipschitz"
        elif drift.cocoercivity is not None:
            regime = "cocoercive"
        else:
            regime = "lipschitz"
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")

    if regime == "lipschitz":
        L, m = drift.lipschitz, drift.one_sided
        if L is None or m is None:
            raise PreconditionError("insufficient drift metadata: need lipschitz L and one-sided m")
        if m > 0 and not gbar < 2.0 * m / L**2:
            raise PreconditionError(
                f"stepsize-cap violation: gamma_bar={gbar} must be < 2m/L^2={2.0 * m / L**2}"
            )
        return KappaProfile.affine_profile(-2.0 * m, L * L, gbar)

    if regime == "cocoercive":
        mb = drift.cocoercivity
        if mb is None:
            raise PreconditionError("insufficient drift metadata: need cocoercivity m_b")
        if gbar > 2.0 * mb:
            raise PreconditionError(f"stepsize-cap violation: gamma_bar={gbar} must be <= 2 m_b={2.0 * mb}")
        return KappaProfile.constant(0.0, gbar)

    if drift.tamed_meta is None:
        raise PreconditionError("insufficient drift metadata: need tamed_meta (L~, l~, M)")
    lt, _, big_m = drift.tamed_meta
    # gamma * L~_gamma is a constant c, so kappa = (2c + c^2) / gamma.
    c = 2.0 * big_m * (1.0 + big_m) * lt
    c_inv = 2.0 * c + c * c
    if c_inv == 0.0:
        return KappaProfile.constant(0.0, gbar)
    return KappaProfile("iii", gbar, math.inf, c_inv / gbar if gbar > 0 else math.inf, c_inv=c_inv)
