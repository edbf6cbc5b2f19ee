"""Single-chain and reflection-coupled Euler-Maruyama simulation.

Random numbers come from counter-based Philox streams. Replicas are
grouped in blocks of :data:`BLOCK` and the stream for a block at a given
step is addressed by ``(seed, block, step)``, so the result of a run does
not depend on how many worker threads process the blocks or in which
order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import DriftSpec, ProjectionSpec, StepMapSpec, project, step_map
from .normal import norm_cdf

Array = np.ndarray

BLOCK = 65536
STREAM_COUPLED = 0
STREAM_CHAIN = 1


# --------------------------------------------------------------------------
# Configuration and state
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainConfig:
    """Everything needed to run replicas of the chain or of the coupled pair."""

    drift: DriftSpec
    step: StepMapSpec = field(default_factory=StepMapSpec)
    proj: ProjectionSpec = field(default_factory=ProjectionSpec)
    n_steps: int = 1
    n_replicas: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.n_replicas < 1:
            raise ValueError("n_replicas must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def dim(self) -> int:
        return self.drift.dim

    @property
    def gamma(self) -> float:
        return self.step.gamma


@dataclass(frozen=True)
class CoupleState:
    """A pair of states and the sticky coalescence flag."""

    x: Array
    y: Array
    coalesced: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.coalesced and not np.array_equal(self.x, self.y):
            raise ValueError("a coalesced state must have x == y")


@dataclass(frozen=True)
class Schedule:
    """Time-inhomogeneous noise levels, step maps and contraction warps.

    Entry ``k`` (0-based) drives the transition from step ``k`` to ``k+1``.
    ``warps[k]`` is the declared ``w`` with
    ``|T_k(x) - T_k(y)|^2 <= (1 + w) |x - y|^2``.
    """

    sigmas: tuple[float, ...]
    step_maps: tuple[Callable[[Array], Array], ...]
    warps: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(self, "step_maps", tuple(self.step_maps))
        object.__setattr__(self, "warps", tuple(float(w) for w in self.warps))
        if not len(self.sigmas) == len(self.step_maps) == len(self.warps):
            raise ValueError("schedule sequences must have equal lengths")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("noise levels must be positive")
        if any(w <= -1 for w in self.warps):
            raise ValueError("warps must exceed -1")

    def __len__(self) -> int:
        return len(self.sigmas)

    @classmethod
    def constant(cls, drift: DriftSpec, step: StepMapSpec, warp: float, length: int) -> "Schedule":
        t = step_map(drift, step)
        return cls((math.sqrt(step.gamma),) * length, (t,) * length, (warp,) * length)


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------


def stream_key(seed: int) -> Array:
    """Philox key derived from a user seed."""
    return np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)


def block_generator(key: Array, stream: int, block: int, step: int) -> np.random.Generator:
    """Generator for one block of replicas at one step."""
    counter = np.array([0, stream, block, step], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _block_sizes(n: int) -> list[int]:
    full, rest = divmod(n, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


# --------------------------------------------------------------------------
# Single steps
# --------------------------------------------------------------------------


def mirror(noise: Array, e: Array) -> Array:
    """Reflection ``(Id - 2 e e^T) noise`` of each row across the hyperplane normal to ``e``.

    In one dimension this is exactly ``-noise``. Otherwise it is formed in
    extended precision, normalising ``e`` again, and rounded once, which
    keeps the norm of each row to within a few ulps.
    """
    if noise.shape[1] == 1:
        return -noise
    z = noise.astype(np.longdouble)
    v = e.astype(np.longdouble)
    vv = np.einsum("ij,ij->i", v, v)
    coef = 2.0 * np.einsum("ij,ij->i", v, z) / np.where(vv > 0, vv, 1.0)
    return (z - coef[:, None] * v).astype(float)


def reflect_arrays(
    tx: Array, ty: Array, noise: Array, u: Array, sigma2: float
) -> tuple[Array, Array, Array]:
    """Reflection coupling of ``tx + noise`` and ``ty + noise'`` row by row.

    ``noise`` is the already scaled Gaussian increment of the first chain
    and ``sigma2`` its variance. Returns the unprojected pair and the mask
    of rows where the second chain was set equal to the first.
    """
    diff = ty - tx
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    same = ~np.any(diff != 0.0, axis=1)
    safe = np.where(same, 1.0, dist)
    e = diff / safe[:, None]
    ez = np.einsum("ij,ij->i", e, noise)
    # Log of the Gaussian density ratio, capped at 0.
    log_p = np.minimum(0.0, (ez * ez - (dist - ez) ** 2) / (2.0 * sigma2))
    accept = same | (u <= np.exp(log_p))
    xt = tx + noise
    mirrored = ty + mirror(noise, e)
    yt = np.where(accept[:, None], xt, mirrored)
    return xt, yt, accept


def em_step(cfg: ChainConfig, x: Array, z: Array) -> Array:
    """One chain step ``proj(T(x) + sqrt(gamma) z)``."""
    t = step_map(cfg.drift, cfg.step)
    x = np.asarray(x, dtype=float)
    return project(cfg.proj, t(x) + math.sqrt(cfg.gamma) * np.asarray(z, dtype=float))


def _coupled_update(
    t: Callable[[Array], Array],
    proj: ProjectionSpec,
    sigma: float,
    x: Array,
    y: Array,
    coalesced: Array,
    z: Array,
    u: Array,
) -> tuple[Array, Array, Array, Array]:
    noise = sigma * z
    xt, yt, accept = reflect_arrays(t(x), t(y), noise, u, sigma * sigma)
    return project(proj, xt), project(proj, yt), coalesced | accept, accept


def coupled_step(cfg: ChainConfig, s: CoupleState, z: Array, u: float) -> CoupleState:
    """One step of the reflection coupling.

    The first component is exactly :func:`em_step` with the same ``z``.
    The flag is raised only through the equality or acceptance branch, so
    projection collisions leave it untouched.
    """
    t = step_map(cfg.drift, cfg.step)
    return _single_coupled(t, cfg.proj, math.sqrt(cfg.gamma), s, z, u)


def coupled_step_schedule(
    s: CoupleState, sched: Schedule, k: int, z: Array, u: float, proj: ProjectionSpec | None = None
) -> CoupleState:
    """Coupled step from step ``k`` to ``k + 1`` of an inhomogeneous schedule."""
    proj = proj if proj is not None else ProjectionSpec()
    return _single_coupled(sched.step_maps[k], proj, sched.sigmas[k], s, z, u)


def _single_coupled(t, proj, sigma: float, s: CoupleState, z, u) -> CoupleState:
    x = np.atleast_1d(s.x)[None, :]
    y = np.atleast_1d(s.y)[None, :]
    z = np.atleast_1d(np.asarray(z, dtype=float))[None, :]
    nx, ny, flag, _ = _coupled_update(
        t, proj, sigma, x, y, np.array([s.coalesced]), z, np.array([float(u)])
    )
    shape = np.shape(s.x)
    return CoupleState(nx[0].reshape(shape), ny[0].reshape(shape), bool(flag[0]))


def one_step_coalesce_prob(dist: float, gamma: float) -> float:
    """Probability that one reflection-coupled step merges the chains.

    ``dist`` is the distance between the images of the two states under
    the step map.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return 2.0 * norm_cdf(-dist / (2.0 * math.sqrt(gamma)))


# --------------------------------------------------------------------------
# Replica simulation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoupledRun:
    """Aggregated output of :func:`simulate_coupled`.

    Arrays indexed by step run over ``k = 0, ..., n_steps``.
    """

    fraction: Array
    stderr: Array
    n_replicas: int
    functional_mean: Array | None = None
    functional_stderr: Array | None = None
    accept_fraction: Array | None = None
    x: Array | None = None
    y: Array | None = None
    coalesced: Array | None = None


def _as_rows(v, d: int, n: int) -> Array:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != d:
        raise ValueError(f"state has {v.size} coordinates, drift has {d}")
    return np.tile(v, (n, 1))


def simulate_coupled(
    cfg: ChainConfig,
    x0,
    y0,
    *,
    retain: bool = False,
    functional: Callable[[Array, Array], Array] | None = None,
    observer: Callable[[int, int, Array, Array, Array], None] | None = None,
    threads: int = 1,
) -> CoupledRun:
    """Run ``n_replicas`` reflection-coupled pairs from ``(x0, y0)``.

    Parameters
    ----------
    retain:
        Keep every replica (coalesced ones included) and return the
        terminal pairs. Otherwise coalesced replicas are dropped as soon
        as they merge, since they contribute nothing further.
    functional:
        Optional ``f(x, y)`` per replica; the run reports the mean and
        standard error of ``1{x != y} f(x, y)`` at every step.
    observer:
        Callback ``(block, k, x, y, coalesced)``, only in retain mode.
    """
    d = cfg.dim
    t = step_map(cfg.drift, cfg.step)
    sigma = math.sqrt(cfg.gamma)
    key = stream_key(cfg.seed)
    n_steps = cfg.n_steps
    sizes = _block_sizes(cfg.n_replicas)

    def draws(b: int, k: int, size: int) -> tuple[Array, Array]:
        rng = block_generator(key, STREAM_COUPLED, b, k)
        return rng.standard_normal((size, d)), rng.random(size)

    def tally(k, x, y, live, counts, f_sum, f_sq) -> None:
        counts[k] = int(np.count_nonzero(live))
        if functional is not None and counts[k]:
            vals = np.where(live, functional(x, y), 0.0)
            f_sum[k] = float(np.sum(vals))
            f_sq[k] = float(np.sum(vals * vals))

    def run_block(b: int):
        size = sizes[b]
        x = _as_rows(x0, d, size)
        y = _as_rows(y0, d, size)
        coalesced = ~np.any(x != y, axis=1)
        counts = np.zeros(n_steps + 1, dtype=np.int64)
        accepts = np.zeros(n_steps + 1, dtype=np.int64)
        f_sum = np.zeros(n_steps + 1)
        f_sq = np.zeros(n_steps + 1)
        if retain:
            tally(0, x, y, ~coalesced, counts, f_sum, f_sq)
            if observer is not None:
                observer(b, 0, x, y, coalesced)
            for k in range(n_steps):
                z, u = draws(b, k, size)
                before = coalesced
                x, y, coalesced, acc = _coupled_update(t, cfg.proj, sigma, x, y, coalesced, z, u)
                accepts[k + 1] = int(np.count_nonzero(acc & ~before))
                tally(k + 1, x, y, ~coalesced, counts, f_sum, f_sq)
                if observer is not None:
                    observer(b, k + 1, x, y, coalesced)
            return counts, accepts, f_sum, f_sq, (x, y, coalesced)
        # Compacting mode: only pairs that have not merged are stepped.
        alive = np.flatnonzero(~coalesced)
        x, y = x[alive], y[alive]
        tally(0, x, y, np.ones(alive.size, bool), counts, f_sum, f_sq)
        for k in range(n_steps):
            if not alive.size:
                break
            z, u = draws(b, k, size)
            x, y, merged, _ = _coupled_update(
                t, cfg.proj, sigma, x, y, np.zeros(alive.size, bool), z[alive], u[alive]
            )
            accepts[k + 1] = int(np.count_nonzero(merged))
            keep = ~merged
            alive, x, y = alive[keep], x[keep], y[keep]
            tally(k + 1, x, y, np.ones(alive.size, bool), counts, f_sum, f_sq)
        return counts, accepts, f_sum, f_sq, None

    results = _map_blocks(run_block, len(sizes), threads)
    n = cfg.n_replicas
    counts = sum(r[0] for r in results)
    accepts = sum(r[1] for r in results)
    fraction = counts / n
    stderr = np.sqrt(fraction * (1.0 - fraction) / n)
    f_mean = f_err = None
    if functional is not None:
        f_sum = np.sum([r[2] for r in results], axis=0)
        f_sq = np.sum([r[3] for r in results], axis=0)
        f_mean = f_sum / n
        var = np.maximum(f_sq / n - f_mean**2, 0.0) * (n / max(n - 1, 1))
        f_err = np.sqrt(var / n)
    xs = ys = flags = None
    if retain:
        xs = np.concatenate([r[4][0] for r in results])
        ys = np.concatenate([r[4][1] for r in results])
        flags = np.concatenate([r[4][2] for r in results])
    return CoupledRun(
        fraction=fraction,
        stderr=stderr,
        n_replicas=n,
        functional_mean=f_mean,
        functional_stderr=f_err,
        accept_fraction=accepts / n,
        x=xs,
        y=ys,
        coalesced=flags,
    )


def simulate_chain(
    cfg: ChainConfig,
    x0,
    record_steps: Sequence[int],
    reducer: Callable[[Array], Array],
    *,
    threads: int = 1,
) -> dict[int, Array]:
    """Run independent chain replicas and reduce the replica cloud at chosen steps.

    ``reducer`` maps the ``(block_size, d)`` states of one block to an
    array; results are summed over blocks, so it must be additive (counts,
    sums). Step 0 may be recorded.
    """
    d = cfg.dim
    t = step_map(cfg.drift, cfg.step)
    sigma = math.sqrt(cfg.gamma)
    key = stream_key(cfg.seed)
    wanted = sorted(set(int(k) for k in record_steps))
    if wanted and (wanted[0] < 0 or wanted[-1] > cfg.n_steps):
        raise ValueError("record steps must lie in [0, n_steps]")
    wanted_set = set(wanted)
    last = wanted[-1] if wanted else 0
    sizes = _block_sizes(cfg.n_replicas)

    def run_block(b: int) -> dict[int, Array]:
        size = sizes[b]
        x = _as_rows(x0, d, size)
        out: dict[int, Array] = {}
        if 0 in wanted_set:
            out[0] = np.asarray(reducer(x))
        for k in range(last):
            z = block_generator(key, STREAM_CHAIN, b, k).standard_normal((size, d))
            x = project(cfg.proj, t(x) + sigma * z)
            if k + 1 in wanted_set:
                out[k + 1] = np.asarray(reducer(x))
        return out

    results = _map_blocks(run_block, len(sizes), threads)
    return {k: np.sum([r[k] for r in results], axis=0) for k in wanted}


def _map_blocks(fn, n_blocks: int, threads: int) -> list:
    if threads <= 1 or n_blocks <= 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_blocks)))
