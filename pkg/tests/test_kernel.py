import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from langevin_bounds.kernel import (
    BLOCK,
    ChainConfig,
    CoupleState,
    Schedule,
    block_generator,
    coupled_step,
    coupled_step_schedule,
    em_step,
    mirror,
    one_step_coalesce_prob,
    reflect_arrays,
    simulate_chain,
    simulate_coupled,
    stream_key,
)
from langevin_bounds.model import DriftSpec, ProjectionSpec, StepMapSpec, gaussian_mixture_drift, linear_drift


def zero_drift(d=1):
    return DriftSpec(dim=d, eval=lambda x: np.zeros_like(x), lipschitz=0.0, one_sided=0.0)


def cfg_for(drift, gamma=1.0, proj=None, **kw):
    return ChainConfig(drift, StepMapSpec("euler", gamma), proj or ProjectionSpec(), **kw)


# --------------------------------------------------------------------------
# Single steps
# --------------------------------------------------------------------------


def test_em_step_examples():
    assert np.array_equal(em_step(cfg_for(zero_drift(2)), np.zeros(2), np.array([1.0, 0.0])), [1.0, 0.0])
    assert em_step(cfg_for(linear_drift(1), 0.1), np.array([1.0]), np.zeros(1))[0] == pytest.approx(0.9)
    ball = cfg_for(zero_drift(2), proj=ProjectionSpec.ball(1.0))
    assert np.allclose(em_step(ball, np.zeros(2), np.array([3.0, 4.0])), [0.6, 0.8], rtol=1e-15)


def test_coupled_step_coalesced_input():
    c = cfg_for(linear_drift(2), 0.1)
    z = np.array([0.3, -1.2])
    s = coupled_step(c, CoupleState(np.array([1.0, 2.0]), np.array([1.0, 2.0]), True), z, 0.99)
    assert s.coalesced and np.array_equal(s.x, s.y)
    assert np.array_equal(s.x, em_step(c, np.array([1.0, 2.0]), z))


def test_mirror_to_midpoint_is_an_acceptance():
    # z = 1 sends both proposals to the midpoint, where the density ratio is 1,
    # so even u = 1 accepts.
    c = cfg_for(zero_drift(1))
    s = coupled_step(c, CoupleState(np.array([0.0]), np.array([2.0])), np.array([1.0]), 1.0)
    assert s.x[0] == 1.0 and s.y[0] == 1.0
    assert s.coalesced


def test_coupled_step_accept_and_mirror():
    c = cfg_for(zero_drift(1))
    acc = coupled_step(c, CoupleState(np.array([0.0]), np.array([2.0])), np.array([0.3]), 0.0)
    assert acc.coalesced and acc.x[0] == acc.y[0] == 0.3
    rej = coupled_step(c, CoupleState(np.array([0.0]), np.array([2.0])), np.array([-2.0]), 1.0)
    assert not rej.coalesced and rej.x[0] == -2.0 and rej.y[0] == 4.0


def test_first_marginal_is_em_step():
    c = cfg_for(gaussian_mixture_drift(2.0, 6.0), 0.1)
    rng = np.random.default_rng(1)
    for _ in range(200):
        x, y, z = rng.normal(size=1) * 5, rng.normal(size=1) * 5, rng.normal(size=1)
        s = coupled_step(c, CoupleState(x, y), z, rng.random())
        assert np.array_equal(s.x, em_step(c, x, z))


def test_projection_collision_does_not_coalesce():
    c = cfg_for(zero_drift(1), proj=ProjectionSpec.box([0.0], [1.0]))
    s = coupled_step(c, CoupleState(np.array([5.0]), np.array([7.0])), np.array([0.0]), 1.0)
    assert s.x[0] == s.y[0] == 1.0
    assert not s.coalesced


def test_couplestate_invariant():
    with pytest.raises(ValueError):
        CoupleState(np.array([0.0]), np.array([1.0]), True)


@pytest.mark.parametrize("d", [1, 2, 3, 10])
def test_mirror_isometry(d):
    rng = np.random.default_rng(d)
    z = rng.standard_normal((20_000, d))
    e = rng.standard_normal((20_000, d))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    m = mirror(z, e)
    exact = lambda a: np.sqrt(np.sum(a.astype(np.longdouble) ** 2, axis=1))
    nz = exact(z)
    ulps = np.abs(exact(m) - nz) / np.spacing(nz.astype(float))
    assert float(ulps.max()) <= 4.0


def test_mirror_is_reflection():
    e = np.array([[0.6, 0.8]])
    assert np.allclose(mirror(np.array([[0.6, 0.8]]), e), [[-0.6, -0.8]], rtol=1e-15)
    assert np.allclose(mirror(np.array([[-0.8, 0.6]]), e), [[-0.8, 0.6]], rtol=1e-15)


def test_marginal_preservation_ks():
    n = 100_000
    rng = np.random.default_rng(77)
    x0, y0 = np.array([[0.0, 0.0]]), np.array([[1.0, -0.5]])
    d2 = DriftSpec(dim=2, eval=lambda v: -v, lipschitz=1.0, one_sided=1.0)
    c2 = cfg_for(d2, 0.5)
    t = lambda v: v + 0.5 * d2(v)
    z = rng.standard_normal((n, 2))
    u = rng.random(n)
    _, y_coupled, _ = reflect_arrays(t(np.repeat(x0, n, 0)), t(np.repeat(y0, n, 0)), math.sqrt(0.5) * z, u, 0.5)
    direct = em_step(c2, np.repeat(y0, n, 0), rng.standard_normal((n, 2)))
    for j in range(2):
        assert ks_2samp(y_coupled[:, j], direct[:, j]).pvalue > 1e-3 / 2


def test_one_step_prob():
    assert one_step_coalesce_prob(0.0, 0.3) == 1.0
    assert one_step_coalesce_prob(2.0, 1.0) == pytest.approx(0.31731, abs=5e-6)
    assert one_step_coalesce_prob(1e6, 1.0) == 0.0


def test_one_step_accept_fraction():
    c = cfg_for(zero_drift(1), n_steps=1, n_replicas=200_000, seed=3)
    run = simulate_coupled(c, [0.0], [2.0])
    p = one_step_coalesce_prob(2.0, 1.0)
    se = math.sqrt(p * (1 - p) / 200_000)
    assert abs(run.accept_fraction[1] - p) <= 4 * se
    assert abs(run.fraction[1] - (1 - p)) <= 4 * se


def test_schedule_constant_matches_coupled_step():
    d = linear_drift(1)
    step = StepMapSpec("euler", 0.1)
    sched = Schedule.constant(d, step, -0.19, 5)
    c = cfg_for(d, 0.1)
    s0 = CoupleState(np.array([0.0]), np.array([1.5]))
    rng = np.random.default_rng(4)
    for k in range(5):
        z, u = rng.normal(size=1), rng.random()
        a = coupled_step(c, s0, z, u)
        b = coupled_step_schedule(s0, sched, k, z, u)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y) and a.coalesced == b.coalesced
        s0 = a
    done = coupled_step_schedule(CoupleState(np.array([1.0]), np.array([1.0]), True), sched, 0, z, u)
    assert done.coalesced


def test_schedule_accept_probability():
    ident = lambda v: v
    sched = Schedule((0.5, 2.0), (ident, ident), (0.0, 0.0))
    rng = np.random.default_rng(9)
    n = 100_000
    hits = 0
    s = CoupleState(np.array([0.0]), np.array([1.0]))
    z = rng.standard_normal(n)
    u = rng.random(n)
    for i in range(n):
        hits += coupled_step_schedule(s, sched, 1, z[i:i + 1], u[i]).coalesced
    p = 2 * 0.5 * (1 + math.erf(-1.0 / (2 * 2.0) / math.sqrt(2)))
    assert abs(hits / n - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_schedule_validation():
    ident = lambda v: v
    with pytest.raises(ValueError):
        Schedule((1.0,), (ident, ident), (0.0,))
    with pytest.raises(ValueError):
        Schedule((1.0,), (ident,), (-1.0,))


# --------------------------------------------------------------------------
# Replica simulation
# --------------------------------------------------------------------------


def test_diagonal_start_never_separates():
    c = cfg_for(linear_drift(1), 0.1, n_steps=20, n_replicas=1000)
    run = simulate_coupled(c, [0.7], [0.7])
    assert np.all(run.fraction == 0)


def test_fraction_monotone():
    c = cfg_for(gaussian_mixture_drift(2.0, 6.0), 0.1, n_steps=300, n_replicas=5000, seed=2)
    run = simulate_coupled(c, [-3.0], [3.0])
    assert np.all(np.diff(run.fraction) <= 0)


def test_absorbing_diagonal_bit_exact():
    c = cfg_for(gaussian_mixture_drift(2.0, 6.0), 0.1, n_steps=200, n_replicas=4000, seed=5)
    seen = {}
    bad = []

    def obs(b, k, x, y, coalesced):
        prev = seen.get(b)
        if prev is not None and np.any(prev & ~coalesced):
            bad.append(("flag reverted", k))
        if np.any(coalesced & np.any(x != y, axis=1)):
            bad.append(("states differ", k))
        seen[b] = coalesced.copy()

    run = simulate_coupled(c, [-1.0], [1.0], retain=True, observer=obs)
    assert not bad
    assert run.coalesced.any()
    assert np.array_equal(run.x[run.coalesced], run.y[run.coalesced])


def test_retain_and_compact_agree():
    c = cfg_for(gaussian_mixture_drift(2.0, 6.0), 0.1, n_steps=100, n_replicas=3000, seed=8)
    f = lambda x, y: np.abs(x - y)[:, 0]
    a = simulate_coupled(c, [-2.0], [2.0], functional=f)
    b = simulate_coupled(c, [-2.0], [2.0], functional=f, retain=True)
    assert np.array_equal(a.fraction, b.fraction)
    assert np.allclose(a.functional_mean, b.functional_mean, rtol=1e-12, atol=0)


def test_thread_count_does_not_change_results():
    c = cfg_for(linear_drift(1), 0.1, n_steps=30, n_replicas=2 * BLOCK + 17, seed=12)
    a = simulate_coupled(c, [0.0], [2.0], threads=1)
    b = simulate_coupled(c, [0.0], [2.0], threads=3)
    assert np.array_equal(a.fraction, b.fraction)
    rec = lambda x: np.histogram(x[:, 0], bins=20, range=(-3, 3))[0]
    ca = simulate_chain(c, [1.0], [5, 30], rec, threads=1)
    cb = simulate_chain(c, [1.0], [5, 30], rec, threads=2)
    assert all(np.array_equal(ca[k], cb[k]) for k in (5, 30))


def test_streams_are_distinct():
    key = stream_key(1)
    a = block_generator(key, 0, 0, 0).random(4)
    b = block_generator(key, 0, 0, 1).random(4)
    c = block_generator(key, 0, 1, 0).random(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(a, block_generator(stream_key(1), 0, 0, 0).random(4))


def test_simulate_chain_moments():
    # Ornstein-Uhlenbeck chain: stationary variance gamma / (1 - (1 - gamma)^2).
    g = 0.1
    c = cfg_for(linear_drift(1), g, n_steps=200, n_replicas=100_000, seed=4)
    out = simulate_chain(c, [3.0], [0, 200], lambda x: np.array([x.sum(), (x * x).sum()]))
    mean = out[200][0] / 1e5
    var = out[200][1] / 1e5 - mean**2
    target = g / (1 - (1 - g) ** 2)
    assert abs(mean) < 4 * math.sqrt(target / 1e5)
    assert var == pytest.approx(target, rel=0.02)
    assert out[0][0] == pytest.approx(3e5)


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(linear_drift(1), n_steps=0)
    with pytest.raises(ValueError):
        ChainConfig(linear_drift(1), n_replicas=0)
    with pytest.raises(ValueError):
        ChainConfig(linear_drift(1), seed=-1)
    with pytest.raises(ValueError):
        simulate_coupled(cfg_for(linear_drift(1)), [0.0, 1.0], [0.0, 1.0])
