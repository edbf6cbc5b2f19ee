"""Acceptance criteria, one PASS/FAIL line per check (printed with ``-s`` and in the summary)."""

import math
import time

import numpy as np
import pytest
from scipy.stats import ks_2samp

from langevin_bounds.empirics import run_mixture_experiment, validate_bound
from langevin_bounds.kernel import ChainConfig, em_step, reflect_arrays, simulate_coupled
from langevin_bounds.lyapunov import certificate_C1
from langevin_bounds.minorize import alpha_lower, coalescence_upper_bound, xi, xi_closed_form
from langevin_bounds.model import (
    DriftSpec,
    KappaProfile,
    MixtureSpec,
    ProjectionSpec,
    StepMapSpec,
    gaussian_mixture_drift,
    kappa_profile,
    linear_drift,
    project,
)
from langevin_bounds.normal import norm_cdf
from langevin_bounds.rates import (
    PsiSpec,
    asymptotic_and_competitor_rates,
    c1_constant,
    c1_rate_builder,
    c2_constant,
    eps_inf,
    harris_rate,
    limit_constants,
    theorem8_constants,
)


def zero_drift(d):
    return DriftSpec(dim=d, eval=lambda x: np.zeros_like(x), lipschitz=0.0, one_sided=0.0)


# --------------------------------------------------------------------------
# 1. One-step coalescence
# --------------------------------------------------------------------------


def test_c1_one_step_coalescence(verdict):
    t0 = time.perf_counter()
    n = 1_000_000
    cfg = ChainConfig(zero_drift(2), StepMapSpec("euler", 0.01), n_steps=1, n_replicas=n, seed=11)
    run = simulate_coupled(cfg, [0.0, 0.0], [0.18, 0.24])
    p_hat = 1.0 - float(run.fraction[1])
    p = 2.0 * float(norm_cdf(-0.3 / (2 * 0.1)))
    se = math.sqrt(p * (1 - p) / n)
    dt = time.perf_counter() - t0
    ok1 = verdict("c1", "within 4 binomial stderr", abs(p_hat - p) <= 4 * se,
                  f"empirical {p_hat:.5f} vs {p:.5f}, {abs(p_hat - p) / se:.2f} se")
    ok2 = verdict("c1", "runtime < 10 s", dt < 10, f"{dt:.2f} s")
    assert ok1 and ok2


# --------------------------------------------------------------------------
# 2. Coalescence-time domination, linear drift
# --------------------------------------------------------------------------


def test_c2_domination_linear(verdict):
    t0 = time.perf_counter()
    g = 0.1
    drift = linear_drift(1)
    prof = kappa_profile(drift, g)
    # Independent value: |T(x) - T(y)|^2 = (1 - g)^2 |x - y|^2 = (1 + g kappa) |x - y|^2.
    kappa = ((1 - g) ** 2 - 1) / g
    ok_k = verdict("c2", "kappa of the linear step", prof(g) == pytest.approx(kappa, rel=1e-12),
                   f"{prof(g):.12g} vs {kappa:.12g}")
    cfg = ChainConfig(drift, StepMapSpec("euler", g), n_steps=50, n_replicas=100_000, seed=21)
    run = simulate_coupled(cfg, [0.0], [2.0])
    worst = -math.inf
    for k in range(1, 51):
        bound = coalescence_upper_bound(2.0, xi(prof, g, n=k))
        se = math.sqrt(max(run.fraction[k] * (1 - run.fraction[k]), 0.0) / cfg.n_replicas)
        worst = max(worst, run.fraction[k] - bound - 3 * se)
    dt = time.perf_counter() - t0
    ok1 = verdict("c2", "P(X_k != Y_k) <= bound + 3 se for k <= 50", worst <= 0, f"worst excess {worst:.3e}")
    ok2 = verdict("c2", "runtime < 30 s", dt < 30, f"{dt:.2f} s")
    assert ok_k and ok1 and ok2


# --------------------------------------------------------------------------
# 3. Published constants
# --------------------------------------------------------------------------


def test_c3_published_constants(verdict):
    c1, c2 = c1_constant(), c2_constant()
    ok1 = verdict("c3", "c1 in (0.0004, 0.00051]", 0.0004 < c1 <= 0.00051, f"{c1:.9f}")
    ok2 = verdict("c3", "c2 in (0.006, 0.0072]", 0.006 < c2 <= 0.0072, f"{c2:.9f}")
    assert ok1 and ok2


# --------------------------------------------------------------------------
# 4. Mixture experiment
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def mixture_runs():
    t0 = time.perf_counter()
    res = run_mixture_experiment([MixtureSpec(2.0, 6.0), MixtureSpec(2.0, 10.0)], n=10_000,
                                 replicas=1_000_000, seed=0, threads=4)
    return res, time.perf_counter() - t0


@pytest.mark.slow
def test_c4_mixture_trend(mixture_runs, verdict):
    (r6, r10), dt = mixture_runs
    oks = []
    for r in (r6, r10):
        tag = f"m={r.m:g}"
        drop = (r.tv[0] - r.tv[-1]) / math.hypot(r.stderr[0], r.stderr[-1])
        decays = r.fit is not None and r.fit.slope < 0 and drop > 10
        oks.append(verdict("c4", f"{tag} TV decays", decays,
                           f"{r.tv[0]:.3f} -> {r.tv[-1]:.4f} ({drop:.0f} se), slope {r.fit.slope:.2e}/step"))
        oks.append(verdict("c4", f"{tag} rho_exp in (0, 1)", r.fit is not None and 0 < r.fit.rho_exp < 1,
                           f"{r.fit.rho_exp:.6f} per step" if r.fit else "no fit"))
        oks.append(verdict("c4", f"{tag} our rate closest", r.closest() == "ours",
                           f"empirical {r.empirical_log_log_inv:.3f}, theory "
                           + ", ".join(f"{k} {v:.4g}" for k, v in r.theory.items())))
    oks.append(verdict("c4", "log log^-1 increases from m=6 to m=10",
                       r10.empirical_log_log_inv > r6.empirical_log_log_inv,
                       f"{r6.empirical_log_log_inv:.3f} -> {r10.empirical_log_log_inv:.3f}"))
    oks.append(verdict("c4", "m=6 plateaus", r6.fit.saturated, f"noise floor {r6.noise_floor:.4f}"))
    oks.append(verdict("c4", "runtime < 20 min", dt < 1200, f"{dt:.0f} s"))
    assert all(oks)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="m=10 TV still decays at n=1e4; saturation needs about 2.7e4 steps")
def test_c4_mixture_m10_plateau(mixture_runs, verdict):
    (_, r10), _ = mixture_runs
    ok = verdict("c4", "m=10 plateaus", r10.fit.saturated,
                 f"tail slope {r10.fit.slope:.2e}/step, TV(n) {r10.tv[-1]:.4f}, floor {r10.noise_floor:.4f}")
    assert ok


# --------------------------------------------------------------------------
# 5. End-to-end bound validity
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def mixture_bound_check():
    t0 = time.perf_counter()
    g = 0.1
    drift = gaussian_mixture_drift(2.0, 6.0)
    cert = certificate_C1(drift, g)
    r1 = drift.conv_inf[1]
    ell = math.ceil(r1 * r1)
    spec = PsiSpec("b3", ell, kappa_profile(drift, g, "lipschitz"), radius=r1)
    eps = eps_inf(spec, g, cert.diameter).value
    rep = theorem8_constants(cert, eps, ell, g)
    cfg = ChainConfig(drift, StepMapSpec("euler", g), n_steps=5000, n_replicas=100_000, seed=1)
    chk = validate_bound(cfg, cert, rep, [-6.0], [6.0], threads=4)
    return chk, rep, time.perf_counter() - t0


def test_c5_bound_holds(mixture_bound_check, verdict):
    chk, rep, dt = mixture_bound_check
    ok1 = verdict("c5", "no violation over k <= 5000 at 3 se", chk.ok,
                  f"worst margin {chk.worst_margin:.3e} at k={chk.worst_step}; rho={rep.rho:.10f}")
    ok2 = verdict("c5", "runtime < 10 min", dt < 600, f"{dt:.0f} s")
    assert ok1 and ok2


@pytest.mark.xfail(strict=True, reason="certified rate is 1 - 7.6e-9 per step; squaring it stays above the data")
def test_c5_falsified_control_violated(mixture_bound_check, verdict):
    chk, rep, _ = mixture_bound_check
    ok = verdict("c5", "falsified control violated", bool(chk.control_violated),
                 f"control min {np.min(chk.control_bound):.3e} vs empirical max {np.max(chk.empirical):.3e}")
    assert ok


# --------------------------------------------------------------------------
# 6. Property suites at full size
# --------------------------------------------------------------------------


def test_c6_properties(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    oks = []

    # (a) closed form against the direct sum
    worst = 0.0
    for _ in range(1000):
        gamma = float(10 ** rng.uniform(-3, 0))
        gk = float(rng.uniform(-0.9, 3.0))
        n = int(rng.integers(1, 1000))
        if -n * math.log1p(gk) > 700:
            n = max(1, int(700 / -math.log1p(gk)))
        direct = math.fsum(gamma * (1.0 + gk) ** (-k) for k in range(1, n + 1))
        worst = max(worst, abs(xi_closed_form(gk / gamma, gamma, n) - direct) / max(1.0, direct))
    oks.append(verdict("c6", "(a) xi closed form vs direct sum", worst <= 1e-12, f"max rel {worst:.2e}"))

    # (b) alpha_lower <= xi for each sign class
    bad = 0
    for sign in ("i", "ii", "iii"):
        for _ in range(1000):
            gamma = float(10 ** rng.uniform(-3, 0))
            ell = int(rng.integers(1, 20))
            kappa = {"i": -float(rng.uniform(1e-3, 0.95)) / gamma, "ii": 0.0,
                     "iii": float(rng.uniform(1e-3, 10.0))}[sign]
            prof = KappaProfile.constant(kappa, gamma)
            bad += alpha_lower(prof, gamma, ell) > xi(prof, gamma, ell=ell) * (1 + 1e-12)
    oks.append(verdict("c6", "(b) alpha_lower <= xi, three sign classes", bad == 0, f"{bad} failures of 3000"))

    # (c) second marginal of the coupling is an Euler step
    n = 100_000
    d2 = DriftSpec(dim=2, eval=lambda v: -v, lipschitz=1.0, one_sided=1.0)
    cfg2 = ChainConfig(d2, StepMapSpec("euler", 0.5))
    x0, y0 = np.array([[0.0, 0.0]]), np.array([[1.0, -0.5]])
    z, u = rng.standard_normal((n, 2)), rng.random(n)
    _, yc, _ = reflect_arrays(0.5 * np.repeat(x0, n, 0), 0.5 * np.repeat(y0, n, 0), math.sqrt(0.5) * z, u, 0.5)
    direct = em_step(cfg2, np.repeat(y0, n, 0), rng.standard_normal((n, 2)))
    pmin = min(ks_2samp(yc[:, j], direct[:, j]).pvalue for j in range(2))
    oks.append(verdict("c6", "(c) marginal preservation KS", pmin > 5e-4, f"min p-value {pmin:.3f}"))

    # (d) merged pairs stay bit-identical
    cfg = ChainConfig(gaussian_mixture_drift(2.0, 6.0), StepMapSpec("euler", 0.1), n_steps=200,
                      n_replicas=4000, seed=5)
    issues = []
    seen = {}

    def obs(b, k, x, y, coalesced):
        prev = seen.get(b)
        if prev is not None and np.any(prev & ~coalesced):
            issues.append(k)
        if np.any(coalesced & np.any(x != y, axis=1)):
            issues.append(k)
        seen[b] = coalesced.copy()

    run = simulate_coupled(cfg, [-1.0], [1.0], retain=True, observer=obs)
    exact = not issues and np.array_equal(run.x[run.coalesced], run.y[run.coalesced])
    oks.append(verdict("c6", "(d) absorbing diagonal bit-exact", exact and run.coalesced.any(),
                       f"{int(run.coalesced.sum())} merged pairs"))

    # (e) lam <= rho on random valid tuples
    lam = rng.uniform(1e-3, 1 - 1e-3, 10_000)
    eps = rng.uniform(1e-3, 1 - 1e-3, 10_000)
    c = 1.0 + rng.exponential(10.0, 10_000)
    viol = sum(harris_rate(a, e, cc) < a for a, e, cc in zip(lam, eps, c))
    oks.append(verdict("c6", "(e) lam <= rho_bar_1", viol == 0, f"{viol} failures of 10000"))

    # (f) projections are non-expansive
    worst_ratio = 0.0
    for proj in (ProjectionSpec.identity(), ProjectionSpec.ball(1.5),
                 ProjectionSpec.box([-1.0, -2.0, 0.0], [1.0, 0.5, 3.0]), ProjectionSpec.soft_threshold(0.7)):
        x, y = 3.0 * rng.standard_normal((10_000, 3)), 3.0 * rng.standard_normal((10_000, 3))
        r = np.linalg.norm(project(proj, x) - project(proj, y), axis=1) / np.linalg.norm(x - y, axis=1)
        worst_ratio = max(worst_ratio, float(r.max()))
    oks.append(verdict("c6", "(f) projections non-expansive", worst_ratio <= 1 + 1e-12, f"max ratio {worst_ratio:.15f}"))

    # (g) continuous-time constants as limits of the discrete ones
    lim = limit_constants(c1_rate_builder(gaussian_mixture_drift(2.0, 6.0), 144, "b3"))
    oks.append(verdict("c6", "(g) limit constants agree to 1e-6", lim.agrees and lim.max_rel_error <= 1e-6,
                       f"max rel {lim.max_rel_error:.2e}"))

    # (h) beta row for (m, m+, R) = (-1, 0.5, 3)
    beta = asymptotic_and_competitor_rates(-1.0, 0.5, 2.0, 3.0)["beta"]
    want = {"ours": 1 / (1 - math.exp(2 * -1.0 * 9)), "luo_wang": 1 - 0.5 / -1.0, "eberle": 1.0}
    row = all(beta[k] == pytest.approx(v, rel=1e-14) for k, v in want.items())
    oks.append(verdict("c6", "(h) beta row", row, ", ".join(f"{k} {beta[k]:.10g}" for k in want)))

    dt = time.perf_counter() - t0
    oks.append(verdict("c6", "runtime < 2 min", dt < 120, f"{dt:.1f} s"))
    assert all(oks)
