import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langevin_bounds.errors import PreconditionError
from langevin_bounds.model import (
    DriftSpec,
    KappaProfile,
    MixtureSpec,
    ProjectionSpec,
    StepMapSpec,
    build_approx_drift,
    classify_kappa,
    double_well_drift,
    drift_from_dict,
    drift_to_dict,
    gaussian_mixture_drift,
    kappa_profile,
    linear_drift,
    project,
    step_map,
)


def meta(L, m, **kw):
    return DriftSpec(dim=1, lipschitz=L, one_sided=m, **kw)


# --------------------------------------------------------------------------
# classify_kappa
# --------------------------------------------------------------------------


def test_euler_negative_class():
    prof = classify_kappa(meta(1.0, 0.5), StepMapSpec("euler", 0.1, gamma_bar=0.9))
    assert prof(0.1) == pytest.approx(-0.9, abs=1e-15)
    assert prof.sign_class == "i"


def test_cocoercive_nonpositive_class():
    d = DriftSpec(dim=1, cocoercivity=1.0)
    prof = classify_kappa(d, StepMapSpec("euler", 1.0, gamma_bar=1.0), regime="cocoercive")
    assert prof.sign_class == "ii"
    assert prof(0.3) == 0.0 and prof(1.0) == 0.0


def test_euler_positive_class():
    prof = classify_kappa(meta(2.0, -1.0), StepMapSpec("euler", 0.25, gamma_bar=0.5))
    for g in (0.01, 0.25, 0.5):
        assert prof(g) == pytest.approx(2.0 + 4.0 * g)
    assert prof.sign_class == "iii"


def test_classify_missing_metadata():
    with pytest.raises(PreconditionError, match="insufficient drift metadata"):
        classify_kappa(DriftSpec(dim=1), StepMapSpec("euler", 0.1))
    with pytest.raises(PreconditionError, match="insufficient drift metadata"):
        classify_kappa(DriftSpec(dim=1, lipschitz=1.0), StepMapSpec("euler", 0.1), regime="cocoercive")
    with pytest.raises(PreconditionError, match="insufficient drift metadata"):
        classify_kappa(meta(1.0, 0.5), StepMapSpec("tamed", 0.1))


def test_classify_stepsize_caps():
    with pytest.raises(PreconditionError, match="stepsize-cap violation"):
        classify_kappa(meta(1.0, 0.5), StepMapSpec("euler", 1.0, gamma_bar=1.0))
    with pytest.raises(PreconditionError, match="stepsize-cap violation"):
        classify_kappa(DriftSpec(dim=1, cocoercivity=0.5), StepMapSpec("euler", 1.5), regime="cocoercive")


def test_kappa_sup_inf_over_range():
    prof = kappa_profile(meta(2.0, 0.5), 0.2)
    assert prof.kappa_sup == pytest.approx(-1.0 + 4.0 * 0.2)
    assert prof.kappa_inf == pytest.approx(-1.0)
    assert prof.limit == -1.0


def test_explosive_profile_rejected():
    with pytest.raises(PreconditionError, match="explosive profile"):
        KappaProfile.affine_profile(-3.0, 0.0, 0.5)
    with pytest.raises(PreconditionError, match="explosive profile"):
        KappaProfile.from_function(lambda g: -2.0 / g, 1.0)


def test_tamed_profile():
    d = double_well_drift(1)
    prof = classify_kappa(d, StepMapSpec("tamed", 0.01))
    lt, _, M = d.tamed_meta
    c = 2.0 * M * (1.0 + M) * lt
    assert prof.sign_class == "iii"
    assert prof(0.01) == pytest.approx((2.0 * c + c * c) / 0.01)
    assert math.isinf(prof.limit)


def test_from_function_grid_class():
    prof = KappaProfile.from_function(lambda g: -1.0 + g, 0.5)
    assert prof.sign_class == "i"
    assert prof.kappa_sup == pytest.approx(-0.5)


# --------------------------------------------------------------------------
# DriftSpec invariants and serialisation
# --------------------------------------------------------------------------


def test_driftspec_invariants():
    with pytest.raises(ValueError):
        DriftSpec(dim=0)
    with pytest.raises(ValueError, match="m >= -L"):
        meta(1.0, -2.0)
    with pytest.raises(ValueError):
        DriftSpec(dim=1, cocoercivity=0.0)
    with pytest.raises(ValueError, match="vanish at 0"):
        DriftSpec(dim=1, eval=lambda x: x + 1.0, lipschitz=1.0)
    with pytest.raises(PreconditionError, match="insufficient drift metadata"):
        DriftSpec(dim=1)(np.zeros(1))


def test_drift_dict_round_trip():
    d = gaussian_mixture_drift(2.0, 10.0)
    doc = drift_to_dict(d)
    back = drift_from_dict(doc)
    assert back.lipschitz == d.lipschitz and back.conv_inf == d.conv_inf
    assert np.allclose(back(np.array([1.3])), d(np.array([1.3])))
    over = drift_from_dict({"dim": 1, "builtin": {"name": "linear", "params": {"theta": 2.0}},
                            "constants": {"m": 1.0}})
    assert over.one_sided == 1.0 and over.lipschitz == 2.0
    with pytest.raises(ValueError, match="unknown builtin"):
        drift_from_dict({"dim": 1, "builtin": {"name": "nope"}})


# --------------------------------------------------------------------------
# Mixture parameters
# --------------------------------------------------------------------------


def test_mixture_constants_m10():
    s = MixtureSpec(2.0, 10.0)
    assert s.lipschitz == pytest.approx(1.3125)
    assert s.radius == 20.0
    assert s.m_plus == pytest.approx(0.125)
    assert not s.convex


def test_mixture_convex_boundary():
    assert MixtureSpec(2.0, 4.0).convex
    assert not MixtureSpec(2.0, 4.0 + 1e-9).convex


@given(st.floats(1.5, 20.0), st.floats(0.2, 5.0))
def test_mixture_lr2_identity(theta, sigma):
    s = MixtureSpec(sigma, 2.0 * sigma * theta)
    if theta >= math.sqrt(2.0):
        assert s.lipschitz * s.radius**2 == pytest.approx(16.0 * theta**2 * (theta**2 - 1.0), rel=1e-12)


def test_mixture_drift_odd_and_zero():
    b = gaussian_mixture_drift(2.0, 6.0)
    assert b(np.array([0.0]))[0] == 0.0
    x = np.linspace(-20, 20, 101)[:, None]
    assert np.allclose(b(x), -b(-x), atol=0, rtol=0)


def test_mixture_drift_from_density():
    # b = -U' with U = x^2/(2 s^2) - log cosh(m x / (2 s^2)); compare with a finite difference.
    s, m = 2.0, 6.0
    U = lambda x: x**2 / (2 * s * s) - np.log(np.cosh(m * x / (2 * s * s)))
    x = np.linspace(-10, 10, 41)
    h = 1e-5
    fd = -(U(x + h) - U(x - h)) / (2 * h)
    assert np.allclose(gaussian_mixture_drift(s, m)(x[:, None])[:, 0], fd, atol=1e-8)


def test_mixture_declared_constants_hold():
    # Lipschitz and one-sided constants checked against the derivative on a grid.
    for m in (2.0, 6.0, 10.0):
        spec = MixtureSpec(2.0, m)
        b = gaussian_mixture_drift(2.0, m)
        x = np.linspace(-30, 30, 20001)
        db = np.gradient(b(x[:, None])[:, 0], x)
        assert np.max(np.abs(db)) <= spec.lipschitz + 1e-6
        assert np.max(db) <= -spec.one_sided + 1e-6


# --------------------------------------------------------------------------
# Approximating drift
# --------------------------------------------------------------------------


def _wavy(x):
    return np.abs(x) ** 1.5 * np.sin(x)


def test_approx_drift_inside_and_outside():
    g, a = 0.1, 0.3
    bt = build_approx_drift(_wavy, 1, a, g)
    inside = np.linspace(-1, 1, 51)[:, None]
    assert np.array_equal(bt(inside), _wavy(inside))
    outside = np.concatenate([np.linspace(-9, -2, 30), np.linspace(2, 9, 30)])[:, None]
    bx = _wavy(outside)
    assert np.allclose(bt(outside), bx / (1 + g**a * np.abs(bx)), rtol=1e-15, atol=0)


@given(st.floats(-50, 50), st.floats(1e-4, 1.0), st.floats(0.01, 0.49), st.integers(0, 5))
def test_approx_drift_error_bound(x, g, a, n):
    bt = build_approx_drift(_wavy, n, a, g)
    xv = np.array([[x]])
    b = _wavy(xv)[0, 0]
    err = abs(b - bt(xv)[0, 0])
    assert err <= g**a * b * b / (1 + g**a * abs(b)) * (1 + 1e-12) + 1e-300


def test_approx_drift_exponent():
    for a in (0.0, 0.5, 0.7):
        with pytest.raises(PreconditionError, match="invalid taming exponent"):
            build_approx_drift(_wavy, 1, a, 0.1)
    with pytest.raises(PreconditionError, match="invalid taming exponent"):
        StepMapSpec("approx", 0.1, cutoff=1, alpha=0.5)


# --------------------------------------------------------------------------
# Projections
# --------------------------------------------------------------------------


def test_projection_examples():
    assert np.allclose(project(ProjectionSpec.ball(1.0), np.array([3.0, 4.0])), [0.6, 0.8], rtol=1e-15)
    x = np.array([1.5, -7.0, 0.0])
    assert np.array_equal(project(ProjectionSpec.identity(), x), x)
    assert np.array_equal(project(ProjectionSpec.soft_threshold(1.0), np.array([2.0, -0.5])), [1.0, 0.0])
    assert np.array_equal(project(ProjectionSpec.box([-1, 0], [1, 2]), np.array([3.0, -1.0])), [1.0, 0.0])


PROJECTIONS = [
    ProjectionSpec.identity(),
    ProjectionSpec.ball(1.5),
    ProjectionSpec.box([-1.0, -2.0, 0.0], [1.0, 0.5, 3.0]),
    ProjectionSpec.soft_threshold(0.7),
]


@pytest.mark.parametrize("proj", PROJECTIONS, ids=lambda p: p.variant)
def test_projection_nonexpansive(proj):
    rng = np.random.default_rng(11)
    x = 3.0 * rng.standard_normal((10_000, 3))
    y = 3.0 * rng.standard_normal((10_000, 3))
    lhs = np.linalg.norm(project(proj, x) - project(proj, y), axis=1)
    rhs = np.linalg.norm(x - y, axis=1)
    assert np.all(lhs <= rhs * (1 + 1e-12))


@pytest.mark.parametrize("proj", PROJECTIONS[:3], ids=lambda p: p.variant)
def test_projection_idempotent(proj):
    x = 4.0 * np.random.default_rng(3).standard_normal((1000, 3))
    px = project(proj, x)
    assert np.allclose(project(proj, px), px, rtol=1e-15, atol=0)


def test_projection_bad_params():
    with pytest.raises(ValueError):
        ProjectionSpec.ball(0.0)
    with pytest.raises(ValueError):
        ProjectionSpec.box([1.0], [0.0])
    with pytest.raises(ValueError):
        ProjectionSpec.soft_threshold(-1.0)


# --------------------------------------------------------------------------
# Step maps and the contraction inequality
# --------------------------------------------------------------------------


def test_step_maps():
    d = linear_drift(1)
    t = step_map(d, StepMapSpec("euler", 0.1))
    assert t(np.array([1.0]))[0] == pytest.approx(0.9)
    tt = step_map(d, StepMapSpec("tamed", 0.1))
    assert tt(np.array([1.0]))[0] == pytest.approx(1.0 - 0.1 / 1.1)
    with pytest.raises(ValueError):
        StepMapSpec("euler", 0.2, gamma_bar=0.1)


@pytest.mark.parametrize("m", [2.0, 6.0, 10.0])
def test_contraction_inequality_mixture(m):
    d = gaussian_mixture_drift(2.0, m)
    gamma = 0.1
    t = step_map(d, StepMapSpec("euler", gamma))
    prof = classify_kappa(d, StepMapSpec("euler", gamma))
    rng = np.random.default_rng(5)
    x = 15 * rng.standard_normal((10_000, 1))
    y = x + 3 * rng.standard_normal((10_000, 1))
    lhs = np.sum((t(x) - t(y)) ** 2, axis=1)
    rhs = (1 + gamma * prof(gamma)) * np.sum((x - y) ** 2, axis=1)
    assert np.all(lhs <= rhs * (1 + 1e-12))


def test_contraction_inequality_tamed():
    d = double_well_drift(2)
    gamma = 0.05
    t = step_map(d, StepMapSpec("tamed", gamma))
    prof = classify_kappa(d, StepMapSpec("tamed", gamma))
    rng = np.random.default_rng(8)
    x = 3 * rng.standard_normal((10_000, 2))
    y = x + rng.standard_normal((10_000, 2))
    lhs = np.sum((t(x) - t(y)) ** 2, axis=1)
    rhs = (1 + gamma * prof(gamma)) * np.sum((x - y) ** 2, axis=1)
    assert np.all(lhs <= rhs)


def test_damped_double_well_constants():
    d = double_well_drift(1, damping=0.5)
    x = np.linspace(-40, 40, 40001)
    db = np.gradient(d(x[:, None])[:, 0], x)
    assert np.max(np.abs(db)) <= d.lipschitz + 1e-4
    assert np.max(db) <= -d.one_sided + 1e-4
