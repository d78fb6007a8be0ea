from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plapsys.barriers import build_barriers, build_torsion
from plapsys.errors import ClosureFailure, ConfigurationError, DomainError, InadmissibleSpecError
from plapsys.fixedpoint import (
    apply_T,
    certificate,
    closure_check,
    frozen_loads,
    iterate,
    make_rectangle,
    membership,
    select_C,
)
from plapsys.mesh import ScalarField, build_mesh
from plapsys.plap import plap_solve


@pytest.fixture(scope="module")
def comp_setup():
    from conftest import COMPETITIVE

    from plapsys.system import parse_spec

    spec = parse_spec(COMPETITIVE)
    mesh = build_mesh(2, spec.extents, (33, 33))
    bs = build_barriers(mesh, spec.p, spec.s)
    return spec, mesh, bs


def test_constant_nonlinearity_gives_torsion_pair(constant_spec):
    mesh = build_mesh(1, constant_spec.extents, 129)
    w, _ = build_torsion(mesh, 2.0)
    rng = np.random.default_rng(0)
    other = ScalarField(mesh, w.values * rng.uniform(0.5, 2.0, mesh.shape))
    u, v = apply_T(constant_spec, mesh, other, w)
    np.testing.assert_allclose(u.values, w.values, atol=1e-12)
    np.testing.assert_allclose(v.values, w.values, atol=1e-12)


def test_apply_T_decoupling_oracle(comp_setup):
    spec, mesh, _ = comp_setup
    w, _ = build_torsion(mesh, 2.0)
    s = mesh.cell_average(w.values)
    load = s**-0.2 * s**0.3
    u, _ = apply_T(spec, mesh, w, w)
    np.testing.assert_allclose(u.values, plap_solve(mesh, 2.0, load).values, atol=1e-13)


def test_apply_T_rejects_nonpositive(comp_setup):
    spec, mesh, _ = comp_setup
    w, _ = build_torsion(mesh, 2.0)
    v = w.values.copy()
    v[16, 16] = 0.0
    with pytest.raises(DomainError):
        apply_T(spec, mesh, ScalarField(mesh, v), w)


def test_select_C_simple_spec(constant_spec):
    mesh = build_mesh(1, constant_spec.extents, 129)
    bs = build_barriers(mesh, constant_spec.p, constant_spec.s)
    C = select_C(constant_spec, bs, k_p=0.75)
    assert C <= 64


def test_select_C_rejects_inadmissible(comp_setup):
    spec, _, bs = comp_setup
    with pytest.raises(InadmissibleSpecError) as info:
        select_C(spec.with_params(gamma1=0.5), bs, 0.5)
    assert not info.value.report.admissible


def test_select_C_rejects_mismatched_barriers(comp_setup):
    spec, _, bs = comp_setup
    with pytest.raises(ConfigurationError):
        select_C(spec.with_params(alpha1=-0.1), bs, 0.5)


def test_select_C_closure_failure_names_blocking(comp_setup):
    spec, _, bs = comp_setup
    with pytest.raises(ClosureFailure) as info:
        select_C(spec, bs, k_p=1e12)
    assert info.value.blocking
    assert all(b.startswith("norm") for b in info.value.blocking)


@settings(max_examples=10, deadline=None)
@given(k_p=st.floats(0.1, 5.0))
def test_select_C_monotone(comp_setup, k_p):
    spec, _, bs = comp_setup
    try:
        C = select_C(spec, bs, k_p)
    except ClosureFailure:
        return
    assert closure_check(spec, bs, k_p, C).ok
    assert closure_check(spec, bs, k_p, 2 * C).ok
    assert closure_check(spec, bs, k_p, 4 * C).ok
    if C > 2:
        assert not closure_check(spec, bs, k_p, C / 2).ok


def test_membership_examples(comp_setup):
    _, _, bs = comp_setup
    rect = make_rectangle(bs, 8.0)
    at_lower = membership(rect, *rect.lower)
    assert at_lower.in_rectangle
    assert at_lower.lower_violation == pytest.approx(0.0, abs=1e-15)
    double = 2 * rect.upper[0]
    out = membership(rect, double, rect.upper[1])
    assert not out.in_rectangle
    assert out.upper_violation == pytest.approx(float((double - rect.upper[0]).values.max()))


def test_rectangle_fields_exact(comp_setup):
    _, mesh, bs = comp_setup
    rect = make_rectangle(bs, 8.0)
    for i in range(2):
        np.testing.assert_array_equal(rect.lower[i].values, bs.z[i].values / 8.0)
        np.testing.assert_array_equal(rect.upper[i].values, bs.y[i].values * 8.0)
        inside = mesh.interior_mask
        assert np.all(rect.lower[i].values[inside] < rect.upper[i].values[inside])
    with pytest.raises(ConfigurationError):
        make_rectangle(bs, 1.0)


def test_image_of_rectangle_stays_inside(comp_setup):
    spec, mesh, bs = comp_setup
    C = select_C(spec, bs, 0.51)
    rect = make_rectangle(bs, C)
    rng = np.random.default_rng(5)
    for _ in range(3):
        t = rng.uniform(0, 1, mesh.shape)
        w = [ScalarField(mesh, lo.values + t * (hi.values - lo.values)) for lo, hi in zip(rect.lower, rect.upper)]
        # keep the random pairs inside the gradient cap as well
        w = [0.5 * wi + 0.5 * mid for wi, mid in zip(w, rect.midpoint)]
        mem = membership(rect, *apply_T(spec, mesh, *w))
        assert mem.in_rectangle and mem.grad_within_cap


def test_constant_spec_converges_in_two(constant_spec):
    mesh = build_mesh(1, constant_spec.extents, 129)
    bs = build_barriers(mesh, constant_spec.p, constant_spec.s)
    rect = make_rectangle(bs, select_C(constant_spec, bs, 0.75))
    state = iterate(constant_spec, mesh, rect, damping=1.0, tol=1e-10)
    assert state.status == "converged"
    assert state.k <= 2
    assert state.residual_history[-1] < 1e-10


def test_competitive_spec_converges(comp_setup):
    spec, mesh, bs = comp_setup
    rect = make_rectangle(bs, select_C(spec, bs, 0.51))
    state = iterate(spec, mesh, rect, damping=0.5, tol=1e-6, max_iter=200)
    assert state.status == "converged"
    assert state.residual_history[-1] < 1e-6
    assert state.in_rectangle and state.grad_within_cap
    assert all(h["in_rectangle"] and h["grad_within_cap"] for h in state.history)
    u, v = state.iterate
    assert max(certificate(spec, u, v)) <= 1e-5
    inside = mesh.interior_mask
    assert np.all(u.values[inside] > 0) and np.all(v.values[inside] > 0)
    # damping neutrality: the limit is a fixed point of the undamped map
    tu, tv = apply_T(spec, mesh, u, v)
    assert max(np.abs(tu.values - u.values).max(), np.abs(tv.values - v.values).max()) < 1e-5


def test_gradient_terms_converge_with_invariance(comp_setup):
    spec, mesh, _ = comp_setup
    spec = spec.with_params(gamma1=0.25, gamma2=0.25, theta1=0.25, theta2=0.25, grad_coef1=0.2, grad_coef2=0.2)
    bs = build_barriers(mesh, spec.p, spec.s)
    rect = make_rectangle(bs, select_C(spec, bs, 0.51))
    state = iterate(spec, mesh, rect, damping=0.5, tol=1e-6, max_iter=200)
    assert state.status == "converged"
    assert all(h["in_rectangle"] and h["grad_within_cap"] for h in state.history)


def test_iteration_limit_status(comp_setup):
    spec, mesh, bs = comp_setup
    rect = make_rectangle(bs, select_C(spec, bs, 0.51))
    state = iterate(spec, mesh, rect, damping=0.5, tol=1e-12, max_iter=3)
    assert state.status == "iteration-limit"
    assert state.k == 3 and len(state.history) == 3


def test_left_set_status(comp_setup):
    spec, mesh, bs = comp_setup
    # a tiny rectangle cannot contain T of its midpoint
    rect = make_rectangle(bs, 1.01)
    state = iterate(spec, mesh, rect, damping=1.0, tol=1e-6, max_iter=5)
    assert state.status == "left-set"


def test_iterate_validates_arguments(comp_setup):
    spec, mesh, bs = comp_setup
    rect = make_rectangle(bs, 8.0)
    with pytest.raises(ConfigurationError):
        iterate(spec, mesh, rect, damping=0.0)
    with pytest.raises(ConfigurationError):
        iterate(spec, mesh, rect, tol=0.0)


def test_frozen_loads_shape(comp_setup):
    spec, mesh, bs = comp_setup
    g1, g2 = frozen_loads(spec, *make_rectangle(bs, 4.0).midpoint)
    assert g1.shape == mesh.cells_shape and np.all(g1 > 0) and np.all(g2 > 0)
