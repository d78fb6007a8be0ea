from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from plapsys.errors import ConfigurationError, NonIntegrableExponentError
from plapsys.mesh import (
    ScalarField,
    build_mesh,
    gradient,
    integrate_singular,
    norm_Lr,
    norm_sup_grad,
    read_fields_csv,
    refine,
    write_fields_csv,
)

UNIT = [(0.0, 1.0)]
SQUARE = [(0.0, 1.0), (0.0, 1.0)]


def test_interval_distance():
    m = build_mesh(1, UNIT, 5)
    np.testing.assert_array_equal(m.dist, [0, 0.25, 0.5, 0.25, 0])


def test_square_center_distance():
    m = build_mesh(2, SQUARE, (3, 3))
    assert m.dist[1, 1] == 0.5


def test_rectangle_distance():
    m = build_mesh(2, [(0, 2), (0, 1)], (9, 5))
    assert m.dist[4, 2] == pytest.approx(0.5, abs=1e-15)
    assert m.coords[0][4] == 1.0 and m.coords[1][2] == 0.5


@pytest.mark.parametrize(
    "args",
    [(3, SQUARE, 5), (1, UNIT, 2), (2, SQUARE, (5, 2)), (1, [(1.0, 1.0)], 5), (2, UNIT, 5)],
)
def test_build_mesh_rejects_bad_input(args):
    with pytest.raises(ConfigurationError):
        build_mesh(*args)


@settings(max_examples=30, deadline=None)
@given(
    dim=st.sampled_from([1, 2]),
    nx=st.integers(3, 20),
    ny=st.integers(3, 20),
    a=st.floats(-3, 3),
    w=st.floats(0.1, 5),
    b=st.floats(-3, 3),
    hgt=st.floats(0.1, 5),
)
def test_distance_invariants(dim, nx, ny, a, w, b, hgt):
    ext = [(a, a + w), (b, b + hgt)][:dim]
    n = (nx, ny)[:dim]
    m = build_mesh(dim, ext, n)
    assert np.all(m.dist[m.boundary_mask] == 0)
    assert np.all(m.dist[~m.boundary_mask] > 0)
    for ax in range(dim):
        step = np.abs(np.diff(m.dist, axis=ax))
        assert np.all(step <= m.h[ax] * (1 + 1e-12))


def test_interval_distance_is_exact_min():
    m = build_mesh(1, [(0.0, 3.0)], 31)
    x = m.coords[0]
    np.testing.assert_allclose(m.dist, np.minimum(x, 3.0 - x), atol=1e-15)


def test_gradient_affine_and_quadratic():
    m = build_mesh(1, UNIT, 5)
    np.testing.assert_allclose(gradient(ScalarField.from_function(m, lambda x: 3 * x))[..., 0], 3.0)
    np.testing.assert_array_equal(gradient(ScalarField.zeros(m)), 0.0)
    g = gradient(ScalarField.from_function(m, lambda x: x**2))[..., 0]
    assert g[2] == pytest.approx(1.0, abs=1e-14)


def test_gradient_affine_2d():
    m = build_mesh(2, SQUARE, (7, 9))
    g = gradient(ScalarField.from_function(m, lambda x, y: 2 * x - 5 * y + 1))
    np.testing.assert_allclose(g[..., 0], 2.0, atol=1e-12)
    np.testing.assert_allclose(g[..., 1], -5.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_gradient_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    m = build_mesh(2, SQUARE, (6, 5))
    f, g = ScalarField(m, rng.normal(size=m.shape)), ScalarField(m, rng.normal(size=m.shape))
    lhs = gradient(a * f + b * g)
    rhs = a * gradient(f) + b * gradient(g)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)


def test_norm_sup_grad_torsion():
    m = build_mesh(1, UNIT, 257)
    u = ScalarField.from_function(m, lambda x: x * (1 - x) / 2)
    assert norm_sup_grad(u) == pytest.approx(0.5, abs=2 * m.h[0])
    assert norm_sup_grad(ScalarField.zeros(m)) == 0.0


def test_norm_Lr_examples():
    m1 = build_mesh(1, UNIT, 257)
    for r in (1, 2, 3.5):
        assert norm_Lr(ScalarField(m1, 1.0), r) == pytest.approx(1.0, abs=1e-12)
    m2 = build_mesh(2, SQUARE, (9, 9))
    assert norm_Lr(ScalarField(m2, 2.0), 2) == pytest.approx(2.0, abs=1e-12)
    x = ScalarField.from_function(m1, lambda x: x)
    assert norm_Lr(x, 2) == pytest.approx(1 / np.sqrt(3), abs=1e-3)
    with pytest.raises(ConfigurationError):
        norm_Lr(x, 0.5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), r=st.floats(1, 6))
def test_norm_Lr_monotone(seed, r):
    rng = np.random.default_rng(seed)
    m = build_mesh(2, SQUARE, (5, 6))
    f = rng.normal(size=m.shape)
    g = np.abs(f) + rng.uniform(0, 1, m.shape)
    assert norm_Lr(ScalarField(m, f), r) <= norm_Lr(ScalarField(m, g), r) + 1e-14


def test_integrate_singular_examples():
    m = build_mesh(1, UNIT, 513)
    one = ScalarField(m, 1.0)
    assert integrate_singular(0.0, one) == pytest.approx(1.0, abs=1e-12)
    # exact distance-weighted integral: 2^(-mu)/(mu+1)
    assert integrate_singular(-0.5, one) == pytest.approx(2**0.5 / 0.5, abs=0.01)
    with pytest.raises(NonIntegrableExponentError):
        integrate_singular(-1.0, one)


@pytest.mark.parametrize("mu", [-0.9, -0.5, -0.3, 0.0, 0.7])
def test_integrate_singular_matches_quad_1d(mu):
    m = build_mesh(1, UNIT, 257)
    f = ScalarField.from_function(m, lambda x: 1 + x)
    ref, _ = integrate.quad(lambda x: min(x, 1 - x) ** mu * (1 + x), 0, 1, points=[0.5], limit=200)
    assert integrate_singular(mu, f) == pytest.approx(ref, rel=1e-4)


@pytest.mark.parametrize("mu", [-0.5, -0.3, 0.0])
def test_integrate_singular_rectangle_closed_form(mu):
    # {d > t} on [0,2]x[0,1] has area (2-2t)(1-2t), so int d^mu = int_0^1/2 t^mu (6 - 8t) dt
    ref = 6 * 0.5 ** (mu + 1) / (mu + 1) - 8 * 0.5 ** (mu + 2) / (mu + 2)
    m = build_mesh(2, [(0, 2), (0, 1)], (65, 33))
    assert integrate_singular(mu, ScalarField(m, 1.0)) == pytest.approx(ref, rel=1e-3)


@pytest.mark.parametrize("mu", [-0.75, -0.5, -0.2, 0.0])
def test_integrate_singular_refinement(mu):
    exact = 2.0**-mu / (mu + 1)
    errs = []
    for n in (33, 65, 129):
        m = build_mesh(1, UNIT, n)
        errs.append(abs(integrate_singular(mu, ScalarField(m, 1.0)) - exact))
    assert errs[-1] < 1e-10
    assert errs[1] <= 5 * max(errs[0], 1e-14)


def test_refine_nests_nodes():
    m = build_mesh(2, SQUARE, (5, 9))
    f = refine(m)
    assert f.n == (9, 17)
    np.testing.assert_allclose(f.coords[0][::2], m.coords[0])


def test_scalar_field_is_read_only():
    m = build_mesh(1, UNIT, 5)
    f = ScalarField(m, np.arange(5.0))
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    np.testing.assert_array_equal(f.dirichlet().values, [0, 1, 2, 3, 0])


def test_csv_roundtrip(tmp_path):
    m = build_mesh(2, SQUARE, (5, 4))
    rng = np.random.default_rng(0)
    u = ScalarField(m, rng.normal(size=m.shape))
    path = tmp_path / "f.csv"
    write_fields_csv(path, m, {"u": u})
    back = read_fields_csv(path, m)
    np.testing.assert_array_equal(back["u"].values, u.values)
    assert path.read_text().splitlines()[0] == "x,y,dist,u"
