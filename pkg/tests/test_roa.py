import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from zkroa import roa
from zkroa.dictionary import make_dictionary
from zkroa.errors import DivergenceError, DomainError, SeedBelowThresholdError
from zkroa.systems import builtin, closed_form_u_1d


def closed_form_field():
    def grad(z):
        a = np.abs(z[:, 0])
        inside = a < 1
        s = np.where(inside, a, 0.0)
        du = -1.0 / ((1 + s) ** 1.5 * np.sqrt(1 - s))
        return np.where(inside, du * np.sign(z[:, 0]), 0.0)[:, None]
    return roa.FunctionField(lambda z: closed_form_u_1d(z[:, 0]), grad)


def test_identity_operator_stops_immediately():
    d = make_dictionary("cos_gauss_1d", 3, 1)
    u = roa.build_u_zk(np.eye(d.size), d, np.zeros(1), tol=1e-2, K=10)
    assert u.iterations == 1 and u.final_residual == 0
    w = np.zeros(d.size)
    w[d.unit_index()] = 1
    np.testing.assert_array_equal(u.coeffs, w)
    x = np.linspace(-1, 1, 7)[:, None]
    np.testing.assert_allclose(u.value(x), np.exp(-x[:, 0] ** 2 / 4))


def test_single_step():
    rng = np.random.default_rng(0)
    d = make_dictionary("cos_gauss_1d", 3, 1)
    T = rng.normal(size=(5, 5)) * 0.3
    u = roa.build_u_zk(T, d, np.zeros(1), tol=1e9, K=1)
    assert u.iterations == 1
    np.testing.assert_allclose(u.coeffs, T[:, d.unit_index()])


def test_vector_mode_matches_matrix_mode():
    rng = np.random.default_rng(1)
    d = make_dictionary("cos_gauss_1d", 4, 1)
    T = rng.normal(size=(7, 7)) * 0.2
    a = roa.build_u_zk(T, d, np.zeros(1), tol=1e-12, K=6, mode="matrix")
    b = roa.build_u_zk(T, d, np.zeros(1), tol=1e-12, K=6, mode="vector")
    np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=1e-12)
    assert b.mode == "vector"


def test_divergence_is_reported():
    d = make_dictionary("cos_gauss_1d", 2, 1)
    with pytest.raises(DivergenceError, match="smaller time step"):
        roa.build_u_zk(10 * np.eye(3), d, np.zeros(1), tol=1e-3, K=20)


def test_residual_record(cubic_run):
    u = cubic_run["u"]
    assert len(u.residuals) == u.iterations
    assert all(np.isfinite(u.residuals))
    assert u.final_residual == u.residuals[-1]
    assert u.final_residual <= 1e-2 or u.iterations == 10


def test_constant_field_fills_grid(cubic):
    ones = roa.FunctionField(lambda z: np.ones(len(z)), lambda z: np.zeros_like(z))
    mask = roa.extract_roa(ones, cubic, 50, 1e-3)
    assert mask.mask.all() and mask.volume_fraction == 1.0
    assert roa.verified_fraction(cubic, ones, mask, 0.05) == 0.0


def test_two_bumps_only_seed_component():
    sys = builtin("vdp_reversed")
    bumps = roa.FunctionField(
        lambda z: np.exp(-np.sum(z ** 2, 1) * 4) + np.exp(-np.sum((z - [2.0, 2.0]) ** 2, 1) * 4)
    )
    mask = roa.extract_roa(bumps, sys, (32, 32), 0.1)
    values = roa.evaluate_on_grid(bumps, mask.grid)
    labels, count = ndimage.label(values >= 0.1)
    assert count == 2
    seed = mask.grid.cell_of(sys.x_eq)
    np.testing.assert_array_equal(mask.mask, labels == labels[seed])
    assert np.all(values[mask.mask] >= 0.1)


@settings(max_examples=60, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 32), st.integers(1, 32)), elements=st.booleans()),
       st.data())
def test_flood_fill_matches_labelling(region, data):
    seed = (data.draw(st.integers(0, region.shape[0] - 1)),
            data.draw(st.integers(0, region.shape[1] - 1)))
    got = roa.flood_fill(region, seed)
    if not region[seed]:
        assert not got.any()
        return
    labels, _ = ndimage.label(region)
    np.testing.assert_array_equal(got, labels == labels[seed])


def test_flood_fill_3d_face_connectivity():
    region = np.zeros((3, 3, 3), bool)
    region[0, 0, 0] = region[1, 1, 1] = True  # diagonal neighbours only
    assert roa.flood_fill(region, (0, 0, 0)).sum() == 1
    region[1, 0, 0] = region[1, 1, 0] = True
    assert roa.flood_fill(region, (0, 0, 0)).sum() == 4


def test_seed_below_threshold(cubic):
    with pytest.raises(SeedBelowThresholdError):
        roa.extract_roa(roa.FunctionField(lambda z: np.zeros(len(z))), cubic, 11, 1e-3)


def test_closed_form_interval(cubic):
    mask = roa.extract_roa(closed_form_field(), cubic, 601, 1e-3)
    lo, hi = mask.interval()
    assert -1 < lo < -0.99 and 0.99 < hi < 1


def test_closed_form_fully_verified(cubic):
    u = closed_form_field()
    mask = roa.extract_roa(u, cubic, 601, 1e-3)
    assert roa.verified_fraction(cubic, u, mask, 0.05) == 1.0


def test_lie_derivative_at_equilibrium(cubic_run, cubic):
    u = cubic_run["u"]
    val = roa.lie_derivative(cubic, u, cubic.x_eq[None, :])[0]
    assert abs(val) <= 1e-6 * np.linalg.norm(u.coeffs)


def test_lie_derivative_vs_finite_differences(cubic_run, cubic):
    u = cubic_run["u"]
    x = np.random.default_rng(2).uniform(-1.4, 1.4, size=(100, 1))
    h = 1e-5
    fd = (u.value(x + h) - u.value(x - h)) / (2 * h) * cubic.field(x)[:, 0]
    lie = roa.lie_derivative(cubic, u, x)
    np.testing.assert_allclose(lie, fd, rtol=1e-5, atol=1e-7)


def test_lie_derivative_2d_vs_finite_differences():
    sys = builtin("vdp_reversed")
    d = make_dictionary("cos_gauss_nd", 4, 2, period_scale=6.0)
    rng = np.random.default_rng(3)
    u = roa.UApprox(d, rng.normal(size=d.size) * 0.1, 1, 0.0)
    x = rng.uniform(-2.5, 2.5, size=(100, 2))
    h = 1e-5
    grad = np.stack([(u.value(x + h * e) - u.value(x - h * e)) / (2 * h) for e in np.eye(2)], 1)
    fd = np.sum(grad * sys.field(x), 1)
    np.testing.assert_allclose(roa.lie_derivative(sys, u, x), fd, rtol=1e-5, atol=1e-8)


def test_sign_equivalence(cubic_run, cubic):
    u = cubic_run["u"]
    x = np.linspace(-1.5, 1.5, 601)[:, None]
    val = u.value(x)
    keep = val > 1e-12
    lie_u = roa.lie_derivative(cubic, u, x[keep])
    v = roa.FunctionField(lambda z: roa.v_zk(u, z), lambda z: -u.grad(z) / u.value(z)[:, None])
    lie_v = roa.lie_derivative(cubic, v, x[keep])
    np.testing.assert_array_equal(np.sign(lie_v), -np.sign(lie_u))


def test_v_zk_values(cubic_run):
    one = roa.FunctionField(lambda z: np.ones(len(z)))
    assert roa.v_zk(one, np.zeros((1, 1)))[0] == 0.0
    u = cubic_run["u"]
    assert roa.v_zk(u, np.array([[0.6]]))[0] == pytest.approx(np.log(2), abs=0.05)
    at_floor = roa.FunctionField(lambda z: np.full(len(z), 1e-12))
    assert roa.v_zk(at_floor, np.zeros((1, 1)), floor=1e-12)[0] == pytest.approx(-np.log(1e-12))
    neg = roa.FunctionField(lambda z: -np.ones(len(z)))
    assert roa.v_zk(neg, np.zeros((1, 1)), floor=1e-6)[0] == pytest.approx(-np.log(1e-6))
    with pytest.raises(DomainError):
        roa.v_zk(neg, np.zeros((1, 1)), floor=None)


def test_threshold_sensitivity(cubic):
    u = closed_form_field()
    s = roa.threshold_sensitivity(u, cubic, 301, 0.2)
    assert s["half"] >= s["base"] >= s["double"]
    assert s["base"] == roa.extract_roa(u, cubic, 301, 0.2).volume_fraction


def test_imag_residue():
    d = make_dictionary("complex_fourier_nd", 2, 1, period_scale=12.0)
    c = np.zeros(d.size, complex)
    c[d.unit_index()] = 1
    assert roa.imag_residue(roa.UApprox(d, c, 1, 0.0), np.linspace(-1, 1, 5)[:, None]) == 0
    c[0] = 0.5
    assert roa.imag_residue(roa.UApprox(d, c, 1, 0.0), np.linspace(-1, 1, 5)[:, None]) > 0


def test_u_round_trip(tmp_path, cubic_run):
    u = cubic_run["u"]
    u.meta["system"] = {"id": "cubic1d", "overrides": {}}
    roa.write_u(tmp_path / "u.txt", u)
    back = roa.read_u(tmp_path / "u.txt")
    assert np.array_equal(back.coeffs, u.coeffs)
    assert back.dictionary == u.dictionary
    assert (back.iterations, back.final_residual, back.mode) == (u.iterations, u.final_residual, u.mode)
    assert back.residuals == u.residuals
