import math

import numpy as np
import pytest

from zkroa import edmd
from zkroa.dictionary import make_dictionary
from zkroa.errors import DegenerateDataError
from zkroa.integrate import evaluate_T_delta
from zkroa.linalg import pinv_hermitian


def random_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@pytest.mark.parametrize("seed", range(20))
def test_exact_recovery(seed):
    rng = np.random.default_rng(seed)
    X = random_complex(rng, 64, 8)
    A = random_complex(rng, 8, 8)
    op = edmd.fit_operator(edmd.DataMatrices(X, X @ A, np.zeros((64, 1))))
    assert np.max(np.abs(op.T - A)) <= 1e-8
    assert op.residual <= 1e-8 * np.linalg.norm(X @ A)
    assert op.rank == 8


def test_identity_features():
    Y = random_complex(np.random.default_rng(0), 6, 6)
    op = edmd.fit_operator(edmd.DataMatrices(np.eye(6, dtype=complex), Y, np.zeros((6, 1))))
    np.testing.assert_allclose(op.T, Y, atol=1e-12)


def test_rank_deficient_features():
    rng = np.random.default_rng(3)
    base = random_complex(rng, 40, 5)
    X = np.concatenate([base, base[:, :2]], axis=1)  # duplicated columns
    Y = random_complex(rng, 40, 7)
    op = edmd.fit_operator(edmd.DataMatrices(X, Y, np.zeros((40, 1))))
    assert op.rank == 5
    G = X.conj().T @ X
    Gp, _ = pinv_hermitian(G)
    for lhs, rhs in ((G @ Gp @ G, G), (Gp @ G @ Gp, Gp)):
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)
    assert np.linalg.norm((G @ Gp).conj().T - G @ Gp) <= 1e-8
    assert np.linalg.norm((Gp @ G).conj().T - Gp @ G) <= 1e-8
    np.testing.assert_allclose(op.T, Gp @ X.conj().T @ Y, atol=1e-10)
    # Least-squares optimality: the residual is orthogonal to the column space.
    assert np.linalg.norm(X.conj().T @ (Y - X @ op.T)) <= 1e-8 * np.linalg.norm(Y)


def test_all_zero_features_are_degenerate():
    with pytest.raises(DegenerateDataError):
        edmd.fit_operator(edmd.DataMatrices(np.zeros((5, 3)), np.zeros((5, 3)), np.zeros((5, 1))))


def test_stack_at_equilibrium(cubic):
    d = make_dictionary("cos_gauss_1d", 4, 1)
    with pytest.warns(UserWarning, match="underdetermined"):
        data = edmd.stack_data(cubic, d, np.zeros((1, 1)), 1.0, 1001)
    np.testing.assert_array_equal(data.X[0], d.eval(np.zeros(1)))
    np.testing.assert_array_equal(data.Y[0], data.X[0])


def test_stack_rows_match_scalar_path(cubic):
    d = make_dictionary("cos_gauss_1d", 4, 1)
    x = np.linspace(-1.5, 1.5, 11)[:, None]
    data = edmd.stack_data(cubic, d, x, 1.0, 1001)
    assert data.X.shape == (11, 7)
    for m in range(11):
        np.testing.assert_array_equal(data.X[m], d.eval(x[m]))
        for i in range(d.size):
            ref = evaluate_T_delta(cubic, lambda s: d.eval(s)[:, i], x[m], 1.0, 1001)
            assert data.Y[m, i] == pytest.approx(ref, rel=1e-13, abs=1e-15)
    u = d.unit_index()
    # z_unit at the origin-centred dictionary is exp(-x^2 / 4).
    for m in range(11):
        ref = evaluate_T_delta(cubic, lambda s: np.exp(-s[:, 0] ** 2 / 4), x[m], 1.0, 1001)
        assert data.Y[m, u].real == pytest.approx(ref, rel=1e-12, abs=1e-15)
    assert np.all(np.isfinite(data.X)) and np.all(np.isfinite(data.Y))


def test_power_step_examples():
    W, diff = edmd.matrix_power_step(np.eye(3), np.eye(3))
    assert diff == 0
    T = np.diag([1.0, 0.5])
    W, diff = edmd.matrix_power_step(T, T)
    assert diff == pytest.approx(0.25, abs=1e-15)
    np.testing.assert_array_equal(W, T @ T)
    v, diff = edmd.matrix_power_step(T, np.array([1.0, 1.0]))
    assert diff == pytest.approx(0.5)
    with pytest.raises(ValueError):
        edmd.matrix_power_step(T, np.ones(3))
    with pytest.raises(ValueError):
        edmd.matrix_power_step(np.ones((2, 3)), np.ones(3))


def test_spectrum_of_diagonal():
    pairs = edmd.spectrum(np.diag([1.0, 0.5, 0.1]), 3, dt=1.0)
    rates = [p.rate for p in pairs]
    np.testing.assert_allclose(rates, [0, math.log(0.5), math.log(0.1)], atol=1e-8)
    assert all(p.converged for p in pairs)
    assert edmd.spectrum(np.eye(3), 0) == []


def test_spectrum_recovers_nonnormal_eigenvalues():
    rng = np.random.default_rng(2)
    S = rng.normal(size=(6, 6))
    T = S @ np.diag([0.9, -0.6, 0.4, 0.2, 0.1, 0.05]) @ np.linalg.inv(S)
    pairs = edmd.spectrum(T, 3, dt=2.0)
    np.testing.assert_allclose([p.mu for p in pairs], [0.9, -0.6, 0.4], atol=1e-8)
    for p in pairs:
        np.testing.assert_allclose(T @ p.vector, p.mu * p.vector, atol=1e-7)
    assert pairs[0].rate == pytest.approx(math.log(0.9) / 2.0)


def test_learned_cubic_leading_eigenvalue(cubic):
    d = make_dictionary("cos_gauss_1d", 16, 1)
    x = np.linspace(-1.5, 1.5, 301)[:, None]
    op = edmd.fit_operator(edmd.stack_data(cubic, d, x, 1.0, 501))
    mu = edmd.spectrum(op.T, 1)[0].mu
    oracle = np.linalg.eigvals(op.T)
    lead = oracle[np.argmax(np.abs(oracle))]
    assert abs(mu - lead) <= 1e-6
    assert abs(abs(mu) - 1) <= 0.05


def test_operator_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    T = random_complex(rng, 5, 5) * 1e-3
    d = make_dictionary("complex_fourier_nd", 2, 2)
    meta = {"dt": 1.5, "steps": 1001, "dictionary": d.descriptor(),
            "system": {"id": "power2m", "overrides": {}}}
    op = edmd.OperatorMatrix(T, 1e-12, 0.123, 5, meta)
    edmd.write_operator(tmp_path / "op.txt", op)
    back = edmd.read_operator(tmp_path / "op.txt")
    assert np.array_equal(back.T, T)
    assert (back.reg, back.residual, back.rank) == (1e-12, 0.123, 5)
    assert back.meta == meta


def test_spectrum_csv(tmp_path):
    pairs = edmd.spectrum(np.diag([1.0, 0.5]), 2)
    edmd.write_spectrum_csv(tmp_path / "s.csv", pairs)
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "index,re_mu,im_mu,re_rate,im_rate,converged"
    assert rows[2].split(",")[1] == "0.5"
