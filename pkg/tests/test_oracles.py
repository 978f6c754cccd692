import numpy as np
import pytest

from jr2net.oracles import (build_dense, cube_to_vector, ista_objective, ista_solve, power_iteration,
                            soft_threshold, vector_to_cube)
from jr2net.sensing import SensingOperator
from jr2net.unrolled import NumericError


def test_dense_scalar_case():
    op = SensingOperator(np.array([[0.7]]), 1)
    np.testing.assert_array_equal(build_dense(op), [[0.7]])


def test_dense_row_sparsity_pattern():
    op = SensingOperator.random(4, 5, 3, seed=0)
    Phi = build_dense(op)
    assert Phi.shape == (20, 60)
    assert (np.count_nonzero(Phi, axis=1) <= 3).all()


def test_dense_matches_forward_and_adjoint():
    rng = np.random.default_rng(1)
    for _ in range(50):
        op = SensingOperator.random(4, 4, 3, transmittance_p=rng.uniform(0.1, 0.9), seed=rng)
        Phi = build_dense(op)
        x = rng.standard_normal((4, 4, 3))
        y = rng.standard_normal((4, 4))
        np.testing.assert_allclose(Phi @ cube_to_vector(x), op.forward(x).ravel(), rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(vector_to_cube(Phi.T @ y.ravel(), 4, 4, 3), op.adjoint(y),
                                   rtol=1e-12, atol=1e-15)


def test_dense_size_guard():
    with pytest.raises(MemoryError):
        build_dense(SensingOperator.random(40, 40, 8, seed=0))


def test_vector_round_trip():
    x = np.arange(24.0).reshape(2, 3, 4)
    np.testing.assert_array_equal(vector_to_cube(cube_to_vector(x), 2, 3, 4), x)


def test_power_iteration_matches_dense_spectrum():
    op = SensingOperator.random(4, 4, 3, seed=2)
    Phi = build_dense(op)
    assert power_iteration(op, iters=300) == pytest.approx(np.linalg.norm(Phi, 2) ** 2, rel=1e-6)


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, -0.5, 0.2, 2.0]), 1.0), [-2, 0, 0, 1])


def test_ista_small_tau_reaches_least_squares():
    # C=1 with a fully open aperture: Phi is the identity, so least squares is y itself
    rng = np.random.default_rng(3)
    op = SensingOperator(np.ones((5, 6)) * 0.8, 1)
    y = rng.random((5, 6))
    x = ista_solve(y, op, tau=1e-10, iterations=300)
    np.testing.assert_allclose(x[..., 0], y / 0.8, rtol=1e-6)


def test_ista_objective_non_increasing():
    rng = np.random.default_rng(4)
    op = SensingOperator.random(8, 8, 4, seed=rng)
    y = op.forward(rng.random((8, 8, 4)))
    hist = []
    ista_solve(y, op, tau=0.01, iterations=100, history=hist)
    assert hist[0] <= ista_objective(np.zeros((8, 8, 4)), y, op, 0.01)
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_ista_divergence_detected(monkeypatch):
    rng = np.random.default_rng(5)
    op = SensingOperator.random(6, 6, 3, seed=rng)
    y = op.forward(rng.random((6, 6, 3)))

    class Inflated:
        # adjoint scaled up so the step from the true operator norm overshoots
        shape = op.shape
        forward = staticmethod(op.forward)

        @staticmethod
        def adjoint(v):
            return 50 * op.adjoint(v)

    monkeypatch.setattr("jr2net.oracles.power_iteration", lambda o: power_iteration(op))
    with pytest.raises(NumericError):
        ista_solve(y, Inflated, tau=0.01, iterations=100)


def test_ista_rejects_bad_tau():
    op = SensingOperator.random(4, 4, 2, seed=0)
    with pytest.raises(ValueError):
        ista_solve(np.zeros((4, 4)), op, tau=0)
