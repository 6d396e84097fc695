"""
Tests for linear PUAL: beta system, soft threshold, ADMM steps and fit
"""

import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from dataset import PUDataset, Standardizer, make_rng
from errors import InvalidHyperparameter, NonPositiveC, SingularSystem
from pual_linear import (AdmmState, BetaSystem, Hyperparams, LinearModel, StopCriteria, assemble_beta_system,
                         augmented_beta_objective, fit, objective_value, predict_linear, soft_threshold, solve_beta,
                         update_dual, update_h)
from similarity import KnnParams, LaplacianMatrix, build_laplacian

ORACLE_GRID = np.linspace(-10, 10, 20001)


def hand_problem():
    """One labeled positive at 1, one unlabeled at -1"""
    data = PUDataset([[1.0]], [[-1.0]])
    hp = Hyperparams(c_u=1.0, lam=1.0, mu1=1.0)
    return data, LaplacianMatrix.zeros(2), hp, AdmmState.initial(1)


def random_problem(seed, n_p=None, n_u=None, m=None):
    rng = make_rng(seed)
    n_p = n_p or int(rng.integers(3, 40))
    n_u = n_u or int(rng.integers(3, 40))
    m = m or int(rng.integers(1, 6))
    data = PUDataset(rng.normal(1.0, 1.0, size=(n_p, m)), rng.normal(-0.5, 1.5, size=(n_u, m)))
    hp = Hyperparams(c_p=1.0, c_u=float(rng.uniform(0.05, 1)), lam=float(rng.uniform(0.1, 2)),
                     mu1=float(rng.uniform(0.5, 2)), knn=KnnParams(2, 1.0))
    R = build_laplacian(data.features_pu, hp.knn)
    state = AdmmState(rng.uniform(0, 1, n_p), rng.normal(size=n_p))
    return data, R, hp, state


# Beta system

def test_hand_beta_system():
    data, R, hp, state = hand_problem()
    system = assemble_beta_system(data, R, hp, state)
    assert_allclose(system.m11, [[4.0]])
    assert_allclose(system.m12, [-1.0])
    assert_allclose(system.m21, [-1.0])
    assert system.m22 == pytest.approx(3.0)
    assert_allclose(system.m1, [3.0])
    assert system.m2 == pytest.approx(-1.0)

    beta, beta0 = solve_beta(system)
    assert_allclose(beta, [8 / 11])
    assert beta0 == pytest.approx(-1 / 11)


def test_ridge_only_system():
    data = PUDataset([[1.0, 2.0]], [[3.0, -1.0]])
    hp = Hyperparams(c_u=0.0, lam=2.5, mu1=0.0)
    system = assemble_beta_system(data, LaplacianMatrix.zeros(2), hp, AdmmState.initial(1))
    assert_allclose(system.m11, 2.5 * np.eye(2))


def test_zero_right_hand_side():
    system = BetaSystem(np.eye(2), np.zeros(2), np.zeros(2), 1.0, np.zeros(2), 0.0)
    beta, beta0 = solve_beta(system)
    assert_allclose(beta, [0, 0])
    assert beta0 == 0


def test_m12_matches_m21():
    data, R, hp, state = random_problem(4)
    system = assemble_beta_system(data, R, hp, state)
    assert_allclose(system.m12, system.m21, rtol=1e-10, atol=1e-12)


def test_singular_system():
    system = BetaSystem(np.zeros((1, 1)), np.zeros(1), np.zeros(1), 0.0, np.zeros(1), 0.0)
    with pytest.raises(SingularSystem):
        solve_beta(system)


@pytest.mark.parametrize("seed", range(20))
def test_beta_step_is_stationary(seed):
    data, R, hp, state = random_problem(seed)
    beta, beta0 = solve_beta(assemble_beta_system(data, R, hp, state))
    point = np.append(beta, beta0)

    def objective(values):
        return augmented_beta_objective(data, R, hp, state, values[:-1], values[-1])

    step = 1e-5
    scale = max(1.0, abs(objective(point)))
    for j in range(point.size):
        offset = np.zeros_like(point)
        offset[j] = step
        gradient = (objective(point + offset) - objective(point - offset)) / (2 * step)
        assert abs(gradient) / scale <= 1e-6


# Soft threshold and ADMM steps

def test_soft_threshold_branches():
    assert soft_threshold(1, 2) == 1
    assert soft_threshold(1, 0.5) == 0
    assert soft_threshold(1, -0.3) == -0.3
    assert_allclose(soft_threshold(1, np.array([2.0, 0.5, -0.3])), [1.0, 0.0, -0.3])


def test_soft_threshold_needs_positive_c():
    with pytest.raises(NonPositiveC):
        soft_threshold(0, 1.0)


@settings(max_examples=300, deadline=None)
@given(c=st.floats(1e-6, 5.0), d=st.floats(-10.0, 10.0))
def test_soft_threshold_matches_grid_minimizer(c, d):
    values = c * np.maximum(ORACLE_GRID, 0) + 0.5 * (ORACLE_GRID - d) ** 2
    best = ORACLE_GRID[np.argmin(values)]
    assert abs(soft_threshold(c, d) - best) <= 1e-3 + 1e-9


def test_soft_threshold_on_random_pairs():
    rng = make_rng(2024)
    for c, d in zip(rng.uniform(1e-9, 5.0, 10000), rng.uniform(-10.0, 10.0, 10000)):
        best = ORACLE_GRID[np.argmin(c * np.maximum(ORACLE_GRID, 0) + 0.5 * (ORACLE_GRID - d) ** 2)]
        assert abs(soft_threshold(c, d) - best) <= 1e-3 + 1e-9


def test_update_h_examples():
    data = PUDataset([[-1.0], [1.0]], [[0.0]])
    hp = Hyperparams(c_p=1.0, c_u=1.0, lam=1.0, mu1=1.0)
    # scores -1 and 1 with beta = 1, beta0 = 0
    h = update_h(data, (np.array([1.0]), 0.0), hp, AdmmState.initial(2))
    assert_allclose(h, [1.0, 0.0])


def h_step_objective(h, scores_p, hp, state):
    """C_p [h]_+ + u_h (1 - f - h) + mu1/2 (1 - f - h)^2, one value per labeled row"""
    slack = 1.0 - scores_p - h
    return hp.c_p * np.maximum(h, 0) + state.u_h * slack + hp.mu1 / 2 * slack ** 2


@pytest.mark.parametrize("seed", range(10))
def test_h_step_beats_every_grid_point(seed):
    data, _, hp, state = random_problem(seed)
    rng = make_rng(500 + seed)
    beta, beta0 = rng.normal(scale=0.5, size=data.m), float(rng.normal(scale=0.5))
    scores_p = data.features_p @ beta + beta0
    h = update_h(data, (beta, beta0), hp, state)

    reached = h_step_objective(h, scores_p, hp, state)
    for i in range(data.n_p):
        grid = h_step_objective(ORACLE_GRID, scores_p[i], hp, AdmmState(state.h[i], state.u_h[i]))
        assert reached[i] <= grid.min() + 1e-9


def test_update_dual_examples():
    data = PUDataset([[0.0]], [[1.0]])
    # score 0, so the residual 1 - 0 - h is 0.5 at h = 0.5
    state = AdmmState(np.array([0.5]), np.array([0.0]))
    u_h = update_dual(data, (np.array([0.0]), 0.0), state, 2.0)
    assert_allclose(u_h, [1.0])

    twice = update_dual(data, (np.array([0.0]), 0.0), AdmmState(state.h, u_h), 2.0)
    assert_allclose(twice - state.u_h, [2.0])

    at_rest = AdmmState(np.array([1.0]), np.array([0.3]))
    assert_allclose(update_dual(data, (np.array([0.0]), 0.0), at_rest, 2.0), [0.3])


# Objective

def test_objective_at_zero():
    data, R, hp, _ = random_problem(2)
    value = objective_value(data, R, hp, np.zeros(data.m), 0.0)
    assert value == pytest.approx(hp.c_p * data.n_p + hp.c_u * data.n_u)


def test_objective_with_constant_score():
    data, R, hp, _ = random_problem(3)
    value = objective_value(data, R, hp, np.zeros(data.m), 1.0)
    assert value == pytest.approx(hp.c_u * 4 * data.n_u, rel=1e-12)


def test_ridge_term_is_quadratic():
    data = PUDataset([[1.0, 2.0]], [[0.0, 1.0]])
    hp = Hyperparams(c_p=0.0, c_u=0.0, lam=1.0)
    R = LaplacianMatrix.zeros(2)
    beta = np.array([0.3, -0.7])
    assert objective_value(data, R, hp, 2 * beta, 0.0) == pytest.approx(4 * objective_value(data, R, hp, beta, 0.0))


# Fit and predict

def separable_toy():
    return PUDataset([[2.0], [2.5]], [[-2.0], [-2.5]])


def test_fit_separable_toy():
    hp = Hyperparams(c_u=1.0, lam=1.0, knn=KnnParams(1, 1.0))
    model, report = fit(separable_toy(), hp)
    assert report.converged
    assert report.final_primal_residual <= 1e-6
    _, labels = predict_linear(model, [[3.0], [-3.0]])
    assert labels.tolist() == [1, -1]


def test_fit_lowers_the_objective():
    data, _, hp, _ = random_problem(8, n_p=15, n_u=30, m=2)
    model, report = fit(data, hp, standardize=False, laplacian=build_laplacian(data.features_pu, hp.knn))
    R = build_laplacian(data.features_pu, hp.knn)
    assert objective_value(data, R, hp, model.beta, model.beta0) <= objective_value(data, R, hp, np.zeros(2), 0.0)
    assert report.objective_trace[-1] == pytest.approx(objective_value(data, R, hp, model.beta, model.beta0))


def test_infinite_tolerance_stops_after_one_iteration():
    hp = Hyperparams(c_u=1.0, lam=1.0, knn=KnnParams(1, 1.0))
    _, report = fit(separable_toy(), hp, StopCriteria(tol=math.inf))
    assert report.iterations == 1
    assert report.converged


def test_zero_iterations_returns_zero_model():
    hp = Hyperparams(c_u=1.0, lam=1.0, knn=KnnParams(1, 1.0))
    model, report = fit(separable_toy(), hp, StopCriteria(max_iter=0))
    assert_allclose(model.beta, [0.0])
    assert model.beta0 == 0.0
    assert not report.converged
    assert report.iterations == 0


def test_fit_rejects_zero_weights():
    with pytest.raises(InvalidHyperparameter):
        fit(separable_toy(), Hyperparams(c_u=0.0, lam=1.0, knn=KnnParams(1, 1.0)))
    with pytest.raises(InvalidHyperparameter):
        Hyperparams(c_u=-1.0)


def test_predict_examples():
    model = LinearModel(np.array([1.0]), 0.0, Standardizer.identity(1))
    scores, labels = predict_linear(model, [[2.0], [0.0]])
    assert_allclose(scores, [2.0, 0.0])
    assert labels.tolist() == [1, 1]

    negative = LinearModel(np.array([0.0]), -1.0, Standardizer.identity(1))
    assert predict_linear(negative, [[5.0], [-5.0]])[1].tolist() == [-1, -1]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
