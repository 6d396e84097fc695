"""
Tests for the GLLC baseline
"""

import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dataset import PUDataset, make_rng
from errors import InvalidHyperparameter, ModelFormatError
from gllc import GllcModel, fit_gllc_kernel, fit_gllc_linear, gllc_kernel_objective, gllc_objective, predict
from pual_kernel import GramBlocks, KernelSpec, gram_rbf
from pual_linear import Hyperparams
from similarity import KnnParams, build_laplacian


def random_problem(seed, n_p=10, n_u=25, m=3):
    rng = make_rng(seed)
    data = PUDataset(rng.normal(1.0, 1.0, size=(n_p, m)), rng.normal(-0.5, 1.5, size=(n_u, m)))
    hp = Hyperparams(c_p=float(rng.uniform(0.5, 2)), c_u=float(rng.uniform(0.05, 1)),
                     lam=float(rng.uniform(0.2, 3)), knn=KnnParams(3, 1.0))
    return data, hp, build_laplacian(data.features_pu, hp.knn)


def numeric_gradient(objective, point, step=1e-5):
    gradient = np.empty_like(point)
    for j in range(point.size):
        offset = np.zeros_like(point)
        offset[j] = step
        gradient[j] = (objective(point + offset) - objective(point - offset)) / (2 * step)
    return gradient


@pytest.mark.parametrize("seed", range(20))
def test_linear_solution_is_stationary(seed):
    data, hp, R = random_problem(seed)
    model = fit_gllc_linear(data, hp, standardize=False, laplacian=R)
    point = np.append(model.beta, model.beta0)
    gradient = numeric_gradient(lambda v: gllc_objective(data, R, hp, v[:-1], v[-1]), point)
    scale = max(1.0, gllc_objective(data, R, hp, model.beta, model.beta0))
    assert np.abs(gradient).max() / scale <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_kernel_solution_is_stationary(seed):
    data, hp, R = random_problem(seed, n_p=6, n_u=10, m=2)
    model = fit_gllc_kernel(data, hp, KernelSpec.rbf(1.5), standardize=False, laplacian=R)
    grams = GramBlocks.from_full(gram_rbf(data.features_pu, data.features_pu, 1.5), data.n_p)
    point = np.append(model.omega, model.beta0)
    gradient = numeric_gradient(lambda v: gllc_kernel_objective(grams, R, hp, v[:-1], v[-1]), point)
    scale = max(1.0, gllc_kernel_objective(grams, R, hp, model.omega, model.beta0))
    assert np.abs(gradient).max() / scale <= 1e-6


def test_mirror_image_data_has_zero_offset():
    positives = np.array([[1.0], [2.0], [3.5]])
    data = PUDataset(positives, -positives)
    hp = Hyperparams(c_p=0.5, c_u=0.5, knn=KnnParams(1, 1.0))
    model = fit_gllc_linear(data, hp)
    assert abs(model.beta0) <= 1e-10
    assert model.beta[0] > 0


@pytest.mark.parametrize("seed", range(30))
def test_linear_kernel_matches_the_linear_fit(seed):
    data, hp, R = random_problem(seed)
    linear = fit_gllc_linear(data, hp, laplacian=None)
    kernel = fit_gllc_kernel(data, hp, KernelSpec.linear_via_b(hp))
    queries = make_rng(50 + seed).normal(size=(15, 3))
    assert kernel.beta0 == pytest.approx(linear.beta0, abs=1e-6)
    assert_allclose(predict(kernel, queries)[0], predict(linear, queries)[0], rtol=1e-6, atol=1e-6)


def test_solution_beats_the_zero_model():
    data, hp, R = random_problem(21)
    model = fit_gllc_linear(data, hp, standardize=False, laplacian=R)
    assert gllc_objective(data, R, hp, model.beta, model.beta0) <= gllc_objective(data, R, hp, np.zeros(3), 0.0)


def test_coefficients_shrink_as_lambda_grows():
    data, hp, R = random_problem(33)
    norms = []
    for lam in (0.01, 0.1, 1.0, 10.0, 100.0):
        model = fit_gllc_linear(data, Hyperparams(hp.c_p, hp.c_u, lam, hp.mu1, hp.knn), standardize=False, laplacian=R)
        norms.append(np.linalg.norm(model.beta))
    assert all(later <= earlier + 1e-12 for earlier, later in zip(norms, norms[1:]))


def test_linear_via_b_reads_only_lambda_from_its_parameters():
    data, hp, _ = random_problem(40)
    queries = make_rng(41).normal(size=(10, 3))
    reference = fit_gllc_kernel(data, hp, KernelSpec.linear_via_b(hp))
    other = Hyperparams(c_p=3.0, c_u=0.9, lam=hp.lam, mu1=7.0, knn=KnnParams(2, 4.0))
    varied = fit_gllc_kernel(data, hp, KernelSpec.linear_via_b(other))
    np.testing.assert_array_equal(varied.b_matrix, hp.lam * np.eye(3))
    assert_allclose(predict(varied, queries)[0], predict(reference, queries)[0], rtol=1e-12, atol=1e-12)


def test_model_holds_exactly_one_parameter_vector():
    with pytest.raises(ModelFormatError):
        GllcModel(0.0, None)
    with pytest.raises(ModelFormatError):
        GllcModel(0.0, None, beta=np.zeros(1), omega=np.zeros(1))


def test_zero_weights_are_rejected():
    data, _, _ = random_problem(1)
    with pytest.raises(InvalidHyperparameter):
        fit_gllc_linear(data, Hyperparams(c_p=0.0, knn=KnnParams(3, 1.0)))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
