"""
GLLC baseline: squared loss on both the labeled-positive and the unlabeled
set plus the local constraint f'Rf. The objective is a convex quadratic, so
both variants are solved in closed form from their normal equations.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from dataset import PUDataset, Standardizer, standardize_training
from errors import DimensionMismatch, ModelFormatError, SingularSystem
from pual_kernel import LINEAR_VIA_B, GramBlocks, KernelSpec, predict_kernel, training_grams
from pual_linear import JITTER_SCALE, MAX_CONDITION, Hyperparams, as_matrix, factor_symmetric, predict_linear
from similarity import LaplacianMatrix, build_laplacian

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GllcModel:
    """Either beta (linear) or omega with retained rows (kernel), never both"""

    beta0: float
    standardizer: Standardizer
    beta: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    kernel: Optional[KernelSpec] = None
    train_features: Optional[np.ndarray] = None
    b_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.beta is None) == (self.omega is None):
            raise ModelFormatError("GllcModel holds exactly one of beta and omega")

    @property
    def is_kernel(self) -> bool:
        return self.omega is not None

    def predict(self, features) -> Tuple[np.ndarray, np.ndarray]:
        if self.is_kernel:
            return predict_kernel(self, features)
        return predict_linear(self, features)


def _prepare(data: PUDataset, hp: Hyperparams, standardize: bool, laplacian: Optional[LaplacianMatrix]):
    hp.validate()
    standardizer, train = standardize_training(data, standardize)
    R = laplacian if laplacian is not None else build_laplacian(train.features_pu, hp.knn)
    if R.n != train.n:
        raise DimensionMismatch(f"R has side {R.n}, data has {train.n} rows")
    return standardizer, train, R


def gllc_objective(data: PUDataset, R, hp: Hyperparams, beta, beta0: float) -> float:
    beta = np.asarray(beta, dtype=float)
    scores = data.features_pu @ beta + beta0
    R = as_matrix(R)
    return float(hp.lam / 2 * beta @ beta
                 + hp.c_p * ((1.0 - scores[:data.n_p]) ** 2).sum()
                 + hp.c_u * ((1.0 + scores[data.n_p:]) ** 2).sum()
                 + scores @ R @ scores)


def gllc_kernel_objective(grams: GramBlocks, R, hp: Hyperparams, omega, beta0: float) -> float:
    """1/2 Omega' Phi Omega + squared losses + f'Rf with f = Phi Omega + beta0"""
    omega = np.asarray(omega, dtype=float)
    scores = grams.phi_pu @ omega + beta0
    R = as_matrix(R)
    return float(omega @ grams.phi_pu @ omega / 2
                 + hp.c_p * ((1.0 - scores[:grams.n_p]) ** 2).sum()
                 + hp.c_u * ((1.0 + scores[grams.n_p:]) ** 2).sum()
                 + scores @ R @ scores)


def fit_gllc_linear(data: PUDataset, hp: Hyperparams, standardize: bool = True,
                    laplacian: Optional[LaplacianMatrix] = None) -> GllcModel:
    """Zero gradient in (beta, beta0): one symmetric (m+1) system"""
    standardizer, train, R = _prepare(data, hp, standardize, laplacian)
    x_p, x_u, x_pu = train.features_p, train.features_u, train.features_pu
    r_x = R.matrix @ x_pu
    r_one = R.matrix.sum(axis=1)

    a11 = (hp.lam * np.eye(train.m) + 2 * hp.c_p * x_p.T @ x_p
           + 2 * hp.c_u * x_u.T @ x_u + 2 * x_pu.T @ r_x)
    a12 = 2 * hp.c_p * x_p.sum(axis=0) + 2 * hp.c_u * x_u.sum(axis=0) + 2 * x_pu.T @ r_one
    a22 = 2 * hp.c_p * train.n_p + 2 * hp.c_u * train.n_u + 2 * r_one.sum()
    b1 = 2 * hp.c_p * x_p.sum(axis=0) - 2 * hp.c_u * x_u.sum(axis=0)
    b2 = 2 * hp.c_p * train.n_p - 2 * hp.c_u * train.n_u

    matrix = np.block([[a11, a12[:, None]], [a12[None, :], np.array([[a22]])]])
    solution = scipy.linalg.cho_solve(factor_symmetric(matrix, train.m, what="GLLC system"), np.append(b1, b2))
    logger.info("GLLC linear: solved %d-dimensional system", train.m + 1)
    return GllcModel(float(solution[train.m]), standardizer, beta=solution[:train.m])


def _solve_general(matrix: np.ndarray, rhs: np.ndarray, leading: int) -> np.ndarray:
    """LU solve with the same condition check and single jitter retry as the symmetric solver"""
    for attempt in range(2):
        if attempt:
            jitter = JITTER_SCALE * abs(np.trace(matrix[:leading, :leading])) / leading
            matrix = matrix.copy()
            matrix[np.arange(leading), np.arange(leading)] += jitter
            logger.warning("Retrying GLLC kernel solve with jitter %.3g", jitter)
        condition = np.linalg.cond(matrix)
        if np.isfinite(condition) and condition <= MAX_CONDITION:
            return scipy.linalg.lu_solve(scipy.linalg.lu_factor(matrix), rhs)
    raise SingularSystem(f"GLLC kernel system is singular or ill-conditioned (condition estimate {condition:.3g})")


def fit_gllc_kernel(data: PUDataset, hp: Hyperparams, kernel: KernelSpec, standardize: bool = True,
                    laplacian: Optional[LaplacianMatrix] = None, precomputed_gram=None) -> GllcModel:
    """
    Laplacian-regularized least squares with bias over the Gram of the
    training rows:

        (I + 2(D+R) Phi) Omega + 2(D+R) 1 beta0 = 2 D y
        2 1'(D+R) Phi Omega + 2 1'(D+R) 1 beta0 = 2 1' D y

    with D = diag(C_p on labeled rows, C_u on unlabeled rows), y = [1_p; -1_u].

    For linear_via_B the Gram is X X' / lambda, i.e. B = lambda I: the ridge
    part of GLLC's beta Hessian, the only part not carried by the explicit
    loss and Laplacian terms. Only b_params.lam is read; the other fields of
    b_params are ignored, unlike the PUAL B built by training_grams.
    """
    standardizer, train, R = _prepare(data, hp, standardize, laplacian)
    if kernel.kind == LINEAR_VIA_B:
        b_matrix = kernel.b_params.lam * np.eye(train.m)
        grams = GramBlocks.from_full(train.features_pu @ train.features_pu.T / kernel.b_params.lam, train.n_p)
    else:
        grams, b_matrix = training_grams(train, hp, kernel, R, precomputed_gram)

    n = train.n
    weights = np.concatenate([np.full(train.n_p, hp.c_p), np.full(train.n_u, hp.c_u)])
    targets = np.concatenate([np.ones(train.n_p), -np.ones(train.n_u)])
    coupling = np.diag(weights) + R.matrix
    coupling_one = coupling.sum(axis=1)

    matrix = np.empty((n + 1, n + 1))
    matrix[:n, :n] = np.eye(n) + 2 * coupling @ grams.phi_pu
    matrix[:n, n] = 2 * coupling_one
    matrix[n, :n] = 2 * coupling_one @ grams.phi_pu
    matrix[n, n] = 2 * coupling_one.sum()
    rhs = np.append(2 * weights * targets, 2 * (weights * targets).sum())

    solution = _solve_general(matrix, rhs, n)
    logger.info("GLLC kernel (%s): solved %d-dimensional system", kernel.kind, n + 1)
    return GllcModel(float(solution[n]), standardizer, omega=solution[:n], kernel=kernel,
                     train_features=train.features_pu, b_matrix=b_matrix)


def predict(model: GllcModel, features) -> Tuple[np.ndarray, np.ndarray]:
    return model.predict(features)
