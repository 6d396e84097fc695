"""
PUAL with a non-linear decision boundary.

The linear solver's beta step is eliminated through B = M11 - M12 M21 / M22,
giving beta = B^-1 phi(X_[pu])' Omega. Only the Gram matrix Phi of the
training rows enters the updates, so any kernel can stand in for
X B^-1 X'. Prediction evaluates the kernel against the retained rows.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from dataset import PUDataset, Standardizer, standardize_training
from errors import (DegenerateM22, DimensionMismatch, InsufficientRank, InvalidHyperparameter,
                    NonPositiveWidth, SingularB, UnsupportedForPrecomputed)
from pual_linear import (LOG_EVERY, AdmmState, Hyperparams, SolveReport, StopCriteria, as_matrix, beta_blocks,
                         factor_symmetric, soft_threshold)
from similarity import LaplacianMatrix, build_laplacian

logger = logging.getLogger(__name__)

RBF = "rbf"
LINEAR_VIA_B = "linear_via_B"
PRECOMPUTED = "precomputed"
KERNEL_KINDS = (RBF, LINEAR_VIA_B, PRECOMPUTED)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice: rbf takes a width, linear_via_B the hyperparameters that define B"""

    kind: str
    width: Optional[float] = None
    b_params: Optional[Hyperparams] = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidHyperparameter(f"unknown kernel kind {self.kind!r}, expected one of {KERNEL_KINDS}")
        if self.kind == RBF:
            if self.width is None or not math.isfinite(self.width) or self.width <= 0:
                raise NonPositiveWidth(f"rbf width must be a positive real, got {self.width}")
            object.__setattr__(self, "width", float(self.width))
        elif self.width is not None:
            raise InvalidHyperparameter(f"width only applies to the rbf kernel, not {self.kind}")
        if (self.kind == LINEAR_VIA_B) != (self.b_params is not None):
            raise InvalidHyperparameter("b_params must be given for linear_via_B and only for it")

    @classmethod
    def rbf(cls, width: float) -> "KernelSpec":
        return cls(RBF, width=width)

    @classmethod
    def linear_via_b(cls, hp: Hyperparams) -> "KernelSpec":
        return cls(LINEAR_VIA_B, b_params=hp)

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind,
            'width': self.width,
            'b_params': self.b_params.to_dict() if self.b_params else None,
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "KernelSpec":
        b_params = payload.get('b_params')
        return cls(payload['kind'], payload.get('width'),
                   Hyperparams.from_dict(b_params) if b_params else None)


@dataclass(frozen=True)
class GramBlocks:
    phi_p: np.ndarray
    phi_u: np.ndarray
    phi_pu: np.ndarray

    @classmethod
    def from_full(cls, phi_pu, n_p: int) -> "GramBlocks":
        phi_pu = np.asarray(phi_pu, dtype=float)
        if phi_pu.ndim != 2 or phi_pu.shape[0] != phi_pu.shape[1]:
            raise DimensionMismatch(f"Gram matrix must be square, got shape {phi_pu.shape}")
        return cls(phi_pu[:n_p], phi_pu[n_p:], phi_pu)

    @property
    def n_p(self) -> int:
        return self.phi_p.shape[0]

    @property
    def n_u(self) -> int:
        return self.phi_u.shape[0]


@dataclass(frozen=True)
class KernelModel:
    """f(x) = Phi(x, X_[pu]) Omega + beta0 over the retained standardized training rows"""

    omega: np.ndarray
    beta0: float
    train_features: np.ndarray
    kernel: KernelSpec
    standardizer: Standardizer
    b_matrix: Optional[np.ndarray] = None

    def predict(self, features) -> Tuple[np.ndarray, np.ndarray]:
        return predict_kernel(self, features)


def gram_rbf(a, b, width: float) -> np.ndarray:
    """exp(-|a_i - b_j|^2 / (2 width^2))"""
    if not math.isfinite(width) or width <= 0:
        raise NonPositiveWidth(f"rbf width must be a positive real, got {width}")
    a, b = np.atleast_2d(np.asarray(a, dtype=float)), np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"feature counts differ: {a.shape[1]} vs {b.shape[1]}")
    return np.exp(-cdist(a, b, "sqeuclidean") / (2 * width ** 2))


def assemble_b_matrix(data: PUDataset, R, hp: Hyperparams) -> np.ndarray:
    """B = M11 - M12 M21 / M22 with the identity feature map"""
    m11, m12, m21, m22 = beta_blocks(data, R, hp)
    if not math.isfinite(m22) or m22 == 0:
        raise DegenerateM22(f"M22 = {m22}")
    b_matrix = m11 - np.outer(m12, m21) / m22
    return (b_matrix + b_matrix.T) / 2


def cross_gram_b(a, b, b_matrix: np.ndarray) -> np.ndarray:
    """a B^-1 b' via a Cholesky factor of B"""
    factor = factor_symmetric(b_matrix, b_matrix.shape[0], error=SingularB, what="B matrix")
    return np.asarray(a, dtype=float) @ scipy.linalg.cho_solve(factor, np.asarray(b, dtype=float).T)


def _b_grams(data: PUDataset, b_matrix: np.ndarray) -> GramBlocks:
    phi_pu = cross_gram_b(data.features_pu, data.features_pu, b_matrix)
    return GramBlocks.from_full((phi_pu + phi_pu.T) / 2, data.n_p)


def _check_rank(data: PUDataset):
    if data.n_p <= data.m or data.n_u <= data.m:
        raise InsufficientRank(
            f"linear_via_B needs n_p > m and n_u > m, got n_p={data.n_p} n_u={data.n_u} m={data.m}")


def gram_linear_via_B(data: PUDataset, hp: Hyperparams, R) -> GramBlocks:
    """Phi(X_[k], X_[pu]) = X_[k] B^-1 X_[pu]' for k in p, u, pu"""
    _check_rank(data)
    return _b_grams(data, assemble_b_matrix(data, R, hp))


def _m22(n_p: int, n_u: int, r_one: np.ndarray, hp: Hyperparams) -> float:
    m22 = 2 * hp.c_u * n_u + 2 * r_one.sum() + hp.mu1 * n_p
    if not math.isfinite(m22) or m22 == 0:
        raise DegenerateM22(f"M22 = {m22}")
    return float(m22)


def _m2(n_u: int, hp: Hyperparams, state: AdmmState) -> float:
    return float(-2 * hp.c_u * n_u + state.u_h.sum() + hp.mu1 * (1.0 - state.h).sum())


def _omega(n_u: int, r_one: np.ndarray, m22: float, hp: Hyperparams, state: AdmmState) -> np.ndarray:
    ratio = _m2(n_u, hp, state) / m22
    top = state.u_h - hp.mu1 * ratio + hp.mu1 * (1.0 - state.h)
    bottom = np.full(n_u, -2 * hp.c_u - 2 * ratio * hp.c_u)
    # R 1 is zero for a graph Laplacian; kept so any symmetric R is honoured
    return np.concatenate([top, bottom]) - 2 * ratio * r_one


def update_omega(data: PUDataset, R, hp: Hyperparams, state: AdmmState) -> np.ndarray:
    """Omega at the current h, u_h; its Gram image is the beta step of the linear solver"""
    r_one = as_matrix(R).sum(axis=1)
    return _omega(data.n_u, r_one, _m22(data.n_p, data.n_u, r_one, hp), hp, state)


def _beta0(grams: GramBlocks, r_one: np.ndarray, m22: float, hp: Hyperparams,
           state: AdmmState, omega: np.ndarray) -> float:
    q_b = (2 * hp.c_u * (grams.phi_u @ omega).sum()
           + 2 * r_one @ (grams.phi_pu @ omega)
           + hp.mu1 * (grams.phi_p @ omega).sum())
    return float((_m2(grams.n_u, hp, state) - q_b) / m22)


def update_beta0_kernel(grams: GramBlocks, R, hp: Hyperparams, state: AdmmState, omega) -> float:
    """beta0 = m2 / M22 - Q_b / M22"""
    r_one = as_matrix(R).sum(axis=1)
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (grams.phi_pu.shape[0],) or r_one.shape != omega.shape:
        raise DimensionMismatch(f"Omega length {omega.shape} does not match the Gram matrix")
    return _beta0(grams, r_one, _m22(grams.n_p, grams.n_u, r_one, hp), hp, state, omega)


def update_h_dual_kernel(grams: GramBlocks, hp: Hyperparams, state: AdmmState,
                         omega, beta0: float) -> Tuple[np.ndarray, np.ndarray]:
    scores_p = grams.phi_p @ np.asarray(omega, dtype=float) + beta0
    h = soft_threshold(hp.c_p / hp.mu1, 1.0 + state.u_h / hp.mu1 - scores_p)
    u_h = state.u_h + hp.mu1 * (1.0 - scores_p - h)
    return h, u_h


def training_grams(train: PUDataset, hp: Hyperparams, kernel: KernelSpec, R,
                   precomputed_gram=None) -> Tuple[GramBlocks, Optional[np.ndarray]]:
    """Gram blocks over the (standardized) training rows, plus B for linear_via_B"""
    if kernel.kind == RBF:
        return GramBlocks.from_full(gram_rbf(train.features_pu, train.features_pu, kernel.width), train.n_p), None
    if kernel.kind == LINEAR_VIA_B:
        _check_rank(train)
        b_matrix = assemble_b_matrix(train, R, kernel.b_params)
        return _b_grams(train, b_matrix), b_matrix
    if precomputed_gram is None:
        raise DimensionMismatch("a precomputed kernel needs a Gram matrix over the training rows")
    grams = GramBlocks.from_full(precomputed_gram, train.n_p)
    if grams.phi_pu.shape[0] != train.n:
        raise DimensionMismatch(f"Gram matrix side {grams.phi_pu.shape[0]} != training rows {train.n}")
    return grams, None


def fit_kernel(data: PUDataset, hp: Hyperparams, kernel: KernelSpec, stop: StopCriteria = StopCriteria(),
               standardize: bool = True, laplacian: Optional[LaplacianMatrix] = None,
               precomputed_gram=None) -> Tuple[KernelModel, SolveReport]:
    """
    Kernel ADMM from the zero initialization: Omega, then beta0, then (h, u_h).
    The report's trace holds primal residuals; the RKHS objective term is
    never formed.
    """
    hp.validate()
    standardizer, train = standardize_training(data, standardize)
    R = laplacian if laplacian is not None else build_laplacian(train.features_pu, hp.knn)
    if R.n != train.n:
        raise DimensionMismatch(f"R has side {R.n}, data has {train.n} rows")
    grams, b_matrix = training_grams(train, hp, kernel, R, precomputed_gram)

    r_one = R.matrix.sum(axis=1)
    m22 = _m22(train.n_p, train.n_u, r_one, hp)
    omega, beta0 = np.zeros(train.n), 0.0
    state = AdmmState.initial(train.n_p)
    trace = []
    dual_residual = 0.0
    converged = False

    for iteration in range(1, stop.max_iter + 1):
        omega = _omega(train.n_u, r_one, m22, hp, state)
        beta0 = _beta0(grams, r_one, m22, hp, state, omega)
        h, u_h = update_h_dual_kernel(grams, hp, state, omega, beta0)

        dual_residual = hp.mu1 * float(np.linalg.norm(h - state.h))
        residual = float(np.linalg.norm(1.0 - (grams.phi_p @ omega + beta0) - h))
        state = AdmmState(h, u_h, iteration, residual)
        trace.append(residual)
        if iteration % LOG_EVERY == 0:
            logger.debug("Kernel ADMM iteration %d: primal %.3e dual %.3e", iteration, residual, dual_residual)
        if residual <= stop.tol:
            converged = True
            break

    report = SolveReport(state.iteration, converged, state.primal_residual, dual_residual, trace)
    logger.info("PUAL kernel (%s): %d iterations, converged=%s, primal residual %.3e",
                kernel.kind, report.iterations, converged, report.final_primal_residual)
    model = KernelModel(omega, beta0, train.features_pu, kernel, standardizer, b_matrix)
    return model, report


def kernel_rows(model, features: np.ndarray) -> np.ndarray:
    """Phi(x*, X_[pu]) for standardized query rows"""
    if model.kernel.kind == RBF:
        return gram_rbf(features, model.train_features, model.kernel.width)
    return cross_gram_b(features, model.train_features, model.b_matrix)


def predict_kernel(model, features) -> Tuple[np.ndarray, np.ndarray]:
    if model.kernel.kind == PRECOMPUTED:
        raise UnsupportedForPrecomputed("a model trained on a precomputed Gram cannot score new rows")
    features = np.asarray(features, dtype=float)
    m = model.train_features.shape[1]
    if features.ndim != 2 or features.shape[1] != m:
        raise DimensionMismatch(f"model expects {m} features, got shape {features.shape}")
    scores = kernel_rows(model, model.standardizer.transform(features)) @ model.omega + model.beta0
    return scores, np.where(scores >= 0, 1, -1)
