"""
PUAL with a linear decision boundary.

Hinge loss on the labeled positives, squared loss on the unlabeled set
(treated as negative) and the local constraint f'Rf. The hinge term is split
off through h = 1_p - (X_[p] beta + 1_p beta0) and the problem is solved by
ADMM: a bordered linear solve for (beta, beta0), a soft-threshold step for h
and a scaled dual ascent step for u_h.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from dataset import PUDataset, Standardizer, standardize_training
from errors import DimensionMismatch, InvalidHyperparameter, NonPositiveC, SingularSystem
from similarity import KnnParams, LaplacianMatrix, build_laplacian

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
JITTER_SCALE = 1e-10
LOG_EVERY = 100


@dataclass(frozen=True)
class Hyperparams:
    """Loss weights C_p and C_u, ridge lambda, ADMM step mu1 and the KNN graph settings"""

    c_p: float = 1.0
    c_u: float = 0.1
    lam: float = 1.0
    mu1: float = 1.0
    knn: KnnParams = field(default_factory=KnnParams)

    def __post_init__(self):
        for name in ("c_p", "c_u", "lam", "mu1"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidHyperparameter(f"{name} must be a finite non-negative real, got {value}")
            object.__setattr__(self, name, float(value))

    def validate(self) -> "Hyperparams":
        """Training requires every weight strictly positive"""
        for name in ("c_p", "c_u", "lam", "mu1"):
            if getattr(self, name) <= 0:
                raise InvalidHyperparameter(f"{name} must be positive, got {getattr(self, name)}")
        return self

    def to_dict(self) -> Dict:
        return {
            'c_p': self.c_p,
            'c_u': self.c_u,
            'lam': self.lam,
            'mu1': self.mu1,
            'k': self.knn.k,
            'sigma': self.knn.sigma,
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "Hyperparams":
        return cls(c_p=payload['c_p'], c_u=payload['c_u'], lam=payload['lam'], mu1=payload['mu1'],
                   knn=KnnParams(payload['k'], payload['sigma']))


@dataclass(frozen=True)
class StopCriteria:
    tol: float = 1e-6
    max_iter: int = 2000

    def __post_init__(self):
        if math.isnan(self.tol) or self.tol < 0:
            raise InvalidHyperparameter(f"tol must be non-negative, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise InvalidHyperparameter(f"max_iter must be a non-negative integer, got {self.max_iter}")
        object.__setattr__(self, "max_iter", int(self.max_iter))


@dataclass
class AdmmState:
    """Split variable h, its multiplier u_h and the current primal residual"""

    h: np.ndarray
    u_h: np.ndarray
    iteration: int = 0
    primal_residual: float = float("nan")

    @classmethod
    def initial(cls, n_p: int) -> "AdmmState":
        # zero iterate: residual |1_p - 0 - 0|
        return cls(np.zeros(n_p), np.zeros(n_p), 0, math.sqrt(n_p))


@dataclass(frozen=True)
class BetaSystem:
    """Blocks of the bordered (m+1) linear system for (beta, beta0)"""

    m11: np.ndarray
    m12: np.ndarray
    m21: np.ndarray
    m22: float
    m1: np.ndarray
    m2: float

    def bordered(self) -> Tuple[np.ndarray, np.ndarray]:
        matrix = np.block([[self.m11, self.m12[:, None]],
                           [self.m21[None, :], np.array([[self.m22]])]])
        return matrix, np.append(self.m1, self.m2)


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    final_primal_residual: float
    final_dual_residual: float = 0.0
    objective_trace: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'iterations': self.iterations,
            'converged': self.converged,
            'final_primal_residual': self.final_primal_residual,
            'final_dual_residual': self.final_dual_residual,
        }


@dataclass(frozen=True)
class LinearModel:
    """f(x) = x'beta + beta0 on standardized features"""

    beta: np.ndarray
    beta0: float
    standardizer: Standardizer

    def predict(self, features) -> Tuple[np.ndarray, np.ndarray]:
        return predict_linear(self, features)


def as_matrix(R) -> np.ndarray:
    return R.matrix if isinstance(R, LaplacianMatrix) else np.asarray(R, dtype=float)


def _check_shapes(data: PUDataset, R=None, state: Optional[AdmmState] = None):
    if R is not None and as_matrix(R).shape != (data.n, data.n):
        raise DimensionMismatch(f"R has shape {as_matrix(R).shape}, data has {data.n} rows")
    if state is not None and (state.h.shape != (data.n_p,) or state.u_h.shape != (data.n_p,)):
        raise DimensionMismatch(f"ADMM state must have length n_p={data.n_p}")


def beta_blocks(data: PUDataset, R, hp: Hyperparams) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """M11, M12, M21, M22: the state-independent part of the beta system"""
    R = as_matrix(R)
    x_p, x_u, x_pu = data.features_p, data.features_u, data.features_pu
    r_x = R @ x_pu
    r_one = R.sum(axis=1)

    m11 = (hp.lam * np.eye(data.m) + 2 * hp.c_u * x_u.T @ x_u
           + 2 * x_pu.T @ r_x + hp.mu1 * x_p.T @ x_p)
    m11 = (m11 + m11.T) / 2
    m12 = 2 * hp.c_u * x_u.sum(axis=0) + 2 * x_pu.T @ r_one + hp.mu1 * x_p.sum(axis=0)
    m21 = 2 * hp.c_u * x_u.sum(axis=0) + 2 * r_x.sum(axis=0) + hp.mu1 * x_p.sum(axis=0)
    m22 = 2 * hp.c_u * data.n_u + 2 * r_one.sum() + hp.mu1 * data.n_p
    return m11, m12, m21, float(m22)


def beta_rhs(data: PUDataset, hp: Hyperparams, state: AdmmState) -> Tuple[np.ndarray, float]:
    """m1, m2 at the current h, u_h"""
    x_p, x_u = data.features_p, data.features_u
    slack = 1.0 - state.h
    m1 = -2 * hp.c_u * x_u.sum(axis=0) + x_p.T @ state.u_h + hp.mu1 * x_p.T @ slack
    m2 = -2 * hp.c_u * data.n_u + state.u_h.sum() + hp.mu1 * slack.sum()
    return m1, float(m2)


def assemble_beta_system(data: PUDataset, R, hp: Hyperparams, state: AdmmState) -> BetaSystem:
    _check_shapes(data, R, state)
    m11, m12, m21, m22 = beta_blocks(data, R, hp)
    m1, m2 = beta_rhs(data, hp, state)
    return BetaSystem(m11, m12, m21, m22, m1, m2)


def factor_symmetric(matrix: np.ndarray, leading: int, error=SingularSystem, what: str = "bordered system"):
    """
    Cholesky factor of a symmetric system.
    On failure, or when the condition estimate exceeds MAX_CONDITION, the
    leading block's diagonal gets jitter 1e-10 * trace / size and one retry.
    """
    matrix = (matrix + matrix.T) / 2
    for attempt in range(2):
        if attempt:
            jitter = JITTER_SCALE * np.trace(matrix[:leading, :leading]) / leading
            matrix = matrix.copy()
            matrix[np.arange(leading), np.arange(leading)] += jitter
            logger.warning("Retrying %s factorization with jitter %.3g", what, jitter)
        condition = np.linalg.cond(matrix)
        if np.isfinite(condition) and condition <= MAX_CONDITION:
            try:
                return scipy.linalg.cho_factor(matrix)
            except np.linalg.LinAlgError:
                pass
    raise error(f"{what} is singular or ill-conditioned (condition estimate {condition:.3g})")


def solve_beta(system: BetaSystem) -> Tuple[np.ndarray, float]:
    """Solve [[M11, M12], [M21, M22]] [beta; beta0] = [m1; m2]"""
    matrix, rhs = system.bordered()
    m = system.m11.shape[0]
    solution = scipy.linalg.cho_solve(factor_symmetric(matrix, m), rhs)
    return solution[:m], float(solution[m])


def soft_threshold(c: float, d):
    """argmin_x c[x]_+ + (x - d)^2 / 2: d - c above c, 0 on [0, c], d below 0"""
    if not (math.isfinite(c) and c > 0):
        raise NonPositiveC(f"threshold c must be positive, got {c}")
    d = np.asarray(d, dtype=float)
    result = np.where(d > c, d - c, np.where(d >= 0, 0.0, d))
    return float(result) if result.ndim == 0 else result


def linear_scores(features: np.ndarray, beta: np.ndarray, beta0: float) -> np.ndarray:
    return features @ beta + beta0


def update_h(data: PUDataset, model_iterate, hp: Hyperparams, state: AdmmState) -> np.ndarray:
    beta, beta0 = model_iterate
    scores = linear_scores(data.features_p, beta, beta0)
    return soft_threshold(hp.c_p / hp.mu1, 1.0 + state.u_h / hp.mu1 - scores)


def update_dual(data: PUDataset, model_iterate, state: AdmmState, mu1: float) -> np.ndarray:
    """u_h + mu1 (1_p - f(X_[p]) - h), with h the freshly updated split variable"""
    beta, beta0 = model_iterate
    return state.u_h + mu1 * (1.0 - linear_scores(data.features_p, beta, beta0) - state.h)


def objective_value(data: PUDataset, R, hp: Hyperparams, beta, beta0: float) -> float:
    """PUAL objective: ridge + hinge on X_[p] + squared loss on X_[u] + local constraint"""
    beta = np.asarray(beta, dtype=float)
    scores = linear_scores(data.features_pu, beta, beta0)
    hinge = np.maximum(1.0 - scores[:data.n_p], 0.0).sum()
    squared = ((1.0 + scores[data.n_p:]) ** 2).sum()
    local = scores @ as_matrix(R) @ scores
    return float(hp.lam / 2 * beta @ beta + hp.c_p * hinge + hp.c_u * squared + local)


def augmented_beta_objective(data: PUDataset, R, hp: Hyperparams, state: AdmmState, beta, beta0: float) -> float:
    """Augmented Lagrangian as a function of (beta, beta0) with h, u_h held fixed"""
    beta = np.asarray(beta, dtype=float)
    scores = linear_scores(data.features_pu, beta, beta0)
    gap = 1.0 - scores[:data.n_p] - state.h
    return float(hp.lam / 2 * beta @ beta
                 + hp.c_u * ((1.0 + scores[data.n_p:]) ** 2).sum()
                 + scores @ as_matrix(R) @ scores
                 + state.u_h @ gap
                 + hp.mu1 / 2 * gap @ gap)


def fit(data: PUDataset, hp: Hyperparams, stop: StopCriteria = StopCriteria(),
        standardize: bool = True, laplacian: Optional[LaplacianMatrix] = None,
        track_objective: bool = True) -> Tuple[LinearModel, SolveReport]:
    """
    ADMM from the zero initialization until the primal residual reaches
    stop.tol or stop.max_iter outer iterations have run.
    """
    hp.validate()
    standardizer, train = standardize_training(data, standardize)
    R = laplacian if laplacian is not None else build_laplacian(train.features_pu, hp.knn)
    _check_shapes(train, R)

    m11, m12, m21, m22 = beta_blocks(train, R, hp)
    matrix, _ = BetaSystem(m11, m12, m21, m22, np.zeros(train.m), 0.0).bordered()
    factor = factor_symmetric(matrix, train.m)

    beta, beta0 = np.zeros(train.m), 0.0
    state = AdmmState.initial(train.n_p)
    trace = []
    dual_residual = 0.0
    converged = False

    for iteration in range(1, stop.max_iter + 1):
        m1, m2 = beta_rhs(train, hp, state)
        solution = scipy.linalg.cho_solve(factor, np.append(m1, m2))
        beta, beta0 = solution[:train.m], float(solution[train.m])

        h = update_h(train, (beta, beta0), hp, state)
        dual_residual = hp.mu1 * float(np.linalg.norm(h - state.h))
        state = AdmmState(h, state.u_h, iteration, state.primal_residual)
        u_h = update_dual(train, (beta, beta0), state, hp.mu1)

        residual = float(np.linalg.norm(1.0 - linear_scores(train.features_p, beta, beta0) - h))
        state = AdmmState(h, u_h, iteration, residual)
        if track_objective:
            trace.append(objective_value(train, R, hp, beta, beta0))
        if iteration % LOG_EVERY == 0:
            logger.debug("ADMM iteration %d: primal %.3e dual %.3e", iteration, residual, dual_residual)
        if residual <= stop.tol:
            converged = True
            break

    report = SolveReport(state.iteration, converged, state.primal_residual, dual_residual, trace)
    logger.info("PUAL linear: %d iterations, converged=%s, primal residual %.3e",
                report.iterations, converged, report.final_primal_residual)
    return LinearModel(beta, beta0, standardizer), report


def predict_linear(model: LinearModel, features) -> Tuple[np.ndarray, np.ndarray]:
    """Scores x'beta + beta0 and labels, +1 iff score >= 0"""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != model.beta.shape[0]:
        raise DimensionMismatch(f"model expects {model.beta.shape[0]} features, got shape {features.shape}")
    scores = linear_scores(model.standardizer.transform(features), model.beta, model.beta0)
    return scores, np.where(scores >= 0, 1, -1)
