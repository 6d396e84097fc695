"""
Metrics and hyperparameter tuning.

F1 needs ground truth; the PUF score recall^2 / P[f(x) >= 0] is computed
from PU data alone and drives k-fold model selection: an exhaustive
(lambda, sigma, C_u) grid, optionally followed by a greedy walk that moves
one hyperparameter by +/-10% at a time while the mean PUF improves.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from dataset import CASE_CONTROL, SINGLE_TRAINING_SET, PUDataset, make_rng, standardize_training
from errors import (EmptyLabeledSet, EmptyPool, FoldWithoutLabeledPositive, InvalidHyperparameter,
                    PUALError)
from estimators import check_kind, train as train_model
from pual_linear import Hyperparams, StopCriteria
from similarity import KnnParams, LaplacianMatrix, NeighborIndex, laplacian

logger = logging.getLogger(__name__)

SCENARIOS = (SINGLE_TRAINING_SET, CASE_CONTROL)
FAILED = float("-inf")
GREEDY_FACTORS = (1.1, 0.9)
MAX_CACHED_LAPLACIANS = 8


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @classmethod
    def from_labels(cls, predicted, truth) -> "ConfusionCounts":
        predicted, truth = np.asarray(predicted), np.asarray(truth)
        if predicted.shape != truth.shape:
            raise ValueError(f"{predicted.shape[0]} predictions for {truth.shape[0]} labels")
        positive, actual = predicted == 1, truth == 1
        return cls(tp=int(np.sum(positive & actual)), fp=int(np.sum(positive & ~actual)),
                   fn=int(np.sum(~positive & actual)), tn=int(np.sum(~positive & ~actual)))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def f1_score(counts: ConfusionCounts) -> float:
    """2tp / (2tp + fp + fn), 0 when nothing is positive on either side"""
    denominator = 2 * counts.tp + counts.fp + counts.fn
    return 2 * counts.tp / denominator if denominator else 0.0


@dataclass(frozen=True)
class PufScenario:
    """Which rows estimate P[f(x) >= 0]: all training rows, or the unlabeled ones only"""

    kind: str = SINGLE_TRAINING_SET

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise InvalidHyperparameter(f"unknown scenario {self.kind!r}, expected one of {SCENARIOS}")

    def pool(self, labeled_preds: np.ndarray, unlabeled_preds: np.ndarray) -> np.ndarray:
        if self.kind == CASE_CONTROL:
            return unlabeled_preds
        return np.concatenate([labeled_preds, unlabeled_preds])


def puf_score(labeled_preds, unlabeled_preds, scenario: PufScenario) -> float:
    labeled_preds = np.asarray(labeled_preds).ravel()
    unlabeled_preds = np.asarray(unlabeled_preds).ravel()
    if labeled_preds.size == 0:
        raise EmptyLabeledSet("PUF score needs at least one labeled positive")
    pool = scenario.pool(labeled_preds, unlabeled_preds)
    if pool.size == 0:
        raise EmptyPool(f"no rows to estimate P[f(x) >= 0] under {scenario.kind}")

    recall = np.mean(labeled_preds == 1)
    positive_rate = np.mean(pool == 1)
    if positive_rate == 0:
        return 0.0
    return float(recall ** 2 / positive_rate)


# Cross-validation

class Fold:
    """One held-out split with its neighbor index cached across sigma values"""

    def __init__(self, train: PUDataset, valid_p: np.ndarray, valid_u: np.ndarray, standardize: bool = True):
        self.train = train
        self.valid_p = valid_p
        self.valid_u = valid_u
        self.standardize = standardize
        self._neighbors: Dict[int, NeighborIndex] = {}
        self._laplacians: Dict[KnnParams, LaplacianMatrix] = {}

    def laplacian(self, knn: KnnParams) -> LaplacianMatrix:
        """R over the fold's (standardized) training rows, cached per (K, sigma), oldest evicted first"""
        if knn not in self._laplacians:
            if knn.k not in self._neighbors:
                _, scaled = standardize_training(self.train, self.standardize)
                self._neighbors[knn.k] = NeighborIndex(scaled.features_pu, knn.k)
            if len(self._laplacians) >= MAX_CACHED_LAPLACIANS:
                del self._laplacians[next(iter(self._laplacians))]
            self._laplacians[knn] = laplacian(self._neighbors[knn.k].graph(knn.sigma))
        return self._laplacians[knn]


def assign_folds(data: PUDataset, folds: int, seed: int) -> np.ndarray:
    """
    Fold id per row (labeled rows first). Labeled and unlabeled rows are
    shuffled separately and dealt round-robin, so per-fold counts of each
    differ by at most one.
    """
    if int(folds) != folds or folds < 2:
        raise InvalidHyperparameter(f"folds must be an integer >= 2, got {folds}")
    if folds > data.n_p:
        raise FoldWithoutLabeledPositive(f"{folds} folds but only {data.n_p} labeled positives")
    rng = make_rng(seed)
    assignment = np.empty(data.n, dtype=int)
    for offset, size in ((0, data.n_p), (data.n_p, data.n_u)):
        order = rng.permutation(size)
        assignment[offset + order] = np.arange(size) % folds
    return assignment


def make_folds(data: PUDataset, folds: int, seed: int, standardize: bool = True) -> List[Fold]:
    assignment = assign_folds(data, folds, seed)
    labeled, unlabeled = assignment[:data.n_p], assignment[data.n_p:]
    plan = []
    for fold in range(folds):
        # complement keeps n_p - |fold| >= 1 labeled rows since folds <= n_p
        train = PUDataset(data.features_p[labeled != fold], data.features_u[unlabeled != fold], data.feature_names)
        plan.append(Fold(train, data.features_p[labeled == fold], data.features_u[unlabeled == fold], standardize))
    return plan


Trainer = Callable[[PUDataset, Hyperparams, LaplacianMatrix], object]


def default_trainer(model_kind: str, stop: StopCriteria = StopCriteria(), kernel: str = "rbf",
                    standardize: bool = True) -> Trainer:
    check_kind(model_kind)

    def trainer(train: PUDataset, hp: Hyperparams, R: LaplacianMatrix):
        model, _ = train_model(model_kind, train, hp, stop, kernel, standardize, R)
        return model

    return trainer


def cross_validate(plan: Sequence[Fold], hp: Hyperparams, trainer: Trainer, scenario: PufScenario) -> float:
    scores = []
    for fold in plan:
        model = trainer(fold.train, hp, fold.laplacian(hp.knn))
        _, labeled_preds = model.predict(fold.valid_p)
        _, unlabeled_preds = model.predict(fold.valid_u)
        scores.append(puf_score(labeled_preds, unlabeled_preds, scenario))
    return float(np.mean(scores))


def kfold_cv(train: PUDataset, hp: Hyperparams, model_kind: str, folds: int = 4,
             scenario: PufScenario = PufScenario(), seed: int = 0, stop: StopCriteria = StopCriteria(),
             kernel: str = "rbf", standardize: bool = True, trainer: Optional[Trainer] = None) -> float:
    """Mean held-out PUF score over seeded stratified folds"""
    plan = make_folds(train, folds, seed, standardize)
    return cross_validate(plan, hp, trainer or default_trainer(model_kind, stop, kernel, standardize), scenario)


# Candidate grids

@dataclass(frozen=True, order=True)
class Candidate:
    lam: float
    sigma: float
    c_u: float

    def hyperparams(self, c_p: float = 1.0, k: int = 5, mu1: float = 1.0) -> Hyperparams:
        return Hyperparams(c_p=c_p, c_u=self.c_u, lam=self.lam, mu1=mu1, knn=KnnParams(k, self.sigma))

    def neighbors(self) -> List["Candidate"]:
        """Six moves: each of lambda, sigma, C_u scaled by 1.1 and by 0.9"""
        moves = []
        for name in ("lam", "sigma", "c_u"):
            for factor in GREEDY_FACTORS:
                moves.append(replace(self, **{name: getattr(self, name) * factor}))
        return moves

    def to_dict(self) -> Dict:
        return {'lambda': self.lam, 'sigma': self.sigma, 'c_u': self.c_u}

    @classmethod
    def from_dict(cls, payload: Dict) -> "Candidate":
        return cls(payload['lambda'], payload['sigma'], payload['c_u'])


def _decades(low: int, high: int) -> Tuple[float, ...]:
    return tuple(float(f"1e{power}") for power in range(low, high + 1))


@dataclass(frozen=True)
class GridSpec:
    lambda_grid: Tuple[float, ...]
    sigma_grid: Tuple[float, ...]
    cu_grid: Tuple[float, ...]
    c_p: float = 1.0
    k: int = 5
    mu1: float = 1.0

    def __post_init__(self):
        for name in ("lambda_grid", "sigma_grid", "cu_grid"):
            values = tuple(float(value) for value in getattr(self, name))
            if not values or any(not math.isfinite(value) or value <= 0 for value in values):
                raise InvalidHyperparameter(f"{name} must be a nonempty list of positive reals")
            object.__setattr__(self, name, values)

    @classmethod
    def synthetic(cls) -> "GridSpec":
        # {1,...,5} o {0.1, 1, 10, 100}: all 20 pairwise products
        products = tuple(sorted(round(a * b, 10) for a in range(1, 6) for b in (0.1, 1, 10, 100)))
        return cls(products, products, tuple(round(0.01 * i, 2) for i in range(1, 51)))

    @classmethod
    def real(cls) -> "GridSpec":
        decades = _decades(-4, 4)
        return cls(decades, decades, (0.5, 0.3, 0.1, 0.05, 0.01))

    @classmethod
    def reduced(cls) -> "GridSpec":
        decades = _decades(-3, 4)
        return cls(decades, decades, tuple(round(0.05 * i, 2) for i in range(1, 11)))

    @classmethod
    def preset(cls, name: str) -> "GridSpec":
        presets = {'synthetic': cls.synthetic, 'real': cls.real, 'reduced': cls.reduced}
        if name not in presets:
            raise InvalidHyperparameter(f"unknown grid preset {name!r}, expected one of {sorted(presets)}")
        return presets[name]()

    @property
    def size(self) -> int:
        return len(self.lambda_grid) * len(self.sigma_grid) * len(self.cu_grid)

    def candidates(self) -> List[Candidate]:
        return [Candidate(lam, sigma, c_u)
                for lam, sigma, c_u in itertools.product(self.lambda_grid, self.sigma_grid, self.cu_grid)]

    def hyperparams(self, candidate: Candidate) -> Hyperparams:
        return candidate.hyperparams(self.c_p, self.k, self.mu1)


def _score_key(entry: Tuple[Candidate, float]):
    # highest score first, then lexicographically smallest (lambda, sigma, C_u)
    candidate, score = entry
    return -score, candidate


@dataclass
class TuneResult:
    best: Candidate
    best_score: float
    grid_scores: List[Tuple[Candidate, float]] = field(default_factory=list)
    greedy_trace: List[Tuple[Candidate, float]] = field(default_factory=list)
    folds: int = 4
    seed: int = 0
    model_kind: str = ""
    scenario: str = SINGLE_TRAINING_SET
    c_p: float = 1.0
    k: int = 5
    mu1: float = 1.0

    def best_hyperparams(self) -> Hyperparams:
        return self.best.hyperparams(self.c_p, self.k, self.mu1)

    def to_dict(self) -> Dict:
        def entries(pairs):
            return [dict(candidate.to_dict(), score=_encode_score(score)) for candidate, score in pairs]

        return {
            'model_kind': self.model_kind,
            'scenario': self.scenario,
            'folds': self.folds,
            'seed': self.seed,
            'fixed': {'c_p': self.c_p, 'k': self.k, 'mu1': self.mu1},
            'best': self.best.to_dict(),
            'best_score': _encode_score(self.best_score),
            'grid_scores': entries(self.grid_scores),
            'greedy_trace': entries(self.greedy_trace),
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "TuneResult":
        def entries(items):
            return [(Candidate.from_dict(item), _decode_score(item['score'])) for item in items]

        fixed = payload['fixed']
        return cls(Candidate.from_dict(payload['best']), _decode_score(payload['best_score']),
                   entries(payload['grid_scores']), entries(payload['greedy_trace']),
                   payload['folds'], payload['seed'], payload['model_kind'], payload['scenario'],
                   fixed['c_p'], fixed['k'], fixed['mu1'])


def _encode_score(score: float):
    return "-inf" if score == FAILED else score


def _decode_score(score) -> float:
    return FAILED if score == "-inf" else float(score)


def _guarded_score(plan: Sequence[Fold], hp: Hyperparams, trainer: Trainer, scenario: PufScenario) -> float:
    try:
        return cross_validate(plan, hp, trainer, scenario)
    except PUALError as err:
        logger.warning("Candidate lambda=%g sigma=%g C_u=%g failed: %s", hp.lam, hp.knn.sigma, hp.c_u, err)
        return FAILED


def _score_sigma_group(plan, grid: GridSpec, group: List[Candidate], trainer: Trainer, scenario) -> List[float]:
    scores = []
    for candidate in group:
        score = _guarded_score(plan, grid.hyperparams(candidate), trainer, scenario)
        logger.debug("Candidate %s: mean PUF %.6g", candidate, score)
        scores.append(score)
    return scores


def grid_search(train: PUDataset, grid: GridSpec, model_kind: str, scenario: PufScenario = PufScenario(),
                seed: int = 0, folds: int = 4, stop: StopCriteria = StopCriteria(), kernel: str = "rbf",
                standardize: bool = True, n_jobs: int = 1, trainer: Optional[Trainer] = None) -> TuneResult:
    """
    Every (lambda, sigma, C_u) scored by k-fold PUF on one shared fold
    assignment. Candidates are grouped by sigma so each fold builds its
    Laplacian once per sigma; groups run in parallel when n_jobs != 1.
    """
    plan = make_folds(train, folds, seed, standardize)
    trainer = trainer or default_trainer(model_kind, stop, kernel, standardize)
    groups = [[candidate for candidate in grid.candidates() if candidate.sigma == sigma]
              for sigma in grid.sigma_grid]
    logger.info("Grid search over %d candidates (%s, %d folds)", grid.size, model_kind, folds)

    if n_jobs == 1:
        group_scores = [_score_sigma_group(plan, grid, group, trainer, scenario) for group in groups]
    else:
        group_scores = Parallel(n_jobs=n_jobs)(
            delayed(_score_sigma_group)(plan, grid, group, trainer, scenario) for group in groups)

    scored = {candidate: score
              for group, scores in zip(groups, group_scores)
              for candidate, score in zip(group, scores)}
    grid_scores = sorted(scored.items())
    best, best_score = min(grid_scores, key=_score_key)
    assert all(best_score >= score for _, score in grid_scores)
    logger.info("Grid best %s with mean PUF %.6g", best, best_score)

    return TuneResult(best, best_score, grid_scores, [], folds, seed, model_kind, scenario.kind,
                      grid.c_p, grid.k, grid.mu1)


def hill_climb(start: Candidate, evaluate: Callable[[Candidate], float], start_score: Optional[float] = None,
               max_steps: int = 100) -> List[Tuple[Candidate, float]]:
    """
    Move to the best of the six +/-10% neighbors while it strictly improves
    the score. The returned trace starts with the start candidate.
    """
    current = start
    score = evaluate(start) if start_score is None else start_score
    trace = [(current, score)]
    for _ in range(max_steps):
        neighbor, neighbor_score = min(((neighbor, evaluate(neighbor)) for neighbor in current.neighbors()),
                                       key=_score_key)
        if not neighbor_score > score:
            break
        current, score = neighbor, neighbor_score
        trace.append((current, score))
        logger.debug("Greedy step to %s: mean PUF %.6g", current, score)
    else:
        logger.warning("Greedy refinement stopped after %d steps", max_steps)
    return trace


def greedy_refine(train: PUDataset, start: Candidate, model_kind: str, scenario: PufScenario = PufScenario(),
                  seed: int = 0, folds: int = 4, stop: StopCriteria = StopCriteria(), kernel: str = "rbf",
                  standardize: bool = True, start_score: Optional[float] = None, max_steps: int = 100,
                  fixed: Optional[GridSpec] = None, trainer: Optional[Trainer] = None,
                  evaluate: Optional[Callable[[Candidate], float]] = None) -> TuneResult:
    """Greedy phase on the same folds the grid phase used (same seed)"""
    fixed = fixed or GridSpec((start.lam,), (start.sigma,), (start.c_u,))
    if evaluate is None:
        plan = make_folds(train, folds, seed, standardize)
        trainer = trainer or default_trainer(model_kind, stop, kernel, standardize)

        def evaluate(candidate: Candidate) -> float:
            return _guarded_score(plan, fixed.hyperparams(candidate), trainer, scenario)

    trace = hill_climb(start, evaluate, start_score, max_steps)
    best, best_score = trace[-1]
    logger.info("Greedy refinement: %d moves, best %s with mean PUF %.6g", len(trace) - 1, best, best_score)
    return TuneResult(best, best_score, [], trace, folds, seed, model_kind, scenario.kind,
                      fixed.c_p, fixed.k, fixed.mu1)


def tune(train: PUDataset, grid: GridSpec, model_kind: str, scenario: PufScenario = PufScenario(),
         seed: int = 0, folds: int = 4, greedy: bool = False, stop: StopCriteria = StopCriteria(),
         kernel: str = "rbf", standardize: bool = True, n_jobs: int = 1, max_steps: int = 100,
         trainer: Optional[Trainer] = None) -> TuneResult:
    """Grid phase, then the greedy walk from the grid winner when enabled"""
    trainer = trainer or default_trainer(model_kind, stop, kernel, standardize)
    result = grid_search(train, grid, model_kind, scenario, seed, folds, stop, kernel, standardize,
                         n_jobs, trainer)
    if not greedy:
        return result

    refined = greedy_refine(train, result.best, model_kind, scenario, seed, folds, stop, kernel, standardize,
                            result.best_score, max_steps, grid, trainer)
    result.greedy_trace = refined.greedy_trace
    result.best, result.best_score = refined.best, refined.best_score
    return result
