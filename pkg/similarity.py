"""
Local-constraint matrices over the training features X_[pu].
W holds Gaussian weights between mutual K-nearest neighbors; R is the
scaled graph Laplacian (W* - W) / n built from it.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from errors import DimensionMismatch, InvalidHyperparameter, NonPositiveSigma, ProblemTooLarge, TooFewInstances

logger = logging.getLogger(__name__)

MAX_DENSE_INSTANCES = 5000


@dataclass(frozen=True)
class KnnParams:
    """Neighbor count K and Gaussian width sigma"""

    k: int = 5
    sigma: float = 1.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidHyperparameter(f"K must be a positive integer, got {self.k}")
        if not math.isfinite(self.sigma) or self.sigma <= 0:
            raise NonPositiveSigma(f"sigma must be a positive real, got {self.sigma}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass(frozen=True)
class SimilarityGraph:
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class LaplacianMatrix:
    matrix: np.ndarray
    graph: Optional[SimilarityGraph] = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "LaplacianMatrix":
        return cls(np.zeros((n, n)))


class NeighborIndex:
    """
    Squared distances and the mutual-KNN mask of one feature matrix.
    Reusable across sigma values, which only rescale the weights.
    """

    def __init__(self, features, k: int):
        features = np.asarray(features, dtype=float)
        if features.ndim != 2:
            raise DimensionMismatch(f"features must be a 2-D matrix, got shape {features.shape}")
        n = features.shape[0]
        if n < 2:
            raise TooFewInstances(f"need at least 2 instances for a neighbor graph, got {n}")
        if n > MAX_DENSE_INSTANCES:
            raise ProblemTooLarge(f"{n} instances exceeds the dense limit of {MAX_DENSE_INSTANCES}")
        if k >= n:
            raise TooFewInstances(f"K={k} needs more than {k} instances, got {n}")

        # cdist evaluates each pair directly, so d(i, j) == d(j, i) bit for bit
        self.sq_distances = cdist(features, features, "sqeuclidean")
        ranked = self.sq_distances.copy()
        np.fill_diagonal(ranked, np.inf)
        # stable sort: equal distances keep lower row index first
        nearest = np.argsort(ranked, axis=1, kind="stable")[:, :k]

        is_neighbor = np.zeros((n, n), dtype=bool)
        np.put_along_axis(is_neighbor, nearest, True, axis=1)
        self.mutual = is_neighbor & is_neighbor.T
        np.fill_diagonal(self.mutual, False)
        self.k = k

    def graph(self, sigma: float) -> SimilarityGraph:
        if not math.isfinite(sigma) or sigma <= 0:
            raise NonPositiveSigma(f"sigma must be a positive real, got {sigma}")
        weights = np.where(self.mutual, np.exp(-self.sq_distances / sigma), 0.0)
        return SimilarityGraph(weights)


def mutual_knn_weights(features, params: KnnParams) -> SimilarityGraph:
    """w_ij = exp(-|x_i - x_j|^2 / sigma) when i and j are K-nearest neighbors of each other"""
    graph = NeighborIndex(features, params.k).graph(params.sigma)
    logger.debug("Similarity graph: n=%d K=%d edges=%d",
                 graph.n, params.k, int(np.count_nonzero(graph.weights)) // 2)
    return graph


def laplacian(graph: SimilarityGraph) -> LaplacianMatrix:
    """R = (W* - W) / n, W* the diagonal of column sums of W"""
    weights = graph.weights
    degree = np.diag(weights.sum(axis=0))
    return LaplacianMatrix((degree - weights) / weights.shape[0], graph)


def build_laplacian(features, params: KnnParams) -> LaplacianMatrix:
    return laplacian(mutual_knn_weights(features, params))
