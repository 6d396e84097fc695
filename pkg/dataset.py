"""
Dataset handling for PU learning.
PU / ground-truth CSV files, feature standardization, the synthetic
trifurcate data and the two train/test split protocols.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import (
    DimensionMismatch,
    EmptyDataset,
    InvalidEncoding,
    InvalidHyperparameter,
    InvalidLabel,
    NoLabeledPositives,
    NonNumericFeature,
    NoUnlabeled,
    RaggedRow,
)

logger = logging.getLogger(__name__)

LABEL_COLUMN = "label"
PU_LABELS = ("p", "u")
TRUTH_LABELS = {"1": 1, "-1": -1}
FLOAT_FORMAT = "%.17g"
PREDICTION_COLUMNS = ("score", LABEL_COLUMN)

SINGLE_TRAINING_SET = "single-training-set"
CASE_CONTROL = "case-control"
SPLIT_MODES = (SINGLE_TRAINING_SET, CASE_CONTROL)

# Synthetic trifurcate data
SYNTH_CLUSTER_SIZE = 200
SYNTH_FIRST_MEAN = 15.0
SYNTH_VARIANCE = 50.0
SYNTH_NEGATIVE_COVARIANCE = ((50.0, 0.2), (0.2, 50.0))
SYNTH_MEAN_P2_VALUES = (50.0, 100.0, 200.0, 500.0, 1000.0)


def _frozen_matrix(values, name: str) -> np.ndarray:
    matrix = np.array(values, dtype=float)
    if matrix.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {matrix.shape}")
    matrix.setflags(write=False)
    return matrix


def _default_names(m: int) -> Tuple[str, ...]:
    return tuple(f"f{j + 1}" for j in range(m))


@dataclass(frozen=True)
class PUDataset:
    """Labeled-positive block X_[p] and unlabeled block X_[u] of a training set"""

    features_p: np.ndarray
    features_u: np.ndarray
    feature_names: Tuple[str, ...] = ()
    # file order: True where the i-th row of the source file is a labeled positive
    positive_rows: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        features_p = _frozen_matrix(self.features_p, "features_p")
        features_u = _frozen_matrix(self.features_u, "features_u")
        if features_p.shape[0] < 1:
            raise NoLabeledPositives("training data has no labeled-positive rows")
        if features_u.shape[0] < 1:
            raise NoUnlabeled("training data has no unlabeled rows")
        if features_p.shape[1] < 1:
            raise EmptyDataset("training data has no feature columns")
        if features_p.shape[1] != features_u.shape[1]:
            raise DimensionMismatch(
                f"labeled block has {features_p.shape[1]} columns, "
                f"unlabeled block has {features_u.shape[1]}")
        if not (np.isfinite(features_p).all() and np.isfinite(features_u).all()):
            raise NonNumericFeature("training features contain non-finite values")

        names = tuple(self.feature_names) or _default_names(features_p.shape[1])
        if len(names) != features_p.shape[1]:
            raise DimensionMismatch(f"{len(names)} feature names for {features_p.shape[1]} columns")

        if self.positive_rows is not None:
            positive_rows = np.array(self.positive_rows, dtype=bool).reshape(-1)
            if positive_rows.shape[0] != features_p.shape[0] + features_u.shape[0] \
                    or int(positive_rows.sum()) != features_p.shape[0]:
                raise DimensionMismatch("row order mask does not match the labeled and unlabeled blocks")
            positive_rows.setflags(write=False)
            object.__setattr__(self, "positive_rows", positive_rows)

        object.__setattr__(self, "features_p", features_p)
        object.__setattr__(self, "features_u", features_u)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_p(self) -> int:
        return self.features_p.shape[0]

    @property
    def n_u(self) -> int:
        return self.features_u.shape[0]

    @property
    def n(self) -> int:
        return self.n_p + self.n_u

    @property
    def m(self) -> int:
        return self.features_p.shape[1]

    @property
    def features_pu(self) -> np.ndarray:
        """X_[pu]: labeled positives first, then unlabeled"""
        return np.vstack([self.features_p, self.features_u])

    def in_file_order(self) -> Tuple[np.ndarray, np.ndarray]:
        """Feature rows and their p/u flags in source order (blocks concatenated if no order was recorded)"""
        if self.positive_rows is None:
            return self.features_pu, np.arange(self.n) < self.n_p
        rows = np.empty((self.n, self.m))
        rows[self.positive_rows] = self.features_p
        rows[~self.positive_rows] = self.features_u
        return rows, self.positive_rows

    def with_features(self, features_pu: np.ndarray) -> "PUDataset":
        """Same partition, new feature values (e.g. after standardization)"""
        features_pu = np.asarray(features_pu, dtype=float)
        return PUDataset(features_pu[:self.n_p], features_pu[self.n_p:], self.feature_names, self.positive_rows)


@dataclass(frozen=True)
class EvalDataset:
    """Features with ground-truth labels in {+1, -1}"""

    features: np.ndarray
    labels: np.ndarray
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self):
        features = _frozen_matrix(self.features, "features")
        labels = np.array(self.labels, dtype=int).reshape(-1)
        if labels.shape[0] != features.shape[0]:
            raise DimensionMismatch(f"{labels.shape[0]} labels for {features.shape[0]} rows")
        if not np.isin(labels, (1, -1)).all():
            raise InvalidLabel("ground-truth labels must be +1 or -1")
        if not np.isfinite(features).all():
            raise NonNumericFeature("features contain non-finite values")
        labels.setflags(write=False)

        names = tuple(self.feature_names) or _default_names(features.shape[1])
        if len(names) != features.shape[1]:
            raise DimensionMismatch(f"{len(names)} feature names for {features.shape[1]} columns")

        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic trifurcate dataset"""

    mean_p2: float
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.mean_p2):
            raise InvalidHyperparameter(f"mean_p2 must be finite, got {self.mean_p2}")
        if self.seed < 0:
            raise InvalidHyperparameter(f"seed must be non-negative, got {self.seed}")


def _fraction(value, name: str) -> Optional[Fraction]:
    if value is None:
        return None
    try:
        return Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise InvalidHyperparameter(f"{name} must be a rational number, got {value!r}")


@dataclass(frozen=True)
class SplitSpec:
    """Train/test split protocol and its parameters"""

    mode: str
    gamma_prime: Optional[Fraction] = None
    labeled_fraction: Optional[Fraction] = None
    test_fraction: Fraction = Fraction(3, 10)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise InvalidHyperparameter(f"split mode must be one of {SPLIT_MODES}, got {self.mode!r}")
        gamma_prime = _fraction(self.gamma_prime, "gamma_prime")
        labeled_fraction = _fraction(self.labeled_fraction, "labeled_fraction")
        test_fraction = _fraction(self.test_fraction, "test_fraction")

        if self.mode == CASE_CONTROL:
            if gamma_prime is None or not 0 < gamma_prime <= 1:
                raise InvalidHyperparameter(f"gamma_prime must lie in (0, 1], got {self.gamma_prime}")
            if labeled_fraction is not None:
                raise InvalidHyperparameter("labeled_fraction applies to the single-training-set mode only")
        else:
            if labeled_fraction is None or not 0 < labeled_fraction <= 1:
                raise InvalidHyperparameter(
                    f"labeled_fraction must lie in (0, 1], got {self.labeled_fraction}")
            if gamma_prime is not None:
                raise InvalidHyperparameter("gamma_prime applies to the case-control mode only")
        if not 0 < test_fraction < 1:
            raise InvalidHyperparameter(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.seed < 0:
            raise InvalidHyperparameter(f"seed must be non-negative, got {self.seed}")

        object.__setattr__(self, "gamma_prime", gamma_prime)
        object.__setattr__(self, "labeled_fraction", labeled_fraction)
        object.__setattr__(self, "test_fraction", test_fraction)

    @classmethod
    def single_training_set(cls, labeled_fraction=Fraction(1, 4), test_fraction=Fraction(3, 10), seed=0):
        return cls(SINGLE_TRAINING_SET, labeled_fraction=labeled_fraction,
                   test_fraction=test_fraction, seed=seed)

    @classmethod
    def case_control(cls, gamma_prime, test_fraction=Fraction(3, 10), seed=0):
        return cls(CASE_CONTROL, gamma_prime=gamma_prime, test_fraction=test_fraction, seed=seed)

    @property
    def expected_label_frequency(self) -> Optional[Fraction]:
        """gamma = gamma' / (0.3 gamma' + 0.7) for the case-control mode"""
        if self.mode != CASE_CONTROL:
            return None
        return self.gamma_prime / (self.test_fraction * self.gamma_prime + 1 - self.test_fraction)


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-score transform fitted on training features"""

    means: np.ndarray
    std_devs: np.ndarray
    constant: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float).reshape(-1)
        std_devs = np.array(self.std_devs, dtype=float).reshape(-1)
        constant = np.array(self.constant, dtype=bool).reshape(-1)
        if not means.shape == std_devs.shape == constant.shape:
            raise DimensionMismatch("standardizer fields must have equal lengths")
        if (std_devs[~constant] <= 0).any():
            raise InvalidHyperparameter("non-constant columns need a positive standard deviation")
        for array in (means, std_devs, constant):
            array.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "std_devs", std_devs)
        object.__setattr__(self, "constant", constant)

    @property
    def m(self) -> int:
        return self.means.shape[0]

    @classmethod
    def identity(cls, m: int) -> "Standardizer":
        return cls(np.zeros(m), np.ones(m), np.zeros(m, dtype=bool))

    def transform(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[1] != self.m:
            raise DimensionMismatch(
                f"standardizer fitted on {self.m} columns, got shape {features.shape}")
        scale = np.where(self.constant, 1.0, self.std_devs)
        transformed = (features - self.means) / scale
        transformed[:, self.constant] = 0.0
        return transformed

    def to_dict(self) -> Dict:
        return {
            'means': self.means.tolist(),
            'std_devs': self.std_devs.tolist(),
            'constant': self.constant.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "Standardizer":
        return cls(payload['means'], payload['std_devs'], payload['constant'])


def fit_standardizer(train: PUDataset) -> Standardizer:
    """Fit on X_[pu]; population standard deviation (denominator n)"""
    features = train.features_pu
    constant = np.ptp(features, axis=0) == 0
    return Standardizer(features.mean(axis=0), features.std(axis=0), constant)


def apply_standardizer(standardizer: Standardizer, features) -> np.ndarray:
    return standardizer.transform(features)


def standardize_training(train: PUDataset, enabled: bool = True) -> Tuple[Standardizer, PUDataset]:
    """Standardizer for a fit plus the training data it produces"""
    if not enabled:
        return Standardizer.identity(train.m), train
    standardizer = fit_standardizer(train)
    return standardizer, train.with_features(standardizer.transform(train.features_pu))


# CSV files

def _read_raw(path) -> pd.DataFrame:
    """Every field as a string; short rows show up as missing values"""
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                          skip_blank_lines=True, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise EmptyDataset(f"{path}: file is empty")
    except UnicodeDecodeError as exc:
        raise InvalidEncoding(f"{path}: not valid UTF-8 ({exc.reason} at byte {exc.start})")
    except (pd.errors.ParserError, ValueError) as exc:
        raise RaggedRow(f"{path}: {exc}")

    short = raw.isna().any(axis=1).to_numpy()
    if short.any():
        raise RaggedRow(f"{path}: line {int(np.flatnonzero(short)[0]) + 1} has fewer fields than the first line")
    return raw


def _read_table(path, labeled: bool = True) -> Tuple[Tuple[str, ...], pd.DataFrame]:
    """Header row and data rows of a headed CSV"""
    raw = _read_raw(path)
    header = tuple(str(name).strip() for name in raw.iloc[0])
    body = raw.iloc[1:].reset_index(drop=True)
    if body.empty:
        raise EmptyDataset(f"{path}: no data rows")
    if labeled:
        if header[-1] != LABEL_COLUMN:
            raise InvalidLabel(f"{path}: last column must be named '{LABEL_COLUMN}', got '{header[-1]}'")
        if len(header) < 2:
            raise EmptyDataset(f"{path}: no feature columns")
    return header, body


def _parse_features(body: pd.DataFrame, names: Sequence[str], path) -> np.ndarray:
    """Leading len(names) columns of body as a finite float matrix"""
    columns = []
    for j, name in enumerate(names):
        tokens = body.iloc[:, j].str.strip()
        values = pd.to_numeric(tokens, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise NonNumericFeature(
                f"{path}: line {row + 2}, column '{name}': {tokens.iloc[row]!r} is not a finite number")
        columns.append(values)
    return np.column_stack(columns)


def load_pu_csv(path) -> PUDataset:
    """Load a PU training file; label tokens are p (labeled positive) and u (unlabeled)"""
    header, body = _read_table(path)
    labels = body.iloc[:, -1].str.strip()
    bad = ~labels.isin(PU_LABELS)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise InvalidLabel(f"{path}: line {row + 2}: label {labels.iloc[row]!r} is not one of p, u")

    features = _parse_features(body, header[:-1], path)
    is_positive = (labels == "p").to_numpy()
    dataset = PUDataset(features[is_positive], features[~is_positive], header[:-1], is_positive)
    logger.debug("Loaded %s: n_p=%d n_u=%d m=%d", path, dataset.n_p, dataset.n_u, dataset.m)
    return dataset


def write_pu_csv(data: PUDataset, path) -> None:
    """Rows go out in the order they were loaded; built datasets write positives first"""
    rows, is_positive = data.in_file_order()
    frame = pd.DataFrame(rows, columns=list(data.feature_names))
    frame[LABEL_COLUMN] = np.where(is_positive, "p", "u")
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def load_eval_csv(path) -> EvalDataset:
    """Load a ground-truth file; label tokens are 1 and -1"""
    header, body = _read_table(path)
    labels = body.iloc[:, -1].str.strip()
    bad = ~labels.isin(tuple(TRUTH_LABELS))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise InvalidLabel(f"{path}: line {row + 2}: label {labels.iloc[row]!r} is not one of 1, -1")
    features = _parse_features(body, header[:-1], path)
    return EvalDataset(features, labels.map(TRUTH_LABELS).to_numpy(), header[:-1])


def write_eval_csv(data: EvalDataset, path) -> None:
    frame = pd.DataFrame(data.features, columns=list(data.feature_names))
    frame[LABEL_COLUMN] = data.labels
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def load_features_csv(path) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """Feature matrix for prediction; a trailing label column is ignored if present"""
    header, body = _read_table(path, labeled=False)
    names = header[:-1] if header[-1] == LABEL_COLUMN else header
    return _parse_features(body, names, path), names


def load_gram_csv(path) -> np.ndarray:
    """Square Gram matrix over training rows: reals, no header"""
    raw = _read_raw(path)
    gram = raw.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce")).to_numpy(dtype=float)
    if not np.isfinite(gram).all():
        raise NonNumericFeature(f"{path}: Gram entries must be finite numbers")
    if gram.shape[0] != gram.shape[1]:
        raise DimensionMismatch(f"{path}: Gram matrix must be square, got {gram.shape}")
    return gram


def write_predictions_csv(scores, labels, path) -> None:
    frame = pd.DataFrame({'score': np.asarray(scores, dtype=float), 'label': np.asarray(labels, dtype=int)})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def load_predictions_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    """Scores and +1/-1 labels from a predictions file (header score,label)"""
    header, body = _read_table(path)
    if header != PREDICTION_COLUMNS:
        raise InvalidLabel(f"{path}: expected columns {','.join(PREDICTION_COLUMNS)}, got {','.join(header)}")
    labels = body.iloc[:, -1].str.strip()
    bad = ~labels.isin(tuple(TRUTH_LABELS))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise InvalidLabel(f"{path}: line {row + 2}: label {labels.iloc[row]!r} is not one of 1, -1")
    scores = _parse_features(body, header[:1], path)[:, 0]
    return scores, labels.map(TRUTH_LABELS).to_numpy()


# Synthetic data

def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator, reproducible across platforms"""
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic child seed for (master, keys...)"""
    return int(np.random.SeedSequence([master, *keys]).generate_state(1)[0])


def box_muller(rng: np.random.Generator, count: int) -> np.ndarray:
    """Standard normal draws by the Box-Muller transform of uniform pairs"""
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1]
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    draws = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]).ravel()
    return draws[:count]


def _gaussian_block(rng: np.random.Generator, mean, covariance, count: int) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    factor = np.linalg.cholesky(np.asarray(covariance, dtype=float))
    draws = box_muller(rng, count * mean.shape[0]).reshape(count, mean.shape[0])
    return mean + draws @ factor.T


def synth_generate(spec: SynthSpec) -> EvalDataset:
    """
    Trifurcate data: two positive clusters on either side of a negative cluster.
    200 positives around (15, 15), 200 around (mean_p2, mean_p2), 400 negatives around the origin.
    """
    rng = make_rng(spec.seed)
    isotropic = SYNTH_VARIANCE * np.eye(2)
    first = _gaussian_block(rng, (SYNTH_FIRST_MEAN, SYNTH_FIRST_MEAN), isotropic, SYNTH_CLUSTER_SIZE)
    second = _gaussian_block(rng, (spec.mean_p2, spec.mean_p2), isotropic, SYNTH_CLUSTER_SIZE)
    negatives = _gaussian_block(rng, (0.0, 0.0), SYNTH_NEGATIVE_COVARIANCE, 2 * SYNTH_CLUSTER_SIZE)

    features = np.vstack([first, second, negatives])
    labels = np.concatenate([np.ones(2 * SYNTH_CLUSTER_SIZE, dtype=int),
                             -np.ones(2 * SYNTH_CLUSTER_SIZE, dtype=int)])
    return EvalDataset(features, labels, ("x1", "x2"))


# Splits

def round_half_up(value) -> int:
    """Round an exact product half-up"""
    return math.floor(Fraction(value) + Fraction(1, 2))


def _single_training_set_indices(data: EvalDataset, spec: SplitSpec):
    if spec.mode != SINGLE_TRAINING_SET:
        raise InvalidHyperparameter(f"expected a {SINGLE_TRAINING_SET} split spec, got {spec.mode}")
    if not (data.labels == 1).any():
        raise NoLabeledPositives("data has no positive instances")

    rng = make_rng(spec.seed)
    n_train = round_half_up((1 - spec.test_fraction) * data.n)
    order = rng.permutation(data.n)
    train, test = order[:n_train], order[n_train:]

    train_positives = train[data.labels[train] == 1]
    n_labeled = round_half_up(spec.labeled_fraction * len(train_positives))
    if n_labeled == 0:
        raise NoLabeledPositives(
            f"labeled fraction {spec.labeled_fraction} of {len(train_positives)} training positives rounds to zero")
    labeled = rng.permutation(train_positives)[:n_labeled]
    unlabeled = np.setdiff1d(train, labeled)
    return np.sort(labeled), unlabeled, np.sort(test)


def _case_control_indices(data: EvalDataset, spec: SplitSpec):
    if spec.mode != CASE_CONTROL:
        raise InvalidHyperparameter(f"expected a {CASE_CONTROL} split spec, got {spec.mode}")
    positives = np.flatnonzero(data.labels == 1)
    negatives = np.flatnonzero(data.labels == -1)
    if positives.size == 0:
        raise NoLabeledPositives("data has no positive instances")

    rng = make_rng(spec.seed)
    n_labeled = round_half_up(spec.gamma_prime * positives.size)
    if n_labeled == 0:
        raise NoLabeledPositives(f"gamma' = {spec.gamma_prime} of {positives.size} positives rounds to zero")
    shuffled = rng.permutation(positives)
    labeled = shuffled[:n_labeled]

    pool = np.sort(np.concatenate([shuffled[n_labeled:], negatives]))
    if pool.size == 0:
        raise NoUnlabeled("every instance is a labeled positive; the unlabeled pool is empty")
    order = rng.permutation(pool)
    n_train = round_half_up((1 - spec.test_fraction) * pool.size)
    if n_train == 0:
        raise NoUnlabeled(f"training share of the {pool.size}-row unlabeled pool rounds to zero")
    return np.sort(labeled), np.sort(order[:n_train]), np.sort(order[n_train:])


def _assemble_split(data: EvalDataset, labeled, unlabeled, test) -> Tuple[PUDataset, EvalDataset]:
    train = PUDataset(data.features[labeled], data.features[unlabeled], data.feature_names)
    held_out = EvalDataset(data.features[test], data.labels[test], data.feature_names)
    logger.info("Split: n_p=%d n_u=%d test=%d", train.n_p, train.n_u, held_out.n)
    return train, held_out


def split_single_training_set(data: EvalDataset, spec: SplitSpec) -> Tuple[PUDataset, EvalDataset]:
    """70/30 train/test, then a labeled fraction of the training positives"""
    return _assemble_split(data, *_single_training_set_indices(data, spec))


def split_case_control(data: EvalDataset, spec: SplitSpec) -> Tuple[PUDataset, EvalDataset]:
    """gamma' of all positives labeled; the rest pooled with negatives and split 70/30"""
    return _assemble_split(data, *_case_control_indices(data, spec))


def split(data: EvalDataset, spec: SplitSpec) -> Tuple[PUDataset, EvalDataset]:
    if spec.mode == CASE_CONTROL:
        return split_case_control(data, spec)
    return split_single_training_set(data, spec)


def realized_label_frequency(data: EvalDataset, spec: SplitSpec) -> float:
    """Fraction of the training positives that ended up labeled"""
    if spec.mode == CASE_CONTROL:
        labeled, unlabeled, _ = _case_control_indices(data, spec)
    else:
        labeled, unlabeled, _ = _single_training_set_indices(data, spec)
    hidden_positives = int((data.labels[unlabeled] == 1).sum())
    return len(labeled) / (len(labeled) + hidden_positives)
