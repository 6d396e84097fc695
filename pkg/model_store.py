"""
Persistence: versioned JSON model envelopes, tuning results, and the sqlite
ledger of experiment runs.
"""

import json
import logging
import sqlite3
from typing import Dict, List, Optional, Tuple

import numpy as np

from dataset import Standardizer
from errors import ModelFormatError, ValidationError
from estimators import GLLC_KERNEL, GLLC_LINEAR, MODEL_KINDS, PUAL_KERNEL, PUAL_LINEAR, kind_of
from evaluation import TuneResult
from gllc import GllcModel
from pual_kernel import KernelModel, KernelSpec
from pual_linear import Hyperparams, LinearModel, SolveReport

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
ENVELOPE_KEYS = ("format_version", "model_kind", "hyperparams", "kernel", "parameters",
                 "standardizer", "report", "train_rows")


def _floats(values) -> Optional[list]:
    return None if values is None else np.asarray(values, dtype=float).tolist()


def _array(values, name: str, ndim: int) -> Optional[np.ndarray]:
    if values is None:
        return None
    array = np.asarray(values, dtype=float)
    if array.ndim != ndim:
        raise ModelFormatError(f"parameter {name} must be {ndim}-dimensional")
    return array


def model_envelope(model, hp: Hyperparams, report: Optional[SolveReport] = None) -> Dict:
    kind = kind_of(model)
    kernel = getattr(model, "kernel", None)
    train_features = getattr(model, "train_features", None)
    parameters = {
        'beta': _floats(getattr(model, "beta", None)),
        'omega': _floats(getattr(model, "omega", None)),
        'beta0': float(model.beta0),
        'train_features': _floats(train_features),
        'b_matrix': _floats(getattr(model, "b_matrix", None)),
    }
    return {
        'format_version': FORMAT_VERSION,
        'model_kind': kind,
        'hyperparams': hp.to_dict(),
        'kernel': kernel.to_dict() if kernel else None,
        'parameters': parameters,
        'standardizer': model.standardizer.to_dict(),
        'report': report.to_dict() if report else None,
        'train_rows': 0 if train_features is None else int(np.shape(train_features)[0]),
    }


def model_from_envelope(envelope: Dict):
    """Rebuild the model object; its predictions match the saved model bit for bit"""
    if not isinstance(envelope, dict) or any(key not in envelope for key in ENVELOPE_KEYS):
        raise ModelFormatError(f"model envelope needs the keys {ENVELOPE_KEYS}")
    if envelope['format_version'] != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format_version {envelope['format_version']}, expected {FORMAT_VERSION}")
    kind = envelope['model_kind']
    if kind not in MODEL_KINDS:
        raise ModelFormatError(f"unknown model_kind {kind!r}")

    try:
        params = envelope['parameters']
        standardizer = Standardizer.from_dict(envelope['standardizer'])
        kernel = KernelSpec.from_dict(envelope['kernel']) if envelope['kernel'] else None
        beta = _array(params.get('beta'), 'beta', 1)
        omega = _array(params.get('omega'), 'omega', 1)
        beta0 = float(params['beta0'])
        train_features = _array(params.get('train_features'), 'train_features', 2)
        b_matrix = _array(params.get('b_matrix'), 'b_matrix', 2)

        if kind == PUAL_LINEAR:
            model = LinearModel(beta, beta0, standardizer)
        elif kind == PUAL_KERNEL:
            model = KernelModel(omega, beta0, train_features, kernel, standardizer, b_matrix)
        elif kind == GLLC_LINEAR:
            model = GllcModel(beta0, standardizer, beta=beta)
        else:
            model = GllcModel(beta0, standardizer, omega=omega, kernel=kernel,
                              train_features=train_features, b_matrix=b_matrix)
        hp = Hyperparams.from_dict(envelope['hyperparams'])
    except (KeyError, TypeError, ValueError, ValidationError) as err:
        raise ModelFormatError(f"malformed {kind} envelope: {err}") from err

    if kind in (PUAL_KERNEL, GLLC_KERNEL) and (omega is None or kernel is None):
        raise ModelFormatError(f"{kind} envelope is missing omega or its kernel")
    if kind in (PUAL_LINEAR, GLLC_LINEAR) and beta is None:
        raise ModelFormatError(f"{kind} envelope is missing beta")
    return model, hp


def save_model(path, model, hp: Hyperparams, report: Optional[SolveReport] = None) -> Dict:
    envelope = model_envelope(model, hp, report)
    with open(path, "w") as handle:
        json.dump(envelope, handle, indent=1)
    if envelope['train_rows']:
        logger.info("Saved %s with %d retained training rows to %s",
                    envelope['model_kind'], envelope['train_rows'], path)
    return envelope


def load_model(path) -> Tuple[object, Hyperparams]:
    with open(path, encoding="utf-8") as handle:
        try:
            envelope = json.load(handle)
        except (json.JSONDecodeError, UnicodeDecodeError) as err:
            raise ModelFormatError(f"{path} is not a model file: {err}") from err
    return model_from_envelope(envelope)


def save_tune_result(path, result: TuneResult) -> None:
    with open(path, "w") as handle:
        json.dump(result.to_dict(), handle, indent=1)


def load_tune_result(path) -> TuneResult:
    with open(path, encoding="utf-8") as handle:
        try:
            return TuneResult.from_dict(json.load(handle))
        except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError, ValueError) as err:
            raise ModelFormatError(f"{path} is not a tuning result: {err}") from err


class ExperimentLedger:
    """One row per (mean_p2, replicate, method) run of the synthetic study"""

    def __init__(self, db_name: str = "table1.db"):
        self.db_name = db_name
        self.init_database()

    def get_connection(self):
        return sqlite3.connect(self.db_name)

    def init_database(self):
        conn = self.get_connection()
        cursor = conn.cursor()
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                mean_p2 REAL NOT NULL,
                replicate INTEGER NOT NULL,
                method TEXT NOT NULL,
                data_seed INTEGER NOT NULL,
                split_seed INTEGER NOT NULL,
                tune_seed INTEGER NOT NULL,
                lam REAL,
                sigma REAL,
                c_u REAL,
                f1 REAL NOT NULL,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                UNIQUE (mean_p2, replicate, method)
            )
        ''')
        conn.commit()
        conn.close()

    def clear_runs(self) -> int:
        """Drop every recorded run; returns how many were removed"""
        conn = self.get_connection()
        cursor = conn.cursor()
        cursor.execute('DELETE FROM runs')
        removed = cursor.rowcount
        conn.commit()
        conn.close()
        return removed

    def record_run(self, mean_p2: float, replicate: int, method: str, seeds: Tuple[int, int, int],
                   lam: float, sigma: float, c_u: float, f1: float) -> int:
        """Insert or replace one run; returns its row id"""
        data_seed, split_seed, tune_seed = seeds
        conn = self.get_connection()
        cursor = conn.cursor()
        cursor.execute('''
            INSERT OR REPLACE INTO runs (mean_p2, replicate, method, data_seed, split_seed, tune_seed,
                                         lam, sigma, c_u, f1)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        ''', (mean_p2, replicate, method, data_seed, split_seed, tune_seed, lam, sigma, c_u, f1))
        run_id = cursor.lastrowid
        conn.commit()
        conn.close()
        return run_id

    def get_runs(self, mean_p2: Optional[float] = None, method: Optional[str] = None) -> List[Dict]:
        conn = self.get_connection()
        cursor = conn.cursor()
        query = '''
            SELECT mean_p2, replicate, method, data_seed, split_seed, tune_seed, lam, sigma, c_u, f1
            FROM runs WHERE (? IS NULL OR mean_p2 = ?) AND (? IS NULL OR method = ?)
            ORDER BY mean_p2, method, replicate
        '''
        cursor.execute(query, (mean_p2, mean_p2, method, method))
        rows = cursor.fetchall()
        conn.close()

        return [{
            'mean_p2': row[0],
            'replicate': row[1],
            'method': row[2],
            'data_seed': row[3],
            'split_seed': row[4],
            'tune_seed': row[5],
            'lam': row[6],
            'sigma': row[7],
            'c_u': row[8],
            'f1': row[9]
        } for row in rows]

    def get_summary(self) -> List[Dict]:
        """Mean and sample standard deviation of F1 (percent) per (mean_p2, method)"""
        conn = self.get_connection()
        cursor = conn.cursor()
        cursor.execute('''
            SELECT mean_p2, method, COUNT(*), AVG(f1)
            FROM runs
            GROUP BY mean_p2, method
            ORDER BY mean_p2, method
        ''')
        groups = cursor.fetchall()
        conn.close()

        summary = []
        for mean_p2, method, count, average in groups:
            scores = np.array([run['f1'] for run in self.get_runs(mean_p2, method)]) * 100
            summary.append({
                'mean_p2': mean_p2,
                'method': method,
                'n': count,
                'mean': average * 100,
                'std': float(scores.std(ddof=1)) if count > 1 else 0.0,
            })
        return summary
