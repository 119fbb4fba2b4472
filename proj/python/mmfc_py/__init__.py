"""Multiple imputation of mixed ordinal/nominal data with focused clustering.

Arrays are n x p integer matrices of 1-based category codes in the schema's
column order; 0 marks a missing cell. Schemas may be given as a path, a JSON
string, or the parsed dict/list.
"""

import json
import os

import numpy as np

from . import _core
from ._core import ChainError, NumericalError, ValidationError, pool, run_cli, version

__all__ = [
    "ChainError",
    "NumericalError",
    "ValidationError",
    "impute",
    "load_csv",
    "pool",
    "pool_cells",
    "run_cli",
    "simulate",
    "version",
]


def _schema_text(schema):
    if isinstance(schema, (dict, list)):
        return json.dumps(schema)
    if isinstance(schema, (str, os.PathLike)) and os.path.exists(schema):
        with open(schema) as f:
            return f.read()
    return str(schema)


def _names(schema_text):
    j = json.loads(schema_text)
    return [v["name"] for v in (j["variables"] if isinstance(j, dict) else j)]


def load_csv(schema, path):
    """Read a data file with an NA-aware header row; returns an int array."""
    text = _schema_text(schema)
    names = _names(text)
    with open(path) as f:
        header = f.readline().strip().split(",")
        pos = [header.index(n) for n in names]
        rows = []
        for line in f:
            if not line.strip():
                continue
            cells = line.strip().split(",")
            rows.append([0 if cells[k] in ("", "NA") else int(cells[k]) for k in pos])
    return np.asarray(rows, dtype=np.int32).reshape(-1, len(names))


def impute(schema, values, m=5, burn_in=1000, thin=100, seed=0, model="mmfc", truncation=None, config=None):
    """m completed copies of `values` from one chain."""
    cfg = "" if config is None else _schema_text(config)
    return _core.impute(_schema_text(schema), np.asarray(values), m, burn_in, thin, seed, model,
                        None if truncation is None else list(truncation), cfg)


def pool_cells(schema, datasets, focus_only=False, level=0.95):
    """Rubin-pooled marginal and bivariate cell probabilities."""
    return _core.pool_cells(_schema_text(schema), [np.asarray(d) for d in datasets], focus_only, level)


def simulate(scenario, seed):
    """Synthetic scenario data: dict with 'schema' (JSON text), 'complete' and 'masked'."""
    return _core.simulate(scenario, seed)
