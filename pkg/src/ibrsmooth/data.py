"""Dataset container and CSV loading."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import DuplicateRowsWarning, InputError


@dataclass(frozen=True)
class Dataset:
    """A regression sample: covariates X (n x d) and responses y (length n).

    Rows need not be distinct, but exact duplicates are flagged with a
    :class:`DuplicateRowsWarning` because they raise the multiplicity of the
    unit eigenvalue of row-stochastic smoothers and make interpolation-level
    degrees of freedom unreachable.
    """

    X: np.ndarray
    y: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise InputError(f"X must be a 2-d array, got ndim={X.ndim}")
        if X.shape[0] != y.shape[0]:
            raise InputError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if X.shape[0] < 1:
            raise InputError("need at least one observation")
        if X.shape[1] < 1:
            raise InputError("need at least one covariate")
        if not np.all(np.isfinite(X)):
            raise InputError("X contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise InputError("y contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.column_names and len(self.column_names) != X.shape[1]:
            raise InputError("column_names length does not match X")
        if X.shape[0] > 1:
            n_unique = np.unique(X, axis=0).shape[0]
            if n_unique < X.shape[0]:
                warnings.warn(
                    f"design matrix has {X.shape[0] - n_unique} duplicated "
                    "rows; interpolation df is unreachable",
                    DuplicateRowsWarning,
                    stacklevel=2,
                )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def has_duplicate_rows(self) -> bool:
        return np.unique(self.X, axis=0).shape[0] < self.n


def read_table(path) -> pd.DataFrame:
    """Read a comma-separated file with a header row into a DataFrame."""
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read CSV {path}: {exc}") from exc
    return df


def dataset_from_frame(df: pd.DataFrame, response: str) -> Dataset:
    """Split a DataFrame into a Dataset using `response` as the y column."""
    cols = {c.lower(): c for c in df.columns}
    key = response.lower()
    if key not in cols:
        raise InputError(
            f"response column {response!r} not found; columns: {list(df.columns)}"
        )
    ycol = cols[key]
    if len(df) == 0:
        raise InputError("CSV contains a header but no data rows")
    covariates = [c for c in df.columns if c != ycol]
    if not covariates:
        raise InputError("no covariate columns besides the response")
    try:
        X = df[covariates].to_numpy(dtype=float)
        y = df[ycol].to_numpy(dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"non-numeric values in CSV: {exc}") from exc
    return Dataset(X, y, column_names=tuple(covariates))


def load_dataset(path, response: str) -> Dataset:
    """Load a CSV file with a header row into a Dataset."""
    return dataset_from_frame(read_table(path), response)
