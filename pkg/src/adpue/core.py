"""Shared domain types and the loss primitives every risk is built from."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.special import expit

#: Probabilities are clamped to ``[EPS, 1 - EPS]`` before any logarithm.
EPS = 1e-7

LABEL_COLUMNS = ("w", "e", "y_oracle")


class ColumnMissingError(ValueError):
    """A dataset lacks a column that an operation requires."""


class ParameterError(ValueError):
    """A hyperparameter lies outside its admissible range."""


class DegenerateSubsetError(ValueError):
    """A required subset of rows (e.g. the exposed rows) is empty."""


def logistic(z):
    """Logistic link, clamped to ``[EPS, 1 - EPS]``.

    Accepts scalars or arrays; non-finite input is rejected.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("logistic() requires finite input")
    p = np.clip(expit(z), EPS, 1.0 - EPS)
    return float(p) if p.ndim == 0 else p


def log_loss(f, z):
    """Negative log-likelihood of label ``z`` under probability ``f``.

    ``-ln f`` for ``z == 1`` and ``-ln(1 - f)`` for ``z == 0``.
    """
    f = np.asarray(f, dtype=float)
    z = np.asarray(z)
    out = np.where(z == 1, -np.log(f), -np.log1p(-f))
    return float(out) if out.ndim == 0 else out


def classify(f):
    """Threshold a probability at 1/2 (boundary counts as positive)."""
    out = (np.asarray(f, dtype=float) >= 0.5).astype(int)
    return int(out) if out.ndim == 0 else out


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _binary_column(values, name: str, n: int) -> Optional[np.ndarray]:
    if values is None:
        return None
    a = np.array(values, dtype=np.int8).reshape(-1)
    if a.shape[0] != n:
        raise ValueError(f"column {name!r} has length {a.shape[0]}, expected {n}")
    if a.size and not np.all((a == 0) | (a == 1)):
        raise ValueError(f"column {name!r} must be 0/1")
    return _frozen(a)


@dataclass(frozen=True, eq=False)
class LabeledSampleSet:
    """Feature rows with optional observation columns.

    ``w`` is the observed-positive indicator (``W = E * Y``), ``e`` the
    exposure indicator and ``y_oracle`` the hidden true label, which only
    evaluation code may read.  Absent columns are ``None``.
    """

    features: np.ndarray
    w: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None
    y_oracle: Optional[np.ndarray] = None
    dim: Optional[int] = None

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, self.dim or 0)
        if X.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if self.dim is not None and X.shape[1] != self.dim:
            raise ValueError(f"features have {X.shape[1]} columns, declared dim is {self.dim}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        n = X.shape[0]
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "dim", X.shape[1])
        for name in LABEL_COLUMNS:
            object.__setattr__(self, name, _binary_column(getattr(self, name), name, n))
        if self.w is not None and self.e is not None:
            if np.any((self.w == 1) & (self.e == 0)):
                raise ValueError("w = 1 requires e = 1")
            if self.y_oracle is not None and np.any(self.w != self.e * self.y_oracle):
                raise ValueError("w must equal e * y_oracle")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def has(self, column: str) -> bool:
        return getattr(self, column) is not None

    def require(self, *columns: str, role: str = "dataset") -> None:
        for c in columns:
            if getattr(self, c) is None:
                raise ColumnMissingError(f"{role} is missing required column {c!r}")

    def take(self, idx) -> "LabeledSampleSet":
        """Row subset (index array or boolean mask), columns preserved."""
        idx = np.asarray(idx)
        cols = {c: (None if getattr(self, c) is None else getattr(self, c)[idx]) for c in LABEL_COLUMNS}
        return LabeledSampleSet(self.features[idx], dim=self.dim, **cols)

    def keep(self, *columns: str) -> "LabeledSampleSet":
        """Copy exposing only the named label columns."""
        unknown = set(columns) - set(LABEL_COLUMNS)
        if unknown:
            raise ValueError(f"unknown columns {sorted(unknown)}")
        cols = {c: (getattr(self, c) if c in columns else None) for c in LABEL_COLUMNS}
        return LabeledSampleSet(self.features, dim=self.dim, **cols)

    def with_columns(self, **columns) -> "LabeledSampleSet":
        cols = {c: getattr(self, c) for c in LABEL_COLUMNS}
        cols.update(columns)
        return LabeledSampleSet(self.features, dim=self.dim, **cols)

    @staticmethod
    def concat(parts: Iterable["LabeledSampleSet"]) -> "LabeledSampleSet":
        """Stack row-wise; a column survives only if every part has it."""
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise ValueError(f"dimension mismatch: {sorted(dims)}")
        cols = {}
        for c in LABEL_COLUMNS:
            if all(p.has(c) for p in parts):
                cols[c] = np.concatenate([getattr(p, c) for p in parts])
        return LabeledSampleSet(np.vstack([p.features for p in parts]), dim=parts[0].dim, **cols)


@dataclass(frozen=True, eq=False)
class LinearScorer:
    """``f(x) = logistic(weights . x + intercept)``."""

    weights: np.ndarray
    intercept: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "intercept", float(self.intercept))

    @classmethod
    def zeros(cls, dim: int) -> "LinearScorer":
        return cls(np.zeros(dim), 0.0)

    @classmethod
    def from_params(cls, params) -> "LinearScorer":
        params = np.asarray(params, dtype=float)
        return cls(params[:-1], params[-1])

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def params(self) -> np.ndarray:
        """Weights followed by the intercept (length ``dim + 1``)."""
        return np.append(self.weights, self.intercept)

    def logits(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return np.atleast_1d(logistic(self.logits(X)))

    def predict(self, X) -> np.ndarray:
        return np.atleast_1d(classify(self.predict_proba(X)))
