"""Semi-synthetic benchmark construction.

Reads LIBSVM-style sparse files, attaches a feature-dependent exposure
mechanism calibrated to a target exposure rate, synthesises the observed
columns ``e`` and ``w = e * y`` and splits the result into the training
roles of each problem setting.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

from .core import LABEL_COLUMNS, LabeledSampleSet


class SparseFormatError(ValueError):
    """Malformed line in a sparse ``label index:value`` file."""


class DimensionError(ValueError):
    """Feature index beyond the declared dimension."""


class CalibrationError(RuntimeError):
    """Target exposure rate cannot be reached."""


class SplitSizeError(ValueError):
    """Too few rows for the requested split."""


def _normalise_labels(raw: np.ndarray) -> np.ndarray:
    values = np.unique(raw)
    if values.size > 2:
        raise SparseFormatError(f"expected binary labels, found {values.tolist()}")
    # larger label is the positive class: +1 of {-1,+1}, 1 of {0,1}, 2 of {1,2}
    if values.size == 2:
        return (raw == values.max()).astype(np.int8)
    v = values[0] if values.size else 1
    return np.full(raw.shape, 1 if v > 0 else 0, dtype=np.int8)


def minmax_scale(X: np.ndarray) -> np.ndarray:
    """Per-column min-max scaling to ``[0, 1]``; constant columns become 0."""
    lo = X.min(axis=0) if X.shape[0] else np.zeros(X.shape[1])
    span = (X.max(axis=0) - lo) if X.shape[0] else np.ones(X.shape[1])
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (X - lo) / safe, 0.0)


def parse_sparse_dataset(path, dim: Optional[int] = None, scale: bool = True) -> LabeledSampleSet:
    """Load a sparse ``label idx:val ...`` file (1-based indices).

    Labels are mapped to ``{0, 1}`` with the larger original label positive.
    With ``scale`` each feature is min-max scaled to ``[0, 1]``.
    """
    labels, rows, cols, vals = [], [], [], []
    max_idx = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise SparseFormatError(f"line {lineno}: bad label {tokens[0]!r}") from None
            r = len(labels) - 1
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise SparseFormatError(f"line {lineno}: bad feature token {tok!r}") from None
                if idx < 1:
                    raise SparseFormatError(f"line {lineno}: feature index {idx} must be >= 1")
                if dim is not None and idx > dim:
                    raise DimensionError(f"line {lineno}: index {idx} exceeds declared dim {dim}")
                max_idx = max(max_idx, idx)
                rows.append(r)
                cols.append(idx - 1)
                vals.append(val)
    d = dim if dim is not None else max_idx
    X = np.zeros((len(labels), d))
    X[rows, cols] = vals
    if not np.all(np.isfinite(X)):
        raise SparseFormatError("non-finite feature value")
    if scale:
        X = minmax_scale(X)
    return LabeledSampleSet(X, y_oracle=_normalise_labels(np.asarray(labels)), dim=d)


def write_sparse_dataset(data: LabeledSampleSet, path) -> None:
    """Write ``y_oracle`` (as +1/-1) and nonzero features in sparse format."""
    data.require("y_oracle", role="dataset")
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in zip(data.features, data.y_oracle):
            nz = np.flatnonzero(x)
            feats = " ".join(f"{j + 1}:{x[j]:.10g}" for j in nz)
            fh.write(f"{'+1' if y == 1 else '-1'} {feats}".rstrip() + "\n")


# -- exposure mechanism ------------------------------------------------------

#: 1-based slots (a, b, c, d, e, f) of ``x_a + 2 x_b + 3 x_c x_d + 4 x_e + 5 x_f**2``.
G1_DEFAULT = (2, 3, 4, 5, 6, 6)
G2_DEFAULT = (7, 8, 9, 10, 11, 12)


@dataclass(frozen=True)
class ExposureSpec:
    target_marginal: float = 0.5
    pivot_index: int = 13
    g1_indices: tuple = G1_DEFAULT
    g2_indices: tuple = G2_DEFAULT

    def __post_init__(self):
        if not 0.0 < self.target_marginal < 1.0:
            raise ValueError("target_marginal must lie in (0, 1)")
        for name in ("g1_indices", "g2_indices"):
            idx = tuple(int(i) for i in getattr(self, name))
            if len(idx) != 6:
                raise ValueError(f"{name} needs 6 slots (a, b, c, d, e, f)")
            object.__setattr__(self, name, idx)
        if min(self.g1_indices + self.g2_indices + (self.pivot_index,)) < 1:
            raise ValueError("feature indices are 1-based")

    def validate_for(self, dim: int) -> None:
        """Indices beyond ``dim`` are wrapped modulo ``dim``; reject only empty data."""
        if dim < 1:
            raise ValueError("exposure needs at least one feature")


def _col(X: np.ndarray, index: int) -> np.ndarray:
    return X[:, (index - 1) % X.shape[1]]


def _poly(X: np.ndarray, slots: Sequence[int]) -> np.ndarray:
    a, b, c, d, e, f = (_col(X, i) for i in slots)
    return a + 2 * b + 3 * c * d + 4 * e + 5 * f**2


def exposure_score(X, spec: ExposureSpec) -> np.ndarray:
    """``logistic(x_p g1(x) + (1 - x_p) g2(x))`` per row, before scaling by C."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    spec.validate_for(X.shape[1])
    pivot = _col(X, spec.pivot_index)
    return expit(pivot * _poly(X, spec.g1_indices) + (1 - pivot) * _poly(X, spec.g2_indices))


def exposure_probabilities(X, spec: ExposureSpec, c: float) -> np.ndarray:
    if not c > 0:
        raise ValueError("C must be positive")
    return np.minimum(1.0, c * exposure_score(X, spec))


def exposure_probability(x, spec: ExposureSpec, c: float) -> float:
    """``min(1, C * logistic(h(x)))`` for a single feature vector."""
    return float(exposure_probabilities(np.asarray(x, dtype=float).reshape(1, -1), spec, c)[0])


def calibrate_c(data, spec: ExposureSpec, tol: float = 1e-6, max_iter: int = 200, c_max: float = 1e6) -> float:
    """Bisection for C such that the mean exposure probability hits the target."""
    X = data.features if isinstance(data, LabeledSampleSet) else np.asarray(data, dtype=float)
    s = exposure_score(X, spec)
    target = spec.target_marginal

    def rate(c):
        return float(np.mean(np.minimum(1.0, c * s)))

    lo, hi = 0.0, 1.0
    while rate(hi) < target:
        lo, hi = hi, hi * 2.0
        if hi > c_max:
            raise CalibrationError(f"target {target} unreachable with C <= {c_max:g}")
    c = hi
    for _ in range(max_iter):
        c = 0.5 * (lo + hi)
        r = rate(c)
        if abs(r - target) <= tol:
            break
        if r < target:
            lo = c
        else:
            hi = c
    if abs(rate(c) - target) > tol:
        raise CalibrationError(f"bisection did not reach tolerance {tol:g}")
    return c


def synthesize_observations(data: LabeledSampleSet, spec: ExposureSpec, c: float, seed) -> LabeledSampleSet:
    """Draw ``e ~ Bernoulli(theta(e=1|x))`` independently of ``y`` and set ``w = e * y``."""
    data.require("y_oracle", role="dataset")
    rng = np.random.default_rng(seed)
    theta = exposure_probabilities(data.features, spec, c)
    e = (rng.random(data.n) < theta).astype(np.int8)
    return data.with_columns(e=e, w=e * data.y_oracle)


# -- splitting ---------------------------------------------------------------


class Problem(str, enum.Enum):
    PUE = "PUE"
    SSE = "SSE"
    SE3 = "3SE"
    PE = "PE"
    FPUE = "FPUE"


@dataclass(frozen=True)
class SplitSpec:
    """``split_ratio`` goes to the first role (D^PU, or D^P/D^U), the rest to the second."""

    split_ratio: float = 0.3
    test_count: int = 300
    seed: int = 0
    pool_size: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.test_count < 1:
            raise ValueError("test_count must be positive")
        if self.pool_size is not None and self.pool_size < 2:
            raise ValueError("pool_size must be at least 2")


@dataclass(eq=False)
class Split:
    problem: Problem
    roles: dict
    test: LabeledSampleSet
    pool: LabeledSampleSet
    class_prior: float
    meta: dict = field(default_factory=dict)


def _first_count(n: int, ratio: float) -> int:
    # ceiling, guarded against float noise such as 0.3 * 1800 = 540.0000000000001
    return min(n - 1, max(1, math.ceil(ratio * n - 1e-9)))


def split_for_problem(data: LabeledSampleSet, problem, split: SplitSpec) -> Split:
    """Hold out a test set and partition the rest into the roles of ``problem``.

    Role datasets expose only the columns the problem observes, plus
    ``y_oracle`` for evaluation.  ``class_prior`` is ``mean(w)`` over the
    whole synthesised dataset.
    """
    problem = Problem(problem)
    data.require("w", "e", "y_oracle", role="dataset")
    n = data.n
    pool_n = n - split.test_count if split.pool_size is None else split.pool_size
    if split.test_count >= n or pool_n < 2 or split.test_count + pool_n > n:
        raise SplitSizeError(f"{n} rows cannot supply {split.test_count} test + {pool_n} pool rows")
    rng = np.random.default_rng(split.seed)
    perm = rng.permutation(n)
    test = data.take(perm[: split.test_count]).keep("y_oracle")
    pool = data.take(perm[split.test_count : split.test_count + pool_n])
    n1 = _first_count(pool_n, split.split_ratio)
    first, second = pool.take(np.arange(n1)), pool.take(np.arange(n1, pool_n))
    prior = float(np.mean(data.w))

    if problem is Problem.PUE:
        roles = {"pu": first.keep("w", "y_oracle"), "e": second.keep("e", "y_oracle")}
    elif problem is Problem.SE3:
        roles = {"pu": first.keep("w", "y_oracle"), "sse": second.keep("w", "e", "y_oracle")}
    elif problem is Problem.SSE:
        roles = {"sse": pool.keep("w", "e", "y_oracle")}
    elif problem is Problem.PE:
        roles = {"p": first.take(first.w == 1).keep("y_oracle"), "e": second.keep("e", "y_oracle")}
    else:
        half = n1 // 2
        p_src, u_src = first.take(np.arange(half)), first.take(np.arange(half, n1))
        roles = {
            "p": p_src.take(p_src.w == 1).keep("y_oracle"),
            "u": u_src.keep("y_oracle"),
            "e": second.keep("e", "y_oracle"),
        }
    return Split(problem, roles, test, pool, prior, {"n_first": n1, "n_second": pool_n - n1})


# -- CSV ---------------------------------------------------------------------


def write_csv(data: LabeledSampleSet, path) -> None:
    """Columnar CSV with header ``w,e,y_oracle,x1..xd``; absent columns omitted."""
    present = [c for c in LABEL_COLUMNS if data.has(c)]
    header = present + [f"x{j + 1}" for j in range(data.dim)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(data.n):
            wr.writerow([int(getattr(data, c)[i]) for c in present] + [repr(float(v)) for v in data.features[i]])


def read_csv(path) -> LabeledSampleSet:
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        body = [row for row in rd if row]
    labels = [c for c in header if c in LABEL_COLUMNS]
    xcols = [j for j, c in enumerate(header) if c not in LABEL_COLUMNS]
    arr = np.array(body, dtype=float).reshape(len(body), len(header))
    cols = {c: arr[:, header.index(c)].astype(np.int8) for c in labels}
    return LabeledSampleSet(arr[:, xcols], dim=len(xcols), **cols)


# -- bundled datasets ----------------------------------------------------------

DATA_DIR = Path(__file__).with_name("data")


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    n: int
    positive_fraction: float
    dim: int
    pool_size: Optional[int] = None


#: Dataset metadata as published alongside the linear-model benchmark.
KNOWN_DATASETS: Mapping[str, DatasetInfo] = {
    "australian": DatasetInfo("australian", 690, 0.445, 14),
    "w8a": DatasetInfo("w8a", 49749, 0.589, 300, pool_size=1800),
    "covtype": DatasetInfo("covtype", 581012, 0.438, 784, pool_size=1800),
    "mushrooms": DatasetInfo("mushrooms", 8124, 0.878, 112, pool_size=1800),
    "german": DatasetInfo("german", 1000, 0.300, 24),
}


def resolve_dataset(name_or_path) -> Path:
    """Map a dataset name to a file, searching ``$ADPUE_DATA_DIR`` then the bundled data."""
    import os

    p = Path(name_or_path)
    if p.exists():
        return p
    candidates = []
    env = os.environ.get("ADPUE_DATA_DIR")
    if env:
        candidates.append(Path(env) / str(name_or_path))
    candidates.append(DATA_DIR / str(name_or_path))
    for c in candidates:
        if c.exists():
            return c
    raise FileNotFoundError(f"dataset {name_or_path!r} not found (searched {[str(c) for c in candidates]})")
