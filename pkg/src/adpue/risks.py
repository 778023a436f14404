"""Empirical risk functionals for PU learning with exposure data.

Every functional returns its value together with the exact gradient with
respect to the parameters of a :class:`~adpue.core.LinearScorer` (weights
first, intercept last).  All of them use the negative log loss of
:mod:`adpue.core`, so every risk is minimised.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy.special import expit

from .core import (
    EPS,
    DegenerateSubsetError,
    LabeledSampleSet,
    LinearScorer,
    ParameterError,
)


class RiskKind(str, enum.Enum):
    ADPUE_ALTERNATE = "ADPUE_ALTERNATE"
    ADPUE_DIRECT = "ADPUE_DIRECT"
    NNPUE = "NNPUE"
    PUE = "PUE"  # pseudo risk without the non-negative guard
    ADPE = "ADPE"
    ADFPUE = "ADFPUE"
    ADS = "ADS"
    ADSS = "ADSS"
    DADSS = "DADSS"
    AD3SE = "AD3SE"
    LOGIT = "LOGIT"
    UPU = "UPU"
    NNPU = "NNPU"


NEEDS_PRIOR = frozenset({RiskKind.ADPE, RiskKind.ADFPUE, RiskKind.UPU, RiskKind.NNPU})

#: Kinds whose risk contains a proxy term f^dagger.
USES_PROXY = frozenset(
    {
        RiskKind.ADPUE_ALTERNATE,
        RiskKind.ADPUE_DIRECT,
        RiskKind.NNPUE,
        RiskKind.PUE,
        RiskKind.ADPE,
        RiskKind.ADFPUE,
        RiskKind.ADSS,
        RiskKind.DADSS,
        RiskKind.AD3SE,
    }
)

#: Which dataset role carries the rows f^dagger is evaluated on.
PROXY_ROLE = {
    RiskKind.ADPUE_ALTERNATE: "e",
    RiskKind.ADPUE_DIRECT: "e",
    RiskKind.NNPUE: "e",
    RiskKind.PUE: "e",
    RiskKind.ADPE: "e",
    RiskKind.ADFPUE: "e",
    RiskKind.ADSS: "sse",
    RiskKind.DADSS: "sse",
    RiskKind.AD3SE: "sse",
}


@dataclass(frozen=True)
class RiskSpec:
    """Which risk to evaluate, plus its hyperparameters."""

    kind: RiskKind
    class_prior: Optional[float] = None
    mix_weight: Optional[float] = None

    def __post_init__(self):
        kind = RiskKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in NEEDS_PRIOR:
            if self.class_prior is None:
                raise ParameterError(f"{kind.value} requires class_prior")
            if not 0.0 < self.class_prior < 1.0:
                raise ParameterError("class_prior must lie in (0, 1)")
        elif self.class_prior is not None:
            raise ParameterError(f"{kind.value} does not take class_prior")
        if kind is RiskKind.DADSS:
            if self.mix_weight is None:
                raise ParameterError("DADSS requires mix_weight")
            _check_mix(self.mix_weight)
        elif self.mix_weight is not None:
            raise ParameterError(f"{kind.value} does not take mix_weight")

    @property
    def uses_proxy(self) -> bool:
        """Whether the risk has an f^dagger term (DADSS at weight 0 reduces to ADS)."""
        if self.kind is RiskKind.DADSS and self.mix_weight == 0.0:
            return False
        return self.kind in USES_PROXY

    @property
    def label(self) -> str:
        return self.kind.value


@dataclass(frozen=True, eq=False)
class RiskEval:
    value: float
    gradient: np.ndarray
    clipped: bool = False


class _Part:
    """A scalar risk component and its parameter gradient."""

    __slots__ = ("value", "grad")

    def __init__(self, value: float, grad: np.ndarray):
        self.value = value
        self.grad = grad

    def __add__(self, other: "_Part") -> "_Part":
        return _Part(self.value + other.value, self.grad + other.grad)

    def __sub__(self, other: "_Part") -> "_Part":
        return _Part(self.value - other.value, self.grad - other.grad)

    def __rmul__(self, c: float) -> "_Part":
        return _Part(c * self.value, c * self.grad)

    def done(self, clipped: bool = False) -> RiskEval:
        return RiskEval(float(self.value), self.grad, clipped)


def _zero(dim: int) -> _Part:
    return _Part(0.0, np.zeros(dim + 1))


class _Losses:
    """Per-row losses and logit slopes of one scorer on one feature matrix."""

    __slots__ = ("X", "n", "dim", "loss", "slope")

    def __init__(self, f: LinearScorer, X: np.ndarray):
        self.X = X
        self.n = X.shape[0]
        self.dim = f.dim
        z = X @ f.weights + f.intercept
        p = expit(z)
        live = (p >= EPS) & (p <= 1.0 - EPS)  # clamped rows have zero slope
        pc = np.clip(p, EPS, 1.0 - EPS)
        self.loss = {1: -np.log(pc), 0: -np.log1p(-pc)}
        self.slope = {1: np.where(live, p - 1.0, 0.0), 0: np.where(live, p, 0.0)}

    def mean(self, coef, label: int, n: Optional[int] = None) -> _Part:
        """``(1/n) * sum_i coef_i * loss(f(x_i), label)``; ``n`` defaults to the row count."""
        n = self.n if n is None else n
        if self.n == 0:
            return _zero(self.dim)
        c = np.broadcast_to(np.asarray(coef, dtype=float), (self.n,)) / n
        g = c * self.slope[label]
        return _Part(float(c @ self.loss[label]), np.append(self.X.T @ g, g.sum()))


def _nonneg(part: _Part, dim: int) -> tuple[_Part, bool]:
    if part.value >= 0.0:
        return part, False
    return _zero(dim), True


def _proxy(f_dagger, n: int, role: str) -> np.ndarray:
    fd = np.asarray(f_dagger, dtype=float).reshape(-1)
    if fd.shape[0] != n:
        raise ValueError(f"f_dagger has {fd.shape[0]} values but {role} has {n} rows")
    if np.any(fd < EPS) or np.any(fd > 1.0 - EPS):
        raise ParameterError(f"f_dagger values must lie in [{EPS}, {1 - EPS}]")
    return fd


def _check_prior(class_prior, *, allow_zero: bool = False) -> float:
    if class_prior is None:
        raise ParameterError("class_prior is required")
    lo_ok = class_prior >= 0.0 if allow_zero else class_prior > 0.0
    if not (lo_ok and class_prior < 1.0):
        raise ParameterError(f"class_prior {class_prior} out of range")
    return float(class_prior)


def _check_mix(mix_weight) -> float:
    if mix_weight is None or not 0.0 <= mix_weight <= 1.0:
        raise ParameterError(f"mix_weight {mix_weight} must lie in [0, 1]")
    return float(mix_weight)


def _pue_parts(f, f_dagger, d_pu, d_e):
    d_pu.require("w", role="D^PU")
    d_e.require("e", role="D^E")
    fd = _proxy(f_dagger, d_e.n, "D^E")
    pu, ex = _Losses(f, d_pu.features), _Losses(f, d_e.features)
    W = d_pu.w
    hidden = fd * (1 - d_e.e)
    pos = pu.mean(W, 1) + ex.mean(hidden, 1)
    neg = pu.mean(1 - W, 0) - ex.mean(hidden, 0)
    return pos, neg


def risk_pseudo(f: LinearScorer, f_dagger, d_pu: LabeledSampleSet, d_e: LabeledSampleSet) -> RiskEval:
    """Sample pseudo classification risk with proxy ``f_dagger`` on ``d_e``."""
    pos, neg = _pue_parts(f, f_dagger, d_pu, d_e)
    return (pos + neg).done()


def risk_nnpue(f: LinearScorer, f_dagger, d_pu: LabeledSampleSet, d_e: LabeledSampleSet) -> RiskEval:
    """Pseudo risk with the negative-class part clipped at zero."""
    pos, neg = _pue_parts(f, f_dagger, d_pu, d_e)
    neg, clipped = _nonneg(neg, f.dim)
    return (pos + neg).done(clipped)


def _pe_risk(f, f_dagger, d_p, d_u, d_e, class_prior):
    d_e.require("e", role="D^E")
    prior = _check_prior(class_prior)
    fd = _proxy(f_dagger, d_e.n, "D^E")
    if d_p.n == 0:
        raise DegenerateSubsetError("D^P is empty")
    pos_l, ex = _Losses(f, d_p.features), _Losses(f, d_e.features)
    if d_u is None:
        unl = ex.mean(1.0, 0)
    else:
        # joint sample: every row of D^U and D^E weighted equally
        n = d_u.n + d_e.n
        unl = _Losses(f, d_u.features).mean(1.0, 0, n) + ex.mean(1.0, 0, n)
    pos = prior * pos_l.mean(1.0, 1)
    neg = unl - prior * pos_l.mean(1.0, 0)
    hidden = fd * (1 - d_e.e)
    corr = ex.mean(hidden, 1) - ex.mean(hidden, 0)
    neg, clipped = _nonneg(neg, f.dim)
    return (pos + neg + corr).done(clipped)


def risk_adpe(f, f_dagger, d_p: LabeledSampleSet, d_e: LabeledSampleSet, class_prior: float) -> RiskEval:
    """Positive-and-exposure risk; ``d_e`` doubles as the unlabeled sample."""
    return _pe_risk(f, f_dagger, d_p, None, d_e, class_prior)


def risk_adfpue(f, f_dagger, d_p, d_u, d_e, class_prior: float) -> RiskEval:
    """As :func:`risk_adpe`, but the unlabeled mean runs over ``d_u`` and ``d_e`` jointly."""
    return _pe_risk(f, f_dagger, d_p, d_u, d_e, class_prior)


def _ads_part(f, d_sse) -> _Part:
    d_sse.require("w", "e", role="D^SSE")
    exposed = d_sse.e == 1
    if not np.any(exposed):
        raise DegenerateSubsetError("D^SSE has no exposed rows")
    L = _Losses(f, d_sse.features[exposed])
    W = d_sse.w[exposed]
    return L.mean(W, 1) + L.mean(1 - W, 0)


def _adss_part(f, f_dagger, d_sse) -> _Part:
    d_sse.require("w", "e", role="D^SSE")
    fd = _proxy(f_dagger, d_sse.n, "D^SSE")
    L = _Losses(f, d_sse.features)
    W = d_sse.w
    hidden = fd * (1 - d_sse.e)
    return L.mean(W + hidden, 1) + L.mean((1 - W) - hidden, 0)


def risk_ads(f: LinearScorer, d_sse: LabeledSampleSet) -> RiskEval:
    """Supervised log loss over the exposed rows, where ``W`` equals ``Y``."""
    return _ads_part(f, d_sse).done()


def risk_adss(f: LinearScorer, f_dagger, d_sse: LabeledSampleSet) -> RiskEval:
    return _adss_part(f, f_dagger, d_sse).done()


def risk_dadss(f: LinearScorer, f_dagger, d_sse: LabeledSampleSet, mix_weight: float) -> RiskEval:
    a = _check_mix(mix_weight)
    if a == 1.0:
        return _adss_part(f, f_dagger, d_sse).done()
    if a == 0.0:
        return _ads_part(f, d_sse).done()
    return (a * _adss_part(f, f_dagger, d_sse) + (1.0 - a) * _ads_part(f, d_sse)).done()


def risk_ad3se(f: LinearScorer, f_dagger, d_sse: LabeledSampleSet, d_pu: LabeledSampleSet) -> RiskEval:
    """Non-negative PUE risk with the observed-label means pooled over both sets."""
    d_sse.require("w", "e", role="D^SSE")
    d_pu.require("w", role="D^PU")
    fd = _proxy(f_dagger, d_sse.n, "D^SSE")
    ss, pu = _Losses(f, d_sse.features), _Losses(f, d_pu.features)
    n = d_sse.n + d_pu.n
    hidden = fd * (1 - d_sse.e)
    pos = ss.mean(d_sse.w, 1, n) + pu.mean(d_pu.w, 1, n) + ss.mean(hidden, 1)
    neg = ss.mean(1 - d_sse.w, 0, n) + pu.mean(1 - d_pu.w, 0, n) - ss.mean(hidden, 0)
    neg, clipped = _nonneg(neg, f.dim)
    return (pos + neg).done(clipped)


def risk_baseline(kind, f: LinearScorer, d_pu: LabeledSampleSet, class_prior: Optional[float] = None) -> RiskEval:
    """LOGIT (W taken as the label), uPU, or nnPU on a one-sample PU set.

    For uPU/nnPU the positive sample is the ``W = 1`` rows of ``d_pu`` and
    the unlabeled sample is all of ``d_pu``.
    """
    kind = RiskKind(kind)
    d_pu.require("w", role="D^PU")
    W = d_pu.w
    L = _Losses(f, d_pu.features)
    if kind is RiskKind.LOGIT:
        return (L.mean(W, 1) + L.mean(1 - W, 0)).done()
    if kind not in (RiskKind.UPU, RiskKind.NNPU):
        raise ValueError(f"{kind.value} is not a baseline")
    prior = _check_prior(class_prior, allow_zero=True)
    n_p = int(W.sum())
    if n_p == 0:
        raise DegenerateSubsetError("D^PU has no observed positives")
    # positive-sample means written as weighted sums over all rows
    pos = prior * L.mean(W, 1, n_p)
    neg = L.mean(1.0, 0) - prior * L.mean(W, 0, n_p)
    clipped = False
    if kind is RiskKind.NNPU:
        neg, clipped = _nonneg(neg, f.dim)
    return (pos + neg).done(clipped)


def required_roles(kind) -> tuple[str, ...]:
    """Dataset roles a kind consumes (keys of the ``datasets`` mapping)."""
    kind = RiskKind(kind)
    if kind in (RiskKind.ADPUE_ALTERNATE, RiskKind.ADPUE_DIRECT, RiskKind.NNPUE, RiskKind.PUE):
        return ("pu", "e")
    if kind is RiskKind.ADPE:
        return ("p", "e")
    if kind is RiskKind.ADFPUE:
        return ("p", "u", "e")
    if kind in (RiskKind.ADS, RiskKind.ADSS, RiskKind.DADSS):
        return ("sse",)
    if kind is RiskKind.AD3SE:
        return ("sse", "pu")
    return ("pu",)


def evaluate_risk(spec: RiskSpec, f: LinearScorer, datasets: Mapping[str, LabeledSampleSet], f_dagger=None) -> RiskEval:
    """Dispatch ``spec`` to the matching risk functional.

    ``datasets`` maps role names (``pu``, ``e``, ``p``, ``u``, ``sse``) to
    sample sets; ``f_dagger`` holds one probability per row of the role named
    in :data:`PROXY_ROLE`.
    """
    kind = spec.kind
    missing = [r for r in required_roles(kind) if r not in datasets]
    if missing:
        raise KeyError(f"{kind.value} needs dataset roles {missing}")
    d = datasets
    if spec.uses_proxy and f_dagger is None:
        raise ParameterError(f"{kind.value} needs f_dagger")
    if kind in (RiskKind.ADPUE_ALTERNATE, RiskKind.ADPUE_DIRECT, RiskKind.NNPUE):
        return risk_nnpue(f, f_dagger, d["pu"], d["e"])
    if kind is RiskKind.PUE:
        return risk_pseudo(f, f_dagger, d["pu"], d["e"])
    if kind is RiskKind.ADPE:
        return risk_adpe(f, f_dagger, d["p"], d["e"], spec.class_prior)
    if kind is RiskKind.ADFPUE:
        return risk_adfpue(f, f_dagger, d["p"], d["u"], d["e"], spec.class_prior)
    if kind is RiskKind.ADS:
        return risk_ads(f, d["sse"])
    if kind is RiskKind.ADSS:
        return risk_adss(f, f_dagger, d["sse"])
    if kind is RiskKind.DADSS:
        return risk_dadss(f, f_dagger, d["sse"], spec.mix_weight)
    if kind is RiskKind.AD3SE:
        return risk_ad3se(f, f_dagger, d["sse"], d["pu"])
    return risk_baseline(kind, f, d["pu"], spec.class_prior)
