"""Full-batch gradient descent over the risk functionals.

Three entry points share one safeguarded descent loop:

* :func:`minimize` -- plain minimisation with a frozen proxy,
* :func:`train_adpue_alternate` -- rounds of minimisation, each round
  freezing the previous round's predictions as the proxy,
* :func:`train_adpue_direct` -- a single run whose proxy is refreshed from
  the current scorer at every epoch (stop-gradient through the proxy).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .core import EPS, LabeledSampleSet, LinearScorer, ParameterError, classify
from .risks import PROXY_ROLE, RiskEval, RiskKind, RiskSpec, evaluate_risk

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 200
    rounds_T: int = 10
    init_guess: float = 0.5
    seed: int = 0
    l2_penalty: float = 0.0
    max_halvings: int = 30

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ParameterError("epochs must be a positive integer")
        if int(self.rounds_T) != self.rounds_T or self.rounds_T < 1:
            raise ParameterError("rounds_T must be a positive integer")
        if not EPS < self.init_guess < 1.0 - EPS:
            raise ParameterError("init_guess must lie strictly inside (0, 1)")
        if self.l2_penalty < 0:
            raise ParameterError("l2_penalty must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")


@dataclass
class TrainTrace:
    """Per-epoch risk, clip flag and (when oracle labels exist) train accuracy."""

    risk: list = field(default_factory=list)
    clipped: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    round: list = field(default_factory=list)
    initial_risk: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    stalled_at: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.risk)

    def extend(self, other: "TrainTrace", round_index: int) -> None:
        self.risk += other.risk
        self.clipped += other.clipped
        self.accuracy += other.accuracy
        self.round += [round_index] * len(other.risk)
        self.initial_risk += other.initial_risk
        self.snapshots += other.snapshots
        self.stalled_at += other.stalled_at

    @property
    def ever_clipped(self) -> bool:
        return any(self.clipped)

    def rows(self):
        """``(epoch, round, risk, clipped, accuracy)`` tuples, epochs 1-based."""
        for i, (r, c, a, t) in enumerate(zip(self.risk, self.clipped, self.accuracy, self.round)):
            yield i + 1, t, r, c, a


def _oracle_view(datasets: Mapping[str, LabeledSampleSet]):
    parts = [d for d in datasets.values() if d.has("y_oracle") and d.n]
    if not parts:
        return None
    return np.vstack([d.features for d in parts]), np.concatenate([d.y_oracle for d in parts])


def _descend(
    objective: Callable[[LinearScorer], RiskEval],
    start: LinearScorer,
    config: TrainConfig,
    oracle=None,
    refresh: Optional[Callable[[LinearScorer], Callable[[LinearScorer], RiskEval]]] = None,
) -> tuple[LinearScorer, TrainTrace]:
    """Safeguarded full-batch descent.

    Each epoch takes one gradient step; if the step raises the objective the
    rate is halved and the step retried, at most ``config.max_halvings``
    times, after which descent stops and the remaining epochs repeat the last
    state.  ``refresh`` rebuilds the objective from the current scorer at
    the start of each epoch (used to re-freeze a self-referential proxy).
    """
    lam = config.l2_penalty

    def total(obj, theta):
        ev = obj(LinearScorer.from_params(theta))
        if lam:
            w = theta[:-1]
            grad = ev.gradient + lam * np.append(w, 0.0)
            return RiskEval(ev.value + 0.5 * lam * float(w @ w), grad, ev.clipped)
        return ev

    def accuracy(theta):
        if oracle is None:
            return float("nan")
        X, y = oracle
        return float(np.mean(classify(LinearScorer.from_params(theta).predict_proba(X)) == y))

    trace = TrainTrace()
    theta = start.params
    lr = config.learning_rate
    obj = objective if refresh is None else refresh(start)
    ev = total(obj, theta)
    trace.initial_risk.append(ev.value)
    stalled = False
    for epoch in range(config.epochs):
        if stalled:
            trace.risk.append(ev.value)
            trace.clipped.append(ev.clipped)
            trace.accuracy.append(trace.accuracy[-1] if trace.accuracy else accuracy(theta))
            continue
        if refresh is not None and epoch > 0:
            obj = refresh(LinearScorer.from_params(theta))
            ev = total(obj, theta)
        for _ in range(config.max_halvings + 1):
            cand = theta - lr * ev.gradient
            ev_c = total(obj, cand)
            if np.isfinite(ev_c.value) and ev_c.value <= ev.value:
                theta, ev = cand, ev_c
                break
            lr *= 0.5
        else:
            stalled = True
            trace.stalled_at.append(epoch + 1)
            log.debug("descent stalled at epoch %d (lr=%g)", epoch + 1, lr)
        trace.risk.append(ev.value)
        trace.clipped.append(ev.clipped)
        trace.accuracy.append(accuracy(theta))
    final = LinearScorer.from_params(theta)
    trace.snapshots.append(final)
    trace.round = [1] * len(trace.risk)
    return final, trace


def _dim(datasets: Mapping[str, LabeledSampleSet]) -> int:
    dims = {d.dim for d in datasets.values()}
    if len(dims) != 1:
        raise ValueError(f"datasets disagree on dimension: {sorted(dims)}")
    return dims.pop()


def minimize(
    spec: RiskSpec,
    datasets: Mapping[str, LabeledSampleSet],
    f_dagger=None,
    config: TrainConfig = TrainConfig(),
    warm_start: Optional[LinearScorer] = None,
) -> tuple[LinearScorer, TrainTrace]:
    """Minimise ``spec``'s risk with ``f_dagger`` held fixed."""
    start = warm_start if warm_start is not None else LinearScorer.zeros(_dim(datasets))
    evaluate_risk(spec, start, datasets, f_dagger)  # surface column/parameter errors up front
    return _descend(lambda f: evaluate_risk(spec, f, datasets, f_dagger), start, config, _oracle_view(datasets))


def _proxy_rows(spec: RiskSpec, datasets) -> np.ndarray:
    return datasets[PROXY_ROLE[spec.kind]].features


def alternate(
    spec: RiskSpec,
    datasets: Mapping[str, LabeledSampleSet],
    config: TrainConfig = TrainConfig(),
    warm_start: Optional[LinearScorer] = None,
) -> tuple[LinearScorer, TrainTrace]:
    """Alternate learning: round ``t`` minimises with the round ``t-1`` scorer as proxy."""
    if not spec.uses_proxy:
        raise ValueError(f"{spec.label} has no proxy term")
    rows = _proxy_rows(spec, datasets)
    f_dagger = np.full(rows.shape[0], config.init_guess)
    scorer = warm_start
    trace = TrainTrace()
    for t in range(1, config.rounds_T + 1):
        scorer, tr = minimize(spec, datasets, f_dagger, config, warm_start=scorer)
        trace.extend(tr, t)
        f_dagger = scorer.predict_proba(rows)
    return scorer, trace


def direct(
    spec: RiskSpec,
    datasets: Mapping[str, LabeledSampleSet],
    config: TrainConfig = TrainConfig(),
    warm_start: Optional[LinearScorer] = None,
) -> tuple[LinearScorer, TrainTrace]:
    """Self-referential minimisation: the proxy is the current scorer, refrozen every epoch."""
    if not spec.uses_proxy:
        raise ValueError(f"{spec.label} has no proxy term")
    rows = _proxy_rows(spec, datasets)
    start = warm_start if warm_start is not None else LinearScorer.zeros(_dim(datasets))
    evaluate_risk(spec, start, datasets, start.predict_proba(rows))

    def refresh(current: LinearScorer):
        fd = current.predict_proba(rows)
        return lambda f: evaluate_risk(spec, f, datasets, fd)

    return _descend(None, start, config, _oracle_view(datasets), refresh=refresh)


def train_adpue_alternate(d_pu, d_e, config: TrainConfig = TrainConfig()):
    """Algorithm-1 style ADPUE learning with the non-negative PUE risk."""
    return alternate(RiskSpec(RiskKind.ADPUE_ALTERNATE), {"pu": d_pu, "e": d_e}, config)


def train_adpue_direct(d_pu, d_e, config: TrainConfig = TrainConfig()):
    """ADPUE learning by direct minimisation of the self-referential risk."""
    return direct(RiskSpec(RiskKind.ADPUE_DIRECT), {"pu": d_pu, "e": d_e}, config)


TRAINERS = ("minimize", "alternate", "direct")


def train_variant(
    spec: RiskSpec,
    datasets: Mapping[str, LabeledSampleSet],
    config: TrainConfig = TrainConfig(),
    trainer: Optional[str] = None,
) -> tuple[LinearScorer, TrainTrace]:
    """Train any risk kind with the machinery that fits it.

    By default ``ADPUE_DIRECT`` uses direct minimisation, the other proxy
    kinds the alternate loop, and proxy-free kinds a single
    :func:`minimize`.  ``trainer`` overrides the choice for proxy kinds
    other than the two ADPUE kinds, whose trainer is part of their name.
    """
    if trainer is not None and trainer not in TRAINERS:
        raise ParameterError(f"trainer must be one of {TRAINERS}")
    if not spec.uses_proxy:
        if trainer not in (None, "minimize"):
            raise ParameterError(f"{spec.label} has no proxy term; only 'minimize' applies")
        return minimize(spec, datasets, None, config)
    if spec.kind is RiskKind.ADPUE_DIRECT:
        trainer = "direct"
    elif spec.kind is RiskKind.ADPUE_ALTERNATE or trainer is None:
        trainer = "alternate"
    if trainer == "minimize":
        raise ParameterError(f"{spec.label} needs a proxy; use 'alternate' or 'direct'")
    return (direct if trainer == "direct" else alternate)(spec, datasets, config)
