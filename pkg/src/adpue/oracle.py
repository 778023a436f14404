"""Exact population computations on finite feature spaces.

These are the ground truth that the sample-level trainers are checked
against: the pointwise minimiser of the pseudo risk, the fixed-point
recursion of alternate learning, the identification identity and the
Bayes classifier.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import EPS, LabeledSampleSet, LinearScorer, log_loss


class BoundaryWarning(UserWarning):
    """Stationary point of the pointwise objective left the open interval."""


@dataclass(frozen=True, eq=False)
class DiscretePopulation:
    """A feature distribution on finitely many points with exact conditionals.

    Labels and exposure are independent given the point, so
    ``q(w=1|x) = p(y=1|x) * theta(e=1|x)``.
    """

    points: np.ndarray
    zeta: np.ndarray
    p_y1: np.ndarray
    theta_e1: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        k = pts.shape[0]
        arrs = {}
        for name in ("zeta", "p_y1", "theta_e1"):
            a = np.array(getattr(self, name), dtype=float).reshape(-1)
            if a.shape[0] != k:
                raise ValueError(f"{name} has {a.shape[0]} entries for {k} points")
            a.setflags(write=False)
            arrs[name] = a
        pts.setflags(write=False)
        if abs(arrs["zeta"].sum() - 1.0) > 1e-12 or np.any(arrs["zeta"] < 0):
            raise ValueError("zeta must be a probability vector")
        if np.any((arrs["p_y1"] < 0) | (arrs["p_y1"] > 1)):
            raise ValueError("p_y1 must lie in [0, 1]")
        if np.any((arrs["theta_e1"] <= 0) | (arrs["theta_e1"] > 1)):
            raise ValueError("theta_e1 must lie in (0, 1]")
        object.__setattr__(self, "points", pts)
        for name, a in arrs.items():
            object.__setattr__(self, name, a)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def q_w1_all(self) -> np.ndarray:
        return self.p_y1 * self.theta_e1

    @property
    def theta_e0(self) -> np.ndarray:
        return 1.0 - self.theta_e1

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "DiscretePopulation":
        """Build from a config table with keys ``points``, ``zeta``, ``p_y1``, ``theta_e1``."""
        missing = {"points", "zeta", "p_y1", "theta_e1"} - set(cfg)
        if missing:
            raise ValueError(f"population config missing {sorted(missing)}")
        return cls(cfg["points"], cfg["zeta"], cfg["p_y1"], cfg["theta_e1"])


def q_w1(pop: DiscretePopulation, point_index: int) -> float:
    if not 0 <= point_index < pop.size:
        raise IndexError(f"point index {point_index} out of range for {pop.size} points")
    return float(pop.p_y1[point_index] * pop.theta_e1[point_index])


def identification_check(pop: DiscretePopulation) -> float:
    """Max residual of ``p(y=1|x) = q(w=1|x) + p(y=1|x) * theta(e=0|x)``."""
    rhs = pop.q_w1_all + pop.p_y1 * (1.0 - pop.theta_e1)
    return float(np.max(np.abs(pop.p_y1 - rhs)))


def pointwise_objective(beta, weight_pos: float):
    """``a * loss(beta, 1) + (1 - a) * loss(beta, 0)`` with ``a = weight_pos``."""
    beta = np.asarray(beta, dtype=float)
    return weight_pos * log_loss(beta, 1) + (1.0 - weight_pos) * log_loss(beta, 0)


def lemma_minimizer(q1: float, f_dagger: float, theta_e0: float) -> float:
    """Pointwise minimiser ``q1 + f_dagger * theta_e0`` of the pseudo risk.

    Values outside ``(EPS, 1 - EPS)`` are clamped with a :class:`BoundaryWarning`.
    """
    for name, v in (("q1", q1), ("f_dagger", f_dagger), ("theta_e0", theta_e0)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    beta = q1 + f_dagger * theta_e0
    if not EPS < beta < 1.0 - EPS:
        warnings.warn(f"stationary point {beta} outside the open unit interval; clamped", BoundaryWarning)
        beta = min(max(beta, EPS), 1.0 - EPS)
    return float(beta)


def grid_minimizer(weight_pos: float, step: float = 1e-6, coarse: float = 1e-3) -> float:
    """Grid argmin of :func:`pointwise_objective` at resolution ``step``.

    A coarse pass brackets the minimum; the fine pass scans every grid point
    at ``step`` spacing inside the bracket.  For ``weight_pos`` in ``[0, 1]``
    the objective is convex in ``beta``, so the bracket always contains the
    global grid minimum.
    """
    lo, hi = EPS, 1.0 - EPS
    g = np.arange(coarse, 1.0, coarse)
    g = g[(g >= lo) & (g <= hi)]
    b0 = g[np.argmin(pointwise_objective(g, weight_pos))]
    start = max(lo, b0 - 2 * coarse)
    stop = min(hi, b0 + 2 * coarse)
    fine = np.arange(start, stop + step / 2, step)
    return float(fine[np.argmin(pointwise_objective(fine, weight_pos))])


def fixed_point(q1: float, theta_e0: float) -> float:
    """Limit ``q1 / (1 - theta_e0)`` of the alternate-learning recursion."""
    if theta_e0 >= 1.0:
        raise ValueError("theta_e0 = 1: no exposure, recursion diverges")
    return q1 / (1.0 - theta_e0)


def theorem_recursion(q1: float, theta_e0: float, f0: float, T: int) -> list[float]:
    """``[f_0, ..., f_T]`` with ``f_t = q1 + f_{t-1} * theta_e0``."""
    if not 0.0 <= theta_e0 < 1.0:
        raise ValueError("theta_e0 must lie in [0, 1); theta_e0 = 1 diverges")
    if T < 0:
        raise ValueError("T must be non-negative")
    seq = [float(f0)]
    for _ in range(T):
        seq.append(q1 + seq[-1] * theta_e0)
    return seq


def theorem_closed_form(q1: float, theta_e0: float, f0: float, t: int) -> float:
    """``q1 * sum_{s<t} theta_e0**s + f0 * theta_e0**t`` as a geometric sum."""
    if theta_e0 == 0.0:
        return float(f0) if t == 0 else float(q1)
    return q1 * (1.0 - theta_e0**t) / (1.0 - theta_e0) + f0 * theta_e0**t


def bayes_accuracy(pop: DiscretePopulation) -> float:
    return float(pop.zeta @ np.maximum(pop.p_y1, 1.0 - pop.p_y1))


def ideal_risk(pop: DiscretePopulation, f: LinearScorer) -> float:
    """Exact ``E[p(y=1|x) loss(f,1) + p(y=0|x) loss(f,0)]`` over the population."""
    p = f.predict_proba(pop.points)
    return float(pop.zeta @ (pop.p_y1 * log_loss(p, 1) + (1.0 - pop.p_y1) * log_loss(p, 0)))


def sample_from(pop: DiscretePopulation, n: int, seed) -> LabeledSampleSet:
    """Draw ``n`` i.i.d. rows with ``y_oracle``, ``e`` and ``w = e * y`` columns."""
    if n <= 0:
        raise ValueError("cannot draw an empty sample")
    rng = np.random.default_rng(seed)
    idx = rng.choice(pop.size, size=n, p=pop.zeta)
    y = (rng.random(n) < pop.p_y1[idx]).astype(np.int8)
    e = (rng.random(n) < pop.theta_e1[idx]).astype(np.int8)
    return LabeledSampleSet(pop.points[idx], w=e * y, e=e, y_oracle=y)


def lemma_grid_residuals(n_triples: int = 1000, seed: int = 0, step: float = 1e-6) -> np.ndarray:
    """|closed form - grid argmin| for random triples with interior stationary points."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_triples:
        theta_e0 = rng.uniform(0.0, 1.0)
        p = rng.uniform(0.0, 1.0)
        q1 = p * (1.0 - theta_e0)
        fd = rng.uniform(0.0, 1.0)
        a = q1 + fd * theta_e0
        if not 0.01 < a < 0.99:
            continue
        out.append(abs(lemma_minimizer(q1, fd, theta_e0) - grid_minimizer(a, step=step)))
    return np.asarray(out)


def recursion_residuals(n_instances: int = 1000, seed: int = 0, T: int = 50) -> np.ndarray:
    """Max over t of ``| |f_t - limit| - |f_0 - limit| * theta_e0**t |`` per instance."""
    rng = np.random.default_rng(seed)
    res = np.empty(n_instances)
    for i in range(n_instances):
        theta_e0 = rng.uniform(0.0, 0.99)
        q1 = rng.uniform(0.0, 1.0) * (1.0 - theta_e0)
        f0 = rng.uniform(0.0, 1.0)
        seq = np.asarray(theorem_recursion(q1, theta_e0, f0, T))
        lim = fixed_point(q1, theta_e0)
        pred = abs(f0 - lim) * theta_e0 ** np.arange(T + 1)
        res[i] = np.max(np.abs(np.abs(seq - lim) - pred))
    return res


def random_population(rng: np.random.Generator, k: int, dim: int = 1) -> DiscretePopulation:
    zeta = rng.dirichlet(np.ones(k))
    zeta = zeta / zeta.sum()
    return DiscretePopulation(
        points=rng.uniform(0.0, 1.0, size=(k, dim)),
        zeta=zeta,
        p_y1=rng.uniform(0.0, 1.0, size=k),
        theta_e1=rng.uniform(0.05, 1.0, size=k),
    )


def two_point_population(p_y1: float = 0.6, theta_e1: float = 0.5) -> DiscretePopulation:
    """Equal-mass population on ``x = 0`` and ``x = 1`` with shared conditionals."""
    return DiscretePopulation(
        points=np.array([[0.0], [1.0]]),
        zeta=np.array([0.5, 0.5]),
        p_y1=np.array([p_y1, p_y1]),
        theta_e1=np.array([theta_e1, theta_e1]),
    )


__all__: Sequence[str] = [
    "BoundaryWarning",
    "DiscretePopulation",
    "bayes_accuracy",
    "fixed_point",
    "grid_minimizer",
    "identification_check",
    "ideal_risk",
    "lemma_grid_residuals",
    "lemma_minimizer",
    "pointwise_objective",
    "q_w1",
    "random_population",
    "recursion_residuals",
    "sample_from",
    "theorem_closed_form",
    "theorem_recursion",
    "two_point_population",
]
