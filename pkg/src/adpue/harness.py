"""Experiment orchestration: configs, repeated trials, metrics and reports.

A run loads one dataset (a sparse file or a finite synthetic population),
then for every trial synthesises the observed columns, splits them into the
problem's roles, trains each configured method and scores it on the held-out
test rows (inductive) and on the pool rows the method saw unlabeled
(transductive).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .core import ColumnMissingError, LabeledSampleSet, LinearScorer
from .datagen import (
    KNOWN_DATASETS,
    ExposureSpec,
    Problem,
    SplitSpec,
    calibrate_c,
    parse_sparse_dataset,
    resolve_dataset,
    split_for_problem,
    synthesize_observations,
)
from .oracle import DiscretePopulation, sample_from
from .risks import NEEDS_PRIOR, RiskKind, RiskSpec, required_roles
from .trainers import TRAINERS, TrainConfig, train_variant

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

log = logging.getLogger(__name__)

MODES = ("inductive", "transductive")
METRICS = ("accuracy", "precision", "recall")
REPORT_HEADER = ("method",) + ("trial", "mode") + METRICS
TRACE_HEADER = ("method", "trial", "epoch", "risk", "clipped", "accuracy")
MAJORITY = "MAJORITY"
MAX_FAILED_FRACTION = 0.10

#: Which roles a problem setting produces; used to reject methods that cannot run on it.
PROBLEM_ROLES = {
    Problem.PUE: {"pu", "e"},
    Problem.SE3: {"pu", "sse"},
    Problem.SSE: {"sse"},
    Problem.PE: {"p", "e"},
    Problem.FPUE: {"p", "u", "e"},
}


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class EvaluationError(ValueError):
    """Evaluation requested on data without oracle labels."""


class RunFailedError(RuntimeError):
    """Too many trials failed for the run to count."""


# -- metrics -------------------------------------------------------------------


@dataclass(frozen=True)
class Scores:
    accuracy: float
    precision: float
    recall: float
    zero_division: bool = False  # precision or recall fell back to 1.0


def _scores(pred: np.ndarray, y: np.ndarray) -> Scores:
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    accuracy = float(np.mean(pred == y)) if y.size else 1.0
    return Scores(accuracy, precision, recall, zero_division=(tp + fp == 0) or (tp + fn == 0))


def transductive_rows(pool: LabeledSampleSet, problem) -> LabeledSampleSet:
    """Pool rows the problem leaves unlabeled: ``W = 0`` for PU-type, ``E = 0`` for SSE-type."""
    problem = Problem(problem)
    col = "e" if problem in (Problem.SSE, Problem.SE3) else "w"
    pool.require(col, role="training pool")
    return pool.take(getattr(pool, col) == 0)


def evaluate(model: LinearScorer, data: LabeledSampleSet, mode: str = "inductive", problem=None) -> Scores:
    """Accuracy, precision and recall of ``model`` against ``y_oracle``.

    In ``transductive`` mode ``data`` is the training pool and ``problem``
    selects its unlabeled rows.  A zero denominator makes precision or
    recall 1.0 and sets ``zero_division``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    try:
        data.require("y_oracle", role="evaluation data")
    except ColumnMissingError as exc:
        raise EvaluationError(str(exc)) from None
    if mode == "transductive":
        if problem is None:
            raise ValueError("transductive evaluation needs the problem setting")
        data = transductive_rows(data, problem)
    return _scores(model.predict(data.features) if data.n else np.zeros(0, int), data.y_oracle)


def majority_scores(data: LabeledSampleSet) -> Scores:
    """Constant classifier predicting the evaluated set's majority label."""
    y = data.y_oracle
    label = int(2 * int(y.sum()) >= y.size) if y.size else 1
    return _scores(np.full(y.size, label), y)


# -- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class MethodSpec:
    """A method entry: risk kind plus optional hyperparameters.

    ``class_prior`` left unset on a kind that needs one is filled in per
    trial from the generating run (the mean of ``w``).
    """

    kind: RiskKind
    class_prior: Optional[float] = None
    mix_weight: Optional[float] = None
    name: Optional[str] = None
    trainer: Optional[str] = None  # "alternate" / "direct" for proxy kinds

    def __post_init__(self):
        object.__setattr__(self, "kind", RiskKind(self.kind))
        if self.trainer is not None and self.trainer not in TRAINERS:
            raise ConfigError(f"trainer must be one of {TRAINERS}")
        # validate eagerly with a placeholder prior
        self.risk_spec(0.5)

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    def risk_spec(self, class_prior: float) -> RiskSpec:
        prior = None
        if self.kind in NEEDS_PRIOR:
            prior = self.class_prior if self.class_prior is not None else class_prior
        elif self.class_prior is not None:
            raise ConfigError(f"{self.kind.value} does not take class_prior")
        return RiskSpec(self.kind, class_prior=prior, mix_weight=self.mix_weight)

    @classmethod
    def parse(cls, entry) -> "MethodSpec":
        if isinstance(entry, str):
            return cls(entry)
        if isinstance(entry, Mapping):
            unknown = set(entry) - {"kind", "class_prior", "mix_weight", "name", "trainer"}
            if unknown or "kind" not in entry:
                raise ConfigError(f"bad method entry {dict(entry)!r}")
            return cls(**entry)
        raise ConfigError(f"bad method entry {entry!r}")


@dataclass(frozen=True)
class PopulationSource:
    """A finite population to sample ``n`` rows from on every trial."""

    population: DiscretePopulation
    n: int


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Any  # dataset name / path, or a PopulationSource
    problem: Problem
    methods: tuple
    split: SplitSpec = SplitSpec()
    exposure: ExposureSpec = ExposureSpec()
    train: TrainConfig = TrainConfig()
    trials: int = 100
    seed: int = 0
    output: Optional[str] = None
    emit_trace: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "problem", Problem(self.problem))
        methods = tuple(m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in self.methods)
        if not methods:
            raise ConfigError("method list is empty")
        labels = [m.label for m in methods]
        if len(set(labels)) != len(labels) or MAJORITY in labels:
            raise ConfigError(f"method labels must be unique and not {MAJORITY!r}: {labels}")
        available = PROBLEM_ROLES[self.problem]
        for m in methods:
            need = set(required_roles(m.kind))
            if not need <= available:
                raise ConfigError(f"{m.label} needs roles {sorted(need)}; {self.problem.value} provides {sorted(available)}")
        object.__setattr__(self, "methods", methods)
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    def describe(self) -> dict:
        """JSON-ready echo of the configuration (recorded in report metadata)."""
        if isinstance(self.dataset, PopulationSource):
            pop = self.dataset.population
            dataset = {
                "points": pop.points.tolist(),
                "zeta": pop.zeta.tolist(),
                "p_y1": pop.p_y1.tolist(),
                "theta_e1": pop.theta_e1.tolist(),
                "n": self.dataset.n,
            }
        else:
            dataset = str(self.dataset)
        return {
            "dataset": dataset,
            "problem": self.problem.value,
            "methods": [{k: v for k, v in asdict(m).items() if v is not None} for m in self.methods],
            "split": asdict(self.split),
            "exposure": asdict(self.exposure),
            "train": asdict(self.train),
            "trials": self.trials,
            "seed": self.seed,
        }


def _section(raw: Mapping, name: str, cls):
    table = raw.get(name, {})
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def config_from_mapping(raw: Mapping, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Build a config from the parsed TOML document (see README for the schema)."""
    exp = raw.get("experiment")
    if not isinstance(exp, Mapping):
        raise ConfigError("missing [experiment] table")
    known = {"dataset", "problem", "methods", "trials", "seed", "output", "emit_trace", "workers"}
    unknown = set(exp) - known
    if unknown:
        raise ConfigError(f"unknown [experiment] keys {sorted(unknown)}")
    try:
        if "population" in raw:
            pop_raw = dict(raw["population"])
            n = pop_raw.pop("n", None)
            if n is None:
                raise ConfigError("[population] needs n (rows per trial)")
            dataset = PopulationSource(DiscretePopulation.from_mapping(pop_raw), int(n))
            if "dataset" in exp:
                raise ConfigError("give either experiment.dataset or [population], not both")
        else:
            if "dataset" not in exp:
                raise ConfigError("experiment.dataset is required")
            dataset = exp["dataset"]
            p = Path(dataset)
            if base_dir is not None and not p.is_absolute() and (base_dir / p).exists():
                dataset = str(base_dir / p)
        split = _section(raw, "split", SplitSpec)
        if split.pool_size is None and isinstance(dataset, str):
            info = KNOWN_DATASETS.get(Path(dataset).name)
            if info is not None and info.pool_size is not None:
                split = replace(split, pool_size=info.pool_size)
        exposure_raw = dict(raw.get("exposure", {}))
        for k in ("g1_indices", "g2_indices"):
            if k in exposure_raw:
                exposure_raw[k] = tuple(exposure_raw[k])
        return ExperimentConfig(
            dataset=dataset,
            problem=exp.get("problem", "PUE"),
            methods=tuple(exp.get("methods", ())),
            split=split,
            exposure=ExposureSpec(**exposure_raw),
            train=_section(raw, "train", TrainConfig),
            trials=exp.get("trials", 100),
            seed=exp.get("seed", 0),
            output=exp.get("output"),
            emit_trace=bool(exp.get("emit_trace", False)),
            workers=exp.get("workers", 1),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Read a TOML experiment file; relative dataset paths resolve against its directory."""
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_mapping(raw, base_dir=path.parent)


# -- report ----------------------------------------------------------------------


@dataclass
class EvalReport:
    """Per (method, trial, mode) metric rows plus run metadata.

    ``rows`` are dicts with keys ``method, trial, mode, accuracy, precision,
    recall, zero_division``; ``traces`` maps ``(method, trial)`` to a
    :class:`TrainTrace` when traces were requested.
    """

    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    clipped: dict = field(default_factory=dict)  # method -> trials whose descent ever clipped
    meta: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)

    def methods(self) -> list:
        seen = []
        for r in self.rows:
            if r["method"] not in seen:
                seen.append(r["method"])
        return seen

    def values(self, method: str, mode: str, metric: str) -> np.ndarray:
        return np.array([r[metric] for r in self.rows if r["method"] == method and r["mode"] == mode])

    def mean(self, method: str, mode: str = "inductive", metric: str = "accuracy") -> float:
        v = self.values(method, mode, metric)
        return float(v.mean()) if v.size else math.nan

    def aggregate(self) -> list:
        """Mean and standard deviation (ddof=1; 0 for a single trial) per method and mode."""
        out = []
        for method in self.methods():
            for mode in MODES:
                vals = {m: self.values(method, mode, m) for m in METRICS}
                if not vals["accuracy"].size:
                    continue
                k = vals["accuracy"].size
                out.append({"method": method, "statistic": "mean", "mode": mode, "count": k,
                            **{m: float(np.mean(v)) for m, v in vals.items()}})
                out.append({"method": method, "statistic": "std", "mode": mode, "count": k,
                            **{m: (float(np.std(v, ddof=1)) if k > 1 else 0.0) for m, v in vals.items()}})
        return out

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "aggregate": self.aggregate(),
            "failures": self.failures,
            "clipped": self.clipped,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        return cls(rows=list(d["rows"]), failures=list(d["failures"]), clipped=dict(d["clipped"]), meta=dict(d["meta"]))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_csv(report: EvalReport) -> str:
    """Metric rows, then a blank line and an ``# aggregate`` block."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(REPORT_HEADER)
    for r in report.rows:
        wr.writerow([_fmt(r[k]) for k in REPORT_HEADER])
    agg = report.aggregate()
    if agg:
        buf.write("\n# aggregate\n")
        wr.writerow(("method", "statistic", "mode") + METRICS + ("count",))
        for a in agg:
            wr.writerow([_fmt(a[k]) for k in ("method", "statistic", "mode") + METRICS + ("count",)])
    return buf.getvalue()


def report_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def trace_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(TRACE_HEADER)
    for (method, trial), tr in report.traces.items():
        for epoch, _round, risk, clipped, acc in tr.rows():
            wr.writerow([method, trial, epoch, repr(float(risk)), int(clipped), repr(float(acc))])
    return buf.getvalue()


def emit_report(report: EvalReport, path, fmt: str = "csv", trace_path=None) -> Path:
    """Write the report as ``csv`` or ``json``; optionally the per-epoch trace CSV."""
    path = Path(path)
    if fmt == "csv":
        text = report_csv(report)
    elif fmt == "json":
        text = report_json(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path.write_text(text, encoding="utf-8")
    if trace_path is not None:
        Path(trace_path).write_text(trace_csv(report), encoding="utf-8")
    return path


# -- running -----------------------------------------------------------------------


@dataclass(frozen=True)
class _Prepared:
    """Trial-invariant inputs: the dataset (or population) and the calibrated C."""

    data: Optional[LabeledSampleSet]
    population: Optional[PopulationSource]
    c: Optional[float]


def _prepare(config: ExperimentConfig) -> _Prepared:
    if isinstance(config.dataset, PopulationSource):
        return _Prepared(None, config.dataset, None)
    path = resolve_dataset(config.dataset)
    info = KNOWN_DATASETS.get(path.name)
    data = parse_sparse_dataset(path, dim=info.dim if info else None)
    return _Prepared(data, None, calibrate_c(data, config.exposure))


def _observations(config: ExperimentConfig, prep: _Prepared, seed: int) -> LabeledSampleSet:
    if prep.population is not None:
        # the population carries its own exposure table
        return sample_from(prep.population.population, prep.population.n, seed)
    return synthesize_observations(prep.data, config.exposure, prep.c, seed)


def _run_trial(config: ExperimentConfig, prep: _Prepared, trial: int) -> dict:
    seed = config.seed + trial
    obs = _observations(config, prep, seed)
    split = split_for_problem(obs, config.problem, replace(config.split, seed=seed))
    rows, clipped, traces = [], [], {}
    targets = {"inductive": (split.test, None), "transductive": (split.pool, config.problem)}
    for method in config.methods:
        spec = method.risk_spec(split.class_prior)
        model, trace = train_variant(spec, split.roles, config.train, method.trainer)
        for mode, (data, problem) in targets.items():
            s = evaluate(model, data, mode, problem)
            rows.append(_row(method.label, trial, mode, s))
        if trace.ever_clipped:
            clipped.append(method.label)
        if config.emit_trace:
            traces[(method.label, trial)] = trace
    for mode, (data, problem) in targets.items():
        ev = data if problem is None else transductive_rows(data, problem)
        rows.append(_row(MAJORITY, trial, mode, majority_scores(ev)))
    return {"rows": rows, "clipped": clipped, "traces": traces}


def _row(method: str, trial: int, mode: str, s: Scores) -> dict:
    return {
        "method": method,
        "trial": trial,
        "mode": mode,
        "accuracy": s.accuracy,
        "precision": s.precision,
        "recall": s.recall,
        "zero_division": s.zero_division,
    }


def _guarded_trial(config, prep, trial):
    try:
        return trial, _run_trial(config, prep, trial), None
    except Exception as exc:  # recorded against the trial, judged in aggregate
        return trial, None, f"{type(exc).__name__}: {exc}"


def run_experiment(config: ExperimentConfig) -> EvalReport:
    """Run every trial and collect one :class:`EvalReport`.

    Trial ``i`` uses seed ``config.seed + i`` for both observation synthesis
    and splitting.  With ``workers > 1`` trials run in worker processes;
    results are collected in trial order, so output does not depend on
    scheduling.
    """
    prep = _prepare(config)
    trials = range(config.trials)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_guarded_trial, [config] * len(trials), [prep] * len(trials), trials))
    else:
        results = [_guarded_trial(config, prep, t) for t in trials]

    report = EvalReport(clipped={m.label: 0 for m in config.methods})
    for trial, res, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            log.warning("trial %d failed: %s", trial, err)
            report.failures.append({"trial": trial, "error": err})
            continue
        report.rows += res["rows"]
        for m in res["clipped"]:
            report.clipped[m] += 1
        report.traces.update(res["traces"])
    report.meta = {
        "config": config.describe(),
        "exposure_c": prep.c,
        "features": "min-max scaled to [0, 1]" if prep.data is not None else "population points as given",
        "zero_division_convention": 1.0,
    }
    if len(report.failures) > MAX_FAILED_FRACTION * config.trials:
        raise RunFailedError(f"{len(report.failures)} of {config.trials} trials failed; first: {report.failures[0]['error']}")
    return report


def write_outputs(report: EvalReport, config: ExperimentConfig, out=None) -> list:
    """Write ``<out>.csv``, ``<out>.json`` and (if traced) ``<out>.trace.csv``."""
    stem = out or config.output
    if stem is None:
        return []
    stem = Path(stem)
    if stem.suffix in (".csv", ".json"):
        stem = stem.with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    written = [emit_report(report, stem.with_name(stem.name + ".csv"), "csv"),
               emit_report(report, stem.with_name(stem.name + ".json"), "json")]
    if config.emit_trace:
        tp = stem.with_name(stem.name + ".trace.csv")
        tp.write_text(trace_csv(report), encoding="utf-8")
        written.append(tp)
    return written


__all__: Sequence[str] = [
    "ConfigError",
    "EvalReport",
    "EvaluationError",
    "ExperimentConfig",
    "MethodSpec",
    "PopulationSource",
    "RunFailedError",
    "Scores",
    "config_from_mapping",
    "emit_report",
    "evaluate",
    "load_config",
    "majority_scores",
    "report_csv",
    "report_json",
    "run_experiment",
    "trace_csv",
    "transductive_rows",
    "write_outputs",
]
