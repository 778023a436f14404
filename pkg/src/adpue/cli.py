"""Command-line entry point: ``adpue run|oracle|calibrate|parse-check``.

Exit codes: 0 success, 1 runtime or check failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import oracle
from .datagen import KNOWN_DATASETS, ExposureSpec, calibrate_c, exposure_probabilities, parse_sparse_dataset, resolve_dataset
from .harness import ConfigError, RunFailedError, load_config, run_experiment, write_outputs

LEMMA_TOLERANCE = 2e-6
RECURSION_TOLERANCE = 1e-12


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adpue", description="Debiased PU / exposure risk estimators and benchmark harness.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a TOML config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, help="base seed (trial i uses seed + i)")
    run.add_argument("--trials", type=int)
    run.add_argument("--alpha", type=float, help="split ratio given to the first role")
    run.add_argument("--out", help="output stem; writes <out>.csv and <out>.json")
    run.add_argument("--workers", type=int, help="worker processes for trials")

    orc = sub.add_parser("oracle", help="check the closed-form minimiser and the fixed-point recursion")
    orc.add_argument("--triples", type=int, default=1000)
    orc.add_argument("--seed", type=int, default=0)

    cal = sub.add_parser("calibrate", help="exposure constant C for a dataset and target rate")
    cal.add_argument("dataset")
    cal.add_argument("--target", type=float, default=0.5)

    chk = sub.add_parser("parse-check", help="validate a dataset against its published n / d / positive fraction")
    chk.add_argument("dataset")
    chk.add_argument("--n", type=int, dest="expect_n")
    chk.add_argument("--d", type=int, dest="expect_d")
    chk.add_argument("--pos", type=float, dest="expect_pos")
    chk.add_argument("--pos-tol", type=float, default=1e-3)
    return p


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.trials is not None:
            overrides["trials"] = args.trials
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.alpha is not None:
            overrides["split"] = replace(config.split, split_ratio=args.alpha)
        config = replace(config, **overrides)
    except FileNotFoundError as exc:
        print(f"adpue: config not found: {exc.filename}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"adpue: bad config: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(config)
    except (RunFailedError, FileNotFoundError, ValueError) as exc:
        print(f"adpue: run failed: {exc}", file=sys.stderr)
        return 1
    for a in report.aggregate():
        if a["statistic"] == "mean":
            print(f"{a['method']:<16} {a['mode']:<13} acc={a['accuracy']:.3f} prec={a['precision']:.3f} rec={a['recall']:.3f}")
    if report.failures:
        print(f"{len(report.failures)} failed trial(s)")
    for path in write_outputs(report, config, args.out):
        print(f"wrote {path}")
    return 0


def _cmd_oracle(args) -> int:
    lemma = oracle.lemma_grid_residuals(args.triples, seed=args.seed)
    rec = oracle.recursion_residuals(args.triples, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    ident = max(oracle.identification_check(oracle.random_population(rng, 8)) for _ in range(100))
    print(f"lemma grid residual max={lemma.max():.3e} (tol {LEMMA_TOLERANCE:g}, {lemma.size} triples)")
    print(f"recursion residual max={rec.max():.3e} (tol {RECURSION_TOLERANCE:g}, {rec.size} instances)")
    print(f"identification residual max={ident:.3e}")
    ok = lemma.max() <= LEMMA_TOLERANCE and rec.max() <= RECURSION_TOLERANCE and ident <= RECURSION_TOLERANCE
    return 0 if ok else 1


def _load(name):
    path = resolve_dataset(name)
    info = KNOWN_DATASETS.get(path.name)
    return path, info, parse_sparse_dataset(path, dim=info.dim if info else None)


def _cmd_calibrate(args) -> int:
    try:
        spec = ExposureSpec(target_marginal=args.target)
        _, _, data = _load(args.dataset)
    except ValueError as exc:
        print(f"adpue: {exc}", file=sys.stderr)
        return 2
    c = calibrate_c(data, spec)
    rate = float(np.mean(exposure_probabilities(data.features, spec, c)))
    print(f"C={c!r} mean_exposure={rate:.7f} target={args.target}")
    return 0


def _cmd_parse_check(args) -> int:
    path, info, data = _load(args.dataset)
    pos = float(np.mean(data.y_oracle))
    print(f"{path.name}: n={data.n}, d={data.dim}, pos={pos:.3f}")
    expect_n = args.expect_n if args.expect_n is not None else (info.n if info else None)
    expect_d = args.expect_d if args.expect_d is not None else (info.dim if info else None)
    expect_pos = args.expect_pos if args.expect_pos is not None else (info.positive_fraction if info else None)
    problems = []
    if expect_n is not None and data.n != expect_n:
        problems.append(f"n={data.n}, expected {expect_n}")
    if expect_d is not None and data.dim != expect_d:
        problems.append(f"d={data.dim}, expected {expect_d}")
    if expect_pos is not None and abs(pos - expect_pos) > args.pos_tol:
        problems.append(f"positive fraction {pos:.4f}, expected {expect_pos} +/- {args.pos_tol}")
    for msg in problems:
        print(f"mismatch: {msg}", file=sys.stderr)
    return 1 if problems else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "oracle": _cmd_oracle, "calibrate": _cmd_calibrate, "parse-check": _cmd_parse_check}
    try:
        return handlers[args.command](args)
    except FileNotFoundError as exc:
        print(f"adpue: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # diagnostic instead of a traceback
        print(f"adpue: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
