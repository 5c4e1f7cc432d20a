"""Command-line entry point: simulate, run (CSV pools), serve.

Exit codes: 0 success, 2 flag/usage errors, 1 runtime failures.  All
randomness flows from --seed; when absent a seed is drawn and printed.
"""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, figures
from .errors import AlogitError
from .learner import LearnerConfig, ReplayOracle, default_n0, run as run_loop
from .numerics import pca_transform
from .selection import ClusterPrefilter, SelectionConfig
from .shrinkage import ShrinkageConfig
from .stopping import StoppingConfig

log = logging.getLogger("alogit")

DATA_DIR_ENV = "ALOGIT_DATA_DIR"


def _kv(**fields) -> str:
    return " ".join(f"{k}={v}" for k, v in fields.items())


def _add_common_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--d", type=float, default=0.5,
                        help="ellipsoid half-length bound (default 0.5)")
    parser.add_argument("--alpha", type=float, default=0.05,
                        help="1 - coverage level (default 0.05)")
    parser.add_argument("--estimator", choices=("ase", "mle"), default="ase",
                        help="shrinkage estimator or plain-MLE baseline (default ase)")
    parser.add_argument("--gamma", type=float, default=2.0,
                        help="shrinkage exponent gamma (default 2.0)")
    parser.add_argument("--epsilon", type=float, default=0.5,
                        help="shrinkage threshold epsilon (default 0.5)")
    parser.add_argument("--lambda-scale", type=float, default=1.0,
                        help="lambda(n) scale c (default 1.0)")
    parser.add_argument("--lambda-exponent", type=float, default=0.75,
                        help="lambda(n) exponent a (default 0.75)")
    parser.add_argument("--rho", type=float, default=SelectionConfig().rho,
                        help="fraction of candidates kept by the determinant "
                        f"ranking (default {SelectionConfig().rho})")
    parser.add_argument("--p-target", type=float, default=0.5,
                        help="uncertainty sampling target probability (default 0.5)")
    parser.add_argument("--cluster-k", type=int, default=None,
                        help="optional k-means prefilter cluster count (default off)")
    parser.add_argument("--n0", type=int, default=None,
                        help="initial sample size (default max(2p, 20))")
    parser.add_argument("--max-steps", type=int, default=None,
                        help="hard cap on labeled subjects (default pool size)")
    parser.add_argument("--seed", type=int, default=None,
                        help="base seed; drawn and printed when omitted")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker processes for replications (default 1)")
    parser.add_argument("--out", type=Path, default=Path("alogit-out"),
                        help="output directory (default ./alogit-out)")
    parser.add_argument("--format", choices=("json", "csv", "markdown"),
                        default="json", help="report format (default json)")
    parser.add_argument("--figures", action=argparse.BooleanOptionalAction,
                        default=True, help="render figures next to the report")
    parser.add_argument("--timing", action="store_true",
                        help="include wall-clock timings in reports "
                        "(breaks byte-for-byte determinism)")
    parser.add_argument("--log-level", default="INFO",
                        help="logging level (default INFO)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alogit",
        description="Active learning for logistic classification with "
        "adaptive shrinkage variable selection and a sequential stopping rule.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte-Carlo benchmark on synthetic pools")
    _add_common_model_flags(sim)
    sim.add_argument("--runs", type=int, default=1,
                     help="number of replications (default 1)")
    sim.add_argument("--pool-size", type=int, default=30000,
                     help="synthetic pool size (default 30000)")
    sim.add_argument("--beta", default="-1,1,0,0",
                     help="true coefficients, comma separated (default -1,1,0,0)")
    sim.add_argument("--covariate-dim", type=int, default=None,
                     help="covariate count (default: length of --beta)")
    sim.add_argument("--intercept", action="store_true",
                     help="append a constant-1 design column (last beta entry "
                     "is its true coefficient)")

    runp = sub.add_parser("run", help="active learning over a labeled CSV pool")
    _add_common_model_flags(runp)
    runp.add_argument("--data", type=Path, required=True,
                      help="CSV file with a header row")
    runp.add_argument("--label-col", required=True, help="label column name")
    runp.add_argument("--positive", default="1",
                      help="label value treated as the positive class (default 1)")
    runp.add_argument("--features", default=None,
                      help="comma-separated feature columns (default: all others)")
    runp.add_argument("--pca-keep", default=None,
                      help="1-based principal components to keep, e.g. 1,2,3,4,9,10")
    runp.add_argument("--intercept", action=argparse.BooleanOptionalAction,
                      default=True, help="append a constant-1 design column")
    runp.add_argument("--train-pos", type=int, default=None,
                      help="positives per training split")
    runp.add_argument("--train-neg", type=int, default=None,
                      help="negatives per training split")
    runp.add_argument("--runs", type=int, default=1,
                      help="replications with re-drawn splits (default 1)")

    srv = sub.add_parser("serve", help="start the annotation HTTP service")
    srv.add_argument("--port", type=int, default=8000, help="TCP port (default 8000)")
    srv.add_argument("--host", default="127.0.0.1", help="bind host (default 127.0.0.1)")
    srv.add_argument("--store", type=Path, default=Path("alogit-sessions"),
                     help="session event-log directory (default ./alogit-sessions)")
    srv.add_argument("--data", type=Path, default=None,
                     help="features-only CSV used when a session omits features")
    srv.add_argument("--log-level", default="INFO", help="logging level")
    return parser


class UsageError(Exception):
    pass


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbelow(2**31)
    print(f"seed={seed}")
    return seed


def _learner_config(args, p: int, pool_size: int) -> LearnerConfig:
    n0 = args.n0 if args.n0 is not None else default_n0(p)
    max_steps = args.max_steps if args.max_steps is not None else pool_size
    prefilter = ClusterPrefilter(k=args.cluster_k) if args.cluster_k else None
    try:
        return LearnerConfig(
            shrinkage=ShrinkageConfig(
                epsilon=args.epsilon,
                gamma=args.gamma,
                lambda_scale=args.lambda_scale,
                lambda_exponent=args.lambda_exponent,
            ),
            selection=SelectionConfig(
                rho=args.rho, p_target=args.p_target, cluster_prefilter=prefilter
            ),
            stopping=StoppingConfig(d=args.d, alpha=args.alpha, n0=n0),
            estimator_mode=args.estimator,
            max_steps=max_steps,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


_EXT = {"json": "json", "csv": "csv", "markdown": "md"}


def _write(outdir: Path, name: str, fmt: str, payload: bytes) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{name}.{_EXT[fmt]}"
    path.write_bytes(payload)
    log.info(_kv(event="wrote", path=path))
    return path


def cmd_simulate(args) -> int:
    args.seed = _resolve_seed(args)
    beta = tuple(float(v) for v in str(args.beta).split(","))
    dim = args.covariate_dim
    if dim is None:
        dim = len(beta) - (1 if args.intercept else 0)
    try:
        spec = bench.SyntheticSpec(
            n_pool=args.pool_size,
            beta_true=beta,
            covariate_dim=dim,
            intercept=args.intercept,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    p = dim + (1 if args.intercept else 0)
    config = _learner_config(args, p, args.pool_size)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    log.info(_kv(event="simulate", runs=args.runs, d=args.d,
                 estimator=args.estimator, seed=args.seed))
    summary = bench.replicate(spec, config, args.runs, parallelism=args.jobs)
    _write(args.out, "summary", args.format,
           bench.emit_report(summary, args.format, include_timing=args.timing))
    _write(args.out, "runs", "csv", _runs_csv(summary))
    if args.figures:
        for path in figures.render_summary_figures(summary, args.out):
            log.info(_kv(event="figure", path=path))
    return 0


def _runs_csv(summary: bench.ReplicationSummary) -> bytes:
    import csv as _csv
    import io

    out = io.StringIO()
    writer = _csv.writer(out, lineterminator="\n")
    good = [r for r in summary.rows if "error" not in r]
    if not good:
        writer.writerow(["run", "error"])
        for r in summary.rows:
            writer.writerow([r["run"], r.get("error", "")])
        return out.getvalue().encode()
    p = len(good[0]["beta_hat"])
    header = ["run", "N", "p0_hat", "kappa", "acc", "auc", "acc_train", "auc_train",
              "covered", "stopped_by"] + [f"beta_{j+1}" for j in range(p)]
    writer.writerow(header)
    for r in summary.rows:
        if "error" in r:
            writer.writerow([r["run"], f"error:{r['error']}"])
            continue
        row = [r["run"], r["N"], r["p0_hat"],
               "" if r["kappa"] is None else f"{r['kappa']:.6g}",
               "" if r["acc"] is None else f"{r['acc']:.6g}",
               "" if r["auc"] is None else f"{r['auc']:.6g}",
               "" if r["acc_train"] is None else f"{r['acc_train']:.6g}",
               "" if r["auc_train"] is None else f"{r['auc_train']:.6g}",
               int(bool(r["covered"])), r["stopped_by"]]
        row += [f"{b:.6g}" for b in r["beta_hat"]]
        writer.writerow(row)
    return out.getvalue().encode()


def _load_pool(args, need_labels: bool):
    path = args.data
    if not path.exists() and os.environ.get(DATA_DIR_ENV):
        candidate = Path(os.environ[DATA_DIR_ENV]) / path.name
        if candidate.exists():
            path = candidate
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    features = (
        [c.strip() for c in args.features.split(",")] if args.features else None
    )
    label_col = args.label_col if need_labels else getattr(args, "label_col", None)
    pool = bench.ingest_csv(
        path,
        label_column=label_col,
        feature_columns=features,
        positive_value=args.positive,
    )
    if need_labels and pool.labels is None:
        raise UsageError(
            "replay runs need labels; this CSV is features-only "
            "(use `alogit serve` for interactive labeling)"
        )
    return pool


def _apply_design(pool, args):
    x = pool.features
    if args.pca_keep:
        keep = [int(v) for v in args.pca_keep.split(",")]
        x = pca_transform(x, keep)
    if args.intercept:
        x = np.hstack([x, np.ones((x.shape[0], 1))])
    from .learner import Pool

    return Pool(features=x, labels=pool.labels)


def cmd_run(args) -> int:
    args.seed = _resolve_seed(args)
    pool = _load_pool(args, need_labels=True)
    pool = _apply_design(pool, args)
    p = pool.dim
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    split = args.train_pos is not None or args.train_neg is not None
    if split and (args.train_pos is None or args.train_neg is None):
        raise UsageError("--train-pos and --train-neg must be given together")
    if args.runs > 1 and not split:
        raise UsageError("--runs > 1 needs --train-pos/--train-neg to redraw splits")

    if split:
        train_size = args.train_pos + args.train_neg
        config = _learner_config(args, p, train_size)
        log.info(_kv(event="run", data=args.data, runs=args.runs, d=args.d,
                     train_pos=args.train_pos, train_neg=args.train_neg))
        summary = bench.replicate_dataset(
            pool, config, args.train_pos, args.train_neg, args.runs,
            parallelism=args.jobs,
        )
        _write(args.out, "summary", args.format,
               bench.emit_report(summary, args.format, include_timing=args.timing))
        _write(args.out, "runs", "csv", _runs_csv(summary))
        if args.figures:
            for path in figures.render_summary_figures(summary, args.out):
                log.info(_kv(event="figure", path=path))
        return 0

    config = _learner_config(args, p, pool.n_total)
    report = run_loop(pool, config, ReplayOracle(pool.labels))
    _write(args.out, "report", args.format,
           bench.emit_report(report, args.format, include_timing=args.timing))
    _write(args.out, "trace", "csv", bench.emit_report(report, "csv"))
    if args.figures:
        for path in figures.render_run_figures(report, args.out):
            log.info(_kv(event="figure", path=path))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    default_features = None
    if args.data is not None:
        pool = bench.ingest_csv(args.data, label_column=None)
        default_features = pool.features
        log.info(_kv(event="loaded_default_pool", rows=pool.n_total, dim=pool.dim))
    app = create_app(args.store, default_features=default_features)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except OSError as exc:
        log.error(_kv(event="bind_failed", port=args.port, error=exc))
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(levelname)s %(message)s",
    )
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "serve":
            return cmd_serve(args)
        parser.error(f"unknown command {args.command}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AlogitError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
