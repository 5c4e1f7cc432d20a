"""Monte-Carlo benchmark harness and CSV pool tooling.

Replication derives per-run seeds as base_seed + run_index, so results
are identical whatever the worker count, and aggregation reduces rows
in run-index order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientClass, NonBinaryLabel, ParseError
from .glm import mu
from .learner import LearnerConfig, Pool, ReplayOracle, RunReport, run
from .stopping import ellipsoid_contains, selected_block_information


@dataclass(frozen=True)
class SyntheticSpec:
    """Pool generator settings for the synthetic benchmark."""

    n_pool: int = 30000
    beta_true: tuple[float, ...] = (-1.0, 1.0, 0.0, 0.0)
    covariate_dim: int = 4
    intercept: bool = False
    seed: int = 0

    def __post_init__(self):
        expected = self.covariate_dim + (1 if self.intercept else 0)
        if len(self.beta_true) != expected:
            raise ValueError(
                f"beta_true length {len(self.beta_true)} != covariate_dim"
                f"{' + intercept' if self.intercept else ''} = {expected}"
            )


def gen_synthetic(spec: SyntheticSpec) -> Pool:
    """Standard-normal covariates with Bernoulli labels from the logistic model."""
    rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal((spec.n_pool, spec.covariate_dim))
    if spec.intercept:
        x = np.hstack([x, np.ones((spec.n_pool, 1))])
    beta = np.asarray(spec.beta_true, dtype=float)
    labels = (rng.random(spec.n_pool) < mu(x @ beta)).astype(np.int8)
    return Pool(features=x, labels=labels)


@dataclass
class ReplicationSummary:
    """Per-metric mean/sd over successful runs, Table-style."""

    runs: int
    failed: int
    metrics: dict[str, tuple[float, float]]
    coefficients: list[tuple[float, float]]
    coverage: float | None
    rows: list[dict] = field(default_factory=list, repr=False)


def _coverage_of(report: RunReport, beta_true: np.ndarray, cfg: LearnerConfig) -> bool:
    if report.nu is None:
        return False
    ind = report.indicators
    sel = np.asarray(ind) == 1
    if not np.any(sel):
        return False
    sigma11 = selected_block_information(report.fisher_hat, ind)
    return ellipsoid_contains(
        beta_true,
        report.beta_hat[sel],
        sigma11,
        report.nu,
        report.N,
        cfg.stopping.d,
        ind,
        cfg.stopping.rho_fn,
    )


def run_once(spec: SyntheticSpec, config: LearnerConfig, run_index: int) -> dict:
    """One seeded replication; returns a flat, serializable row."""
    pool = gen_synthetic(replace(spec, seed=spec.seed + run_index))
    cfg = replace(config, seed=config.seed + run_index)
    oracle = ReplayOracle(pool.labels)
    try:
        report = run(pool, cfg, oracle)
    except Exception as exc:  # recorded, excluded from aggregates
        return {"run": run_index, "error": f"{type(exc).__name__}: {exc}"}
    covered = _coverage_of(report, np.asarray(spec.beta_true, dtype=float), cfg)
    return {
        "run": run_index,
        "N": report.N,
        "wall_time": report.wall_time,
        "acc": report.acc,
        "auc": report.auc,
        "acc_train": report.acc_train,
        "auc_train": report.auc_train,
        "kappa": report.kappa,
        "p0_hat": report.p0_hat,
        "beta_hat": [float(b) for b in report.beta_hat],
        "beta_tilde": [float(b) for b in report.beta_tilde],
        "indicators": [int(i) for i in report.indicators],
        "covered": bool(covered),
        "semi_axis": report.semi_axis,
        "stopped_by": report.stopped_by,
        "separation_flag": bool(report.separation_flag),
    }


_AGG_METRICS = ("N", "wall_time", "acc", "auc", "acc_train", "auc_train", "kappa", "p0_hat")


def _mean_sd(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), 0.0
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), sd


def aggregate(rows: list[dict]) -> ReplicationSummary:
    """Mean/sd table over the successful rows, in run-index order."""
    rows = sorted(rows, key=lambda r: r["run"])
    good = [r for r in rows if "error" not in r]
    failed = len(rows) - len(good)
    metrics = {}
    for name in _AGG_METRICS:
        values = [r[name] for r in good if r.get(name) is not None]
        if values:
            metrics[name] = _mean_sd(values)
    coefficients = []
    if good:
        p = len(good[0]["beta_hat"])
        for j in range(p):
            coefficients.append(_mean_sd([r["beta_hat"][j] for r in good]))
    covered = [r["covered"] for r in good if r.get("covered") is not None]
    coverage = float(np.mean(covered)) if covered else None
    return ReplicationSummary(
        runs=len(good),
        failed=failed,
        metrics=metrics,
        coefficients=coefficients,
        coverage=coverage,
        rows=rows,
    )


def replicate(
    spec: SyntheticSpec,
    config: LearnerConfig,
    runs: int,
    parallelism: int = 1,
) -> ReplicationSummary:
    """Independent seeded runs aggregated into Table-style mean(sd) cells."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if parallelism <= 1:
        rows = [run_once(spec, config, i) for i in range(runs)]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(
                pool.map(run_once, [spec] * runs, [config] * runs, range(runs))
            )
    return aggregate(rows)


_DATASET: dict = {}


def _init_dataset_worker(features, labels):
    _DATASET["features"] = features
    _DATASET["labels"] = labels


def run_once_dataset(
    config: LearnerConfig, n_pos: int, n_neg: int, run_index: int
) -> dict:
    """One split-and-run replication over the worker-local dataset."""
    pool = Pool(features=_DATASET["features"], labels=_DATASET["labels"])
    cfg = replace(config, seed=config.seed + run_index)
    try:
        train, test = make_split(pool, n_pos, n_neg, seed=cfg.seed)
        report = run(
            train,
            cfg,
            ReplayOracle(train.labels),
            eval_features=test.features if test.n_total else None,
            eval_labels=test.labels if test.n_total else None,
        )
    except Exception as exc:
        return {"run": run_index, "error": f"{type(exc).__name__}: {exc}"}
    return {
        "run": run_index,
        "N": report.N,
        "wall_time": report.wall_time,
        "acc": report.acc,
        "auc": report.auc,
        "acc_train": report.acc_train,
        "auc_train": report.auc_train,
        "kappa": report.kappa,
        "p0_hat": report.p0_hat,
        "beta_hat": [float(b) for b in report.beta_hat],
        "beta_tilde": [float(b) for b in report.beta_tilde],
        "indicators": [int(i) for i in report.indicators],
        "covered": None,
        "semi_axis": report.semi_axis,
        "stopped_by": report.stopped_by,
        "separation_flag": bool(report.separation_flag),
    }


def replicate_dataset(
    pool: Pool,
    config: LearnerConfig,
    n_pos: int,
    n_neg: int,
    runs: int,
    parallelism: int = 1,
) -> ReplicationSummary:
    """Re-split the labeled pool each run and aggregate like `replicate`."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if pool.labels is None:
        raise ValueError("dataset replication requires labels")
    if parallelism <= 1:
        _init_dataset_worker(pool.features, pool.labels)
        try:
            rows = [run_once_dataset(config, n_pos, n_neg, i) for i in range(runs)]
        finally:
            _DATASET.clear()
    else:
        with ProcessPoolExecutor(
            max_workers=parallelism,
            initializer=_init_dataset_worker,
            initargs=(pool.features, pool.labels),
        ) as executor:
            rows = list(
                executor.map(
                    run_once_dataset,
                    [config] * runs,
                    [n_pos] * runs,
                    [n_neg] * runs,
                    range(runs),
                )
            )
    return aggregate(rows)


def ingest_csv(
    path,
    label_column: str | None = None,
    feature_columns: list[str] | None = None,
    positive_value: str = "1",
) -> Pool:
    """Build a Pool from an RFC-4180 CSV with a header row.

    Rows keep file order.  With ``label_column`` the labels are revealed
    to replay oracles; without it the pool is features-only (interactive
    annotation).  Label cells must equal ``positive_value`` or one other
    distinct value.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV: missing header row") from None
        header = [h.strip() for h in header]
        if label_column is not None and label_column not in header:
            raise ParseError(f"label column {label_column!r} not in header")
        if feature_columns is None:
            feature_columns = [h for h in header if h != label_column]
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise ParseError(f"feature columns not in header: {missing}")
        feat_pos = [header.index(c) for c in feature_columns]
        label_pos = header.index(label_column) if label_column is not None else None

        features = []
        raw_labels = []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"row {row_num}: expected {len(header)} cells, got {len(row)}",
                    row=row_num,
                )
            vals = []
            for pos in feat_pos:
                cell = row[pos].strip()
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"row {row_num}, column {header[pos]!r}: "
                        f"non-numeric cell {cell!r}",
                        row=row_num,
                        column=header[pos],
                    ) from None
            features.append(vals)
            if label_pos is not None:
                raw_labels.append(row[label_pos].strip())

    if not features:
        raise ParseError("CSV has no data rows")
    x = np.asarray(features, dtype=float)
    if label_pos is None:
        return Pool(features=x)
    distinct = sorted(set(raw_labels))
    if positive_value not in distinct and len(distinct) > 0:
        raise NonBinaryLabel(
            f"positive value {positive_value!r} absent; saw {distinct[:5]}"
        )
    if len(distinct) > 2:
        raise NonBinaryLabel(f"label column has {len(distinct)} distinct values")
    labels = np.array([1 if v == positive_value else 0 for v in raw_labels], dtype=np.int8)
    return Pool(features=x, labels=labels)


def make_split(pool: Pool, n_pos: int, n_neg: int, seed: int) -> tuple[Pool, Pool]:
    """Stratified disjoint train/test split with exact class counts."""
    import warnings

    if pool.labels is None:
        raise ValueError("split requires labels")
    pos = np.flatnonzero(pool.labels == 1)
    neg = np.flatnonzero(pool.labels == 0)
    if len(pos) < n_pos:
        raise InsufficientClass(f"need {n_pos} positives, pool has {len(pos)}")
    if len(neg) < n_neg:
        raise InsufficientClass(f"need {n_neg} negatives, pool has {len(neg)}")
    rng = np.random.default_rng(seed)
    take_pos = rng.choice(pos, size=n_pos, replace=False)
    take_neg = rng.choice(neg, size=n_neg, replace=False)
    train_idx = np.sort(np.concatenate([take_pos, take_neg]))
    test_mask = np.ones(pool.n_total, dtype=bool)
    test_mask[train_idx] = False
    test_idx = np.flatnonzero(test_mask)
    if test_idx.size == 0:
        warnings.warn("split consumed the whole pool; test set is empty")
    train = Pool(features=pool.features[train_idx], labels=pool.labels[train_idx])
    test = Pool(features=pool.features[test_idx], labels=pool.labels[test_idx])
    return train, test


def _to_jsonable(obj, include_timing=False):
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float):
        return None if not np.isfinite(obj) else obj
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        d = {}
        for f in dataclasses.fields(obj):
            if not include_timing and f.name == "wall_time":
                continue
            d[f.name] = _to_jsonable(getattr(obj, f.name), include_timing)
        return d
    if isinstance(obj, dict):
        return {
            k: _to_jsonable(v, include_timing)
            for k, v in obj.items()
            if include_timing or k != "wall_time"
        }
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v, include_timing) for v in obj]
    return obj


def _fmt(value) -> str:
    if value is None:
        return "-"
    return f"{value:.4f}" if isinstance(value, float) else str(value)


def _summary_markdown(summary: ReplicationSummary, include_timing: bool = False) -> str:
    lines = ["| metric | mean(sd) |", "|---|---|"]
    for name, (mean, sd) in summary.metrics.items():
        if name == "wall_time" and not include_timing:
            continue
        lines.append(f"| {name} | {mean:.3f}({sd:.3f}) |")
    for j, (mean, sd) in enumerate(summary.coefficients, start=1):
        lines.append(f"| beta_{j} | {mean:.3f}({sd:.3f}) |")
    if summary.coverage is not None:
        lines.append(f"| coverage | {summary.coverage:.3f} |")
    lines.append(f"| runs | {summary.runs} |")
    if summary.failed:
        lines.append(f"| failed | {summary.failed} |")
    return "\n".join(lines) + "\n"


def _summary_csv(summary: ReplicationSummary, include_timing: bool = False) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["metric", "mean", "sd"])
    for name, (mean, sd) in summary.metrics.items():
        if name == "wall_time" and not include_timing:
            continue
        writer.writerow([name, f"{mean:.10g}", f"{sd:.10g}"])
    for j, (mean, sd) in enumerate(summary.coefficients, start=1):
        writer.writerow([f"beta_{j}", f"{mean:.10g}", f"{sd:.10g}"])
    if summary.coverage is not None:
        writer.writerow(["coverage", f"{summary.coverage:.10g}", ""])
    return out.getvalue()


def _report_csv(report: RunReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["n", "nu", "threshold", "p0_hat", "selected"])
    for row in report.trace:
        writer.writerow(
            [
                row.n,
                "" if row.nu is None else f"{row.nu:.10g}",
                "" if row.threshold is None else f"{row.threshold:.10g}",
                row.p0_hat,
                "" if row.selected is None else row.selected,
            ]
        )
    return out.getvalue()


def _report_markdown(report: RunReport) -> str:
    rows = [
        ("N", report.N),
        ("stopped_by", report.stopped_by),
        ("p0_hat", report.p0_hat),
        ("kappa", report.kappa),
        ("acc", report.acc),
        ("auc", report.auc),
        ("acc_train", report.acc_train),
        ("auc_train", report.auc_train),
        ("nu", report.nu),
        ("threshold", report.threshold),
        ("semi_axis", report.semi_axis),
    ]
    lines = ["| field | value |", "|---|---|"]
    for name, value in rows:
        lines.append(f"| {name} | {_fmt(value)} |")
    beta = ", ".join(f"{b:.4f}" for b in report.beta_hat)
    lines.append(f"| beta_hat | {beta} |")
    lines.append(f"| indicators | {''.join(str(int(i)) for i in report.indicators)} |")
    return "\n".join(lines) + "\n"


def emit_report(obj, fmt: str = "json", include_timing: bool = False) -> bytes:
    """Serialize a RunReport or ReplicationSummary deterministically.

    Wall-clock timings are omitted unless asked for, so identical seeds
    produce byte-identical output.
    """
    if fmt == "json":
        payload = _to_jsonable(obj, include_timing)
        return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode()
    if fmt == "csv":
        if isinstance(obj, ReplicationSummary):
            text = _summary_csv(obj, include_timing)
        else:
            text = _report_csv(obj)
        return text.encode()
    if fmt == "markdown":
        if isinstance(obj, ReplicationSummary):
            text = _summary_markdown(obj, include_timing)
        else:
            text = _report_markdown(obj)
        return text.encode()
    raise ValueError(f"unknown format {fmt!r}")
