"""Accuracy metrics, confidence intervals and report files."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from radloc import __version__
from radloc.datasets import Dataset
from radloc.errors import ConfigError, DataError, SchemaError
from radloc.models import TrainedModel
from radloc.reftable import ReferenceTable

META_PREFIX = "# radloc-metrics "
# Predicted and true angles are grid values; equality allows for float noise.
_ANGLE_MATCH_TOL = 1e-9

METRIC_COLUMNS = (
    "predictor",
    "pipeline",
    "dataset",
    "target",
    "n",
    "mean_angular_error_deg",
    "mean_angular_error_ci95",
    "angle_accuracy",
    "distance_bin_accuracy",
    "mean_relative_distance_error_pct",
    "mean_relative_distance_error_ci95",
    "median_relative_distance_error_pct",
    "n_zero_norm",
)
BREAKDOWN_COLUMNS = ("predictor", "pipeline", "dataset", "target", "true_distance_m", "n", "accuracy", "mean_error")


def circular_error(pred, truth):
    """Shortest arc between angles in degrees, in [0, 180]."""
    d = np.abs(np.asarray(pred, dtype=float) - np.asarray(truth, dtype=float)) % 360.0
    return np.minimum(d, 360.0 - d)


def mean_ci95(values, bootstrap: bool = False, n_resamples: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Mean and 95% half-width.

    Default is the normal approximation 1.96*s/sqrt(n) with the sample standard
    deviation. With ``bootstrap`` the half-width is half the 2.5-97.5 percentile
    span of resampled means.
    """
    v = np.asarray(values, dtype=float).ravel()
    if len(v) < 2:
        raise DataError("a confidence interval needs at least 2 values")
    mean = float(v.mean())
    if not bootstrap:
        return mean, float(1.96 * v.std(ddof=1) / np.sqrt(len(v)))
    rng = np.random.default_rng(seed)
    means = v[rng.integers(0, len(v), size=(n_resamples, len(v)))].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return mean, float((hi - lo) / 2.0)


@dataclass(frozen=True)
class DistanceRow:
    true_distance: float
    n: int
    accuracy: float
    mean_error: float  # degrees for angle, percent for distance


@dataclass(frozen=True)
class Metrics:
    """Scores of one predictor on one dataset; fields of the other target are None."""

    predictor: str
    pipeline: str
    dataset: str
    target: str
    n: int
    mean_angular_error: float | None = None
    mean_angular_error_ci95: float | None = None
    angle_accuracy: float | None = None
    distance_bin_accuracy: float | None = None
    mean_relative_distance_error: float | None = None
    mean_relative_distance_error_ci95: float | None = None
    median_relative_distance_error: float | None = None
    n_zero_norm: int = 0
    per_distance: tuple[DistanceRow, ...] = field(default=())

    def row(self) -> dict:
        return {
            "predictor": self.predictor,
            "pipeline": self.pipeline,
            "dataset": self.dataset,
            "target": self.target,
            "n": self.n,
            "mean_angular_error_deg": self.mean_angular_error,
            "mean_angular_error_ci95": self.mean_angular_error_ci95,
            "angle_accuracy": self.angle_accuracy,
            "distance_bin_accuracy": self.distance_bin_accuracy,
            "mean_relative_distance_error_pct": self.mean_relative_distance_error,
            "mean_relative_distance_error_ci95": self.mean_relative_distance_error_ci95,
            "median_relative_distance_error_pct": self.median_relative_distance_error,
            "n_zero_norm": self.n_zero_norm,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_distance"] = [asdict(r) for r in self.per_distance]
        return d


def _ci(values, bootstrap, seed):
    if len(values) < 2:
        return float(np.mean(values)), 0.0
    return mean_ci95(values, bootstrap=bootstrap, seed=seed)


def _breakdown(dist, hits, errors) -> tuple[DistanceRow, ...]:
    rows = []
    for d in np.unique(dist):
        sel = dist == d
        rows.append(DistanceRow(float(d), int(sel.sum()), float(hits[sel].mean()), float(errors[sel].mean())))
    return tuple(rows)


def evaluate(
    predictor: TrainedModel | ReferenceTable,
    test: Dataset,
    pipeline: str | None = None,
    *,
    name: str | None = None,
    dataset: str = "",
    normalized_table: bool = False,
    bootstrap: bool = False,
    seed: int = 0,
) -> Metrics:
    """Score ``predictor`` on ``test``.

    ``pipeline`` is the scaler the caller expects; it must match the one attached
    to a trained model (a reference table uses raw counts, ``"none"``).
    """
    if len(test) == 0:
        raise DataError("empty test set")
    x = np.asarray(test.counts, dtype=float)
    if isinstance(predictor, ReferenceTable):
        actual, target = "none", "angle"
        pred_values = predictor.predict(x, normalized=normalized_table)
        name = name or ("reference_table_norm" if normalized_table else "reference_table")
        n_zero = int(np.sum(~np.any(x != 0, axis=1))) if normalized_table else 0
    elif isinstance(predictor, TrainedModel):
        actual, target = predictor.scaler.kind, predictor.target
        name = name or predictor.kind
        n_zero = predictor.scaler.zero_rows(x)
        pred_values = None
    else:
        raise ConfigError(f"cannot evaluate {type(predictor).__name__}")
    if pipeline is not None and pipeline != actual:
        raise SchemaError(f"pipeline {pipeline!r} does not match the predictor's training pipeline {actual!r}")

    common = {"predictor": name, "pipeline": actual, "dataset": dataset, "target": target, "n": len(test)}
    if target == "angle":
        if pred_values is None:
            pred_values = predictor.predict_values(x)
        err = circular_error(pred_values, test.true_angle)
        hits = (err <= _ANGLE_MATCH_TOL).astype(float)
        mean, half = _ci(err, bootstrap, seed)
        return Metrics(
            **common,
            mean_angular_error=mean,
            mean_angular_error_ci95=half,
            angle_accuracy=float(hits.mean()),
            n_zero_norm=n_zero,
            per_distance=_breakdown(test.true_distance, hits, err),
        )

    mids = test.bin_spec.midpoints()
    if len(predictor.classes) != len(mids) or not np.allclose(predictor.classes, mids, rtol=0, atol=1e-9):
        raise SchemaError("model distance bins differ from the test set's bins")
    pred_bin = predictor.predict(x)
    hits = (pred_bin == test.distance_label).astype(float)
    rel = 100.0 * np.abs(mids[pred_bin] - test.true_distance) / test.true_distance
    mean, half = _ci(rel, bootstrap, seed)
    return Metrics(
        **common,
        distance_bin_accuracy=float(hits.mean()),
        mean_relative_distance_error=mean,
        mean_relative_distance_error_ci95=half,
        median_relative_distance_error=float(np.median(rel)),
        n_zero_norm=n_zero,
        per_distance=_breakdown(test.true_distance, hits, rel),
    )


# --------------------------------------------------------------------------- files


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, columns, rows, provenance: dict) -> None:
    buf = io.StringIO(newline="")
    meta = {"format": "radloc-metrics", "version": __version__, "provenance": provenance}
    buf.write(META_PREFIX + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r[c]) for c in columns])
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


def breakdown_path(metrics_csv) -> Path:
    p = Path(metrics_csv)
    return p.with_name(p.stem + ".per_distance.csv")


def write_metrics(metrics: list[Metrics], path, provenance: dict | None = None) -> tuple[Path, Path]:
    """Flat metrics CSV plus a sibling per-distance CSV; returns both paths."""
    provenance = provenance or {}
    write_table(path, METRIC_COLUMNS, [m.row() for m in metrics], provenance)
    rows = []
    for m in metrics:
        for r in m.per_distance:
            rows.append(
                {
                    "predictor": m.predictor,
                    "pipeline": m.pipeline,
                    "dataset": m.dataset,
                    "target": m.target,
                    "true_distance_m": r.true_distance,
                    "n": r.n,
                    "accuracy": r.accuracy,
                    "mean_error": r.mean_error,
                }
            )
    second = breakdown_path(path)
    write_table(second, BREAKDOWN_COLUMNS, rows, provenance)
    return Path(path), second


def write_json(metrics: list[Metrics], path, provenance: dict | None = None) -> None:
    doc = {"format": "radloc-metrics", "version": __version__, "provenance": provenance or {},
           "metrics": [m.to_dict() for m in metrics]}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def read_table(path) -> tuple[dict, list[dict]]:
    """(metadata, rows) of a metrics or per-distance CSV; cells stay strings."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    lines = text.split("\n")
    meta = {}
    while lines and lines[0].startswith("#"):
        if lines[0].startswith(META_PREFIX):
            try:
                meta = json.loads(lines[0][len(META_PREFIX):])
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: unreadable metadata line ({exc})") from None
        lines = lines[1:]
    rows = list(csv.DictReader([ln for ln in lines if ln]))
    return meta, rows
