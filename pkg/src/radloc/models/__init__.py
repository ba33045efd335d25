"""Five classifiers behind one fit/predict contract.

Every kind is trained on class indices ``0..n_classes-1``. A
:class:`TrainedModel` carries the fitted feature pipeline, so ``predict``
takes raw counts and applies the same scaling used at training time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from radloc import container
from radloc.datasets import Dataset, derive_rng
from radloc.errors import ConfigError, CorruptFileError, DataError, SchemaError
from radloc.models import dtree, knn, logreg, mlp, svm
from radloc.scaling import ScalerParams, fit_scaler

KINDS = ("logreg", "svm", "knn", "dtree", "mlp")
TARGETS = ("angle", "distance")

DEFAULTS = MappingProxyType(
    {
        "logreg": {"l2": 1.0, "max_iter": 100, "memory": 10},
        "svm": {"C": 1.0, "gamma": None, "tol": 1e-3, "max_iter": 10_000},
        "knn": {"k": 5, "leaf_size": 30, "p": 2.0},
        "dtree": {"max_depth": 10, "min_samples_split": 2},
        "mlp": {
            "hidden_layers": 3,
            "hidden_size": 15,
            "epochs": 300,
            "batch_size": 32,
            "learning_rate": 1e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "epsilon": 1e-8,
            "l2": 1e-4,
        },
    }
)

_BACKENDS = {"logreg": logreg, "svm": svm, "knn": knn, "dtree": dtree, "mlp": mlp}


def _check_ranges(kind: str, hp: dict) -> None:
    def need(ok: bool, what: str):
        if not ok:
            raise ConfigError(f"{kind}: {what}")

    positive_ints = {
        "logreg": ("max_iter", "memory"),
        "svm": ("max_iter",),
        "knn": ("k", "leaf_size"),
        "dtree": ("max_depth",),
        "mlp": ("hidden_layers", "hidden_size", "epochs", "batch_size"),
    }[kind]
    for name in positive_ints:
        need(float(hp[name]) == int(hp[name]) and int(hp[name]) >= 1, f"{name} must be a positive integer")
    if kind == "logreg":
        need(hp["l2"] >= 0, "l2 must be >= 0")
    elif kind == "svm":
        need(hp["C"] > 0 and hp["tol"] > 0, "C and tol must be > 0")
        need(hp["gamma"] is None or hp["gamma"] > 0, "gamma must be > 0")
    elif kind == "knn":
        need(hp["p"] >= 1, "Minkowski p must be >= 1")
    elif kind == "dtree":
        need(int(hp["min_samples_split"]) >= 2, "min_samples_split must be >= 2")
    else:
        need(hp["learning_rate"] > 0 and hp["epsilon"] > 0 and hp["l2"] >= 0, "learning_rate, epsilon > 0; l2 >= 0")
        need(0 <= hp["beta1"] < 1 and 0 <= hp["beta2"] < 1, "betas must lie in [0, 1)")


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; choose from {', '.join(KINDS)}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        _check_ranges(self.kind, self.resolved())

    def resolved(self) -> dict:
        return {**DEFAULTS[self.kind], **self.hyperparameters}


@dataclass(frozen=True)
class LabeledMatrix:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if x.ndim != 2 or len(x) != len(y):
            raise SchemaError("features must be M x N with one label per row")
        if not np.all(np.isfinite(x)):
            raise DataError("non-finite feature value")
        if len(y) and (y.min() < 0 or y.max() >= self.n_classes or not np.all(y == np.round(y))):
            raise DataError(f"labels must be integers in [0, {self.n_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y.astype(np.int64))


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: str
    hyperparameters: dict
    scaler: ScalerParams
    classes: np.ndarray  # class value per index: degrees, or bin midpoints in metres
    target: str
    n_features: int
    parameters: dict
    provenance: dict = field(default_factory=dict)

    def predict(self, x) -> np.ndarray:
        """Class indices for raw count rows (or a single row)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n_features:
            raise SchemaError(f"feature dimension {x.shape[1]} != fitted {self.n_features}")
        z = self.scaler.transform(x)
        out = _BACKENDS[self.kind].predict(self.parameters, z, len(self.classes), self.hyperparameters)
        return out[0] if single else out

    def predict_values(self, x) -> np.ndarray:
        return np.asarray(self.classes)[self.predict(x)]


def fit(config: ModelConfig, data: LabeledMatrix) -> dict:
    """Learned parameters of ``config.kind`` on already-scaled features."""
    m = len(data.labels)
    if m < data.n_classes:
        raise DataError(f"{m} samples cannot cover {data.n_classes} classes")
    counts = np.bincount(data.labels, minlength=data.n_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise DataError(f"class(es) {empty.tolist()} have no training samples")
    rng = derive_rng(config.seed, KINDS.index(config.kind))
    return _BACKENDS[config.kind].fit(data.features, data.labels, data.n_classes, config.resolved(), rng)


def labels_for(ds: Dataset, target: str) -> tuple[np.ndarray, np.ndarray]:
    """(labels, class values) of a dataset for ``target``."""
    if target == "angle":
        return ds.angle_label, np.asarray(ds.angle_classes, dtype=float)
    if target == "distance":
        return ds.distance_label, ds.bin_spec.midpoints()
    raise ConfigError(f"unknown target {target!r}; choose from {', '.join(TARGETS)}")


def train(
    config: ModelConfig,
    counts,
    labels,
    classes,
    scaler: str = "none",
    target: str = "angle",
    p: float = 2.0,
    provenance: dict | None = None,
) -> TrainedModel:
    """Fit the scaler on ``counts``, then the model on the scaled features."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2:
        raise SchemaError("counts must be an M x N matrix")
    params = fit_scaler(scaler, counts, p)
    data = LabeledMatrix(params.transform(counts), labels, len(classes))
    return TrainedModel(
        kind=config.kind,
        hyperparameters=config.resolved(),
        scaler=params,
        classes=np.asarray(classes, dtype=float),
        target=target,
        n_features=counts.shape[1],
        parameters=fit(config, data),
        provenance=provenance or {},
    )


def train_dataset(config: ModelConfig, ds: Dataset, target: str = "angle", scaler: str = "none", **kw) -> TrainedModel:
    labels, classes = labels_for(ds, target)
    return train(config, ds.counts, labels, classes, scaler, target, **kw)


def save(model: TrainedModel, path) -> None:
    container.dump(
        {
            "format_version": container.FORMAT_VERSION,
            "kind": model.kind,
            "target": model.target,
            "n_features": model.n_features,
            "hyperparameters": model.hyperparameters,
            "scaler": model.scaler.to_dict(),
            "classes": model.classes,
            "parameters": model.parameters,
            "provenance": model.provenance,
        },
        path,
    )


def _array(v):
    return np.asarray(v) if isinstance(v, list) else v


def load(path) -> TrainedModel:
    doc = container.load(path, expect_kind=KINDS)
    try:
        hp = {**DEFAULTS[doc["kind"]], **doc["hyperparameters"]}
        model = TrainedModel(
            kind=doc["kind"],
            hyperparameters=hp,
            scaler=ScalerParams.from_dict(doc["scaler"]),
            classes=np.asarray(doc["classes"], dtype=float),
            target=doc.get("target", "angle"),
            n_features=int(doc["n_features"]),
            parameters={k: _array(v) for k, v in doc["parameters"].items()},
            provenance=doc.get("provenance", {}),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CorruptFileError(f"{path}: malformed model container ({exc})") from None
    if model.target not in TARGETS:
        raise CorruptFileError(f"{path}: unknown target {model.target!r}")
    return model


__all__ = [
    "DEFAULTS",
    "KINDS",
    "LabeledMatrix",
    "ModelConfig",
    "TrainedModel",
    "fit",
    "labels_for",
    "load",
    "save",
    "train",
    "train_dataset",
]
