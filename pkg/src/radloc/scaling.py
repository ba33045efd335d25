"""Feature pipelines: raw pass-through, per-sample unit norm, robust standardization.

Unit norm works across one sample (a row); robust standardization works
across all samples of one feature (a column) and is fitted on training data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from radloc.errors import ConfigError, DataError, NumericError, SchemaError

KINDS = ("none", "unit_norm", "robust")


@dataclass(frozen=True)
class NormSpec:
    p: float = 2.0

    def __post_init__(self):
        if not self.p >= 1:
            raise ConfigError("norm order p must be >= 1")


@dataclass(frozen=True)
class RobustParams:
    median: np.ndarray
    scale: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, RobustParams):
            return NotImplemented
        return np.array_equal(self.median, other.median) and np.array_equal(self.scale, other.scale)


def fit_robust(train_features) -> RobustParams:
    """Per-column median and interquartile range (linear interpolation).

    Columns with zero IQR get scale 1 so they are only centred.
    """
    x = np.asarray(train_features, dtype=float)
    if x.ndim != 2 or x.size == 0:
        raise DataError("robust scaler needs a non-empty 2-D matrix")
    if len(x) < 4:
        raise DataError("robust scaler needs at least 4 samples")
    q1, med, q3 = np.percentile(x, [25, 50, 75], axis=0)
    scale = q3 - q1
    scale = np.where(scale > 0, scale, 1.0)
    return RobustParams(median=med, scale=scale)


def transform_robust(params: RobustParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.median.shape[0]:
        raise SchemaError(f"feature dimension {x.shape[-1]} != fitted {params.median.shape[0]}")
    return (x - params.median) / params.scale


def unit_norm(x, spec: NormSpec = NormSpec()) -> np.ndarray:
    """x / ||x||_p for a single nonzero vector."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, ord=spec.p)
    if norm == 0:
        raise NumericError("cannot unit-normalise the zero vector")
    return x / norm


def unit_norm_rows(x, spec: NormSpec = NormSpec()) -> tuple[np.ndarray, int]:
    """Row-wise unit norm; zero rows stay zero. Returns (features, n_zero_rows)."""
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, ord=spec.p, axis=-1, keepdims=True)
    zero = norms == 0
    out = np.divide(x, norms, out=np.zeros_like(x), where=~zero)
    return out, int(zero.sum())


@dataclass(frozen=True)
class ScalerParams:
    """A fitted pipeline; the container format stores ``to_dict()``."""

    kind: str = "none"
    p: float = 2.0
    robust: RobustParams | None = field(default=None)
    n_features: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scaler {self.kind!r}; choose from {', '.join(KINDS)}")

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.n_features is not None and x.shape[-1] != self.n_features:
            raise SchemaError(f"feature dimension {x.shape[-1]} != fitted {self.n_features}")
        if self.kind == "unit_norm":
            out, n_zero = unit_norm_rows(x, NormSpec(self.p))
            if n_zero:
                warnings.warn(f"{n_zero} zero-count sample(s) mapped to the zero vector", RuntimeWarning)
            return out
        if self.kind == "robust":
            return transform_robust(self.robust, x)
        return x.copy()

    def zero_rows(self, x) -> int:
        if self.kind != "unit_norm":
            return 0
        return int(np.sum(np.linalg.norm(np.asarray(x, dtype=float), ord=self.p, axis=-1) == 0))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "p": self.p, "n_features": self.n_features}
        if self.robust is not None:
            d["median"] = self.robust.median.tolist()
            d["scale"] = self.robust.scale.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ScalerParams:
        robust = None
        if d.get("median") is not None:
            robust = RobustParams(np.asarray(d["median"], dtype=float), np.asarray(d["scale"], dtype=float))
        return cls(kind=d["kind"], p=float(d.get("p", 2.0)), robust=robust, n_features=d.get("n_features"))


def fit_scaler(kind: str, train_features, p: float = 2.0) -> ScalerParams:
    x = np.asarray(train_features, dtype=float)
    n = x.shape[-1] if x.ndim == 2 else None
    if kind == "robust":
        return ScalerParams("robust", p, fit_robust(x), n)
    return ScalerParams(kind, p, None, n)
