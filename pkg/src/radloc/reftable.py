"""Reference-table baseline: calibrate responses vs angle, predict by least squares."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from radloc import container
from radloc.datasets import derive_rng
from radloc.errors import ConfigError, CorruptFileError, SchemaError
from radloc.geometry import SourcePose
from radloc.scaling import unit_norm_rows
from radloc.transport import Scene, expected_counts

KIND = "reference_table"
CALIBRATION_DISTANCE = 2.0


@dataclass(frozen=True)
class ReferenceTable:
    calib_angles: np.ndarray
    responses: np.ndarray  # (n_angles, n_detectors) mean counts
    calib_distance: float
    calib_activity: float
    calib_time: float
    provenance: dict = field(default_factory=dict, compare=False)

    def __eq__(self, other):
        if not isinstance(other, ReferenceTable):
            return NotImplemented
        return (
            np.array_equal(self.calib_angles, other.calib_angles)
            and np.array_equal(self.responses, other.responses)
            and (self.calib_distance, self.calib_activity, self.calib_time)
            == (other.calib_distance, other.calib_activity, other.calib_time)
        )

    __hash__ = None

    @property
    def n_detectors(self) -> int:
        return self.responses.shape[1]

    def predict(self, x, normalized: bool = False) -> np.ndarray:
        return predict_angles(self, x, normalized)


def calibrate(
    scene_template: Scene,
    angles,
    replicates: int = 100,
    seed: int = 0,
    distance: float = CALIBRATION_DISTANCE,
    noiseless: bool = False,
) -> ReferenceTable:
    """Mean of ``replicates`` Poisson count vectors per angle at a fixed distance.

    ``noiseless`` stores the expected counts directly.
    """
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    angles = np.sort(np.asarray(angles, dtype=float))
    rows = []
    for i, a in enumerate(angles):
        scene = scene_template.with_pose(SourcePose(distance, a))
        lam = expected_counts(scene)
        if noiseless:
            rows.append(lam)
        else:
            draws = derive_rng(seed, i).poisson(lam, size=(replicates, len(lam)))
            rows.append(draws.mean(axis=0))
    return ReferenceTable(
        calib_angles=angles,
        responses=np.array(rows),
        calib_distance=float(distance),
        calib_activity=scene_template.source.activity,
        calib_time=scene_template.acquisition.live_time,
    )


def _sse(table: ReferenceTable, x: np.ndarray, normalized: bool) -> np.ndarray:
    g = table.responses
    if normalized:
        g, _ = unit_norm_rows(g)
        x, _ = unit_norm_rows(x)
    out = np.empty((len(x), len(g)))
    for start in range(0, len(x), 1024):
        chunk = x[start:start + 1024]
        out[start:start + 1024] = ((chunk[:, None, :] - g[None, :, :]) ** 2).sum(axis=-1)
    return out


def predict_angles(table: ReferenceTable, x, normalized: bool = False) -> np.ndarray:
    """Calibration angle minimising sum((row - x)^2) per query; ties go to the smaller angle.

    ``normalized`` compares unit-norm rows and queries instead of raw counts.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != table.n_detectors:
        raise SchemaError(f"query has {x.shape[1]} detectors, table has {table.n_detectors}")
    # rows are sorted by angle and argmin takes the first minimum
    return table.calib_angles[np.argmin(_sse(table, x, normalized), axis=1)]


def predict_angle(table: ReferenceTable, x, normalized: bool = False) -> float:
    return float(predict_angles(table, x, normalized)[0])


def save(table: ReferenceTable, path) -> None:
    container.dump(
        {
            "format_version": container.FORMAT_VERSION,
            "kind": KIND,
            "target": "angle",
            "hyperparameters": {
                "calib_distance": table.calib_distance,
                "calib_activity": table.calib_activity,
                "calib_time": table.calib_time,
            },
            "scaler": {"kind": "none"},
            "classes": table.calib_angles,
            "parameters": {"responses": table.responses},
            "provenance": table.provenance,
        },
        path,
    )


def load(path) -> ReferenceTable:
    doc = container.load(path, expect_kind=KIND)
    hp = doc["hyperparameters"]
    try:
        table = ReferenceTable(
            calib_angles=np.asarray(doc["classes"], dtype=float),
            responses=np.asarray(doc["parameters"]["responses"], dtype=float),
            calib_distance=float(hp["calib_distance"]),
            calib_activity=float(hp["calib_activity"]),
            calib_time=float(hp["calib_time"]),
            provenance=doc.get("provenance", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"{path}: malformed reference table ({exc})") from None
    if table.responses.ndim != 2 or len(table.responses) != len(table.calib_angles):
        raise CorruptFileError(f"{path}: responses do not match calibration angles")
    return table


def with_provenance(table: ReferenceTable, block: dict) -> ReferenceTable:
    return replace(table, provenance=block)
