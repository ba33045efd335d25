"""Scenario grids, labelled count datasets, splits and CSV persistence."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from radloc import __version__
from radloc.container import plain
from radloc.errors import CellError, ConfigError, DataError, HeaderError, NumericError, WidthError
from radloc.geometry import ArrayGeometry, Obstruction, Point2, SourcePose
from radloc.transport import AcquisitionSpec, Scene, SourceSpec, expected_counts, mc_counts

FIXED_COLUMNS = ("true_angle_deg", "true_distance_m", "angle_class", "distance_bin", "obstruction_id")
META_PREFIX = "# radloc-dataset "


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent PCG64 stream for ``keys`` under ``seed`` (SeedSequence hashing)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


# --------------------------------------------------------------------------- bins


@dataclass(frozen=True)
class BinSpec:
    edges: tuple[float, ...]
    width: float

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise DataError("bin edges must be strictly increasing")
        if not self.width > 0:
            raise DataError("bin width must be positive")

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    def midpoints(self) -> np.ndarray:
        e = np.asarray(self.edges)
        return (e[:-1] + e[1:]) / 2.0

    def bin_index(self, values) -> np.ndarray:
        """Bin containing each value; the last bin is closed on the right."""
        idx = np.searchsorted(np.asarray(self.edges), np.asarray(values, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1)


def fd_bin_spec(values) -> BinSpec:
    """Freedman-Diaconis binning: width = 2 IQR n^(-1/3).

    Quartiles use linear interpolation between order statistics. Edges start
    at min(values) and step by the width; the final edge is clamped to max.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 4:
        raise DataError("Freedman-Diaconis binning needs at least 4 values")
    q1, q3 = np.percentile(v, [25, 75])
    iqr = q3 - q1
    if iqr <= 0:
        raise NumericError("degenerate distance distribution: IQR is zero")
    width = 2.0 * iqr / v.size ** (1.0 / 3.0)
    lo, hi = float(v.min()), float(v.max())
    n_bins = max(1, math.ceil((hi - lo) / width))
    edges = lo + width * np.arange(n_bins + 1)
    edges[-1] = hi
    return BinSpec(tuple(edges), float(width))


# --------------------------------------------------------------------------- grids


@dataclass(frozen=True)
class ObstructionPolicy:
    """``none``, ``fixed`` (all listed obstructions always present) or
    ``moving`` (one candidate drawn uniformly per sample)."""

    kind: str = "none"
    obstructions: tuple[Obstruction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obstructions", tuple(self.obstructions))
        if self.kind not in ("none", "fixed", "moving"):
            raise ConfigError(f"unknown obstruction policy {self.kind!r}")
        if self.kind != "none" and not self.obstructions:
            raise ConfigError(f"{self.kind} obstruction policy needs obstructions")

    def layouts(self) -> list[tuple[Obstruction, ...]]:
        if self.kind == "none":
            return [()]
        if self.kind == "fixed":
            return [self.obstructions]
        return [(o,) for o in self.obstructions]


@dataclass(frozen=True)
class ScenarioGrid:
    angles: tuple[float, ...]
    distances: tuple[float, ...]
    obstruction_policy: ObstructionPolicy = field(default_factory=ObstructionPolicy)
    replicates: int = 1
    transport_mode: str = "poisson"  # poisson | expected | monte_carlo
    n_photons: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        if not self.angles or not self.distances:
            raise ConfigError("scenario grid needs at least one angle and one distance")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.transport_mode not in ("poisson", "expected", "monte_carlo"):
            raise ConfigError(f"unknown transport mode {self.transport_mode!r}")

    @property
    def size(self) -> int:
        return len(self.angles) * len(self.distances) * self.replicates

    def describe(self) -> dict:
        d = asdict(self)
        d["obstruction_policy"] = {
            "kind": self.obstruction_policy.kind,
            "obstructions": [_obstruction_dict(o) for o in self.obstruction_policy.obstructions],
        }
        return d


def _obstruction_dict(o: Obstruction) -> dict:
    return {"center": [o.center.x, o.center.y], "width": o.width, "height": o.height, "mu": o.mu}


# --------------------------------------------------------------------------- data


@dataclass(frozen=True)
class Sample:
    counts: np.ndarray
    angle_label: int
    distance_label: int
    true_angle: float
    true_distance: float
    obstruction_id: int | None


@dataclass
class Dataset:
    """Column-oriented sample store; ``obstruction_id`` uses -1 for none."""

    counts: np.ndarray
    true_angle: np.ndarray
    true_distance: np.ndarray
    angle_label: np.ndarray
    distance_label: np.ndarray
    obstruction_id: np.ndarray
    angle_classes: np.ndarray
    bin_spec: BinSpec
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2:
            self.counts = self.counts.reshape(len(self.counts), -1)
        self.true_angle = np.asarray(self.true_angle, dtype=float)
        self.true_distance = np.asarray(self.true_distance, dtype=float)
        self.angle_label = np.asarray(self.angle_label, dtype=np.int64)
        self.distance_label = np.asarray(self.distance_label, dtype=np.int64)
        self.obstruction_id = np.asarray(self.obstruction_id, dtype=np.int64)
        self.angle_classes = np.asarray(self.angle_classes, dtype=float)
        m = len(self.counts)
        for name in ("true_angle", "true_distance", "angle_label", "distance_label", "obstruction_id"):
            if len(getattr(self, name)) != m:
                raise WidthError(f"column {name} has {len(getattr(self, name))} rows, expected {m}")
        if m and (self.angle_label.max() >= len(self.angle_classes) or self.angle_label.min() < 0):
            raise DataError("angle label outside the class list")
        if m and (self.distance_label.max() >= self.bin_spec.n_bins or self.distance_label.min() < 0):
            raise DataError("distance label outside the bin list")

    def __len__(self) -> int:
        return len(self.counts)

    def __getitem__(self, i: int) -> Sample:
        oid = int(self.obstruction_id[i])
        return Sample(
            counts=self.counts[i],
            angle_label=int(self.angle_label[i]),
            distance_label=int(self.distance_label[i]),
            true_angle=float(self.true_angle[i]),
            true_distance=float(self.true_distance[i]),
            obstruction_id=None if oid < 0 else oid,
        )

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        arrays = ("counts", "true_angle", "true_distance", "angle_label", "distance_label",
                  "obstruction_id", "angle_classes")
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and self.counts.shape == other.counts.shape
            and self.bin_spec == other.bin_spec
            and self.provenance == other.provenance
        )

    @property
    def samples(self) -> list[Sample]:
        return list(self)

    @property
    def n_features(self) -> int:
        return self.counts.shape[1]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self,
            counts=self.counts[idx],
            true_angle=self.true_angle[idx],
            true_distance=self.true_distance[idx],
            angle_label=self.angle_label[idx],
            distance_label=self.distance_label[idx],
            obstruction_id=self.obstruction_id[idx],
        )


# --------------------------------------------------------------------------- generation


def generate(grid: ScenarioGrid, scene_template: Scene, n_workers: int = 1) -> Dataset:
    """One sample per (angle, distance, replicate), angle-major order.

    Every sample draws from its own stream derived from (grid.seed, index),
    so the result does not depend on ``n_workers``. Under a moving policy the
    obstruction is drawn first from that stream, then the counts.
    """
    layouts = grid.obstruction_policy.layouts()
    moving = grid.obstruction_policy.kind == "moving"
    n_det = scene_template.array.n_detectors
    m = grid.size
    angles = np.repeat(np.asarray(grid.angles), len(grid.distances) * grid.replicates)
    dists = np.tile(np.repeat(np.asarray(grid.distances), grid.replicates), len(grid.angles))
    angle_label = np.repeat(np.arange(len(grid.angles)), len(grid.distances) * grid.replicates)

    lam_cache: dict[tuple[int, int, int], np.ndarray] = {}

    def scene_for(ai: int, di: int, layout: int) -> Scene:
        pose = SourcePose(grid.distances[di], grid.angles[ai])
        return replace(scene_template, source=replace(scene_template.source, pose=pose),
                       obstructions=layouts[layout])

    def one(i: int):
        rng = derive_rng(grid.seed, i)
        ai = i // (len(grid.distances) * grid.replicates)
        di = (i // grid.replicates) % len(grid.distances)
        layout = int(rng.integers(len(layouts))) if moving else 0
        if grid.transport_mode == "monte_carlo":
            counts = mc_counts(scene_for(ai, di, layout), grid.n_photons, int(rng.integers(2**63)))
        else:
            key = (ai, di, layout)
            lam = lam_cache.get(key)
            if lam is None:
                lam = lam_cache[key] = expected_counts(scene_for(ai, di, layout))
            counts = lam if grid.transport_mode == "expected" else rng.poisson(lam)
        return counts, layout

    if n_workers > 1 and m > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(one, range(m), chunksize=256))
    else:
        results = [one(i) for i in range(m)]

    dtype = float if grid.transport_mode == "expected" else np.int64
    counts = np.array([r[0] for r in results], dtype=dtype).reshape(m, n_det)
    if grid.obstruction_policy.kind == "none":
        oid = np.full(m, -1, dtype=np.int64)
    else:
        oid = np.array([r[1] for r in results], dtype=np.int64)

    if len(set(grid.distances)) > 1:
        bins = fd_bin_spec(dists)
    else:
        d = grid.distances[0]
        bins = BinSpec((d - 0.5, d + 0.5), 1.0)
    return Dataset(
        counts=counts,
        true_angle=angles,
        true_distance=dists,
        angle_label=angle_label,
        distance_label=bins.bin_index(dists),
        obstruction_id=oid,
        angle_classes=np.asarray(grid.angles),
        bin_spec=bins,
        provenance=plain({"grid": grid.describe()}),
    )


# --------------------------------------------------------------------------- presets


def _scene(n_detectors: int, activity: float, live_time: float, **array_kw) -> Scene:
    return Scene(
        array=ArrayGeometry.ring(n_detectors, **array_kw),
        source=SourceSpec(activity=activity),
        acquisition=AcquisitionSpec(live_time=live_time),
    )


def moving_candidates() -> tuple[Obstruction, ...]:
    """Ten 0.5 m x 2 m concrete footprints scattered over the 0-90 degree quadrant."""
    out = []
    for k in range(10):
        phi = math.radians(6.0 + 8.5 * k)
        r = 3.0 + 1.5 * (k % 4)
        out.append(Obstruction(Point2(r * math.cos(phi), r * math.sin(phi)), 0.5, 2.0))
    return tuple(out)


S2_OBSTRUCTION = Obstruction(Point2(5.0, 3.0), 1.0, 2.0)
L2_OBSTRUCTION = Obstruction(Point2(1.5, 0.9), 0.5, 2.0)


def _arange(start: float, stop: float, step: float) -> tuple[float, ...]:
    n = int(round((stop - start) / step))
    return tuple(round(start + step * i, 10) for i in range(n + 1))


def preset(name: str, seed: int = 7, replicates: int | None = None) -> tuple[ScenarioGrid, Scene]:
    """Named scenario presets; ``-small`` variants are desk scale.

    S1/S2/S3: 8 detectors, 10 uCi, 14 s. S1 is obstruction free, S2 has one
    fixed 1 x 2 m block, S3 draws one of ten 0.5 x 2 m blocks per sample and
    only spans 0-90 degrees. L1/L2: 4 detectors, 1 uCi, 5 minute counts,
    0-90 degrees in 15 degree steps, 0.5-3 m; L2 adds a fixed block.
    """
    key = name.upper()
    s_scene = _scene(8, 10e-6, 14.0)
    l_scene = _scene(4, 1e-6, 300.0)
    none = ObstructionPolicy()
    s2 = ObstructionPolicy("fixed", (S2_OBSTRUCTION,))
    s3 = ObstructionPolicy("moving", moving_candidates())
    small_d = _arange(1.0, 15.0, 0.5)
    full_d = tuple(float(x) for x in np.round(np.linspace(1.0, 15.0, 200), 10))
    s3_full_d = tuple(float(x) for x in np.round(np.linspace(1.0, 15.0, 100), 10))
    lab_d = _arange(0.5, 3.0, 0.5)
    lab_a = _arange(0.0, 90.0, 15.0)
    table = {
        "S1": (_arange(0.0, 359.0, 1.0), full_d, none, 1, s_scene),
        "S2": (_arange(0.0, 359.0, 1.0), full_d, s2, 1, s_scene),
        "S3": (_arange(0.0, 89.0, 1.0), s3_full_d, s3, 3, s_scene),
        "S1-SMALL": (_arange(0.0, 355.0, 5.0), small_d, none, 5, s_scene),
        "S2-SMALL": (_arange(0.0, 355.0, 5.0), small_d, s2, 5, s_scene),
        "S3-SMALL": (_arange(0.0, 90.0, 5.0), small_d, s3, 5, s_scene),
        "L1": (lab_a, lab_d, none, 3, l_scene),
        "L2": (lab_a, lab_d, ObstructionPolicy("fixed", (L2_OBSTRUCTION,)), 3, l_scene),
    }
    if key not in table:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    angles, dists, policy, reps, scene = table[key]
    grid = ScenarioGrid(angles, dists, policy, replicates if replicates else reps, seed=seed)
    return grid, scene


PRESETS = ("S1", "S2", "S3", "S1-small", "S2-small", "S3-small", "L1", "L2")


# --------------------------------------------------------------------------- split


def split(ds: Dataset, test_fraction: float = 0.2, seed: int = 42) -> tuple[Dataset, Dataset]:
    """Stratified by angle class.

    The test total is round(test_fraction * M); each class receives the floor
    of its quota plus one extra for the largest remainders (ties broken by
    class order), so per-class proportions are exact to within one sample.
    """
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(ds.angle_label, return_counts=True)
    if counts.size and counts.min() < 2:
        bad = int(classes[np.argmin(counts)])
        raise DataError(f"angle class {bad} has fewer than 2 samples; cannot stratify")
    quota = counts * test_fraction
    n_test = np.floor(quota).astype(int)
    short = int(round(test_fraction * len(ds))) - int(n_test.sum())
    if short > 0:
        order = np.lexsort((np.arange(len(quota)), -(quota - n_test)))
        n_test[order[:short]] += 1
    n_test = np.clip(n_test, 1, counts - 1)
    test_idx = []
    for c, k in zip(classes, n_test):
        members = np.flatnonzero(ds.angle_label == c)
        test_idx.append(rng.permutation(members)[:k])
    test_idx = np.sort(np.concatenate(test_idx)) if test_idx else np.array([], dtype=np.int64)
    mask = np.ones(len(ds), dtype=bool)
    mask[test_idx] = False
    return ds.subset(np.flatnonzero(mask)), ds.subset(test_idx)


# --------------------------------------------------------------------------- csv


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(ds: Dataset, path) -> None:
    """UTF-8, comma separated, LF endings; one metadata comment line precedes the header."""
    n = ds.n_features
    meta = {
        "format": "radloc-dataset",
        "version": __version__,
        "angle_classes": [float(a) for a in ds.angle_classes],
        "bin_edges": list(ds.bin_spec.edges),
        "bin_width": ds.bin_spec.width,
        "count_type": "int" if np.issubdtype(ds.counts.dtype, np.integer) else "float",
        "provenance": ds.provenance,
    }
    buf = io.StringIO(newline="")
    buf.write(META_PREFIX + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"det_{i}" for i in range(n)] + list(FIXED_COLUMNS))
    for i in range(len(ds)):
        oid = int(ds.obstruction_id[i])
        writer.writerow(
            [_fmt(c) for c in ds.counts[i]]
            + [
                _fmt(float(ds.true_angle[i])),
                _fmt(float(ds.true_distance[i])),
                str(int(ds.angle_label[i])),
                str(int(ds.distance_label[i])),
                "" if oid < 0 else str(oid),
            ]
        )
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


def _parse(cell: str, kind, row: int, col: str):
    try:
        return kind(cell)
    except ValueError:
        raise CellError(f"row {row}, column {col}: non-numeric cell {cell!r}") from None


def read_csv(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    meta = None
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        if lines[start].startswith(META_PREFIX):
            try:
                meta = json.loads(lines[start][len(META_PREFIX):])
            except json.JSONDecodeError as exc:
                raise HeaderError(f"unreadable metadata line: {exc}") from None
        start += 1
    rows = list(csv.reader(lines[start:]))
    rows = [r for r in rows if r]
    if not rows:
        raise HeaderError("missing header row")
    header = rows[0]
    n = len(header) - len(FIXED_COLUMNS)
    expected = [f"det_{i}" for i in range(max(n, 0))] + list(FIXED_COLUMNS)
    if n < 1 or header != expected:
        raise HeaderError(f"unexpected header {header!r}")

    int_counts = meta is None or meta.get("count_type", "int") == "int"
    counts, angle, dist, alab, dlab, oid = [], [], [], [], [], []
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise WidthError(f"row {r} has {len(row)} cells, header has {len(header)}")
        ckind = int if int_counts else float
        counts.append([_parse(c, ckind, r, header[j]) for j, c in enumerate(row[:n])])
        angle.append(_parse(row[n], float, r, FIXED_COLUMNS[0]))
        dist.append(_parse(row[n + 1], float, r, FIXED_COLUMNS[1]))
        alab.append(_parse(row[n + 2], int, r, FIXED_COLUMNS[2]))
        dlab.append(_parse(row[n + 3], int, r, FIXED_COLUMNS[3]))
        oid.append(-1 if row[n + 4] == "" else _parse(row[n + 4], int, r, FIXED_COLUMNS[4]))

    counts_arr = np.array(counts, dtype=np.int64 if int_counts else float).reshape(len(counts), n)
    if meta is not None:
        classes = np.asarray(meta["angle_classes"], dtype=float)
        bins = BinSpec(tuple(meta["bin_edges"]), meta["bin_width"])
        provenance = meta.get("provenance", {})
    else:
        classes = np.unique(np.asarray(angle, dtype=float))
        bins = fd_bin_spec(dist)
        provenance = {}
    return Dataset(counts_arr, angle, dist, alab, dlab, oid, classes, bins, provenance)
