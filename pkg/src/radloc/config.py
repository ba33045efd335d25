"""Run configuration: one YAML/JSON file, overridden by command-line flags.

Precedence, lowest first: built-in defaults, the preset's scene, the config
file, flags. Output paths are never part of the configuration, so a
provenance block replays the same run wherever its files are written.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from radloc import datasets
from radloc.datasets import ObstructionPolicy, ScenarioGrid
from radloc.errors import ConfigError
from radloc.geometry import ArrayGeometry, Obstruction, Point2
from radloc.models import KINDS, TARGETS
from radloc.scaling import KINDS as SCALERS
from radloc.transport import AcquisitionSpec, Scene, SourceSpec

DEFAULT_PRESET = "S1-small"
SCENE_KEYS = (
    "n_detectors",
    "ring_radius",
    "detector_radius",
    "efficiency",
    "face_area",
    "mu_self",
    "mu_obstruction",
    "background_rate",
    "activity",
    "live_time",
)
GRID_KEYS = ("angles", "distances", "replicates", "obstruction", "obstructions", "transport", "n_photons")
CALIBRATION_KEYS = ("replicates", "distance", "seed", "noiseless", "angles")


@dataclass(frozen=True)
class RunConfig:
    preset: str | None = None
    grid: dict = field(default_factory=dict)
    scene: dict = field(default_factory=dict)
    seed: int = 7
    scaler: str = "unit_norm"
    model: str = "knn"
    hyperparameters: dict = field(default_factory=dict)
    model_seed: int = 0
    target: str = "angle"
    test_fraction: float = 0.2
    split_seed: int = 42
    calibration: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.preset is not None and self.preset.upper() not in {p.upper() for p in datasets.PRESETS}:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {', '.join(datasets.PRESETS)}")
        if self.scaler not in SCALERS:
            raise ConfigError(f"unknown scaler {self.scaler!r}; choose from {', '.join(SCALERS)}")
        if self.model not in KINDS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(KINDS)}")
        if self.target not in TARGETS:
            raise ConfigError(f"unknown target {self.target!r}; choose from {', '.join(TARGETS)}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie strictly between 0 and 1")
        for name, allowed in (("scene", SCENE_KEYS), ("grid", GRID_KEYS), ("calibration", CALIBRATION_KEYS)):
            unknown = set(getattr(self, name)) - set(allowed)
            if unknown:
                raise ConfigError(f"unknown {name} keys {sorted(unknown)}")

    @property
    def describes_scene(self) -> bool:
        """True when the configuration pins down an array, not just defaults."""
        return bool(self.preset or self.scene or self.grid)

    def to_dict(self) -> dict:
        return asdict(self)


def from_mapping(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    names = {f.name for f in fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from None
    return from_mapping(data or {})


def override(cfg: RunConfig, **flags) -> RunConfig:
    """Apply flag values that were actually given (None means not given)."""
    given = {k: v for k, v in flags.items() if v is not None}
    return replace(cfg, **given) if given else cfg


def _values(spec, what: str) -> tuple[float, ...]:
    """A list of values or a {start, stop, step} range (stop inclusive)."""
    if isinstance(spec, dict):
        try:
            start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{what} range needs numeric start, stop and step") from None
        if step <= 0 or stop < start:
            raise ConfigError(f"{what} range must have step > 0 and stop >= start")
        n = int(np.floor((stop - start) / step + 1e-9))
        return tuple(round(start + step * i, 10) for i in range(n + 1))
    if isinstance(spec, (list, tuple)) and spec:
        return tuple(float(v) for v in spec)
    raise ConfigError(f"{what} must be a non-empty list or a start/stop/step range")


def _scene_values(scene: Scene) -> dict:
    det = scene.array.detectors[0]
    return {
        "n_detectors": scene.array.n_detectors,
        "ring_radius": scene.array.ring_radius,
        "detector_radius": det.radius,
        "efficiency": det.intrinsic_efficiency,
        "face_area": det.face_area,
        "mu_self": det.mu_self,
        "background_rate": scene.acquisition.background_rate,
        "activity": scene.source.activity,
        "live_time": scene.acquisition.live_time,
    }


def _obstruction(d, mu) -> Obstruction:
    try:
        kw = {"mu": float(d.get("mu", mu))} if (mu is not None or "mu" in d) else {}
        return Obstruction(Point2(float(d["x"]), float(d["y"])), float(d["width"]), float(d["height"]), **kw)
    except (KeyError, TypeError, AttributeError):
        raise ConfigError("obstructions need x, y, width and height") from None


def build(cfg: RunConfig) -> tuple[ScenarioGrid, Scene]:
    """Scenario grid and scene template described by ``cfg``."""
    grid, scene = datasets.preset(cfg.preset or DEFAULT_PRESET, seed=cfg.seed)
    values = {**_scene_values(scene), **cfg.scene}
    mu_obs = values.pop("mu_obstruction", None)
    try:
        array = ArrayGeometry.ring(
            int(values["n_detectors"]),
            float(values["ring_radius"]),
            radius=float(values["detector_radius"]),
            intrinsic_efficiency=float(values["efficiency"]),
            face_area=float(values["face_area"]),
            mu_self=float(values["mu_self"]),
        )
        scene = Scene(
            array=array,
            source=SourceSpec(activity=float(values["activity"])),
            acquisition=AcquisitionSpec(float(values["live_time"]), float(values["background_rate"])),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad scene parameter: {exc}") from None

    g = cfg.grid
    policy = grid.obstruction_policy
    if "obstruction" in g or "obstructions" in g:
        kind = g.get("obstruction", "fixed" if g.get("obstructions") else "none")
        obs = tuple(_obstruction(o, mu_obs) for o in g.get("obstructions", ()))
        if kind != "none" and not obs:
            obs = policy.obstructions or datasets.moving_candidates()
        policy = ObstructionPolicy(kind, obs if kind != "none" else ())
    if mu_obs is not None:
        policy = replace(policy, obstructions=tuple(replace(o, mu=float(mu_obs)) for o in policy.obstructions))
    grid = ScenarioGrid(
        angles=_values(g["angles"], "angles") if "angles" in g else grid.angles,
        distances=_values(g["distances"], "distances") if "distances" in g else grid.distances,
        obstruction_policy=policy,
        replicates=int(g.get("replicates", grid.replicates)),
        transport_mode=g.get("transport", grid.transport_mode),
        n_photons=int(g.get("n_photons", grid.n_photons)),
        seed=int(cfg.seed),
    )
    return grid, scene


def calibration(cfg: RunConfig, grid: ScenarioGrid) -> dict:
    c = {"replicates": 100, "distance": 2.0, "seed": 0, "noiseless": False, **cfg.calibration}
    c["angles"] = _values(c["angles"], "calibration angles") if "angles" in c else grid.angles
    return c
