"""Planar scene geometry and ray/shape path lengths.

Angles are degrees, counterclockwise from the +x axis. Lengths are meters and
attenuation coefficients are per meter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from radloc.errors import GeometryError

if TYPE_CHECKING:
    from radloc.transport import Scene

# Solid concrete, chosen so that 10 cm in front of a 1 uCi source attenuates
# exactly like 150 cm in front of a 1 Ci source.
MU_CONCRETE = math.log(1e6) / 1.40
# Strong scintillator attenuation used for detector-on-detector occlusion.
MU_DETECTOR = 50.0


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def distance_to(self, other: Point2) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class DetectorSpec:
    """One detector: a disk in the plane with a flux-capturing face.

    Defaults describe a 2-inch diameter, ~40 cm tall vertical NaI(Tl) log:
    the in-plane disk drives occlusion, ``face_area`` (diameter x height)
    drives flux capture.
    """

    center: Point2
    radius: float = 0.0254
    intrinsic_efficiency: float = 0.3
    face_area: float = 2e-2
    mu_self: float = MU_DETECTOR

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("detector radius must be positive")
        if not 0 < self.intrinsic_efficiency <= 1:
            raise GeometryError("intrinsic efficiency must lie in (0, 1]")
        if self.face_area <= 0:
            raise GeometryError("face area must be positive")
        if self.mu_self < 0:
            raise GeometryError("mu_self must be non-negative")


@dataclass(frozen=True)
class ArrayGeometry:
    """Detectors evenly spaced on a ring; list order is the feature order."""

    detectors: tuple[DetectorSpec, ...]
    ring_radius: float

    def __post_init__(self):
        object.__setattr__(self, "detectors", tuple(self.detectors))
        if len(self.detectors) < 2:
            raise GeometryError("an array needs at least two detectors")
        if self.ring_radius <= 0:
            raise GeometryError("ring radius must be positive")

    @classmethod
    def ring(
        cls,
        n_detectors: int = 8,
        ring_radius: float = 0.1,
        *,
        radius: float = 0.0254,
        intrinsic_efficiency: float = 0.3,
        face_area: float = 2e-2,
        mu_self: float = MU_DETECTOR,
    ) -> ArrayGeometry:
        """Identical detectors, detector 0 on the +x axis, counterclockwise."""
        if n_detectors < 2:
            raise GeometryError("an array needs at least two detectors")
        spacing = 2.0 * ring_radius * math.sin(math.pi / n_detectors)
        if n_detectors > 2 and spacing <= 2.0 * radius:
            raise GeometryError("detectors overlap; increase ring_radius")
        dets = []
        for i in range(n_detectors):
            phi = 2.0 * math.pi * i / n_detectors
            dets.append(
                DetectorSpec(
                    center=Point2(ring_radius * math.cos(phi), ring_radius * math.sin(phi)),
                    radius=radius,
                    intrinsic_efficiency=intrinsic_efficiency,
                    face_area=face_area,
                    mu_self=mu_self,
                )
            )
        return cls(tuple(dets), ring_radius)

    @property
    def n_detectors(self) -> int:
        return len(self.detectors)

    def centers(self) -> np.ndarray:
        return np.array([[d.center.x, d.center.y] for d in self.detectors])

    def radii(self) -> np.ndarray:
        return np.array([d.radius for d in self.detectors])


@dataclass(frozen=True)
class Obstruction:
    """Axis-aligned rectangle of homogeneous material."""

    center: Point2
    width: float
    height: float
    mu: float = MU_CONCRETE

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise GeometryError("obstruction width and height must be positive")
        if self.mu < 0:
            raise GeometryError("obstruction mu must be non-negative")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        hw, hh = self.width / 2.0, self.height / 2.0
        return (self.center.x - hw, self.center.y - hh, self.center.x + hw, self.center.y + hh)


@dataclass(frozen=True)
class SourcePose:
    distance_r: float
    angle_theta: float = field(default=0.0)

    def __post_init__(self):
        if not self.distance_r > 0:
            raise GeometryError("source distance must be positive")
        object.__setattr__(self, "angle_theta", float(self.angle_theta) % 360.0)


def polar_to_cartesian(pose: SourcePose) -> Point2:
    theta = math.radians(pose.angle_theta)
    return Point2(pose.distance_r * math.cos(theta), pose.distance_r * math.sin(theta))


def chord_lengths(a: np.ndarray, b: np.ndarray, center, radius) -> np.ndarray:
    """Vectorised segment/disk intersection lengths.

    ``a`` and ``b`` are (..., 2) arrays of segment endpoints; ``center`` and
    ``radius`` broadcast against them, so several disks can be tested at once.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(center, dtype=float)
    d = b - a
    f = a - c
    qa = np.einsum("...i,...i->...", d, d)
    qb = 2.0 * np.einsum("...i,...i->...", f, d)
    qc = np.einsum("...i,...i->...", f, f) - radius * radius
    disc = qb * qb - 4.0 * qa * qc
    hit = disc > 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (-qb - root) / (2.0 * qa)
        t1 = (-qb + root) / (2.0 * qa)
    t0 = np.clip(t0, 0.0, 1.0)
    t1 = np.clip(t1, 0.0, 1.0)
    span = np.where(hit, np.maximum(t1 - t0, 0.0), 0.0)
    return span * np.sqrt(qa)


def slab_lengths(a: np.ndarray, b: np.ndarray, bounds) -> np.ndarray:
    """Vectorised segment/axis-aligned-rectangle lengths by slab clipping."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = np.array(bounds[:2], dtype=float)
    hi = np.array(bounds[2:], dtype=float)
    d = b - a
    t_enter = np.zeros(a.shape[:-1])
    t_exit = np.ones(a.shape[:-1])
    inside = np.ones(a.shape[:-1], dtype=bool)
    for k in range(2):
        dk = d[..., k]
        ak = a[..., k]
        flat = dk == 0
        inside &= ~flat | ((ak >= lo[k]) & (ak <= hi[k]))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (lo[k] - ak) / dk
            t_hi = (hi[k] - ak) / dk
        near = np.where(flat, -np.inf, np.minimum(t_lo, t_hi))
        far = np.where(flat, np.inf, np.maximum(t_lo, t_hi))
        t_enter = np.maximum(t_enter, near)
        t_exit = np.minimum(t_exit, far)
    span = np.where(inside, np.maximum(t_exit - t_enter, 0.0), 0.0)
    return span * np.sqrt(np.einsum("...i,...i->...", d, d))


def segment_circle_chord_length(a: Point2, b: Point2, center: Point2, radius: float) -> float:
    return float(chord_lengths(a.as_array(), b.as_array(), center.as_array(), radius))


def segment_rect_length(a: Point2, b: Point2, rect: Obstruction) -> float:
    return float(slab_lengths(a.as_array(), b.as_array(), rect.bounds))


def _mu_length(mu: float, length):
    # mu may be inf for an opaque wall; inf * 0 must stay 0.
    length = np.asarray(length, dtype=float)
    return np.where(length > 0, mu * length, 0.0)


def optical_depths(a: np.ndarray, b: np.ndarray, scene: Scene, exclude=None) -> np.ndarray:
    """Sum of mu*L along segments a->b over obstructions and detectors.

    ``exclude`` names the target detector (an int, or an int array matching
    the segment batch shape); its own disk never occludes itself.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    shape = np.broadcast_shapes(a.shape, b.shape)[:-1]
    tau = np.zeros(shape)
    for obs in scene.obstructions:
        tau = tau + _mu_length(obs.mu, slab_lengths(a, b, obs.bounds))
    dets = scene.array.detectors
    active = [j for j, det in enumerate(dets) if det.mu_self != 0]
    if not active:
        return tau
    # all occluding disks in one broadcast, trailing axis indexes detectors
    centers = np.array([dets[j].center.as_array() for j in active])
    radii = np.array([dets[j].radius for j in active])
    lengths = chord_lengths(a[..., None, :], b[..., None, :], centers, radii)
    excl = None if exclude is None else np.broadcast_to(np.asarray(exclude), shape)
    for k, j in enumerate(active):
        depth = _mu_length(dets[j].mu_self, lengths[..., k])
        if excl is not None:
            depth = np.where(excl == j, 0.0, depth)
        tau = tau + depth
    return tau


def attenuation_factor(source: Point2, det_index: int, scene: Scene) -> float:
    """Beer-Lambert survival from ``source`` to the center of detector ``det_index``."""
    dets = scene.array.detectors
    if not 0 <= det_index < len(dets):
        raise IndexError(f"detector index {det_index} out of range")
    target = dets[det_index]
    if source.distance_to(target.center) <= target.radius:
        raise GeometryError(f"source lies inside detector {det_index}")
    tau = optical_depths(source.as_array(), target.center.as_array(), scene, exclude=det_index)
    return float(np.exp(-tau))


def fan_attenuation(source: Point2, scene: Scene, n_rays: int = 64) -> np.ndarray:
    """Survival per detector, averaged over rays spread uniformly across it.

    Each ray runs from ``source`` to the midpoint of its chord through the
    target disk; nodes follow the midpoint rule over the subtended half-angle
    asin(radius / distance). This is the expectation the Monte Carlo mode
    samples, so the two modes agree on partially shadowed detectors.
    """
    dets = scene.array.detectors
    src = source.as_array()
    to_center = scene.array.centers() - src
    r = np.hypot(to_center[:, 0], to_center[:, 1])
    radii = scene.array.radii()
    inside = np.flatnonzero(r <= radii)
    if inside.size:
        raise GeometryError(f"source lies inside detector {int(inside[0])}")
    base = np.arctan2(to_center[:, 1], to_center[:, 0])
    half = np.arcsin(radii / r)
    nodes = (np.arange(n_rays) + 0.5) / n_rays * 2.0 - 1.0
    offsets = half[:, None] * nodes[None, :]
    # distance along each ray to its chord midpoint is r*cos(offset)
    reach = r[:, None] * np.cos(offsets)
    ang = base[:, None] + offsets
    ends = src + np.stack([np.cos(ang), np.sin(ang)], axis=-1) * reach[..., None]
    target = np.broadcast_to(np.arange(len(dets))[:, None], offsets.shape)
    tau = optical_depths(np.broadcast_to(src, ends.shape), ends, scene, exclude=target)
    return np.exp(-tau).mean(axis=1)


def mean_attenuation(source: Point2, det_index: int, scene: Scene, n_rays: int = 64) -> float:
    """Ray-fan averaged survival for one detector; see ``fan_attenuation``."""
    if not 0 <= det_index < scene.array.n_detectors:
        raise IndexError(f"detector index {det_index} out of range")
    return float(fan_attenuation(source, scene, n_rays)[det_index])
