"""Analytic test scenes with exact ray-cast ground truth.

Three convex primitives viewed from inside -- a box room, an infinite
cylinder tunnel along the x axis, and a sphere -- are enough to exercise
the codec end to end: each admits a closed-form first-hit distance, so a
scan's true per-ray radii are known to machine precision.  Optional
Gaussian range noise (seeded) perturbs the returned cloud but never the
stored truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    Pose,
    SensorModel,
    make_query_grid,
    rotation_matrix,
    spherical_to_cartesian,
)


@dataclass(frozen=True)
class BoxScene:
    """Axis-aligned room centered at the origin; extents are full lengths."""

    extents: tuple[float, float, float] = (8.0, 8.0, 4.0)
    noise_std: float = 0.0

    def __post_init__(self):
        if any(e <= 0 for e in self.extents) or self.noise_std < 0:
            raise ValueError("extents must be positive and noise_std >= 0")

    def contains(self, point: np.ndarray) -> bool:
        half = 0.5 * np.asarray(self.extents)
        return bool(np.all(np.abs(point) < half))

    def first_hit(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        half = 0.5 * np.asarray(self.extents)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_axis = (np.sign(directions) * half - origin) / directions
        t_axis = np.where(directions == 0, np.inf, t_axis)
        return np.min(t_axis, axis=1)


@dataclass(frozen=True)
class CylinderScene:
    """Infinite tunnel along the x axis."""

    radius: float = 3.0
    noise_std: float = 0.0

    def __post_init__(self):
        if self.radius <= 0 or self.noise_std < 0:
            raise ValueError("radius must be positive and noise_std >= 0")

    def contains(self, point: np.ndarray) -> bool:
        return bool(point[1] ** 2 + point[2] ** 2 < self.radius**2)

    def first_hit(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        q = directions[:, 1] ** 2 + directions[:, 2] ** 2
        b = origin[1] * directions[:, 1] + origin[2] * directions[:, 2]
        c0 = origin[1] ** 2 + origin[2] ** 2 - self.radius**2
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (-b + np.sqrt(b * b - q * c0)) / q
        return np.where(q == 0, np.inf, t)


@dataclass(frozen=True)
class SphereScene:
    """Hollow sphere viewed from inside."""

    radius: float = 5.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise_std: float = 0.0

    def __post_init__(self):
        if self.radius <= 0 or self.noise_std < 0:
            raise ValueError("radius must be positive and noise_std >= 0")

    def contains(self, point: np.ndarray) -> bool:
        offset = point - np.asarray(self.center)
        return bool(offset @ offset < self.radius**2)

    def first_hit(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        offset = origin - np.asarray(self.center)
        b = directions @ offset
        c0 = offset @ offset - self.radius**2
        return -b + np.sqrt(b * b - c0)


Scene = BoxScene | CylinderScene | SphereScene


@dataclass(frozen=True, eq=False)
class GroundTruthScan:
    """A noisy scan plus the exact per-ray radii it was generated from.

    cloud is in the sensor body frame; true_radii aligns with
    make_query_grid(sensor, 1) and holds NaN where the ray had no return.
    """

    cloud: np.ndarray
    true_radii: np.ndarray
    pose: Pose
    sensor: SensorModel

    @property
    def return_mask(self) -> np.ndarray:
        return np.isfinite(self.true_radii)


def generate_scan(scene: Scene, pose: Pose, sensor: SensorModel,
                  seed: int = 0) -> GroundTruthScan:
    """Cast every sensor ray against the scene and assemble a scan.

    Hits at or beyond r_max become no-returns; the rest get seeded
    Gaussian range noise (scene.noise_std) clamped into [r_min, r_max).
    """
    origin = pose.translation
    if not scene.contains(origin):
        raise ValueError("sensor pose lies outside the scene's free space")
    grid = make_query_grid(sensor, 1)
    dirs_body = spherical_to_cartesian(
        np.column_stack([grid, np.ones(grid.shape[0])])
    )
    dirs_world = dirs_body @ rotation_matrix(pose).T
    t = scene.first_hit(origin, dirs_world)
    true_radii = np.where(t < sensor.r_max, t, np.nan)

    hit = np.isfinite(true_radii)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, scene.noise_std, size=int(np.sum(hit)))
    radii = true_radii[hit] + noise
    radii = np.clip(radii, sensor.r_min, sensor.r_max * (1.0 - 1e-9))
    cloud = dirs_body[hit] * radii[:, None]
    return GroundTruthScan(cloud, true_radii, pose, sensor)


def parse_scene(text: str) -> Scene:
    """Build a scene from "key=value" lines (";" also separates pairs).

    variant selects the primitive: box (extents=ex,ey,ez), cylinder
    (radius), or sphere (radius, center=cx,cy,cz); noise_std is common.
    """
    pairs: dict[str, str] = {}
    for chunk in text.replace(";", "\n").splitlines():
        chunk = chunk.strip()
        if not chunk or chunk.startswith("#"):
            continue
        if "=" not in chunk:
            raise ValueError(f"expected key=value, got {chunk!r}")
        key, value = chunk.split("=", 1)
        pairs[key.strip()] = value.strip()
    variant = pairs.pop("variant", None)
    if variant is None:
        raise ValueError("scene config needs a variant=box|cylinder|sphere line")
    noise = float(pairs.pop("noise_std", 0.0))
    if variant == "box":
        extents = _parse_vector(pairs.pop("extents", "8,8,4"))
        scene: Scene = BoxScene(extents, noise)
    elif variant == "cylinder":
        scene = CylinderScene(float(pairs.pop("radius", 3.0)), noise)
    elif variant == "sphere":
        scene = SphereScene(
            float(pairs.pop("radius", 5.0)),
            _parse_vector(pairs.pop("center", "0,0,0")),
            noise,
        )
    else:
        raise ValueError(f"unknown scene variant {variant!r}")
    if pairs:
        raise ValueError(f"unused scene keys: {sorted(pairs)}")
    return scene


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scene(fh.read())


def _parse_vector(value: str) -> tuple[float, float, float]:
    sep = "x" if "x" in value else ","
    parts = [float(p) for p in value.split(sep)]
    if len(parts) != 3:
        raise ValueError(f"expected three components, got {value!r}")
    return tuple(parts)
