"""Spherical geometry for LiDAR occupancy surfaces.

Conventions used throughout the package:

- azimuth   theta = atan2(y, x), in (-pi, pi]
- inclination alpha = arccos(z / r), in [0, pi]  (0 along +z, pi/2 horizontal)
- a return at radius r < r_oc maps to occupancy y = r_oc - r on the
  sphere of radius r_oc around the sensor; unobserved directions have
  occupancy zero by convention.

Pointclouds are (N, 3) float arrays of cartesian x, y, z in meters.
Spherical arrays are (N, 3) columns (azimuth, inclination, radius);
surface samples are (N, 3) columns (azimuth, inclination, occupancy).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class SensorModel:
    """Scan pattern of a spinning multi-channel LiDAR.

    azimuth_resolution: angular step between firings, radians.
    inclination_channels: strictly increasing channel inclinations, radians.
    r_min / r_max: usable range band in meters; r_max doubles as the
    occupancy-surface radius r_oc.
    """

    azimuth_resolution: float
    inclination_channels: np.ndarray
    r_min: float = 0.4
    r_max: float = 10.0

    def __post_init__(self):
        channels = np.asarray(self.inclination_channels, dtype=float)
        object.__setattr__(self, "inclination_channels", channels)
        if self.azimuth_resolution <= 0:
            raise ValueError("azimuth_resolution must be positive")
        if channels.ndim != 1 or channels.size == 0:
            raise ValueError("inclination_channels must be a non-empty 1-D sequence")
        if np.any(np.diff(channels) <= 0):
            raise ValueError("inclination_channels must be strictly increasing")
        if not (0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")

    @property
    def azimuth_steps(self) -> int:
        return int(round(2.0 * np.pi / self.azimuth_resolution))

    @property
    def cells_per_scan(self) -> int:
        return self.azimuth_steps * self.inclination_channels.size


def desk_sensor() -> SensorModel:
    """16 channels at 75..105 deg inclination, 1 deg azimuth step (5760 rays)."""
    channels = np.radians(np.arange(75.0, 105.0 + 1e-9, 2.0))
    return SensorModel(np.radians(1.0), channels)


def vlp16_sensor(azimuth_resolution_deg: float = 0.1) -> SensorModel:
    """VLP-16-like pattern: +-15 deg elevation band, 0.1 deg azimuth (57600 rays)."""
    channels = np.radians(np.arange(75.0, 105.0 + 1e-9, 2.0))
    return SensorModel(np.radians(azimuth_resolution_deg), channels)


@dataclass(frozen=True)
class Pose:
    """Rigid sensor pose: translation in meters, intrinsic Z-Y-X Euler angles."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("pose values must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.roll, self.pitch, self.yaw])

    @classmethod
    def from_array(cls, values) -> "Pose":
        x, y, z, roll, pitch, yaw = (float(v) for v in values)
        return cls(x, y, z, roll, pitch, yaw)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def rotation_matrix(pose: Pose) -> np.ndarray:
    """Body-to-world rotation R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = np.cos(pose.roll), np.sin(pose.roll)
    cp, sp = np.cos(pose.pitch), np.sin(pose.pitch)
    cy, sy = np.cos(pose.yaw), np.sin(pose.yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def apply_pose(cloud: np.ndarray, pose: Pose, inverse: bool = False) -> np.ndarray:
    """Rigidly transform a pointcloud from body to world frame (or back)."""
    pts = _as_points(cloud)
    rot = rotation_matrix(pose)
    if inverse:
        return (pts - pose.translation) @ rot
    return pts @ rot.T + pose.translation


def cartesian_to_spherical(points: np.ndarray) -> np.ndarray:
    """Convert cartesian points to (azimuth, inclination, radius) columns.

    r = sqrt(x^2 + y^2 + z^2), theta = atan2(y, x) in (-pi, pi],
    alpha = arccos(z / r).  The origin maps to (0, 0, 0) by convention.
    """
    pts = _as_points(points)
    if not np.all(np.isfinite(pts)):
        raise ValueError("cartesian points must be finite")
    r = np.sqrt(np.sum(pts * pts, axis=1))
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    # atan2 lands in [-pi, pi]; fold the closed -pi endpoint onto +pi
    theta = np.where(theta <= -np.pi, np.pi, theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_alpha = np.where(r > 0, pts[:, 2] / np.where(r > 0, r, 1.0), 1.0)
    alpha = np.arccos(np.clip(cos_alpha, -1.0, 1.0))
    theta = np.where(r == 0, 0.0, theta)
    alpha = np.where(r == 0, 0.0, alpha)
    return np.column_stack([theta, alpha, r])


def spherical_to_cartesian(spherical: np.ndarray) -> np.ndarray:
    """Inverse of :func:`cartesian_to_spherical`.

    x = r sin(alpha) cos(theta), y = r sin(alpha) sin(theta), z = r cos(alpha).
    """
    sph = _as_points(spherical)
    if not np.all(np.isfinite(sph)):
        raise ValueError("spherical points must be finite")
    if np.any(sph[:, 2] < 0):
        raise ValueError("radius must be non-negative")
    theta, alpha, r = sph[:, 0], sph[:, 1], sph[:, 2]
    sin_a = np.sin(alpha)
    return np.column_stack([
        r * sin_a * np.cos(theta),
        r * sin_a * np.sin(theta),
        r * np.cos(alpha),
    ])


def project_to_surface(cloud: np.ndarray, r_oc: float, r_min: float) -> np.ndarray:
    """Project in-range returns onto the occupancy surface of radius r_oc.

    Points with r >= r_oc or r < r_min are treated as free space and
    dropped; the rest become samples (azimuth, inclination, y = r_oc - r).
    """
    if not r_min < r_oc:
        raise ValueError("need r_min < r_oc")
    sph = cartesian_to_spherical(cloud)
    keep = (sph[:, 2] >= r_min) & (sph[:, 2] < r_oc)
    sph = sph[keep]
    return np.column_stack([sph[:, 0], sph[:, 1], r_oc - sph[:, 2]])


def surface_to_cloud(samples: np.ndarray, r_oc: float) -> np.ndarray:
    """Restore cartesian points from occupancy samples: r = r_oc - y."""
    surf = _as_points(samples)
    if surf.shape[0] == 0:
        return np.zeros((0, 3))
    y = surf[:, 2]
    if np.any(y <= 0) or np.any(y > r_oc):
        raise ValueError("occupancy values must lie in (0, r_oc]")
    return spherical_to_cartesian(
        np.column_stack([surf[:, 0], surf[:, 1], r_oc - y])
    )


def make_query_grid(sensor: SensorModel, upsample: int = 1) -> np.ndarray:
    """Azimuth x inclination lattice used for reconstruction, shape (K, 2).

    Azimuth covers (-pi, pi] at sensor resolution divided by `upsample`;
    inclination channels are subdivided `upsample`-fold (the last channel
    extrapolates with its preceding spacing, so the count is exactly
    channels * upsample).  Ordering is azimuth-major, both axes ascending.
    """
    if upsample < 1:
        raise ValueError("upsample must be >= 1")
    n_az = sensor.azimuth_steps * upsample
    azimuths = -np.pi + (np.arange(1, n_az + 1) * (2.0 * np.pi / n_az))
    channels = sensor.inclination_channels
    if upsample == 1 or channels.size == 1:
        # a single channel has no spacing to subdivide; keep it as-is
        inclinations = channels.copy()
    else:
        spacings = np.diff(channels)
        spacings = np.append(spacings, spacings[-1])
        offsets = np.arange(upsample) / upsample
        inclinations = (channels[:, None] + spacings[:, None] * offsets[None, :]).ravel()
    return np.column_stack([
        np.repeat(azimuths, inclinations.size),
        np.tile(inclinations, azimuths.size),
    ])


def _as_points(arr) -> np.ndarray:
    pts = np.asarray(arr, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) array, got shape {pts.shape}")
    return pts
