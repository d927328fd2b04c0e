"""Pointcloud file formats, selected by extension.

ASCII (.xyz, .txt, .asc): one "x y z" line per point.
Binary (.bin, .f32): little-endian float32 triples, no header.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

ASCII_SUFFIXES = {".xyz", ".txt", ".asc"}
BINARY_SUFFIXES = {".bin", ".f32"}


def save_cloud(path, cloud: np.ndarray) -> None:
    path = Path(path)
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    suffix = path.suffix.lower()
    if suffix in ASCII_SUFFIXES:
        np.savetxt(path, cloud, fmt="%.9g")
    elif suffix in BINARY_SUFFIXES:
        cloud.astype("<f4").tofile(path)
    else:
        raise ValueError(f"unknown pointcloud extension {suffix!r}")


def load_cloud(path) -> np.ndarray:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in ASCII_SUFFIXES:
        cloud = np.loadtxt(path, dtype=float)
        return cloud.reshape(-1, 3)
    if suffix in BINARY_SUFFIXES:
        flat = np.fromfile(path, dtype="<f4")
        if flat.size % 3 != 0:
            raise ValueError(f"{path} holds {flat.size} floats, not xyz triples")
        return flat.astype(float).reshape(-1, 3)
    raise ValueError(f"unknown pointcloud extension {suffix!r}")
