"""Base-side reconstruction from a compressed observation.

An exact GP is fit once on the M transmitted triples (O(M^3)); the
query grid is then predicted in chunks (O(M^2) per cell) and each cell
is classified occupied or free by comparing its predictive variance to
the adaptive threshold V_th = K_m * mean(var) + K_std * std(var).
Low-variance cells are close to inducing evidence, so variance doubles
as an occupancy discriminator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .encoder import CompressedObservation
from .geometry import (
    SensorModel,
    apply_pose,
    make_query_grid,
    spherical_to_cartesian,
)
from .kernel import RQHyperparams, chol_with_jitter, kernel_matrix

PREDICT_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class BaseModel:
    """Exact GP posterior over the transmitted triples, factorized once."""

    locations: np.ndarray     # (M, 2) azimuth/inclination
    chol: np.ndarray | None   # lower factor of K_mm + sn2 I (+ jitter); None if M=0
    weights: np.ndarray       # (M,) solve of the factor against occupancies
    hyperparams: RQHyperparams
    r_oc: float
    wrap_azimuth: bool = False

    @property
    def size(self) -> int:
        return self.locations.shape[0]


@dataclass(frozen=True, eq=False)
class SurfacePrediction:
    """Posterior mean and predictive variance over a query grid."""

    grid: np.ndarray      # (K, 2)
    mean: np.ndarray      # (K,) occupancy meters
    variance: np.ndarray  # (K,) meters^2, includes noise variance
    r_oc: float

    def __post_init__(self):
        k = self.grid.shape[0]
        if self.mean.shape != (k,) or self.variance.shape != (k,):
            raise ValueError("mean/variance must align with the grid")
        if np.any(self.variance < 0):
            raise ValueError("variance must be non-negative")


@dataclass(frozen=True)
class DecoderConfig:
    """Reconstruction knobs: threshold weights, grid upsampling, sensor."""

    sensor: SensorModel
    k_m: float = 1.0
    k_std: float = 0.5
    upsample: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.k_m) and np.isfinite(self.k_std)):
            raise ValueError("threshold weights must be finite")
        if self.upsample < 1:
            raise ValueError("upsample must be >= 1")


def fit_base_gp(obs: CompressedObservation) -> BaseModel:
    """Factor K_mm + sn2 I once and precompute the weight vector."""
    hp = obs.hyperparams
    triples = np.asarray(obs.triples, dtype=float)
    if triples.shape[0] == 0:
        return BaseModel(np.zeros((0, 2)), None, np.zeros(0), hp, obs.r_oc,
                         obs.wrap_azimuth)
    locations, values = triples[:, :2], triples[:, 2]
    kmm = kernel_matrix(locations, locations, hp, obs.wrap_azimuth)
    kmm[np.diag_indices(locations.shape[0])] += hp.noise_variance
    lower, _ = chol_with_jitter(kmm, hp.signal_variance)
    weights = cho_solve((lower, True), values)
    return BaseModel(locations, lower, weights, hp, obs.r_oc, obs.wrap_azimuth)


def predict_surface(model: BaseModel, grid: np.ndarray) -> SurfacePrediction:
    """Posterior mean and predictive variance at each grid cell.

    Works through the precomputed factor in chunks so memory stays
    O(chunk * M) regardless of grid size.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.shape[1] != 2 or grid.shape[0] == 0:
        raise ValueError("grid must be a non-empty (K, 2) array")
    hp = model.hyperparams
    k_cells = grid.shape[0]
    prior_var = hp.signal_variance + hp.noise_variance
    if model.size == 0:
        return SurfacePrediction(grid, np.zeros(k_cells),
                                 np.full(k_cells, prior_var), model.r_oc)
    mean = np.empty(k_cells)
    variance = np.empty(k_cells)
    for start in range(0, k_cells, PREDICT_CHUNK):
        stop = min(start + PREDICT_CHUNK, k_cells)
        k_sm = kernel_matrix(model.locations, grid[start:stop], hp,
                             model.wrap_azimuth)
        mean[start:stop] = k_sm.T @ model.weights
        v = solve_triangular(model.chol, k_sm, lower=True)
        latent = np.maximum(hp.signal_variance - np.sum(v * v, axis=0), 0.0)
        variance[start:stop] = latent + hp.noise_variance
    return SurfacePrediction(grid, mean, variance, model.r_oc)


def variance_threshold(pred: SurfacePrediction, k_m: float, k_std: float) -> float:
    """V_th = K_m * mean(variance) + K_std * std(variance), population stats."""
    if pred.grid.shape[0] == 0:
        raise ValueError("need at least one grid cell")
    v = pred.variance
    return float(k_m * np.mean(v) + k_std * np.std(v))


def occupied_mask(pred: SurfacePrediction, v_th: float) -> np.ndarray:
    """Boolean per-cell classification: variance <= V_th means occupied."""
    return pred.variance <= v_th


def sample_occupied(pred: SurfacePrediction, v_th: float, r_oc: float,
                    r_min: float = 0.4) -> np.ndarray:
    """Emit spherical points for occupied cells; free cells are omitted.

    Radii are restored as r = r_oc - mean and clamped to [r_min, r_oc]
    since GP means can slightly overshoot the physical band.
    """
    if not np.isfinite(v_th):
        raise ValueError("threshold must be finite")
    keep = occupied_mask(pred, v_th)
    radius = np.clip(r_oc - pred.mean[keep], r_min, r_oc)
    return np.column_stack([pred.grid[keep], radius])


def decode(obs: CompressedObservation, cfg: DecoderConfig) -> np.ndarray:
    """Reconstruct a global-frame pointcloud from an observation."""
    model = fit_base_gp(obs)
    if model.size == 0:
        return np.zeros((0, 3))
    grid = make_query_grid(cfg.sensor, cfg.upsample)
    pred = predict_surface(model, grid)
    v_th = variance_threshold(pred, cfg.k_m, cfg.k_std)
    spherical = sample_occupied(pred, v_th, obs.r_oc, cfg.sensor.r_min)
    return apply_pose(spherical_to_cartesian(spherical), obs.pose)


def calibrate_threshold(labeled_scenes, sweep) -> tuple[float, float]:
    """Pick the (K_m, K_std) pair with the best mean F1 over labeled scenes.

    labeled_scenes: sequence of (SurfacePrediction, truth_mask) pairs
    where truth_mask flags cells that really contain a return.  Ties are
    broken toward larger K_m, then smaller K_std.
    """
    sweep = [(float(km), float(kstd)) for km, kstd in sweep]
    if not sweep:
        raise ValueError("sweep must contain at least one (K_m, K_std) pair")
    scenes = [(pred, np.asarray(mask, dtype=bool)) for pred, mask in labeled_scenes]
    if not scenes:
        raise ValueError("need at least one labeled scene")
    best, best_key = None, None
    for km, kstd in sweep:
        scores = []
        for pred, truth in scenes:
            predicted = occupied_mask(pred, variance_threshold(pred, km, kstd))
            tp = float(np.sum(predicted & truth))
            fp = float(np.sum(predicted & ~truth))
            fn = float(np.sum(~predicted & truth))
            denom = 2 * tp + fp + fn
            scores.append(2 * tp / denom if denom > 0 else 0.0)
        key = (np.mean(scores), km, -kstd)
        if best_key is None or key > best_key:
            best, best_key = (km, kstd), key
    return best
