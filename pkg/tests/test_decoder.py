"""Decoder: GP fit, chunked prediction, variance thresholding, sampling."""

import numpy as np
import numpy.testing as npt
import pytest

from sgpcodec.decoder import (
    DecoderConfig,
    SurfacePrediction,
    calibrate_threshold,
    decode,
    fit_base_gp,
    occupied_mask,
    predict_surface,
    sample_occupied,
    variance_threshold,
)
from sgpcodec.encoder import CompressedObservation, EncoderConfig, encode
from sgpcodec.geometry import Pose, apply_pose, desk_sensor, make_query_grid
from sgpcodec.kernel import RQHyperparams, kernel_matrix
from sgpcodec.synth import CylinderScene, generate_scan


def random_observation(rng, m, hp=None, r_oc=10.0):
    hp = hp or RQHyperparams(1.0, 0.4, 0.3, 1.0, 0.01)
    triples = np.column_stack([rng.uniform(-np.pi, np.pi, m),
                               rng.uniform(0.5, 2.5, m),
                               rng.uniform(0.5, r_oc - 0.5, m)])
    return CompressedObservation(Pose(), r_oc, hp, triples)


class TestFitBaseGp:
    def test_weights_solve_regularized_system(self):
        rng = np.random.default_rng(50)
        obs = random_observation(rng, 25)
        model = fit_base_gp(obs)
        locs = obs.triples[:, :2].astype(float)
        k = kernel_matrix(locs, locs, obs.hyperparams)
        k[np.diag_indices(25)] += obs.hyperparams.noise_variance
        expected = np.linalg.solve(k, obs.triples[:, 2].astype(float))
        npt.assert_allclose(model.weights, expected, atol=1e-8)

    def test_empty_observation_gives_empty_model(self):
        obs = CompressedObservation(Pose(), 10.0, RQHyperparams(),
                                    np.zeros((0, 3)))
        model = fit_base_gp(obs)
        assert model.size == 0 and model.chol is None

    def test_single_point_posterior_mean(self):
        # scalar GP: mean at the training input is y * sf2 / (sf2 + sn2)
        hp = RQHyperparams(2.0, 0.5, 0.5, 1.0, 0.5)
        obs = CompressedObservation(Pose(), 10.0, hp,
                                    np.array([[0.3, 1.2, 4.0]]))
        pred = predict_surface(fit_base_gp(obs), np.array([[0.3, 1.2]]))
        y = float(obs.triples[0, 2])
        npt.assert_allclose(pred.mean, y * 2.0 / 2.5, rtol=1e-6)
        expected_var = 2.0 - 4.0 / 2.5 + 0.5
        npt.assert_allclose(pred.variance, expected_var, rtol=1e-6)


class TestPredictSurface:
    def test_matches_dense_formula(self):
        rng = np.random.default_rng(51)
        obs = random_observation(rng, 20)
        model = fit_base_gp(obs)
        grid = np.column_stack([rng.uniform(-np.pi, np.pi, 100),
                                rng.uniform(0.5, 2.5, 100)])
        pred = predict_surface(model, grid)
        hp = obs.hyperparams
        locs = obs.triples[:, :2].astype(float)
        k_mm = kernel_matrix(locs, locs, hp) + hp.noise_variance * np.eye(20)
        k_sm = kernel_matrix(locs, grid, hp)
        mean = k_sm.T @ np.linalg.solve(k_mm, obs.triples[:, 2].astype(float))
        var = (hp.signal_variance
               - np.sum(k_sm * np.linalg.solve(k_mm, k_sm), axis=0)
               + hp.noise_variance)
        npt.assert_allclose(pred.mean, mean, atol=1e-8)
        npt.assert_allclose(pred.variance, var, atol=1e-8)

    def test_chunking_does_not_change_results(self, monkeypatch):
        rng = np.random.default_rng(52)
        obs = random_observation(rng, 15)
        model = fit_base_gp(obs)
        grid = np.column_stack([rng.uniform(-np.pi, np.pi, 333),
                                rng.uniform(0.5, 2.5, 333)])
        whole = predict_surface(model, grid)
        monkeypatch.setattr("sgpcodec.decoder.PREDICT_CHUNK", 7)
        chunked = predict_surface(model, grid)
        npt.assert_allclose(chunked.mean, whole.mean, rtol=1e-12)
        npt.assert_allclose(chunked.variance, whole.variance, rtol=1e-12)

    def test_far_cells_revert_to_prior(self):
        hp = RQHyperparams(1.5, 0.05, 0.05, 1.0, 0.02)
        obs = CompressedObservation(Pose(), 10.0, hp,
                                    np.array([[0.0, 1.5, 5.0]]))
        pred = predict_surface(fit_base_gp(obs), np.array([[3.0, 1.5]]))
        npt.assert_allclose(pred.mean, 0.0, atol=5e-3)
        npt.assert_allclose(pred.variance, 1.52, atol=1e-3)

    def test_variance_bounds(self):
        rng = np.random.default_rng(53)
        for _ in range(10):
            obs = random_observation(rng, 30)
            hp = obs.hyperparams
            grid = np.column_stack([rng.uniform(-np.pi, np.pi, 200),
                                    rng.uniform(0.5, 2.5, 200)])
            pred = predict_surface(fit_base_gp(obs), grid)
            assert np.all(pred.variance >= hp.noise_variance - 1e-12)
            assert np.all(pred.variance
                          <= hp.signal_variance + hp.noise_variance + 1e-12)

    def test_variance_smallest_near_evidence(self):
        rng = np.random.default_rng(54)
        obs = random_observation(rng, 40)
        model = fit_base_gp(obs)
        at_inducing = predict_surface(model, obs.triples[:, :2].astype(float))
        far = predict_surface(model, np.array([[0.0, 120.0]]))
        assert at_inducing.variance.max() < far.variance.min()

    def test_empty_model_predicts_prior(self):
        obs = CompressedObservation(Pose(), 10.0, RQHyperparams(),
                                    np.zeros((0, 3)))
        pred = predict_surface(fit_base_gp(obs), np.array([[0.0, 1.0]]))
        npt.assert_array_equal(pred.mean, [0.0])
        hp = obs.hyperparams
        npt.assert_array_equal(pred.variance,
                               [hp.signal_variance + hp.noise_variance])

    def test_rejects_bad_grid(self):
        obs = random_observation(np.random.default_rng(55), 5)
        model = fit_base_gp(obs)
        with pytest.raises(ValueError):
            predict_surface(model, np.zeros((0, 2)))
        with pytest.raises(ValueError):
            predict_surface(model, np.zeros((4, 3)))


class TestVarianceThreshold:
    def test_population_statistics_example(self):
        pred = SurfacePrediction(np.zeros((3, 2)), np.zeros(3),
                                 np.array([1.0, 2.0, 3.0]), 10.0)
        expected = 2.0 + np.sqrt(2.0 / 3.0)
        npt.assert_allclose(variance_threshold(pred, 1.0, 1.0), expected,
                            rtol=1e-12)
        npt.assert_allclose(variance_threshold(pred, 0.5, 0.0), 1.0, rtol=1e-12)

    def test_mask_partitions_grid(self):
        rng = np.random.default_rng(56)
        pred = SurfacePrediction(np.zeros((50, 2)), np.zeros(50),
                                 rng.uniform(0, 2, 50), 10.0)
        v_th = variance_threshold(pred, 1.0, 0.5)
        mask = occupied_mask(pred, v_th)
        assert mask.dtype == bool and mask.shape == (50,)
        assert np.array_equal(~mask, pred.variance > v_th)

    def test_mask_grows_with_threshold(self):
        rng = np.random.default_rng(57)
        pred = SurfacePrediction(np.zeros((80, 2)), np.zeros(80),
                                 rng.uniform(0, 2, 80), 10.0)
        small = occupied_mask(pred, 0.5)
        large = occupied_mask(pred, 1.5)
        assert np.all(large[small])
        assert large.sum() > small.sum()


class TestSampleOccupied:
    @staticmethod
    def make_pred(mean, variance):
        mean = np.asarray(mean, dtype=float)
        grid = np.column_stack([np.linspace(-1, 1, mean.size),
                                np.full(mean.size, 1.5)])
        return SurfacePrediction(grid, mean, np.asarray(variance, float), 10.0)

    def test_free_cells_omitted(self):
        pred = self.make_pred([4.0, 5.0, 6.0], [0.1, 9.0, 0.1])
        points = sample_occupied(pred, v_th=1.0, r_oc=10.0)
        assert points.shape == (2, 3)
        npt.assert_allclose(points[:, 2], [6.0, 4.0])

    def test_radius_restored_from_occupancy(self):
        pred = self.make_pred([2.5], [0.1])
        points = sample_occupied(pred, v_th=1.0, r_oc=10.0)
        npt.assert_allclose(points[0], [pred.grid[0, 0], 1.5, 7.5])

    def test_overshooting_means_clamped_to_band(self):
        pred = self.make_pred([11.0, -1.0, 9.8], [0.1, 0.1, 0.1])
        points = sample_occupied(pred, v_th=1.0, r_oc=10.0, r_min=0.4)
        npt.assert_allclose(points[:, 2], [0.4, 10.0, 0.4])

    def test_all_free_gives_empty(self):
        pred = self.make_pred([1.0, 2.0], [5.0, 6.0])
        assert sample_occupied(pred, v_th=1.0, r_oc=10.0).shape == (0, 3)

    def test_non_finite_threshold_rejected(self):
        pred = self.make_pred([1.0], [0.5])
        with pytest.raises(ValueError):
            sample_occupied(pred, v_th=np.nan, r_oc=10.0)


class TestDecode:
    def test_empty_observation_decodes_to_empty_cloud(self):
        obs = CompressedObservation(Pose(1, 2, 3), 10.0, RQHyperparams(),
                                    np.zeros((0, 3)))
        cloud = decode(obs, DecoderConfig(desk_sensor()))
        assert cloud.shape == (0, 3)

    def test_pose_moves_reconstruction(self):
        sensor = desk_sensor()
        scan = generate_scan(CylinderScene(3.0), Pose(), sensor, seed=0)
        cfg = EncoderConfig(m=60, em_rounds=0, rng_seed=0, r_oc=sensor.r_max,
                            r_min=sensor.r_min, sensor=sensor)
        obs_origin = encode(scan.cloud, Pose(), cfg)
        obs_moved = encode(scan.cloud, Pose(5.0, -2.0, 1.0), cfg)
        dec = DecoderConfig(sensor)
        cloud_origin = decode(obs_origin, dec)
        cloud_moved = decode(obs_moved, dec)
        npt.assert_allclose(cloud_moved, cloud_origin + [5.0, -2.0, 1.0],
                            atol=1e-5)

    def test_reconstruction_is_deterministic(self):
        sensor = desk_sensor()
        scan = generate_scan(CylinderScene(3.0), Pose(), sensor, seed=1)
        cfg = EncoderConfig(m=40, em_rounds=0, rng_seed=0, r_oc=sensor.r_max,
                            r_min=sensor.r_min, sensor=sensor)
        obs = encode(scan.cloud, scan.pose, cfg)
        dec = DecoderConfig(sensor, upsample=2)
        npt.assert_array_equal(decode(obs, dec), decode(obs, dec))

    def test_upsample_densifies_output(self):
        sensor = desk_sensor()
        scan = generate_scan(CylinderScene(3.0), Pose(), sensor, seed=2)
        cfg = EncoderConfig(m=80, em_rounds=1, swap_proposals_per_round=0,
                            mstep_iterations=10, rng_seed=0, r_oc=sensor.r_max,
                            r_min=sensor.r_min, sensor=sensor)
        obs = encode(scan.cloud, scan.pose, cfg)
        n1 = decode(obs, DecoderConfig(sensor, upsample=1)).shape[0]
        n2 = decode(obs, DecoderConfig(sensor, upsample=2)).shape[0]
        assert n2 > 2 * n1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DecoderConfig(desk_sensor(), upsample=0)
        with pytest.raises(ValueError):
            DecoderConfig(desk_sensor(), k_m=np.inf)


class TestCalibrateThreshold:
    @staticmethod
    def labeled_example():
        grid = np.column_stack([np.linspace(-1, 1, 4), np.full(4, 1.5)])
        pred = SurfacePrediction(grid, np.zeros(4),
                                 np.array([0.1, 0.2, 0.9, 1.0]), 10.0)
        truth = np.array([True, True, False, False])
        return pred, truth

    def test_ties_prefer_larger_km(self):
        pred, truth = self.labeled_example()
        # both settings classify perfectly (v_th 0.275 and 0.55)
        km, kstd = calibrate_threshold([(pred, truth)], [(0.5, 0.0), (1.0, 0.0)])
        assert (km, kstd) == (1.0, 0.0)

    def test_ties_prefer_smaller_kstd(self):
        pred, truth = self.labeled_example()
        km, kstd = calibrate_threshold([(pred, truth)], [(1.0, 0.1), (1.0, 0.0)])
        assert (km, kstd) == (1.0, 0.0)

    def test_picks_setting_with_best_f1(self):
        pred, truth = self.labeled_example()
        # v_th = 2.0 labels everything occupied: recall 1, precision 1/2
        km, kstd = calibrate_threshold([(pred, truth)],
                                       [(1.0, 0.0), (2.0 / 0.55, 0.0)])
        assert (km, kstd) == (1.0, 0.0)

    def test_empty_arguments_rejected(self):
        pred, truth = self.labeled_example()
        with pytest.raises(ValueError):
            calibrate_threshold([], [(1.0, 0.0)])
        with pytest.raises(ValueError):
            calibrate_threshold([(pred, truth)], [])
