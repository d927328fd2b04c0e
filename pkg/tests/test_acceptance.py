"""Acceptance gate: ten release criteria, one test per criterion.

Each test prints a single PASS line with the measured numbers once its
assertions hold, so `pytest -v tests/test_acceptance.py` doubles as the
release checklist.  Tolerances are pinned here on purpose; loosening
them is a release decision, not a test fix.
"""

import socket
import threading
import time
import tracemalloc

import numpy as np
import pytest

from sgpcodec.decoder import (
    calibrate_threshold,
    fit_base_gp,
    occupied_mask,
    predict_surface,
    variance_threshold,
)
from sgpcodec.encoder import (
    CompressedObservation,
    EncoderConfig,
    InducingSet,
    TrainingSet,
    bound_grad_hyperparams,
    encode,
    encode_with_trace,
    exact_log_marginal,
    init_inducing_even,
    variational_bound,
)
from sgpcodec.evaluate import (
    bench,
    compression_ratio,
    load_bench_config,
    occupancy_confusion,
    rmsd,
)
from sgpcodec.geometry import Pose, desk_sensor, make_query_grid, vlp16_sensor
from sgpcodec.kernel import RQHyperparams, kernel_matrix, kernel_matrix_grads
from sgpcodec.synth import BoxScene, CylinderScene, SphereScene, generate_scan
from sgpcodec.transport import LinkStats, connect, send_observation, serve_base
from sgpcodec.wire import deserialize, encode_frame, message_size, serialize


def random_training_set(rng, n):
    inputs = np.column_stack([rng.uniform(-np.pi, np.pi, n),
                              rng.uniform(0.2, np.pi - 0.2, n)])
    return TrainingSet(inputs, rng.uniform(0.1, 9.0, n))


def random_hyperparams(rng):
    return RQHyperparams(
        signal_variance=10.0 ** rng.uniform(-1, 1),
        lengthscale_azimuth=10.0 ** rng.uniform(-1, 0.5),
        lengthscale_inclination=10.0 ** rng.uniform(-1, 0.5),
        rq_alpha=10.0 ** rng.uniform(-0.5, 0.5),
        noise_variance=10.0 ** rng.uniform(-3, -0.5),
    )


def f32_observation(rng, m):
    pose = Pose.from_array(np.float32(
        np.concatenate([rng.uniform(-20, 20, 3), rng.uniform(-np.pi, np.pi, 3)])))
    r_oc = float(np.float32(rng.uniform(5.0, 50.0)))
    hp = RQHyperparams.from_array(np.float32(10.0 ** rng.uniform(-3, 2, 5)))
    triples = np.column_stack([rng.uniform(-np.pi, np.pi, m),
                               rng.uniform(0.0, np.pi, m),
                               rng.uniform(1e-3, r_oc, m)]).astype(np.float32)
    triples[:, 2] = np.minimum(triples[:, 2], np.float32(r_oc))
    return CompressedObservation(pose, r_oc, hp, triples,
                                 bool(rng.integers(0, 2)))


def test_criterion_01_bound_equals_exact_at_full_rank():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(2, 9):
        data = random_training_set(rng, n)
        hp = random_hyperparams(rng)
        inducing = InducingSet.from_indices(data, np.arange(n))
        gap = abs(variational_bound(data, inducing, hp)
                  - exact_log_marginal(data, hp))
        worst = max(worst, gap)
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-6
    assert elapsed < 1.0
    print(f"criterion 1 PASS: max |F_V - exact| = {worst:.2e} "
          f"(limit 1e-6) in {elapsed:.3f}s")


def test_criterion_02_bound_never_exceeds_exact():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = -np.inf
    for _ in range(100):
        n = int(rng.integers(4, 33))
        m = int(rng.integers(1, n))
        data = random_training_set(rng, n)
        hp = random_hyperparams(rng)
        inducing = InducingSet.from_indices(
            data, rng.choice(n, size=m, replace=False))
        excess = (variational_bound(data, inducing, hp)
                  - exact_log_marginal(data, hp))
        worst = max(worst, excess)
        assert excess <= 1e-9
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    print(f"criterion 2 PASS: max F_V - exact = {worst:.2e} over 100 "
          f"configs (limit 1e-9) in {elapsed:.2f}s")


def test_criterion_03_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    eps = 1e-5
    basis = np.eye(5)
    worst_bound, worst_kernel = 0.0, 0.0
    for _ in range(20):
        n = int(rng.integers(16, 65))
        m = int(rng.integers(3, 17))
        data = random_training_set(rng, n)
        hp = random_hyperparams(rng)
        inducing = InducingSet.from_indices(
            data, rng.choice(n, size=m, replace=False))
        log_p = hp.to_log_params()

        grad = bound_grad_hyperparams(data, inducing, hp)
        for i in range(5):
            up = RQHyperparams.from_log_params(log_p + eps * basis[i])
            dn = RQHyperparams.from_log_params(log_p - eps * basis[i])
            fd = (variational_bound(data, inducing, up)
                  - variational_bound(data, inducing, dn)) / (2 * eps)
            rel = abs(grad[i] - fd) / max(1.0, abs(fd))
            worst_bound = max(worst_bound, rel)
            assert rel <= 1e-4

        grads = kernel_matrix_grads(data.inputs[:8], inducing.locations, hp)
        for i in range(4):
            up = RQHyperparams.from_log_params(log_p + eps * basis[i])
            dn = RQHyperparams.from_log_params(log_p - eps * basis[i])
            fd = (kernel_matrix(data.inputs[:8], inducing.locations, up)
                  - kernel_matrix(data.inputs[:8], inducing.locations, dn)
                  ) / (2 * eps)
            rel = np.max(np.abs(grads[i] - fd) / np.maximum(1.0, np.abs(fd)))
            worst_kernel = max(worst_kernel, rel)
            assert rel <= 1e-4
    print(f"criterion 3 PASS: worst rel err bound grad = {worst_bound:.2e}, "
          f"kernel grad = {worst_kernel:.2e} (limit 1e-4, 20 configs)")


def test_criterion_04_training_trace_is_monotone_on_tunnel():
    sensor = desk_sensor()
    scan = generate_scan(CylinderScene(3.0), Pose(), sensor, seed=0)
    cfg = EncoderConfig(m=64, em_rounds=2, swap_proposals_per_round=150,
                        candidate_pool_size=256, mstep_iterations=15,
                        rng_seed=0, r_oc=sensor.r_max, r_min=sensor.r_min,
                        sensor=sensor)
    _, trace = encode_with_trace(scan.cloud, scan.pose, cfg)
    assert trace, "EM loop accepted no steps at all"
    tags = {tag for tag, _ in trace}
    assert tags == {"estep", "mstep"}, f"only {tags} steps were accepted"
    values = np.array([f for _, f in trace])
    deltas = np.diff(values)
    assert np.all(deltas >= -1e-9)
    print(f"criterion 4 PASS: {len(values)} accepted steps "
          f"({sum(1 for t, _ in trace if t == 'estep')} swaps), "
          f"F_V {values[0]:.1f} -> {values[-1]:.1f}, min step "
          f"{deltas.min():.2e} >= -1e-9")


def test_criterion_05_tunnel_reconstruction_accuracy():
    sensor = desk_sensor()
    scan = generate_scan(CylinderScene(3.0), Pose(), sensor, seed=0)
    grid = make_query_grid(sensor, 1)
    shared = dict(rng_seed=0, r_oc=sensor.r_max, r_min=sensor.r_min,
                  sensor=sensor)
    configs = {
        200: EncoderConfig(m=200, em_rounds=2, swap_proposals_per_round=200,
                           candidate_pool_size=512, mstep_iterations=20,
                           **shared),
        500: EncoderConfig(m=500, em_rounds=1, swap_proposals_per_round=0,
                           mstep_iterations=30, **shared),
    }
    limits = {200: 0.25, 500: 0.15}
    preds, times = {}, {}
    for m, cfg in configs.items():
        t0 = time.perf_counter()
        obs = encode(scan.cloud, scan.pose, cfg)
        preds[m] = predict_surface(fit_base_gp(obs), grid)
        times[m] = time.perf_counter() - t0
        assert times[m] <= 120.0

    sweep = [(km, kstd) for km in np.arange(0.1, 1.05, 0.05)
             for kstd in (0.0, 0.1, 0.25, 0.5)]
    km, kstd = calibrate_threshold(
        [(preds[m], scan.return_mask) for m in configs], sweep)

    report = []
    for m in configs:
        mean, _ = rmsd(scan, preds[m])
        mask = occupied_mask(preds[m], variance_threshold(preds[m], km, kstd))
        precision, recall, _ = occupancy_confusion(scan, mask)
        assert mean <= limits[m], f"M={m} rmsd {mean:.4f} > {limits[m]}"
        assert precision >= 0.95, f"M={m} precision {precision:.4f} < 0.95"
        assert recall >= 0.95, f"M={m} recall {recall:.4f} < 0.95"
        report.append(f"M={m}: rmsd={mean:.4f}<={limits[m]} "
                      f"P={precision:.3f} R={recall:.3f} ({times[m]:.0f}s)")
    print(f"criterion 5 PASS: calibrated (K_m, K_std)=({km}, {kstd}); "
          + "; ".join(report))


def test_criterion_06_rmsd_trend_over_inducing_budget():
    sensor = desk_sensor()
    scan = generate_scan(BoxScene((8.0, 8.0, 4.0)), Pose(), sensor, seed=0)
    grid = make_query_grid(sensor, 1)
    var_y = float(np.var(sensor.r_max
                         - np.linalg.norm(scan.cloud, axis=1)))
    hp0 = RQHyperparams(var_y, 0.87, 0.07, 1.0, 0.5 * var_y)
    values = []
    for m in (100, 200, 300, 500):
        cfg = EncoderConfig(m=m, em_rounds=1, swap_proposals_per_round=0,
                            mstep_iterations=40, mstep_step_size=1e-4,
                            rng_seed=0, r_oc=sensor.r_max, r_min=sensor.r_min,
                            sensor=sensor, init_hyperparams=hp0)
        obs = encode(scan.cloud, scan.pose, cfg)
        values.append(rmsd(scan, predict_surface(fit_base_gp(obs), grid))[0])
    inversions = [(prev, cur) for prev, cur in zip(values, values[1:])
                  if cur > prev]
    assert len(inversions) <= 1
    if inversions:
        prev, cur = inversions[0]
        assert cur <= 1.05 * prev
    trend = " -> ".join(f"{v:.4f}" for v in values)
    print(f"criterion 6 PASS: rmsd over M=(100,200,300,500): {trend} "
          f"({len(inversions)} inversion(s) within 5%)")


def test_criterion_07_message_size_and_compression():
    rng = np.random.default_rng(4)
    for m in (0, 1, 57, 500):
        assert len(serialize(f32_observation(rng, m))) == 60 + 12 * m

    full = vlp16_sensor()
    scan = generate_scan(SphereScene(5.0), Pose(), full, seed=0)
    assert scan.cloud.shape[0] == 57600
    cfg = EncoderConfig(m=500, em_rounds=0, rng_seed=0, r_oc=full.r_max,
                        r_min=full.r_min, sensor=full)
    wire = serialize(encode(scan.cloud, scan.pose, cfg))
    assert len(wire) == message_size(500) == 6060
    ratio_full = compression_ratio(scan.cloud, len(wire))
    assert ratio_full >= 100.0

    half = vlp16_sensor(azimuth_resolution_deg=0.2)
    scan_half = generate_scan(SphereScene(5.0), Pose(), half, seed=0)
    assert scan_half.cloud.shape[0] == 28800
    cfg = EncoderConfig(m=500, em_rounds=0, rng_seed=0, r_oc=half.r_max,
                        r_min=half.r_min, sensor=half)
    frame = encode_frame(serialize(encode(scan_half.cloud, scan_half.pose, cfg)))
    ratio_framed = compression_ratio(scan_half.cloud, len(frame))
    assert ratio_framed >= 55.0
    print(f"criterion 7 PASS: size 60+12M exact; full-res ratio "
          f"{ratio_full:.1f} >= 100; framed half-res ratio "
          f"{ratio_framed:.1f} >= 55")


def test_criterion_08_wire_roundtrip_and_loopback_transport():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        obs = f32_observation(rng, int(rng.integers(0, 64)))
        assert deserialize(serialize(obs)) == obs

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    endpoint = f"127.0.0.1:{port}"
    received, stats_rx = [], LinkStats()
    shutdown = threading.Event()
    thread = threading.Thread(
        target=serve_base, args=(endpoint, received.append, shutdown, stats_rx),
        daemon=True)
    thread.start()
    sent = [f32_observation(rng, int(rng.integers(1, 40))) for _ in range(20)]
    try:
        deadline = time.monotonic() + 5.0
        while True:
            try:
                conn = connect(endpoint, timeout=1.0)
                break
            except Exception:
                assert time.monotonic() < deadline, "server did not come up"
                time.sleep(0.02)
        stats_tx = LinkStats()
        with conn:
            for obs in sent:
                send_observation(conn, obs, stats_tx)
            deadline = time.monotonic() + 5.0
            while len(received) < 20:
                assert time.monotonic() < deadline, "frames did not all arrive"
                time.sleep(0.01)
            clean_tx, clean_rx = stats_tx.bytes_total, stats_rx.bytes_total

            tampered = bytearray(encode_frame(serialize(sent[0])))
            tampered[30] ^= 0x10
            conn.sendall(bytes(tampered))
            send_observation(conn, sent[0], stats_tx)
        deadline = time.monotonic() + 5.0
        while len(received) < 21 or stats_rx.decode_failures < 1:
            assert time.monotonic() < deadline, "frames did not all arrive"
            time.sleep(0.01)
    finally:
        shutdown.set()
        thread.join(timeout=5.0)
    assert received[:20] == sent
    assert received[20] == sent[0]
    assert clean_tx == clean_rx == sum(message_size(o.m) + 8 for o in sent)
    assert stats_rx.decode_failures == 1
    assert stats_rx.frames == 22  # the corrupted frame still moved bytes
    print("criterion 8 PASS: 1000 messages round-trip value-identical; "
          f"20 frames in order with equal byte counters ({clean_tx} bytes); "
          "1 corrupted frame detected and skipped")


def test_criterion_09_bound_cost_scales_linearly_in_n():
    rng = np.random.default_rng(6)
    hp = RQHyperparams(1.0, 0.3, 0.3, 1.5, 0.05)
    results = {}
    for n in (10000, 20000):
        data = TrainingSet(rng.uniform(-3, 3, (n, 2)),
                           rng.uniform(0.1, 5.0, n))
        inducing = init_inducing_even(data, 100)
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            variational_bound(data, inducing, hp)
            times.append(time.perf_counter() - t0)
        tracemalloc.start()
        variational_bound(data, inducing, hp)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        results[n] = (min(times), peak)
    time_ratio = results[20000][0] / results[10000][0]
    dense_bytes = 8 * 20000 * 20000
    assert time_ratio <= 3.0
    assert results[20000][1] < dense_bytes / 10
    print(f"criterion 9 PASS: N 10k->20k wall time x{time_ratio:.2f} "
          f"(limit 3.0); peak alloc {results[20000][1] / 1e6:.0f} MB vs "
          f"{dense_bytes / 1e6:.0f} MB for an N x N matrix")


def test_criterion_10_bench_csv_is_deterministic(tmp_path):
    config = tmp_path / "sweep.ini"
    config.write_text(
        "[bench]\n"
        "m_values = 50 100\n"
        "seed = 0\n"
        "em_rounds = 1\n"
        "swap_proposals = 20\n"
        "mstep_iterations = 5\n"
        "\n"
        "[scene:ball]\n"
        "variant = sphere\n"
        "radius = 5\n"
        "\n"
        "[scene:tunnel]\n"
        "variant = cylinder\n"
        "radius = 3\n"
        "noise_std = 0.02\n"
    )
    first = bench(load_bench_config(config)).to_csv()
    second = bench(load_bench_config(config)).to_csv()
    assert first == second
    rows = first.strip().splitlines()
    assert len(rows) == 5
    print(f"criterion 10 PASS: two bench runs produced byte-identical CSV "
          f"({len(first)} bytes, {len(rows) - 1} rows)")
