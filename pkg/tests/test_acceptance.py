"""Acceptance gate: one test per release criterion, each printing a
PASS/FAIL line. Tolerances are fixed here, not calibrated elsewhere.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from simpfu import nn
from simpfu.dsp import DspConfig, SEGMENT_SAMPLES, WaveformSegment, equalize, preprocess, select_band, stft_log_magnitude
from simpfu.labels import Annotation, BIN_SECONDS, downsample, encode
from simpfu.metrics import auc, average_precision
from simpfu.models import ModelSpec, build, compute_mrf, count_params, mrf_window
from simpfu.bench import bench_sequential
from simpfu.training import TrainConfig, evaluate, train

from helpers import finite_diff_check
from synth import (
    confounded_test_set,
    confounded_train_set,
    mini_b_arch,
    mini_c_arch,
    tone_vs_chirp_dataset,
)

EXPECTED_MRF_SERIES = {0: 636, 1: 316, 2: 156, 3: 76, 4: 36, 5: 16, 6: 6, 7: 1}


@contextmanager
def criterion(num, name):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"\n[FAIL] criterion {num:2d}: {name}")
        raise
    print(f"\n[PASS] criterion {num:2d}: {name} ({time.perf_counter() - start:.1f}s)")


def test_01_mrf_table_reproduction():
    with criterion(1, "MRF table reproduction"):
        start = time.perf_counter()
        for group in ("A", "B", "C", "D", "E"):
            series = {i: compute_mrf(ModelSpec(group, i)).mrf_time_bins for i in range(8)}
            assert series == EXPECTED_MRF_SERIES
        assert compute_mrf(ModelSpec("A", 0)).mrf_time_bins == 636
        assert compute_mrf(ModelSpec("B", 3)).mrf_time_bins == 76
        assert compute_mrf(ModelSpec("B", 6)).mrf_time_bins == 6
        assert compute_mrf(ModelSpec("A", 7)).mrf_time_bins == 1
        assert f"{compute_mrf(ModelSpec('A', 0)).mrf_seconds:.3g}" == "12.4"
        assert f"{compute_mrf(ModelSpec('B', 3)).mrf_seconds:.3g}" == "1.48"
        assert all(
            compute_mrf(ModelSpec("B", i)).mrf_seconds == pytest.approx(EXPECTED_MRF_SERIES[i] * 10 / 512)
            for i in range(8)
        )
        assert time.perf_counter() - start < 1.0


def test_02_output_resolution_reproduction():
    with criterion(2, "output time resolution"):
        for group in ("A", "B", "C", "D", "E"):
            assert compute_mrf(ModelSpec(group, 2)).output_time_res == 16
            assert compute_mrf(ModelSpec(group, 0)).output_time_res == 4
            assert compute_mrf(ModelSpec(group, 7)).output_time_res == 512


def test_03_parameter_count_anchors():
    with criterion(3, "trainable parameter anchors"):
        start = time.perf_counter()
        assert 0.6e6 <= count_params(ModelSpec("B", 3)) <= 0.85e6
        assert 1.5e6 <= count_params(ModelSpec("E", 3)) <= 2.0e6
        assert 2.1e6 <= count_params(ModelSpec("D", 3)) <= 2.8e6
        b7, e7, d7 = (count_params(ModelSpec(g, 7)) for g in "BED")
        assert b7 == e7 == d7
        assert time.perf_counter() - start < 1.0


def test_04_locality_property_suite():
    with criterion(4, "receptive-field locality (group B, index >= 4)"):
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        for index in (4, 5, 6, 7):
            spec = ModelSpec("B", index)
            net = build(spec, seed=100 + index)
            x0 = rng.standard_normal((512, 128)).astype(np.float32)
            base = net.forward(x0).data
            n_units = base.shape[0]
            for _ in range(100):
                t = int(rng.integers(0, n_units))
                lo, hi = mrf_window(spec, t)
                lo_c, hi_c = max(lo, 0), min(hi, 511)
                outside = [b for b in (int(rng.integers(0, 512)) for _ in range(64)) if not lo_c <= b <= hi_c]
                assert outside, "no bin outside the window found"
                b_out = outside[0]
                x = x0.copy()
                x[b_out, :] += rng.standard_normal(128).astype(np.float32) * 3.0
                out = net.forward(x).data
                assert np.array_equal(out[t, :], base[t, :]), (
                    f"B0{index}: perturbing bin {b_out} outside window ({lo_c},{hi_c}) changed unit {t}"
                )
                center = int(np.clip((lo + hi) // 2, 0, 511))
                x = x0.copy()
                x[center, :] += rng.standard_normal(128).astype(np.float32) * 3.0
                out = net.forward(x).data
                assert np.any(out[t, :] != base[t, :]), (
                    f"B0{index}: perturbing center bin {center} left unit {t} unchanged"
                )
        assert time.perf_counter() - start < 120.0


def test_05_gradient_checks():
    with criterion(5, "finite-difference gradient checks"):
        start = time.perf_counter()
        rng = np.random.default_rng(7)

        def tensor(shape, scale=1.0, name=None):
            return nn.Tensor(rng.normal(scale=scale, size=shape).astype(np.float32), requires_grad=True, name=name)

        def kink_free(shape, name):
            # keep values away from relu's kink so central differences are valid
            data = rng.normal(size=shape)
            data = np.where(np.abs(data) < 5e-3, data + np.copysign(0.01, data), data)
            return nn.Tensor(data.astype(np.float32), requires_grad=True, name=name)

        def tie_free_pool_input(shape, window):
            # resample until every pooling window has a clear top-two gap
            pt, pf = window
            while True:
                data = rng.normal(size=shape).astype(np.float32)
                win = data.reshape(shape[0] // pt, pt, shape[1] // pf, pf, shape[2])
                win = win.transpose(0, 2, 4, 1, 3).reshape(shape[0] // pt, shape[1] // pf, shape[2], pt * pf)
                top2 = np.sort(win, axis=-1)[..., -2:]
                if (top2[..., 1] - top2[..., 0]).min() > 5e-3:
                    return nn.Tensor(data, requires_grad=True, name="xp")

        n_shapes = 0
        for _ in range(20):
            t, f = int(rng.integers(3, 7)), int(rng.integers(3, 7))
            cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            kt, kf = int(rng.choice([1, 3])), int(rng.choice([3, 5]))

            x = tensor((t, f, cin), name="x")
            k = tensor((kt, kf, cin, cout), 0.5, name="k")
            b = tensor((cout,), 0.2, name="b")
            finite_diff_check(lambda: nn.sum_all(nn.conv2d(x, k, b)), [x, k, b], rng=rng)

            x1 = tensor((t, cin), name="x1")
            w1 = tensor((cin, cout), name="w1")
            b1 = tensor((cout,), 0.2, name="b1")
            finite_diff_check(lambda: nn.sum_all(nn.conv1d_k1(x1, w1, b1)), [x1, w1, b1], rng=rng)

            xp = tie_free_pool_input((4, 4, cin), (2, 2))
            finite_diff_check(lambda: nn.sum_all(nn.maxpool2d(xp, (2, 2))), [xp], rng=rng)

            xb = tensor((2, t, cin), name="xb")
            gamma = nn.Tensor((rng.normal(size=cin) * 0.3 + 1.0).astype(np.float32), requires_grad=True, name="gamma")
            beta = tensor((cin,), 0.3, name="beta")
            state = nn.BatchNormState(cin)
            target = (rng.random((2, t, cin)) > 0.5).astype(np.float32)
            finite_diff_check(
                lambda: nn.bce_loss(nn.sigmoid(nn.batchnorm(xb, gamma, beta, state, training=True)), target),
                [xb, gamma, beta],
                rng=rng,
            )

            xe = kink_free((t, f), name="xe")
            finite_diff_check(lambda: nn.sum_all(nn.relu(xe)), [xe], rng=rng)
            finite_diff_check(lambda: nn.sum_all(nn.sigmoid(xe)), [xe], rng=rng)

            xu = tensor((t, f, cin), name="xu")
            finite_diff_check(lambda: nn.sum_all(nn.frequency_unwrap(xu)), [xu], rng=rng)

            xa = tensor((t, cin), name="xa")
            finite_diff_check(lambda: nn.sum_all(nn.avgpool_time(xa)), [xa], rng=rng)

            n_shapes += 1
        assert n_shapes >= 20
        assert time.perf_counter() - start < 60.0


def test_06_dsp_invariants():
    with criterion(6, "DSP pipeline invariants"):
        start = time.perf_counter()
        cfg = DspConfig()
        rng = np.random.default_rng(3)
        seg = WaveformSegment(rng.normal(scale=0.1, size=SEGMENT_SAMPLES), 48000, "acc", 0)
        spec = preprocess(seg, cfg)
        assert spec.data.shape == (512, 128)
        assert abs(float(spec.data.mean(dtype=np.float64))) < 1e-5
        assert abs(float(spec.data.std(dtype=np.float64)) - 1.0) < 1e-4

        banded = select_band(stft_log_magnitude(seg, cfg), cfg)
        equalized = equalize(banded)
        assert np.abs(np.median(equalized, axis=0)).max() < 1e-9

        t = np.arange(SEGMENT_SAMPLES) / 48000.0
        tone = WaveformSegment(0.5 * np.sin(2 * np.pi * 1000.0 * t), 48000, "tone", 0)
        peaks = stft_log_magnitude(tone, cfg).argmax(axis=1)
        assert np.all(np.abs(peaks - 43) <= 1)
        assert time.perf_counter() - start < 30.0


def test_07_label_oracle_equivalence():
    with criterion(7, "label encoding and pooling oracles"):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            annotations = []
            for _ in range(int(rng.integers(1, 6))):
                s = rng.uniform(0.0, 9.99)
                e = rng.uniform(s + 1e-4, 10.0)
                annotations.append(Annotation(int(rng.integers(0, 20)), s, e))
            got = encode(annotations)
            expected = np.zeros((512, 20), np.uint8)
            for b in range(512):
                b_lo, b_hi = b * BIN_SECONDS, (b + 1) * BIN_SECONDS
                for ann in annotations:
                    if ann.start < b_hi and ann.end > b_lo:
                        expected[b, ann.class_id] = 1
            assert np.array_equal(got, expected)

        for _ in range(50):
            mat = (rng.random((512, 20)) > 0.9).astype(np.uint8)
            out_res = int(rng.choice([1, 2, 8, 32, 128, 512]))
            block = 512 // out_res
            expected = np.stack([mat[j * block : (j + 1) * block].max(axis=0) for j in range(out_res)])
            assert np.array_equal(downsample(mat, out_res), expected)

        bins = np.nonzero(encode([Annotation(0, 1.0, 1.5)])[:, 0])[0]
        assert bins[0] == 51 and bins[-1] == 76 and len(bins) == 26


def test_08_metric_oracles():
    with criterion(8, "AUC/AP metric oracles"):
        assert auc([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0]) == pytest.approx(0.75)
        assert average_precision([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0]) == pytest.approx(0.8333, abs=1e-4)
        rng = np.random.default_rng(5)
        scores = rng.random(10000)
        targets = (rng.random(10000) < 0.1).astype(int)
        assert abs(auc(scores, targets) - 0.5) < 0.02
        assert abs(average_precision(scores, targets) - 0.10) < 0.02


def test_09_overfit_smoke_training():
    with criterion(9, "overfit smoke training (tone vs chirp)"):
        start = time.perf_counter()
        data = tone_vs_chirp_dataset(200, seed=0)
        cfg = TrainConfig(epochs=5, batch_size=32, lr0=0.003, seed=7, target_epoch_size=None, augment=None)
        result = train(data, mini_b_arch(n_classes=2), cfg)
        report = evaluate(result.network, data)
        assert cfg.epochs <= 50
        assert report.macro_auc >= 0.99, f"train macro AUC {report.macro_auc:.4f} < 0.99"

        short = TrainConfig(epochs=1, batch_size=32, lr0=0.003, seed=7, target_epoch_size=None, augment=None)
        a = train(data, mini_b_arch(n_classes=2), short)
        b = train(data, mini_b_arch(n_classes=2), short)
        assert a.losses == b.losses
        for pa, pb in zip(a.network.parameters(), b.network.parameters()):
            np.testing.assert_array_equal(pa.data, pb.data)
        assert time.perf_counter() - start < 600.0


def test_10_time_indexed_beats_segment_level():
    with criterion(10, "time-indexed labels beat segment-level labels"):
        train_set = confounded_train_set(96, seed=0)
        test_set = confounded_test_set(128, seed=1)
        for seed in (11, 12, 13):
            results = {}
            for name, arch in (
                ("time-indexed", mini_b_arch(1, blocks=(8,), head=16)),
                ("segment-level", mini_c_arch(1, blocks=(8,), head=16)),
            ):
                cfg = TrainConfig(
                    epochs=6, batch_size=32, lr0=0.003, seed=seed, target_epoch_size=None, augment=None
                )
                res = train(train_set, arch, cfg)
                results[name] = evaluate(res.network, test_set).macro_auc
            assert results["time-indexed"] > results["segment-level"], (
                f"seed {seed}: time-indexed {results['time-indexed']:.3f} "
                f"<= segment-level {results['segment-level']:.3f}"
            )


def test_11_benchmark_factor_ordering():
    with criterion(11, "processing-factor ordering B03 > E03 > D03"):
        start = time.perf_counter()
        factors = {}
        for group in ("B", "E", "D"):
            net = build(ModelSpec(group, 3), seed=0)
            factors[group] = bench_sequential(net, n=3, warmup=1, repeats=3).processing_factor
        assert factors["B"] > factors["E"] > factors["D"], factors
        assert time.perf_counter() - start < 300.0
        print(f"  factors: B03={factors['B']:.1f} E03={factors['E']:.1f} D03={factors['D']:.1f}", end="")
