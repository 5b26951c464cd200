import numpy as np
import pytest

from simpfu.augment import AugmentConfig, Augmenter, freq_shift, mix, time_shift


def normalized_spec(seed):
    x = np.random.default_rng(seed).normal(size=(512, 128))
    return ((x - x.mean()) / x.std()).astype(np.float32)


def random_labels(seed, density=0.05):
    return (np.random.default_rng(seed).random((512, 20)) < density).astype(np.uint8)


class TestFreqShift:
    def test_zero_is_identity(self):
        spec = normalized_spec(0)
        np.testing.assert_array_equal(freq_shift(spec, 0), spec)

    def test_round_trip_differs_only_at_edges(self):
        spec = normalized_spec(1)
        back = freq_shift(freq_shift(spec, 2), -2, max_shift=4)
        np.testing.assert_array_equal(back[:, :126], spec[:, :126])
        assert np.any(back[:, 126:] != spec[:, 126:])

    def test_negative_shift_replicates_high_edge(self):
        spec = normalized_spec(2)
        out = freq_shift(spec, -3)
        np.testing.assert_array_equal(out[:, :125], spec[:, 3:])
        for j in (125, 126, 127):
            np.testing.assert_array_equal(out[:, j], spec[:, 127])

    def test_too_large_rejected(self):
        with pytest.raises(ValueError):
            freq_shift(normalized_spec(3), 5, max_shift=4)

    def test_shape_preserved(self):
        assert freq_shift(normalized_spec(4), 4).shape == (512, 128)


class TestTimeShift:
    def test_zero_is_identity(self):
        spec, lab = normalized_spec(5), random_labels(5)
        s2, l2 = time_shift(spec, lab, 0)
        np.testing.assert_array_equal(s2, spec)
        np.testing.assert_array_equal(l2, lab)

    def test_full_period_is_identity(self):
        spec, lab = normalized_spec(6), random_labels(6)
        s2, l2 = time_shift(spec, lab, 512)
        np.testing.assert_array_equal(s2, spec)
        np.testing.assert_array_equal(l2, lab)

    def test_label_mass_preserved(self):
        lab = random_labels(7)
        for s in (1, 37, 255, 511):
            _, l2 = time_shift(normalized_spec(7), lab, s)
            assert l2.sum() == lab.sum()

    def test_rows_move_together(self):
        spec, lab = normalized_spec(8), random_labels(8)
        s2, l2 = time_shift(spec, lab, 100)
        np.testing.assert_array_equal(s2[100], spec[0])
        np.testing.assert_array_equal(l2[100], lab[0])


class TestMix:
    def test_self_mix_keeps_labels_and_spectrogram(self):
        spec, lab = normalized_spec(9), random_labels(9)
        out_spec, out_lab = mix((spec, lab), (spec, lab))
        np.testing.assert_array_equal(out_lab, lab)
        np.testing.assert_allclose(out_spec, spec, atol=1e-5)

    def test_labels_are_union(self):
        la, lb = random_labels(10), random_labels(11)
        _, out = mix((normalized_spec(10), la), (normalized_spec(11), lb))
        assert np.all(out >= la) and np.all(out >= lb)
        assert out.sum() == np.maximum(la, lb).sum()

    def test_output_is_standardized(self):
        out_spec, _ = mix(
            (normalized_spec(12), random_labels(12)), (normalized_spec(13), random_labels(13))
        )
        assert abs(float(out_spec.mean(dtype=np.float64))) < 1e-5
        assert abs(float(out_spec.std(dtype=np.float64)) - 1.0) < 1e-4

    def test_shapes_preserved(self):
        out_spec, out_lab = mix(
            (normalized_spec(14), random_labels(14)), (normalized_spec(15), random_labels(15))
        )
        assert out_spec.shape == (512, 128) and out_lab.shape == (512, 20)


class TestAugmenter:
    def test_identical_seed_identical_stream(self):
        pool = [(normalized_spec(i), random_labels(i)) for i in range(4)]
        a = Augmenter(AugmentConfig(rng_seed=42))
        b = Augmenter(AugmentConfig(rng_seed=42))
        for spec, lab in pool:
            sa, la = a(spec, lab, pool=pool)
            sb, lb = b(spec, lab, pool=pool)
            np.testing.assert_array_equal(sa, sb)
            np.testing.assert_array_equal(la, lb)

    def test_mixing_never_clears_labels(self):
        pool = [(normalized_spec(i + 20), random_labels(i + 20)) for i in range(4)]
        aug = Augmenter(AugmentConfig(mix_prob=1.0, rng_seed=1))
        for spec, lab in pool:
            _, out = aug(spec, lab, pool=pool)
            assert out.sum() >= lab.sum()

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            AugmentConfig(max_freq_shift=17)
        with pytest.raises(ValueError):
            AugmentConfig(mix_prob=1.5)
