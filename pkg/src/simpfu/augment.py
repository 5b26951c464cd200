"""Training-time augmentation: frequency shift, circular time shift, and
segment mixing.

All distortions preserve the (512 x 128) spectrogram and (512 x n) label
shapes. Frequency shifts leave labels untouched (labels carry no frequency
axis); time shifts roll spectrogram and labels together; mixing averages
two normalized spectrograms (re-standardized) and ORs their labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TIME_BINS = 512
MAX_SHIFT_CAP = 16  # beyond this the band semantics of the classes break


@dataclass(frozen=True)
class AugmentConfig:
    max_freq_shift: int = 4
    mix_prob: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.max_freq_shift <= MAX_SHIFT_CAP:
            raise ValueError(f"max_freq_shift must be in [0, {MAX_SHIFT_CAP}]")
        if not 0.0 <= self.mix_prob <= 1.0:
            raise ValueError("mix_prob must be in [0, 1]")


def freq_shift(spec: np.ndarray, delta: int, max_shift: int = 4) -> np.ndarray:
    """Shift columns by `delta` mel bins; vacated columns replicate the edge."""
    if abs(delta) > max_shift:
        raise ValueError(f"|delta|={abs(delta)} exceeds max_shift={max_shift}")
    if delta == 0:
        return spec.copy()
    out = np.empty_like(spec)
    if delta > 0:
        out[:, delta:] = spec[:, :-delta]
        out[:, :delta] = spec[:, :1]
    else:
        out[:, :delta] = spec[:, -delta:]
        out[:, delta:] = spec[:, -1:]
    return out


def time_shift(spec: np.ndarray, lab: np.ndarray, s: int) -> tuple[np.ndarray, np.ndarray]:
    """Circular shift of spectrogram rows and label rows by the same amount."""
    return np.roll(spec, s, axis=0), np.roll(lab, s, axis=0)


def mix(a: tuple[np.ndarray, np.ndarray], b: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Blend two segments: mean spectrogram re-standardized, labels ORed."""
    spec_a, lab_a = a
    spec_b, lab_b = b
    blended = (spec_a.astype(np.float64) + spec_b.astype(np.float64)) / 2.0
    std = blended.std()
    if std < 1e-12:
        spec = np.zeros_like(spec_a, dtype=np.float32)
    else:
        spec = ((blended - blended.mean()) / std).astype(np.float32)
    return spec, np.maximum(lab_a, lab_b)


class Augmenter:
    """Applies the configured random distortions, driven by one seeded RNG.

    With a fixed seed and call order the produced epoch is identical across
    runs. A mixing partner pool (list of (spectrogram, labels) pairs) is
    optional; without it only shifts are applied.
    """

    def __init__(self, cfg: AugmentConfig, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)

    def _shifted(self, spec, lab):
        delta = int(self.rng.integers(-self.cfg.max_freq_shift, self.cfg.max_freq_shift + 1))
        spec = freq_shift(spec, delta, self.cfg.max_freq_shift)
        s = int(self.rng.integers(0, TIME_BINS))
        return time_shift(spec, lab, s)

    def __call__(self, spec: np.ndarray, lab: np.ndarray, pool=None):
        spec, lab = self._shifted(spec, lab)
        if pool is not None and len(pool) > 0 and self.rng.random() < self.cfg.mix_prob:
            j = int(self.rng.integers(0, len(pool)))
            partner = self._shifted(*pool[j])
            spec, lab = mix((spec, lab), partner)
        return spec, lab
