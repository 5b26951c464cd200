"""Waveform to standardized mel-spectrogram pipeline.

Mono 48 kHz recordings are processed in 10-second segments. Each segment
goes through: STFT log magnitude (Hann window, centered frames), band
selection to the 100-5000 Hz operating range, per-frequency median
equalization, projection onto 128 mel-scaled triangular filters, and
whole-matrix standardization. The result is always a 512 x 128 matrix.

All stages are pure functions; intermediate math runs in float64 and the
final spectrogram is stored as float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile

SAMPLE_RATE = 48000
SEGMENT_SECONDS = 10
SEGMENT_SAMPLES = SAMPLE_RATE * SEGMENT_SECONDS

LOG_EPS = 1e-10
FLAT_STD = 1e-12


class DspError(ValueError):
    """Base class for audio-input rejections."""


class UnreadableWavError(DspError):
    pass


class SampleRateError(DspError):
    pass


class ChannelCountError(DspError):
    pass


class SampleFormatError(DspError):
    pass


@dataclass(frozen=True)
class DspConfig:
    """STFT and mel-projection settings.

    The defaults give exactly 512 centered frames per 10-second segment
    (54.2% window overlap). Alternative hops are accepted only if they
    keep the frame-count identity intact.
    """

    window_len: int = 2048
    hop: int = 938
    pad: int = 1024
    f_low: float = 100.0
    f_high: float = 5000.0
    n_mels: int = 128
    n_time_bins: int = 512

    def __post_init__(self):
        frames = (SEGMENT_SAMPLES + 2 * self.pad - self.window_len) // self.hop + 1
        if frames != self.n_time_bins:
            raise ValueError(
                f"hop={self.hop}, pad={self.pad} yield {frames} frames, need {self.n_time_bins}"
            )
        overlap = 1.0 - self.hop / self.window_len
        if not 0.53 <= overlap <= 0.55:
            raise ValueError(f"window overlap {overlap:.3f} outside [0.53, 0.55]")

    @property
    def bin_hz(self) -> float:
        """Width of one STFT frequency bin."""
        return SAMPLE_RATE / self.window_len

    @property
    def n_freq_bins(self) -> int:
        return self.window_len // 2 + 1


@dataclass
class WaveformSegment:
    """One 10-second mono chunk of a recording, samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    source_id: str
    segment_index: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or len(self.samples) != SEGMENT_SAMPLES:
            raise ValueError(f"segment must hold exactly {SEGMENT_SAMPLES} samples")
        if self.sample_rate != SAMPLE_RATE:
            raise SampleRateError(f"expected {SAMPLE_RATE} sps, got {self.sample_rate}")
        if not np.isfinite(self.samples).all():
            raise ValueError("segment contains non-finite samples")
        if self.segment_index < 0:
            raise ValueError("segment index must be >= 0")


@dataclass
class MelSpectrogram:
    """512 x 128 time-frequency matrix; `degenerate` marks flat input."""

    data: np.ndarray
    normalized: bool
    degenerate: bool = False


def load_wav_segments(path) -> list[WaveformSegment]:
    """Split a mono 48 kHz PCM WAV file into 10-second segments.

    Integer PCM is scaled to [-1, 1]; the final partial segment is
    zero-padded. Accepts 16-bit integer and 32-bit float encodings only.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError, OSError) as exc:
        raise UnreadableWavError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise ChannelCountError(f"{path}: expected mono, got {data.shape[1]} channels")
    if rate != SAMPLE_RATE:
        raise SampleRateError(f"{path}: expected {SAMPLE_RATE} sps, got {rate}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise SampleFormatError(f"{path}: unsupported sample format {data.dtype}")

    segments = []
    for i in range(0, len(samples), SEGMENT_SAMPLES):
        chunk = samples[i : i + SEGMENT_SAMPLES]
        if len(chunk) < SEGMENT_SAMPLES:
            chunk = np.pad(chunk, (0, SEGMENT_SAMPLES - len(chunk)))
        segments.append(
            WaveformSegment(chunk, SAMPLE_RATE, source_id=path.stem, segment_index=i // SEGMENT_SAMPLES)
        )
    return segments


@lru_cache(maxsize=8)
def _hann(window_len: int) -> np.ndarray:
    n = np.arange(window_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_len)


def stft_log_magnitude(seg: WaveformSegment, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Log magnitude of the one-sided STFT: (n_time_bins, window_len/2 + 1).

    Frames are centered via reflection padding; each row is
    log(|DFT(hann * frame)| + 1e-10).
    """
    padded = np.pad(seg.samples, cfg.pad, mode="reflect")
    frames = sliding_window_view(padded, cfg.window_len)[:: cfg.hop][: cfg.n_time_bins]
    assert frames.shape[0] == cfg.n_time_bins
    spectrum = np.abs(np.fft.rfft(frames * _hann(cfg.window_len), axis=1))
    return np.log(spectrum + LOG_EPS)


def band_bins(cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Indices of STFT bins whose center frequency lies in [f_low, f_high]."""
    freqs = np.arange(cfg.n_freq_bins) * cfg.bin_hz
    return np.nonzero((freqs >= cfg.f_low) & (freqs <= cfg.f_high))[0]


def select_band(spec: np.ndarray, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Keep the frequency columns inside the operating range."""
    return spec[:, band_bins(cfg)]


def equalize(spec: np.ndarray) -> np.ndarray:
    """Subtract the per-frequency median (computed over time)."""
    return spec - np.median(spec, axis=0, keepdims=True)


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _filterbank(cfg: DspConfig) -> np.ndarray:
    """(n_band_bins, n_mels) triangular filters, each column summing to 1.

    Filter centers sit at n_mels equally spaced interior points of a mel
    grid spanning [f_low, f_high]; a filter too narrow to cover any STFT
    bin falls back to the single nearest bin.
    """
    band_hz = band_bins(cfg) * cfg.bin_hz
    grid_hz = _mel_inv(np.linspace(_mel(cfg.f_low), _mel(cfg.f_high), cfg.n_mels + 2))
    bank = np.zeros((len(band_hz), cfg.n_mels))
    for j in range(cfg.n_mels):
        left, center, right = grid_hz[j], grid_hz[j + 1], grid_hz[j + 2]
        rising = (band_hz - left) / (center - left)
        falling = (right - band_hz) / (right - center)
        weights = np.maximum(0.0, np.minimum(rising, falling))
        total = weights.sum()
        if total > 0.0:
            bank[:, j] = weights / total
        else:
            bank[np.argmin(np.abs(band_hz - center)), j] = 1.0
    return bank


def mel_centers(cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Center frequencies (Hz) of the mel filters, strictly increasing."""
    return _mel_inv(np.linspace(_mel(cfg.f_low), _mel(cfg.f_high), cfg.n_mels + 2))[1:-1]


def mel_project(spec: np.ndarray, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Weighted-average the band columns into n_mels mel-spaced columns."""
    return spec @ _filterbank(cfg)


def normalize(spec: np.ndarray) -> MelSpectrogram:
    """Standardize to zero mean and unit standard deviation (whole matrix).

    A flat input cannot be standardized: the result is all zeros with the
    degenerate flag set.
    """
    mean = spec.mean(dtype=np.float64)
    std = spec.std(dtype=np.float64)
    if std < FLAT_STD:
        return MelSpectrogram(np.zeros(spec.shape, np.float32), normalized=True, degenerate=True)
    return MelSpectrogram(((spec - mean) / std).astype(np.float32), normalized=True)


def preprocess(seg: WaveformSegment, cfg: DspConfig = DspConfig()) -> MelSpectrogram:
    """Full pipeline: STFT log magnitude, band selection, equalization,
    mel projection, standardization."""
    spec = stft_log_magnitude(seg, cfg)
    spec = select_band(spec, cfg)
    spec = equalize(spec)
    spec = mel_project(spec, cfg)
    return normalize(spec)
