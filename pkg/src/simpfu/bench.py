"""Inference-speed benchmark: the processing factor.

The processing factor is segment length (10 s) divided by inference wall
time; > 1 means faster than real-time acquisition. Sequential mode mimics
an edge deployment: segments one at a time, batch size 1, BLAS clamped to
a single thread. Batched mode runs batches of 32 for offline throughput.

Timing uses the monotonic high-resolution clock; warm-up iterations are
excluded and the median over repeated runs is reported.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dsp import SEGMENT_SAMPLES, SEGMENT_SECONDS, WaveformSegment, preprocess
from .models import Network
from .nn import runtime


@dataclass
class BenchReport:
    model_id: str
    mode: str  # "sequential" | "batched"
    n_segments: int
    wall_time_s: float
    processing_factor: float
    includes_preprocessing: bool


def _random_spectrograms(n: int, net: Network, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, net.arch.in_time, net.arch.in_mels)).astype(np.float32)


def _random_segments(n: int, seed: int) -> list[WaveformSegment]:
    rng = np.random.default_rng(seed)
    return [
        WaveformSegment(
            rng.normal(scale=0.1, size=SEGMENT_SAMPLES), 48000, source_id="bench", segment_index=i
        )
        for i in range(n)
    ]


def _timed_runs(fn, repeats: int) -> float:
    times = sorted(time_one(fn) for _ in range(repeats))
    return times[repeats // 2]


def time_one(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def bench_sequential(
    net: Network, n: int, warmup: int = 3, repeats: int = 3, include_dsp: bool = False, seed: int = 0
) -> BenchReport:
    """Edge-style timing: n forward passes, batch size 1, one BLAS thread."""
    if n < 1:
        raise ValueError("need at least one segment")
    if include_dsp:
        segments = _random_segments(n, seed)

        def run():
            for seg in segments:
                net.forward(preprocess(seg).data, training=False)

    else:
        inputs = _random_spectrograms(n, net, seed)

        def run():
            for i in range(n):
                net.forward(inputs[i], training=False)

    with runtime.thread_limit(1):
        for _ in range(warmup):
            net.forward(_random_spectrograms(1, net, seed + 1)[0], training=False)
        wall = _timed_runs(run, repeats)
    return BenchReport(
        model_id=net.model_id,
        mode="sequential",
        n_segments=n,
        wall_time_s=wall,
        processing_factor=n * SEGMENT_SECONDS / wall,
        includes_preprocessing=include_dsp,
    )


def bench_batched(net: Network, n: int, batch: int = 32, warmup: int = 1, repeats: int = 3, seed: int = 0) -> BenchReport:
    """Throughput timing with batched forward passes.

    When n is not a multiple of the batch size the last batch is padded;
    padding inflates measured time but never the segment count.
    """
    if n < 1:
        raise ValueError("need at least one segment")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    n_batches = -(-n // batch)
    inputs = _random_spectrograms(n_batches * batch, net, seed)

    def run():
        for b in range(n_batches):
            net.forward(inputs[b * batch : (b + 1) * batch], training=False)

    for _ in range(warmup):
        net.forward(inputs[:batch], training=False)
    wall = _timed_runs(run, repeats)
    return BenchReport(
        model_id=net.model_id,
        mode="batched",
        n_segments=n,
        wall_time_s=wall,
        processing_factor=n * SEGMENT_SECONDS / wall,
        includes_preprocessing=False,
    )


_CSV_FIELDS = [
    "timestamp",
    "model_id",
    "mode",
    "n_segments",
    "wall_time_s",
    "processing_factor",
    "includes_preprocessing",
]


def append_report_csv(report: BenchReport, path) -> None:
    """Append one row; never overwrites earlier runs."""
    path = Path(path)
    fresh = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        if fresh:
            writer.writeheader()
        writer.writerow(
            {
                "timestamp": datetime.now(timezone.utc).isoformat(),
                "model_id": report.model_id,
                "mode": report.mode,
                "n_segments": report.n_segments,
                "wall_time_s": f"{report.wall_time_s:.6f}",
                "processing_factor": f"{report.processing_factor:.4f}",
                "includes_preprocessing": report.includes_preprocessing,
            }
        )
