"""Time-indexed label matrices and class re-balancing plans.

Annotations give the start/end time of one sound within a 10-second
segment. They are encoded as a binary (512 time bins x n classes) matrix:
a bin is set when the annotated interval intersects it, so even very short
sounds never vanish. Matrices can be max-pool downsampled to any divisor
resolution, including 1 (segment-level presence).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TIME_BINS = 512
N_CLASSES = 20
SEGMENT_SECONDS = 10.0
BIN_SECONDS = SEGMENT_SECONDS / TIME_BINS  # exactly representable: 5 * 2**-8


@dataclass(frozen=True)
class Annotation:
    """One labeled sound event: class plus [start, end) in seconds."""

    class_id: int
    start: float
    end: float
    source_segment: str = ""

    def __post_init__(self):
        if not 0 <= self.class_id < N_CLASSES:
            raise ValueError(f"class_id {self.class_id} outside 0..{N_CLASSES - 1}")
        if not (0.0 <= self.start < self.end <= SEGMENT_SECONDS):
            raise ValueError(
                f"annotation times ({self.start}, {self.end}) must satisfy 0 <= start < end <= 10"
            )


def encode(annotations, n_classes: int = N_CLASSES) -> np.ndarray:
    """Binary (TIME_BINS, n_classes) matrix; bin b of class c is set when
    some annotation of class c intersects [b*delta, (b+1)*delta).

    Overlapping annotations of one class OR together.
    """
    out = np.zeros((TIME_BINS, n_classes), dtype=np.uint8)
    edges = np.arange(TIME_BINS + 1) * BIN_SECONDS
    for ann in annotations:
        if ann.class_id >= n_classes:
            raise ValueError(f"class_id {ann.class_id} outside 0..{n_classes - 1}")
        mask = (edges[:-1] < ann.end) & (edges[1:] > ann.start)
        out[mask, ann.class_id] = 1
    return out


def downsample(labels: np.ndarray, out_res: int) -> np.ndarray:
    """Block-wise max pooling along time to `out_res` bins (a divisor)."""
    labels = np.asarray(labels)
    t = labels.shape[0]
    if out_res < 1 or t % out_res:
        raise ValueError(f"out_res {out_res} does not divide {t} time bins")
    block = t // out_res
    return labels.reshape(out_res, block, labels.shape[1]).max(axis=1)


def to_segment(labels: np.ndarray) -> np.ndarray:
    """Per-class presence anywhere in the segment: a length-n_classes vector."""
    return downsample(labels, 1)[0]


@dataclass
class BalancePlan:
    """Per-class replication factors plus the exact epoch size to build."""

    replication: dict[int, int]
    target_total: int


def balance(counts: dict[int, int], target_total: int) -> BalancePlan:
    """Replication factors that push every class toward the most frequent one.

    `counts` maps class id to the number of training segments containing it.
    Epoch assembly (`build_epoch`) caps or cycles the replicated pool so the
    final epoch holds exactly `target_total` entries.
    """
    if target_total <= 0:
        raise ValueError("target_total must be positive")
    positive = [n for n in counts.values() if n > 0]
    top = max(positive, default=0)
    replication = {}
    for c, n in counts.items():
        replication[c] = max(1, round(top / n)) if n > 0 else 1
    return BalancePlan(replication=replication, target_total=target_total)


def build_epoch(plan: BalancePlan, segment_classes, seed: int) -> np.ndarray:
    """Deterministic epoch of segment indices, length exactly target_total.

    `segment_classes` holds, per segment, the classes present in it. Each
    segment is replicated by the largest factor among its classes (segments
    with no target class appear once), the pool is shuffled, then truncated
    or cycled to the target size.
    """
    pool = []
    for i, classes in enumerate(segment_classes):
        reps = max((plan.replication.get(c, 1) for c in classes), default=1)
        pool.extend([i] * reps)
    pool = np.asarray(pool, dtype=np.int64)
    rng = np.random.default_rng(seed)
    rng.shuffle(pool)
    if len(pool) >= plan.target_total:
        return pool[: plan.target_total]
    reps = -(-plan.target_total // len(pool))
    return np.tile(pool, reps)[: plan.target_total]


def segment_class_sets(label_matrices) -> list[np.ndarray]:
    """Classes present in each segment's label matrix."""
    return [np.nonzero(to_segment(m))[0] for m in label_matrices]


def class_counts(label_matrices, n_classes: int = N_CLASSES) -> dict[int, int]:
    """Number of segments containing each class."""
    counts = dict.fromkeys(range(n_classes), 0)
    for m in label_matrices:
        for c in np.nonzero(to_segment(m))[0]:
            counts[int(c)] += 1
    return counts


# --------------------------------------------------------------------------
# annotation CSV exchange format
# --------------------------------------------------------------------------

CSV_HEADER = ["segment_id", "class_id", "start_s", "end_s"]


def read_annotations_csv(path) -> dict[str, list[Annotation]]:
    """Parse the annotation exchange CSV, grouping rows by segment id.

    Expected header: segment_id,class_id,start_s,end_s (UTF-8, decimal
    point).
    """
    by_segment: dict[str, list[Annotation]] = {}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"bad annotation CSV header {header}, expected {CSV_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"line {lineno}: expected 4 fields, got {len(row)}")
            seg, cls, start, end = row
            ann = Annotation(class_id=int(cls), start=float(start), end=float(end), source_segment=seg)
            by_segment.setdefault(seg, []).append(ann)
    return by_segment
