"""Training loop, prediction summarization, and AUC/AP evaluation.

A dataset is a sequence of (spectrogram, labels) pairs: a float32
(512 x 128) matrix and a binary (512 x n_classes) matrix. Labels are
downsampled per sample to the model's output time resolution after
augmentation, so mixing and time shifts act at full label resolution.

Training is deterministic for a given seed: weight init, class-balanced
epoch assembly, shuffling, and augmentation all draw from streams derived
from `TrainConfig.seed`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .augment import AugmentConfig, Augmenter
from .labels import balance, build_epoch, class_counts, downsample, segment_class_sets, to_segment
from .metrics import auc, average_precision
from .models import Network, build


@dataclass
class TrainConfig:
    epochs: int = 11
    batch_size: int = 32
    lr0: float = 0.001
    decay: float = 0.001
    replicates: int = 4
    seed: int = 0
    target_epoch_size: int | None = 14670
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.replicates < 1:
            raise ValueError("epochs must be >= 0, batch_size and replicates >= 1")
        if self.lr0 <= 0 or self.decay < 0:
            raise ValueError("lr0 must be positive and decay non-negative")


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries the loss trace so far."""

    def __init__(self, message, losses):
        super().__init__(message)
        self.losses = losses


@dataclass
class TrainResult:
    network: Network
    losses: list[float]  # mean loss per epoch
    seed: int


def _label_arrays(dataset):
    return [np.asarray(lab) for _, lab in dataset]


def train(dataset, spec, cfg: TrainConfig) -> TrainResult:
    """Train a model built from `spec` on (spectrogram, labels) pairs.

    One epoch is a pass over the class-balanced (and optionally augmented)
    dataset; with `target_epoch_size=None` the raw dataset is used as-is.
    Returns the trained network and the per-epoch loss trace.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_seed = int(seeds[0].generate_state(1)[0])
    epoch_rng = np.random.default_rng(seeds[1])
    augmenter = Augmenter(cfg.augment, rng=np.random.default_rng(seeds[2])) if cfg.augment else None

    net = build(spec, seed=init_seed)
    optimizer = nn.Adam(net.parameters(), lr0=cfg.lr0, decay=cfg.decay)
    out_res = net.output_time_res

    label_mats = _label_arrays(dataset)
    n_classes = label_mats[0].shape[1]
    if n_classes != net.arch.n_classes:
        raise ValueError(f"dataset has {n_classes} classes, model expects {net.arch.n_classes}")
    if cfg.target_epoch_size is not None:
        plan = balance(class_counts(label_mats, n_classes), cfg.target_epoch_size)
        class_sets = segment_class_sets(label_mats)
    else:
        plan = None

    losses: list[float] = []
    for _ in range(cfg.epochs):
        if plan is not None:
            epoch = build_epoch(plan, class_sets, seed=int(epoch_rng.integers(2**31)))
        else:
            epoch = epoch_rng.permutation(len(dataset))
        total, seen = 0.0, 0
        for start in range(0, len(epoch), cfg.batch_size):
            batch = epoch[start : start + cfg.batch_size]
            xs, ys = [], []
            for i in batch:
                spec_i, lab_i = dataset[i]
                spec_i = np.asarray(spec_i, dtype=np.float32)
                lab_i = np.asarray(lab_i)
                if augmenter is not None:
                    spec_i, lab_i = augmenter(spec_i, lab_i, pool=dataset)
                xs.append(spec_i)
                ys.append(downsample(lab_i, out_res))
            x = np.stack(xs)
            y = np.stack(ys).astype(np.float32)
            with nn.Tape() as tape:
                pred = net.forward(x, training=True)
                loss = nn.bce_loss(pred, y)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {len(losses)}", losses)
            tape.backward(loss)
            optimizer.step()
            optimizer.zero_grad()
            total += value * len(batch)
            seen += len(batch)
        losses.append(total / seen)
    return TrainResult(network=net, losses=losses, seed=cfg.seed)


def predict_segment(net: Network, spec) -> np.ndarray:
    """Per-class scores in [0, 1]: mean of the output over its time bins."""
    data = getattr(spec, "data", spec)
    out = net.forward(np.asarray(data, dtype=np.float32), training=False)
    return out.data.mean(axis=0, dtype=np.float64).astype(np.float32)


def predict_batch(net: Network, specs: np.ndarray) -> np.ndarray:
    """Scores for a (B, T, F) stack of spectrograms: (B, n_classes)."""
    out = net.forward(np.asarray(specs, dtype=np.float32), training=False)
    return out.data.mean(axis=1, dtype=np.float64).astype(np.float32)


@dataclass
class EvalReport:
    per_class_auc: np.ndarray
    per_class_ap: np.ndarray
    macro_auc: float
    macro_ap: float
    n_segments: int
    class_proportions: np.ndarray
    undefined_classes: list[int]  # absent (or all-present) in the test set

    def rows(self):
        """(class_id, auc, ap, proportion) per class, NaN where undefined."""
        for c in range(len(self.per_class_auc)):
            yield c, self.per_class_auc[c], self.per_class_ap[c], self.class_proportions[c]


def evaluate(net: Network, test_set, batch_size: int = 32) -> EvalReport:
    """Segment-level evaluation: AUC and AP per class plus macro means.

    Classes without both a positive and a negative segment get NaN metrics
    and are excluded from the macros.
    """
    specs = np.stack([np.asarray(s, dtype=np.float32) for s, _ in test_set])
    truth = np.stack([to_segment(np.asarray(lab)) for _, lab in test_set])
    scores = np.concatenate(
        [predict_batch(net, specs[i : i + batch_size]) for i in range(0, len(specs), batch_size)]
    )
    n_classes = truth.shape[1]
    per_auc = np.array([auc(scores[:, c], truth[:, c]) for c in range(n_classes)])
    per_ap = np.array([average_precision(scores[:, c], truth[:, c]) for c in range(n_classes)])
    defined = ~(np.isnan(per_auc) | np.isnan(per_ap))
    return EvalReport(
        per_class_auc=per_auc,
        per_class_ap=per_ap,
        macro_auc=float(per_auc[defined].mean()) if defined.any() else float("nan"),
        macro_ap=float(per_ap[defined].mean()) if defined.any() else float("nan"),
        n_segments=len(test_set),
        class_proportions=truth.mean(axis=0),
        undefined_classes=[int(c) for c in np.nonzero(~defined)[0]],
    )
