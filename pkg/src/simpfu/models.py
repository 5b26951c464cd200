"""Model zoo: declarative variants, builder, and receptive-field reports.

A model is a stack of three regions over a (time, mel) spectrogram:

  1. Conv2D region: blocks of two conv+batchnorm+relu layers followed by
     max pooling. A time-active block uses 3x3 kernels and 2x2 pooling; a
     frequency-only block uses 1x3 kernels and 1x2 pooling, so it never
     widens the time receptive field or changes time resolution.
  2. Frequency unwrapping: the (T, F, C) activation becomes (T, F*C), so
     every later unit is connected to all frequencies.
  3. Conv1D region: two kernel-size-1 conv layers (head), then a
     kernel-size-1 output layer with sigmoid for multi-label scores.
     Variants with segment-level outputs average over time right before
     the output layer.

The canonical family has five groups (A..E) of eight variants (00..07).
Within a group, the index sets how many blocks act on the time axis, which
fixes both the output time resolution and the maximum receptive field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn import ops
from .nn.serialize import load_tensors, save_tensors

TIME_BINS = 512
MEL_BINS = 128
N_CLASSES = 20
BIN_SECONDS = 10.0 / 512.0

DEPTH_SCHEDULES = {
    "32-lin": (32, 64, 96, 128, 160, 192, 224),
    "64-lin": (64, 128, 192, 256, 320, 384, 448),
    "32-exp": (32, 64, 128, 256, 512, 1024, 2048),
}

GROUP_SCHEDULE = {"A": "32-lin", "B": "32-lin", "C": "32-lin", "D": "64-lin", "E": "32-exp"}

GROUPS = ("A", "B", "C", "D", "E")
INDICES = tuple(range(8))


@dataclass(frozen=True)
class Block:
    """One Conv2D-region block: two convs + max pool at a channel width."""

    channels: int
    time_active: bool = True


@dataclass(frozen=True)
class Architecture:
    """Structural description of one network, canonical or custom."""

    blocks: tuple[Block, ...]
    head_channels: int = 256
    n_classes: int = N_CLASSES
    avgpool: bool = False
    in_time: int = TIME_BINS
    in_mels: int = MEL_BINS

    def __post_init__(self):
        if self.in_mels % (2 ** len(self.blocks)):
            raise ValueError(f"{len(self.blocks)} blocks do not divide {self.in_mels} mel bins")
        if self.in_time % (2 ** self.n_time_blocks):
            raise ValueError(f"{self.n_time_blocks} time blocks do not divide {self.in_time} time bins")

    @property
    def n_time_blocks(self) -> int:
        return sum(1 for b in self.blocks if b.time_active)

    @property
    def output_time_res(self) -> int:
        return self.in_time // (2 ** self.n_time_blocks)

    @property
    def pre_unwrap_mels(self) -> int:
        return self.in_mels // (2 ** len(self.blocks))

    @property
    def unwrap_channels(self) -> int:
        c = self.blocks[-1].channels if self.blocks else 1
        return self.pre_unwrap_mels * c

    def to_json(self) -> dict:
        return {
            "blocks": [{"channels": b.channels, "time_active": b.time_active} for b in self.blocks],
            "head_channels": self.head_channels,
            "n_classes": self.n_classes,
            "avgpool": self.avgpool,
            "in_time": self.in_time,
            "in_mels": self.in_mels,
        }

    @staticmethod
    def from_json(d: dict) -> "Architecture":
        return Architecture(
            blocks=tuple(Block(b["channels"], b["time_active"]) for b in d["blocks"]),
            head_channels=d["head_channels"],
            n_classes=d["n_classes"],
            avgpool=d["avgpool"],
            in_time=d["in_time"],
            in_mels=d["in_mels"],
        )


@dataclass(frozen=True)
class ModelSpec:
    """Canonical variant selector: group A..E, index 0..7."""

    group: str
    index: int
    n_classes: int = N_CLASSES
    head_channels: int = 256

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown group {self.group!r} (expected one of {GROUPS})")
        if self.index not in INDICES:
            raise ValueError(f"index {self.index} out of range 0..7")

    @property
    def model_id(self) -> str:
        return f"{self.group}{self.index:02d}"

    @property
    def depth_schedule(self) -> str:
        return GROUP_SCHEDULE[self.group]

    def architecture(self) -> Architecture:
        channels = DEPTH_SCHEDULES[self.depth_schedule]
        n_time = 7 - self.index
        if self.group == "A":
            # always 7 blocks; the trailing ones act on frequency only
            blocks = tuple(Block(channels[i], time_active=i < n_time) for i in range(7))
        else:
            blocks = tuple(Block(channels[i]) for i in range(n_time))
        return Architecture(
            blocks=blocks,
            head_channels=self.head_channels,
            n_classes=self.n_classes,
            avgpool=self.group == "C",
        )


@dataclass
class MrfReport:
    """Receptive-field and size summary for one variant."""

    model_id: str
    mrf_time_bins: int
    mrf_seconds: float
    output_time_res: int
    output_freq_collapsed: bool
    n_params: int
    group: str | None = None
    index: int | None = None


def _as_architecture(spec) -> Architecture:
    return spec.architecture() if isinstance(spec, ModelSpec) else spec


def _time_layer_chain(arch: Architecture):
    """(kernel, stride) pairs along the time axis, in forward order."""
    chain = []
    for b in arch.blocks:
        k = 3 if b.time_active else 1
        p = 2 if b.time_active else 1
        chain.extend([(k, 1), (k, 1), (p, p)])
    # head and output convs have time kernel 1: no effect on the extent
    return chain


def compute_mrf(spec) -> MrfReport:
    """Maximum receptive field along time, by the standard arithmetic
    recurrence r <- r + (k - 1) * j, j <- j * s over the layer chain.

    With 'same' padding the extent can exceed the input length.
    """
    arch = _as_architecture(spec)
    r, j = 1, 1
    for k, s in _time_layer_chain(arch):
        r += (k - 1) * j
        j *= s
    model_id = spec.model_id if isinstance(spec, ModelSpec) else "custom"
    return MrfReport(
        model_id=model_id,
        mrf_time_bins=r,
        mrf_seconds=r * BIN_SECONDS,
        output_time_res=arch.output_time_res,
        output_freq_collapsed=arch.pre_unwrap_mels == 1,
        n_params=count_params(spec),
        group=spec.group if isinstance(spec, ModelSpec) else None,
        index=spec.index if isinstance(spec, ModelSpec) else None,
    )


def mrf_window(spec, t: int) -> tuple[int, int]:
    """Inclusive input-time-bin range that can influence output unit `t`.

    Unclipped: the window may extend past [0, in_time) because of padding.
    """
    arch = _as_architecture(spec)
    j, r, start = 1, 1, 0
    for k, s in _time_layer_chain(arch):
        if s == 1:
            start -= ((k - 1) // 2) * j  # symmetric 'same' padding
            r += (k - 1) * j
        else:
            r += (k - 1) * j
            j *= s
    lo = t * j + start
    return lo, lo + r - 1


def count_params(spec) -> int:
    """Trainable parameters: conv kernels and biases plus batchnorm scale/shift."""
    arch = _as_architecture(spec)
    total = 0
    cin = 1
    for b in arch.blocks:
        kt = 3 if b.time_active else 1
        for c_from in (cin, b.channels):
            total += kt * 3 * c_from * b.channels + b.channels  # kernel + bias
            total += 2 * b.channels  # batchnorm gamma/beta
        cin = b.channels
    h = arch.head_channels
    total += arch.unwrap_channels * h + h + 2 * h
    total += h * h + h + 2 * h
    total += h * arch.n_classes + arch.n_classes
    return total


def table4_report() -> list[MrfReport]:
    """MRF/size summary for all 40 canonical variants."""
    return [compute_mrf(ModelSpec(g, i)) for g in GROUPS for i in INDICES]


# --------------------------------------------------------------------------
# layers and network construction
# --------------------------------------------------------------------------


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class _Conv2d:
    def __init__(self, name, kt, kf, cin, cout, rng):
        self.name = name
        self.kernel = nn.Tensor(
            glorot_uniform((kt, kf, cin, cout), kt * kf * cin, kt * kf * cout, rng),
            requires_grad=True,
            name=f"{name}.kernel",
        )
        self.bias = nn.Tensor(np.zeros(cout, np.float32), requires_grad=True, name=f"{name}.bias")

    def forward(self, x, training):
        return nn.conv2d(x, self.kernel, self.bias)

    def parameters(self):
        return [self.kernel, self.bias]

    def buffers(self):
        return []


class _Conv1x1:
    def __init__(self, name, cin, cout, rng):
        self.name = name
        self.kernel = nn.Tensor(
            glorot_uniform((cin, cout), cin, cout, rng), requires_grad=True, name=f"{name}.kernel"
        )
        self.bias = nn.Tensor(np.zeros(cout, np.float32), requires_grad=True, name=f"{name}.bias")

    def forward(self, x, training):
        return nn.conv1d_k1(x, self.kernel, self.bias)

    def parameters(self):
        return [self.kernel, self.bias]

    def buffers(self):
        return []


class _BatchNorm:
    def __init__(self, name, channels):
        self.name = name
        self.gamma = nn.Tensor(np.ones(channels, np.float32), requires_grad=True, name=f"{name}.gamma")
        self.beta = nn.Tensor(np.zeros(channels, np.float32), requires_grad=True, name=f"{name}.beta")
        self.state = ops.BatchNormState(channels)

    def forward(self, x, training):
        return nn.batchnorm(x, self.gamma, self.beta, self.state, training)

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [(f"{self.name}.running_mean", self.state.mean), (f"{self.name}.running_var", self.state.var)]


class _Stateless:
    def __init__(self, fn, name):
        self.fn = fn
        self.name = name

    def forward(self, x, training):
        return self.fn(x)

    def parameters(self):
        return []

    def buffers(self):
        return []


class _MaxPool:
    def __init__(self, window, name):
        self.window = window
        self.name = name

    def forward(self, x, training):
        return nn.maxpool2d(x, self.window)

    def parameters(self):
        return []

    def buffers(self):
        return []


class Network:
    """A built model: ordered layers plus the architecture they realize."""

    def __init__(self, arch: Architecture, layers: list, model_id: str = "custom"):
        self.arch = arch
        self.layers = layers
        self.model_id = model_id

    @property
    def output_time_res(self) -> int:
        return 1 if self.arch.avgpool else self.arch.output_time_res

    def forward(self, x, training: bool = False) -> nn.Tensor:
        """Run (T, F) or (B, T, F) spectrogram data through the network."""
        data = x.data if isinstance(x, nn.Tensor) else np.asarray(x, dtype=np.float32)
        if data.ndim not in (2, 3):
            raise ValueError("expected (T, F) or (B, T, F) spectrogram input")
        h = nn.Tensor(data[..., None])
        for layer in self.layers:
            h = layer.forward(h, training)
        return h

    def __call__(self, x, training: bool = False) -> nn.Tensor:
        return self.forward(x, training)

    def parameters(self) -> list[nn.Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        """Parameters and running statistics, in construction order."""
        out = [(p.name, p.data) for p in self.parameters()]
        for layer in self.layers:
            out.extend(layer.buffers())
        return out

    def load_named_tensors(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            src = arrays[p.name]
            if src.shape != p.data.shape:
                raise ValueError(f"{p.name}: shape {src.shape} != {p.data.shape}")
            p.data = src.astype(np.float32)
        for layer in self.layers:
            for name, buf in layer.buffers():
                buf[...] = arrays[name]


def build(spec, seed: int = 0) -> Network:
    """Construct a network with freshly initialized weights."""
    arch = _as_architecture(spec)
    rng = np.random.default_rng(seed)
    layers = []
    cin = 1
    for i, b in enumerate(arch.blocks, start=1):
        kt = 3 if b.time_active else 1
        pool = (2, 2) if b.time_active else (1, 2)
        layers.append(_Conv2d(f"block{i}.conv1", kt, 3, cin, b.channels, rng))
        layers.append(_BatchNorm(f"block{i}.bn1", b.channels))
        layers.append(_Stateless(nn.relu, f"block{i}.relu1"))
        layers.append(_Conv2d(f"block{i}.conv2", kt, 3, b.channels, b.channels, rng))
        layers.append(_BatchNorm(f"block{i}.bn2", b.channels))
        layers.append(_Stateless(nn.relu, f"block{i}.relu2"))
        layers.append(_MaxPool(pool, f"block{i}.pool"))
        cin = b.channels
    layers.append(_Stateless(nn.frequency_unwrap, "unwrap"))
    h = arch.head_channels
    layers.append(_Conv1x1("head.conv1", arch.unwrap_channels, h, rng))
    layers.append(_BatchNorm("head.bn1", h))
    layers.append(_Stateless(nn.relu, "head.relu1"))
    layers.append(_Conv1x1("head.conv2", h, h, rng))
    layers.append(_BatchNorm("head.bn2", h))
    layers.append(_Stateless(nn.relu, "head.relu2"))
    if arch.avgpool:
        layers.append(_Stateless(nn.avgpool_time, "avgpool"))
    layers.append(_Conv1x1("out", h, arch.n_classes, rng))
    layers.append(_Stateless(nn.sigmoid, "out.sigmoid"))
    model_id = spec.model_id if isinstance(spec, ModelSpec) else "custom"
    return Network(arch, layers, model_id)


def save_model(path, network: Network, extra: dict | None = None) -> None:
    meta = dict(extra or {})
    meta["model"] = {"id": network.model_id, "architecture": network.arch.to_json()}
    save_tensors(path, network.named_tensors(), extra=meta)


def load_model(path) -> Network:
    manifest, arrays = load_tensors(path)
    arch = Architecture.from_json(manifest["model"]["architecture"])
    network = build(arch)
    network.model_id = manifest["model"]["id"]
    network.load_named_tensors(arrays)
    return network
