"""Bioacoustic sound-type classification with frequency-unwrapping CNNs.

The pipeline: 10-second mono recordings become standardized 512 x 128
mel spectrograms (`dsp`), annotations become 512 x 20 time-indexed label
matrices (`labels`), a family of compact CNN variants built on a small
autodiff engine (`nn`, `models`) is trained with augmentation (`augment`,
`training`) and evaluated with per-class AUC/AP (`metrics`), and inference
speed is measured as the processing factor (`bench`). `cli` wires it all
into one command-line tool.
"""

__version__ = "0.1.0"

from . import augment, bench, container, dsp, labels, metrics, models, nn, training

__all__ = [
    "__version__",
    "augment",
    "bench",
    "container",
    "dsp",
    "labels",
    "metrics",
    "models",
    "nn",
    "training",
]
