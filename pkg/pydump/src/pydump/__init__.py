"""pydump: export per-layer torch conv tensors for the sparq toolchain."""

from .demo import ToyCNN, build_demo, make_samples
from .dump import DumpSpec, dump_model, select_layers

__version__ = "0.1.0"

__all__ = [
    "DumpSpec",
    "ToyCNN",
    "build_demo",
    "dump_model",
    "make_samples",
    "select_layers",
]
