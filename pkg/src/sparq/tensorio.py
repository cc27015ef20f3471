"""Tensor ingest and egress: min-max quantization to the datapath's
integer formats, convolution lowering, and the on-disk exchange formats
(.npy arrays plus a small JSON manifest).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "QuantTensor",
    "quantize_activations",
    "quantize_weights_per_kernel",
    "dequantize_output",
    "im2col",
    "conv_output_shape",
    "save_tensor",
    "load_tensor",
    "ManifestEntry",
    "TensorManifest",
]

_ALLOWED_DTYPES = ("uint8", "int8", "int32", "float32")


@dataclass(frozen=True)
class QuantTensor:
    """Integer tensor plus the scale(s) that map it back to real values."""

    data: np.ndarray
    scales: np.ndarray
    signed: bool


def quantize_activations(x: np.ndarray, max_abs: float | None = None) -> QuantTensor:
    """Quantize non-negative activations to uint8 with one per-tensor
    scale ``max_abs / 255``; values round half up.

    ``max_abs`` is normally a calibrated maximum carried alongside the
    tensor; when omitted the tensor's own maximum is used.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot quantize an empty activation tensor")
    if np.any(x < 0):
        raise ValueError("activations must be non-negative (post-ReLU)")
    if max_abs is None:
        max_abs = float(x.max())
    if max_abs <= 0:
        raise ValueError(f"calibrated max_abs must be positive, got {max_abs}")
    scale = float(max_abs) / 255.0
    q = np.clip(np.floor(x / scale + 0.5), 0, 255).astype(np.uint8)
    return QuantTensor(q, np.array([scale]), signed=False)


def quantize_weights_per_kernel(w: np.ndarray) -> QuantTensor:
    """Quantize weights to int8 with one scale per kernel (leading axis),
    ``max|w_o| / 127``.  An all-zero kernel gets scale 1."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim < 1 or w.shape[0] == 0:
        raise ValueError("weights need a non-empty kernel axis")
    flat = w.reshape(w.shape[0], -1)
    max_abs = np.abs(flat).max(axis=1) if flat.shape[1] else np.zeros(w.shape[0])
    scales = np.where(max_abs > 0, max_abs / 127.0, 1.0)
    shaped = scales.reshape((-1,) + (1,) * (w.ndim - 1))
    q = np.clip(np.floor(w / shaped + 0.5), -127, 127).astype(np.int8)
    return QuantTensor(q, scales, signed=True)


def dequantize_output(y: np.ndarray, act_scale: float, w_scales: np.ndarray, kernel_axis: int = 1) -> np.ndarray:
    """Map integer accumulator outputs back to real values: each output
    along ``kernel_axis`` is scaled by ``act_scale * w_scales[o]``."""
    y = np.asarray(y)
    w_scales = np.asarray(w_scales, dtype=np.float64)
    if w_scales.ndim != 1 or w_scales.shape[0] != y.shape[kernel_axis]:
        raise ValueError(
            f"need one weight scale per kernel: {w_scales.shape} vs axis {kernel_axis} of {y.shape}"
        )
    shape = [1] * y.ndim
    shape[kernel_axis] = -1
    return y.astype(np.float64) * float(act_scale) * w_scales.reshape(shape)


def conv_output_shape(h: int, w: int, kh: int, kw: int, stride: int = 1, padding: int = 0):
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{w} with padding {padding}")
    return out_h, out_w


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Lower a C x H x W input to a patch matrix of shape
    [out_h*out_w, C*kh*kw] so convolution becomes a matmul.

    Each row is one receptive field, laid out channel-major, then kernel
    row, then kernel column, matching ``weights.reshape(O, -1)``.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected a C x H x W tensor, got shape {x.shape}")
    c, h, w = x.shape
    out_h, out_w = conv_output_shape(h, w, kh, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    patches = np.empty((out_h * out_w, c * kh * kw), dtype=x.dtype)
    for oy in range(out_h):
        for ox in range(out_w):
            window = x[:, oy * stride : oy * stride + kh, ox * stride : ox * stride + kw]
            patches[oy * out_w + ox] = window.reshape(-1)
    return patches


def save_tensor(path, arr: np.ndarray) -> None:
    """Write one array as a version-1.0 .npy file."""
    arr = np.ascontiguousarray(arr)
    if arr.dtype.name not in _ALLOWED_DTYPES:
        raise ValueError(f"dtype {arr.dtype} is not part of the exchange format")
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, arr, version=(1, 0))


def load_tensor(path) -> np.ndarray:
    arr = np.load(path, allow_pickle=False)
    if arr.dtype.name not in _ALLOWED_DTYPES:
        raise ValueError(f"{path}: dtype {arr.dtype} is not part of the exchange format")
    return np.ascontiguousarray(arr)


@dataclass
class ManifestEntry:
    """One tensor record: where it lives and how to interpret it."""

    name: str
    path: str
    role: str
    layer: str
    shape: tuple
    scale: float | None = None
    scales: list | None = None
    max_abs: float | None = None
    exempt: bool = False
    stride: int = 1
    padding: int = 0

    _ROLES = ("activation", "weight", "output")

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "path": self.path,
            "role": self.role,
            "layer": self.layer,
            "shape": list(self.shape),
        }
        if self.scale is not None:
            out["scale"] = self.scale
        if self.scales is not None:
            out["scales"] = list(self.scales)
        if self.max_abs is not None:
            out["max_abs"] = self.max_abs
        if self.exempt:
            out["exempt"] = True
        if self.role == "weight" and len(self.shape) == 4:
            out["stride"] = self.stride
            out["padding"] = self.padding
        return out

    @classmethod
    def from_json(cls, d: dict) -> "ManifestEntry":
        entry = cls(
            name=d["name"],
            path=d["path"],
            role=d["role"],
            layer=d["layer"],
            shape=tuple(d["shape"]),
            scale=d.get("scale"),
            scales=d.get("scales"),
            max_abs=d.get("max_abs"),
            exempt=bool(d.get("exempt", False)),
            stride=int(d.get("stride", 1)),
            padding=int(d.get("padding", 0)),
        )
        if entry.role not in cls._ROLES:
            raise ValueError(f"{entry.name}: unknown role {entry.role!r}")
        return entry


@dataclass
class TensorManifest:
    """Ordered collection of tensor records, stored as JSON next to the
    .npy files it points at (paths are manifest-relative)."""

    entries: list = field(default_factory=list)
    root: Path = field(default_factory=Path)
    model: str = ""

    def add(self, entry: ManifestEntry) -> None:
        if any(e.name == entry.name for e in self.entries):
            raise ValueError(f"duplicate tensor name {entry.name!r}")
        self.entries.append(entry)

    def find(self, name: str) -> ManifestEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def for_layer(self, layer: str, role: str | None = None) -> list:
        hits = [e for e in self.entries if e.layer == layer]
        if role is not None:
            hits = [e for e in hits if e.role == role]
        return hits

    def layers(self) -> list:
        seen = []
        for e in self.entries:
            if e.layer not in seen:
                seen.append(e.layer)
        return seen

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def load(self, name: str) -> np.ndarray:
        entry = self.find(name)
        arr = load_tensor(self.resolve(entry))
        if tuple(arr.shape) != tuple(entry.shape):
            raise ValueError(
                f"{name}: manifest says shape {tuple(entry.shape)}, file has {arr.shape}"
            )
        return arr

    def save(self, path) -> None:
        path = Path(path)
        doc = {"model": self.model, "tensors": [e.to_json() for e in self.entries]}
        path.write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load_file(cls, path) -> "TensorManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        manifest = cls(root=path.parent, model=str(doc.get("model", "")))
        for d in doc.get("tensors", []):
            manifest.add(ManifestEntry.from_json(d))
        for e in manifest.entries:
            if not manifest.resolve(e).exists():
                raise FileNotFoundError(f"{e.name}: missing tensor file {e.path}")
        return manifest
