"""Export per-layer tensors from a torch model for the sparq toolchain.

Forward pre-hooks on selected Conv2d layers capture each layer's input
batch while the calibration samples run through the model once.  Every
selected layer then lands on disk as two float32 .npy files (the weight
tensor and the captured activation batch) plus a manifest.json record
carrying the min-max calibration statistic ``max_abs``, ready for
``sparq quantize``.
"""

import json
from dataclasses import dataclass, field
from fnmatch import fnmatch
from pathlib import Path

import numpy as np
import torch
from torch import nn


@dataclass(frozen=True)
class DumpSpec:
    """What to dump: which layers, how many samples, where to."""

    patterns: tuple = ("*",)
    sample_count: int = 1
    out_dir: Path = field(default_factory=lambda: Path("dump"))
    exempt_first: bool = False

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(self.patterns))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if not self.patterns:
            raise ValueError("need at least one layer selection pattern")
        if self.sample_count < 1:
            raise ValueError(f"sample_count must be >= 1, got {self.sample_count}")


def select_layers(model, patterns):
    """Conv2d submodules whose qualified name matches any pattern,
    in module-registration order.  Raises when nothing matches."""
    hits = [
        (name, mod)
        for name, mod in model.named_modules()
        if isinstance(mod, nn.Conv2d) and any(fnmatch(name, p) for p in patterns)
    ]
    if not hits:
        raise ValueError(f"no convolution layers match patterns {tuple(patterns)}")
    return hits


def _conv_geometry(name, mod):
    """Single (stride, padding) ints for a plain dense convolution."""
    stride, padding, dilation = mod.stride, mod.padding, mod.dilation
    if isinstance(padding, str) or padding[0] != padding[1]:
        raise ValueError(f"{name}: only symmetric integer padding is supported, got {padding!r}")
    if stride[0] != stride[1]:
        raise ValueError(f"{name}: only square stride is supported, got {stride!r}")
    if dilation != (1, 1) or mod.groups != 1:
        raise ValueError(f"{name}: dilated or grouped convolutions are not supported")
    return int(stride[0]), int(padding[0])


def _save_npy(path, arr):
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, np.ascontiguousarray(arr), version=(1, 0))


def _file_stem(layer_name):
    return layer_name.replace(".", "_")


def dump_model(model, samples, spec: DumpSpec):
    """Run ``spec.sample_count`` samples through ``model`` and dump the
    selected convolution layers into ``spec.out_dir``.

    ``samples`` is an N x C x H x W float batch (torch tensor or numpy
    array) with at least ``sample_count`` samples; the surplus is
    ignored.  Returns the path of the written manifest.json.
    """
    layers = select_layers(model, spec.patterns)

    if torch.is_tensor(samples):
        x = samples.detach().to(torch.float32)
    else:
        x = torch.as_tensor(np.asarray(samples, dtype=np.float32))
    if x.ndim != 4:
        raise ValueError(f"samples must be N x C x H x W, got shape {tuple(x.shape)}")
    if x.shape[0] < spec.sample_count:
        raise ValueError(f"need {spec.sample_count} samples, got {x.shape[0]}")
    x = x[: spec.sample_count]

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write_probe"
    probe.write_bytes(b"")
    probe.unlink()

    captured = {}
    order = []
    hooks = []

    def grab(name):
        def hook(module, inputs):
            batch = inputs[0].detach().cpu().to(torch.float32).numpy().copy()
            if name in captured:
                # module ran twice (weight sharing); keep every pass
                captured[name] = np.concatenate([captured[name], batch])
            else:
                order.append(name)
                captured[name] = batch
        return hook

    for name, mod in layers:
        hooks.append(mod.register_forward_pre_hook(grab(name)))
    try:
        model.eval()
        with torch.no_grad():
            model(x)
    finally:
        for h in hooks:
            h.remove()

    missing = [name for name, _ in layers if name not in captured]
    if missing:
        raise ValueError(f"selected layers never ran in forward: {missing}")

    modules = dict(layers)
    entries = []
    for position, name in enumerate(order):
        mod = modules[name]
        stride, padding = _conv_geometry(name, mod)
        acts = captured[name]
        weight = mod.weight.detach().cpu().to(torch.float32).numpy()
        exempt = spec.exempt_first and position == 0
        max_abs = float(np.abs(acts).max())
        stem = _file_stem(name)

        act_path = f"{stem}_in.npy"
        _save_npy(out_dir / act_path, acts)
        act_entry = {
            "name": f"{name}.in", "path": act_path, "role": "activation",
            "layer": name, "shape": list(acts.shape), "max_abs": max_abs,
        }
        w_path = f"{stem}_w.npy"
        _save_npy(out_dir / w_path, weight)
        w_entry = {
            "name": f"{name}.w", "path": w_path, "role": "weight",
            "layer": name, "shape": list(weight.shape),
            "stride": stride, "padding": padding,
        }
        if exempt:
            act_entry["exempt"] = True
            w_entry["exempt"] = True
        entries.extend([act_entry, w_entry])

    manifest_path = out_dir / "manifest.json"
    doc = {"model": model.__class__.__name__, "tensors": entries}
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n")
    return manifest_path
