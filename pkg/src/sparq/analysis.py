"""Measurement helpers: activation bit statistics, window coverage
probabilities, quantization error metrics, metadata accounting, and
seeded synthetic tensors for sweeps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bitquant import TrimConfig

__all__ = [
    "ToggleStats",
    "bit_toggle_stats",
    "msb_window_probability",
    "empirical_window_probability",
    "error_metrics",
    "metadata_overhead",
    "SimReport",
    "synthetic_activations",
    "synthetic_weights",
    "activation_sparsity",
    "pair_zero_fraction",
]


@dataclass(frozen=True)
class ToggleStats:
    """Per-bit set rates over the nonzero activations of a tensor."""

    rates: tuple
    nonzero_count: int

    @property
    def empty(self) -> bool:
        return self.nonzero_count == 0


def bit_toggle_stats(x: np.ndarray) -> ToggleStats:
    """Rate at which each of the 8 bits is set, bit 7 first, computed
    over nonzero elements only (zeros are handled by pairing, not
    trimming, so they would just dilute the statistic)."""
    x = np.asarray(x)
    if x.dtype != np.uint8:
        raise ValueError(f"expected uint8 activations, got {x.dtype}")
    nz = x[x != 0]
    if nz.size == 0:
        return ToggleStats(rates=(0.0,) * 8, nonzero_count=0)
    rates = tuple(float(np.mean((nz >> b) & 1)) for b in range(7, -1, -1))
    return ToggleStats(rates=rates, nonzero_count=int(nz.size))


def msb_window_probability(rates, window: int) -> float:
    """Probability that the most significant set bit lands inside the
    top ``window`` bit positions, assuming independent per-bit rates:
    one minus the chance all those bits are clear."""
    if not 1 <= window <= len(rates):
        raise ValueError(f"window {window} out of range for {len(rates)} bit rates")
    clear_all = 1.0
    for r in rates[:window]:
        clear_all *= 1.0 - r
    return 1.0 - clear_all


def empirical_window_probability(x: np.ndarray, window: int) -> float:
    """Measured fraction of nonzero elements whose leading set bit is in
    the top ``window`` positions."""
    x = np.asarray(x)
    if x.dtype != np.uint8:
        raise ValueError(f"expected uint8 activations, got {x.dtype}")
    if not 1 <= window <= 8:
        raise ValueError(f"window {window} out of range")
    nz = x[x != 0]
    if nz.size == 0:
        return 0.0
    return float(np.mean(nz >= (1 << (8 - window))))


def error_metrics(exact: np.ndarray, approx: np.ndarray) -> dict:
    """MSE and SQNR (dB) of an approximate result against the exact one.

    A zero exact signal with zero error reports -inf dB; zero error with
    signal reports +inf dB.  Both survive the JSON round trip.
    """
    exact = np.asarray(exact, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    if exact.shape != approx.shape:
        raise ValueError(f"shape mismatch: {exact.shape} vs {approx.shape}")
    if exact.size == 0:
        raise ValueError("cannot score empty tensors")
    mse = float(np.mean((exact - approx) ** 2))
    power = float(np.mean(exact**2))
    if mse == 0.0:
        sqnr = math.inf if power > 0 else -math.inf
    elif power == 0.0:
        sqnr = -math.inf
    else:
        sqnr = 10.0 * math.log10(power / mse)
    return {"mse": mse, "sqnr_db": sqnr}


def metadata_overhead(cfg: TrimConfig, vsparq: bool) -> int:
    """Per-value metadata bits: the window identifier, plus one bit of
    pair bookkeeping when zero-skipping pairing is on."""
    return cfg.shift_ctrl_bits + (1 if vsparq else 0)


@dataclass
class SimReport:
    """Flat record of one simulated matmul, JSON-serializable."""

    engine: str
    config: str
    rounding: bool
    vsparq: bool
    shape_a: tuple
    shape_b: tuple
    mse: float
    sqnr_db: float
    activation_sparsity: float
    pair_zero_fraction: float
    toggle_rates: tuple
    metadata_bits_per_activation: int
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "engine": self.engine,
            "config": self.config,
            "rounding": self.rounding,
            "vsparq": self.vsparq,
            "shape_a": list(self.shape_a),
            "shape_b": list(self.shape_b),
            "mse": self.mse,
            "sqnr_db": self.sqnr_db,
            "activation_sparsity": self.activation_sparsity,
            "pair_zero_fraction": self.pair_zero_fraction,
            "toggle_rates": list(self.toggle_rates),
            "metadata_bits_per_activation": self.metadata_bits_per_activation,
        }
        out.update(self.extra)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def synthetic_activations(shape, sigma: float = 40.0, zero_fraction: float = 0.0, seed: int = 0) -> np.ndarray:
    """Half-Gaussian uint8 activations with an extra slug of exact zeros,
    the usual texture of a post-ReLU feature map."""
    if not 0.0 <= zero_fraction <= 1.0:
        raise ValueError(f"zero_fraction {zero_fraction} outside [0, 1]")
    rng = np.random.default_rng(seed)
    vals = np.clip(np.abs(rng.normal(0.0, sigma, size=shape)), 0, 255)
    vals = np.floor(vals + 0.5).astype(np.uint8)
    if zero_fraction:
        vals[rng.random(shape) < zero_fraction] = 0
    return vals


def synthetic_weights(shape, sigma: float = 30.0, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    vals = np.clip(rng.normal(0.0, sigma, size=shape), -127, 127)
    return np.floor(vals + 0.5).astype(np.int8)


def activation_sparsity(x: np.ndarray) -> float:
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("empty tensor has no sparsity")
    return float(np.mean(x == 0))


def pair_zero_fraction(x: np.ndarray) -> float:
    """Fraction of adjacent activation pairs (along the last axis, odd
    tails zero-padded) holding at least one zero, i.e. the share of
    pairs the pairing path represents without trimming error."""
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("empty tensor has no pairs")
    flat = x.reshape(-1, x.shape[-1])
    if flat.shape[1] % 2:
        flat = np.pad(flat, ((0, 0), (0, 1)))
    pairs = flat.reshape(flat.shape[0], -1, 2)
    return float(np.mean(np.any(pairs == 0, axis=-1)))
