"""Zero-aware pair encoding of activations.

Activations are processed in adjacent pairs.  A pair containing a zero
lets the nonzero member span the pair's whole bit budget (exact for
4-bit configs, a double-width window otherwise); when both members are
nonzero each one is window-trimmed on its own.  Weights are never
inspected, so the encoding depends only on the activation stream.
"""

from __future__ import annotations

import enum
from operator import index as _int
from typing import NamedTuple, Sequence

import numpy as np

from .bitquant import (
    TrimConfig,
    TrimmedValue,
    dequant,
    dequant_lut,
    trim,
    trim_wide,
    wide_dequant_lut,
)

__all__ = [
    "PairMode",
    "PairEncoding",
    "encode_pair",
    "pair_contribution",
    "dot_product",
    "effective_dequant",
]

_ZERO = TrimmedValue(0, 0, False)


class PairMode(enum.Enum):
    LEFT_FULL = "left_full"
    RIGHT_FULL = "right_full"
    BOTH_TRIMMED = "both_trimmed"


class PairEncoding(NamedTuple):
    """Encoded activation pair: which case applies, the two trimmed
    values, and the weight-routing bit kept for metadata accounting."""

    mode: PairMode
    left: TrimmedValue
    right: TrimmedValue
    mux_ctrl: int


def _check_w8(w) -> int:
    w = _int(w)
    if not -128 <= w <= 127:
        raise ValueError(f"weight {w} outside signed 8-bit range")
    return w


def encode_pair(x_even, x_odd, cfg: TrimConfig, rounding: bool = False) -> PairEncoding:
    """Encode one activation pair.

    A zero member grants its partner the full 2n-bit budget; an
    all-zero pair ties to the left-full case.  mux_ctrl is 0 when one
    weight feeds both multiplier halves, 1 when each half keeps its own.
    """
    width = 2 * cfg.bits
    if x_odd == 0:
        return PairEncoding(PairMode.LEFT_FULL, trim_wide(x_even, width, rounding), _ZERO, 0)
    if x_even == 0:
        return PairEncoding(PairMode.RIGHT_FULL, _ZERO, trim_wide(x_odd, width, rounding), 0)
    return PairEncoding(
        PairMode.BOTH_TRIMMED,
        trim(x_even, cfg, rounding),
        trim(x_odd, cfg, rounding),
        1,
    )


def _trim_pair(x_even, x_odd, cfg: TrimConfig, rounding: bool) -> PairEncoding:
    # Pairing disabled: both members window-trimmed regardless of zeros.
    return PairEncoding(
        PairMode.BOTH_TRIMMED,
        trim(x_even, cfg, rounding),
        trim(x_odd, cfg, rounding),
        1,
    )


def pair_contribution(p: PairEncoding, w_even, w_odd) -> int:
    """The pair's term in the dot product, as exact integer arithmetic."""
    w_even = _check_w8(w_even)
    w_odd = _check_w8(w_odd)
    if p.mode is PairMode.LEFT_FULL:
        return dequant(p.left) * w_even
    if p.mode is PairMode.RIGHT_FULL:
        return dequant(p.right) * w_odd
    return dequant(p.left) * w_even + dequant(p.right) * w_odd


def dot_product(
    x: Sequence[int],
    w: Sequence[int],
    cfg: TrimConfig,
    rounding: bool = False,
    vsparq_enabled: bool = True,
) -> int:
    """Dot product of unsigned activations against signed weights under
    the pairwise encoding.

    Odd-length inputs are padded with a zero activation, which is
    error-free because the zero partner frees the real activation's
    full budget.  With ``vsparq_enabled`` off every activation is
    trimmed individually (the pairing ablation).
    """
    if len(x) != len(w):
        raise ValueError(f"length mismatch: {len(x)} activations vs {len(w)} weights")
    encode = encode_pair if vsparq_enabled else _trim_pair
    total = 0
    for i in range(0, len(x) - 1, 2):
        total += pair_contribution(encode(x[i], x[i + 1], cfg, rounding), w[i], w[i + 1])
    if len(x) % 2:
        total += pair_contribution(encode(x[-1], 0, cfg, rounding), w[-1], 0)
    return total


def effective_dequant(
    x: np.ndarray,
    cfg: TrimConfig | None,
    rounding: bool = False,
    vsparq_enabled: bool = True,
) -> np.ndarray:
    """Vectorized reconstruction of a whole activation tensor.

    Returns the int32 tensor D such that ``D @ W`` equals the pairwise
    dot products along the last axis; built from the same scalar
    trimming tables, so it is bit-identical to the element loop.
    """
    x = np.asarray(x)
    if x.dtype != np.uint8:
        raise ValueError(f"activations must be uint8, got {x.dtype}")
    if cfg is None:
        return x.astype(np.int32)
    narrow = dequant_lut(cfg, rounding)
    if not vsparq_enabled:
        return narrow[x]

    k = x.shape[-1]
    if k % 2:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, 1)]
        x = np.pad(x, pad)
    wide = wide_dequant_lut(2 * cfg.bits, rounding)
    even, odd = x[..., 0::2], x[..., 1::2]
    even_zero, odd_zero = even == 0, odd == 0
    d = np.empty(x.shape, dtype=np.int32)
    d[..., 0::2] = np.where(odd_zero, wide[even], np.where(even_zero, 0, narrow[even]))
    d[..., 1::2] = np.where(odd_zero, 0, np.where(even_zero, wide[odd], narrow[odd]))
    return d[..., :k]
