"""Dynamic bit-window trimming of 8-bit activations.

An already-quantized 8-bit value is reduced to an n-bit mantissa by
keeping the most significant consecutive n bits and skipping leading
zero bits.  The window may only sit at a fixed set of LSB positions
(the "placements"); richer placement sets follow the leading toggled
bit more closely at the cost of wider shift metadata.  A trimmed value
reconstructs as ``mantissa << shift``, i.e. the per-value scale is the
base scale times a power of two.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from operator import index as _int
from typing import NamedTuple

import numpy as np

__all__ = [
    "TrimConfig",
    "TrimmedValue",
    "NAMED_CONFIGS",
    "select_window",
    "trim",
    "trim_wide",
    "dequant",
    "dequant_lut",
    "wide_dequant_lut",
]


@dataclass(frozen=True)
class TrimConfig:
    """Window bit-width plus the ordered set of allowed window positions.

    ``placements`` lists window LSB positions, highest first.  The top
    placement must be ``8 - bits`` and the bottom one 0, so every 8-bit
    value has a containing window and values below ``2**bits`` are kept
    exactly.
    """

    bits: int
    placements: tuple[int, ...]

    def __post_init__(self):
        bits = _int(self.bits)
        placements = tuple(_int(p) for p in self.placements)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "placements", placements)
        if not 2 <= bits <= 4:
            raise ValueError(f"window width must be 2..4 bits, got {bits}")
        if not placements:
            raise ValueError("placement set is empty")
        if any(a <= b for a, b in zip(placements, placements[1:])):
            raise ValueError(f"placements must be strictly decreasing: {placements}")
        if placements[-1] != 0:
            raise ValueError("lowest placement must be 0")
        if placements[0] != 8 - bits:
            raise ValueError(
                f"highest placement must be {8 - bits} to cover the full 8-bit range"
            )

    @classmethod
    def named(cls, name: str) -> "TrimConfig":
        try:
            return NAMED_CONFIGS[name]
        except KeyError:
            known = ", ".join(sorted(NAMED_CONFIGS))
            raise ValueError(f"unknown config {name!r} (expected one of: {known})") from None

    @property
    def shift_ctrl_bits(self) -> int:
        """Bits needed to record which placement was chosen."""
        return (len(self.placements) - 1).bit_length()


#: The supported trimming configurations, keyed by the number of window
#: placement options ("kopt" = k allowed positions).
NAMED_CONFIGS = {
    "5opt": TrimConfig(4, (4, 3, 2, 1, 0)),
    "3opt": TrimConfig(4, (4, 2, 0)),
    "2opt": TrimConfig(4, (4, 0)),
    "6opt": TrimConfig(3, (5, 4, 3, 2, 1, 0)),
    "7opt": TrimConfig(2, (6, 5, 4, 3, 2, 1, 0)),
}

# Spanning-window placements used when one pair member donates its bit
# budget: all consecutive positions, so the double-width window can sit
# anywhere the leading bit requires.
_WIDE_PLACEMENTS = {
    4: (4, 3, 2, 1, 0),
    6: (2, 1, 0),
    8: (0,),
}


class TrimmedValue(NamedTuple):
    """An n-bit mantissa, the shift-left needed to reconstruct it, and
    whether rounding overflow was clamped."""

    mantissa: int
    shift: int
    saturated: bool = False


def _check_u8(x) -> int:
    x = _int(x)
    if not 0 <= x <= 255:
        raise ValueError(f"activation {x} outside unsigned 8-bit range")
    return x


def _select(x: int, bits: int, placements: tuple[int, ...]) -> int:
    # Lowest placement whose window still contains the leading toggled
    # bit; equivalently the smallest p with x < 2**(p + bits).  x == 0
    # falls through to placement 0.
    for p in reversed(placements):
        if x < 1 << (p + bits):
            return p
    raise AssertionError("unreachable: top placement covers all 8-bit values")


def _trim(x: int, bits: int, placements: tuple[int, ...], rounding: bool) -> TrimmedValue:
    p = _select(x, bits, placements)
    mantissa = x >> p
    saturated = False
    if rounding and p and (x & ((1 << p) - 1)) >= 1 << (p - 1):
        mantissa += 1
        if mantissa == 1 << bits:
            # Overflow is clamped in place; the window is not re-selected.
            mantissa -= 1
            saturated = True
    return TrimmedValue(mantissa, p, saturated)


def select_window(x, cfg: TrimConfig) -> int:
    """Return the window LSB position ``cfg`` assigns to the 8-bit value ``x``."""
    return _select(_check_u8(x), cfg.bits, cfg.placements)


def trim(x, cfg: TrimConfig, rounding: bool = False) -> TrimmedValue:
    """Trim an 8-bit value to the n-bit window chosen by ``select_window``.

    With ``rounding``, residual bits below the window round the mantissa
    half-up; an increment past the n-bit limit is clamped to all-ones
    and flagged as saturated.
    """
    return _trim(_check_u8(x), cfg.bits, cfg.placements, rounding)


def trim_wide(x, width: int, rounding: bool = False) -> TrimmedValue:
    """Trim with a double-width window spanning all consecutive placements.

    Used when a zero-valued partner frees its bit budget: ``width`` is
    twice the configured window width.  ``width == 8`` keeps the value
    exactly.
    """
    width = _int(width)
    if width > 8:
        raise ValueError(f"window width {width} exceeds the 8-bit source")
    if width not in _WIDE_PLACEMENTS:
        raise ValueError(f"spanning window width must be 4, 6, or 8, got {width}")
    return _trim(_check_u8(x), width, _WIDE_PLACEMENTS[width], rounding)


def dequant(t: TrimmedValue) -> int:
    """Reconstruct the approximated 8-bit value, ``mantissa << shift``."""
    mantissa = _int(t.mantissa)
    shift = _int(t.shift)
    if mantissa < 0 or shift < 0 or mantissa << shift > 255:
        raise ValueError(f"invalid trimmed value {t!r}")
    return mantissa << shift


@lru_cache(maxsize=None)
def dequant_lut(cfg: TrimConfig, rounding: bool = False) -> np.ndarray:
    """256-entry reconstruction table indexed by the original value."""
    lut = np.array([dequant(trim(x, cfg, rounding)) for x in range(256)], dtype=np.int32)
    lut.setflags(write=False)
    return lut


@lru_cache(maxsize=None)
def wide_dequant_lut(width: int, rounding: bool = False) -> np.ndarray:
    """Reconstruction table for the double-width spanning window."""
    lut = np.array([dequant(trim_wide(x, width, rounding)) for x in range(256)], dtype=np.int32)
    lut.setflags(write=False)
    return lut
