"""Functional models of the reconfigurable multiplier and the
accelerator contexts it drops into.

The multiplier computes ``2**opt1 * x1 * w1 + 2**opt2 * x2 * w2`` with
n-bit activation inputs; splitting an 8-bit activation into two nibbles
with opt1=4, opt2=0 and a shared weight recombines the full 8b-8b
product.  The same unit is modeled inside an output-stationary systolic
array, a tensor-core dot-product unit, and a sparse tensor core that
filters activations through stored 2:4 weight coordinates.

All models are cycle-free functional descriptions: they reproduce the
hardware's arithmetic and dataflow order exactly but carry no timing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from operator import index as _int

import numpy as np

from .bitquant import TrimConfig
from .vsparq import PairEncoding, PairMode, _trim_pair, dot_product, encode_pair

__all__ = [
    "MuxMode",
    "DualMultInput",
    "Accumulator",
    "InvariantError",
    "dual_multiply",
    "pair_to_dual_input",
    "sa_matmul",
    "tc_dot4",
    "tc_matmul",
    "stc_filter",
    "make_24_mask",
    "stc_matmul",
    "reference_matmul",
    "fast_matmul",
]

_INT32_MAX = 2**31 - 1


class InvariantError(RuntimeError):
    """An internal arithmetic invariant (e.g. accumulator width) broke."""


class MuxMode(enum.Enum):
    W1_ONLY = "w1"
    W2_ONLY = "w2"
    BOTH = "both"


@dataclass(frozen=True)
class DualMultInput:
    """Operands for one reconfigurable-multiplier evaluation.

    In single-weight modes the other multiplier's inputs are ignored.
    Shift amounts must come from the config's placement set, mirroring
    what the shift-left unit physically supports.
    """

    x1: int
    x2: int
    w1: int
    w2: int
    opt1: int
    opt2: int
    mux: MuxMode
    cfg: TrimConfig


@dataclass(frozen=True)
class Accumulator:
    """Signed 32-bit partial-sum register."""

    value: int = 0

    def add(self, delta: int) -> "Accumulator":
        total = self.value + delta
        if not -(2**31) <= total <= _INT32_MAX:
            raise InvariantError(f"accumulator overflow: {total}")
        return Accumulator(total)


def _check_term(x, opt, w, cfg: TrimConfig) -> int:
    x, opt, w = _int(x), _int(opt), _int(w)
    if not 0 <= x < 1 << cfg.bits:
        raise ValueError(f"mantissa {x} does not fit {cfg.bits} bits")
    if opt not in cfg.placements:
        raise ValueError(f"shift amount {opt} outside placement set {cfg.placements}")
    if not -128 <= w <= 127:
        raise ValueError(f"weight {w} outside signed 8-bit range")
    return (x << opt) * w


def dual_multiply(inp: DualMultInput) -> int:
    """Evaluate the multiplier: active terms are shifted exactly after
    the multiply, so no precision is lost inside the unit."""
    total = 0
    if inp.mux is not MuxMode.W2_ONLY:
        total += _check_term(inp.x1, inp.opt1, inp.w1, inp.cfg)
    if inp.mux is not MuxMode.W1_ONLY:
        total += _check_term(inp.x2, inp.opt2, inp.w2, inp.cfg)
    return total


def pair_to_dual_input(p: PairEncoding, w_even: int, w_odd: int, cfg: TrimConfig) -> DualMultInput:
    """Map an encoded pair onto multiplier operands.

    A full-budget member is split into two n-bit halves that share one
    weight; a trimmed pair drives the two halves independently.
    """
    n = cfg.bits
    if p.mode is PairMode.LEFT_FULL or p.mode is PairMode.RIGHT_FULL:
        t = p.left if p.mode is PairMode.LEFT_FULL else p.right
        w = w_even if p.mode is PairMode.LEFT_FULL else w_odd
        return DualMultInput(
            x1=t.mantissa >> n,
            x2=t.mantissa & ((1 << n) - 1),
            w1=w,
            w2=w,
            opt1=t.shift + n,
            opt2=t.shift,
            mux=MuxMode.BOTH,
            cfg=cfg,
        )
    return DualMultInput(
        x1=p.left.mantissa,
        x2=p.right.mantissa,
        w1=w_even,
        w2=w_odd,
        opt1=p.left.shift,
        opt2=p.right.shift,
        mux=MuxMode.BOTH,
        cfg=cfg,
    )


def _pair_term(p: PairEncoding, w_even: int, w_odd: int, cfg: TrimConfig) -> int:
    return dual_multiply(pair_to_dual_input(p, int(w_even), int(w_odd), cfg))


def _check_operands(a: np.ndarray, b: np.ndarray) -> None:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"expected 2-D operands, got {a.shape} and {b.shape}")
    if a.dtype != np.uint8:
        raise ValueError(f"activations must be uint8, got {a.dtype}")
    if b.dtype != np.int8:
        raise ValueError(f"weights must be int8, got {b.dtype}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape} x {b.shape}")


def _encode_rows(a: np.ndarray, cfg: TrimConfig, rounding: bool, vsparq: bool) -> list:
    encode = encode_pair if vsparq else _trim_pair
    rows = []
    for row in a:
        vals = [int(v) for v in row]
        if len(vals) % 2:
            vals.append(0)
        rows.append([encode(vals[s], vals[s + 1], cfg, rounding) for s in range(0, len(vals), 2)])
    return rows


def _weight_pairs(b: np.ndarray) -> list:
    k = b.shape[0]
    cols = []
    for j in range(b.shape[1]):
        col = [int(v) for v in b[:, j]]
        if k % 2:
            col.append(0)
        cols.append([(col[s], col[s + 1]) for s in range(0, len(col), 2)])
    return cols


def sa_matmul(
    a: np.ndarray,
    b: np.ndarray,
    cfg: TrimConfig,
    rounding: bool = False,
    vsparq: bool = True,
) -> np.ndarray:
    """Output-stationary systolic array model.

    Encoded activation pairs march rightward, weight pairs (double
    weight bandwidth) march downward, and each PE accumulates one output
    element in its psum register.  The schedule is the usual skewed
    wavefront; numerically the result equals the pairwise reference.
    """
    _check_operands(a, b)
    m, k = a.shape
    n = b.shape[1]
    steps = (k + 1) // 2
    act_stream = _encode_rows(a, cfg, rounding, vsparq)
    wt_stream = _weight_pairs(b)

    psum = [[Accumulator() for _ in range(n)] for _ in range(m)]
    act_reg: list[list] = [[None] * n for _ in range(m)]
    wt_reg: list[list] = [[None] * n for _ in range(m)]

    for t in range(max(m + n + steps - 2, 0)):
        new_act = [[None] * n for _ in range(m)]
        new_wt = [[None] * n for _ in range(m)]
        for i in range(m):
            for j in range(n):
                if j:
                    new_act[i][j] = act_reg[i][j - 1]
                else:
                    s = t - i
                    new_act[i][0] = act_stream[i][s] if 0 <= s < steps else None
                if i:
                    new_wt[i][j] = wt_reg[i - 1][j]
                else:
                    s = t - j
                    new_wt[0][j] = wt_stream[j][s] if 0 <= s < steps else None
        act_reg, wt_reg = new_act, new_wt
        for i in range(m):
            for j in range(n):
                enc, wp = act_reg[i][j], wt_reg[i][j]
                if enc is not None and wp is not None:
                    psum[i][j] = psum[i][j].add(_pair_term(enc, wp[0], wp[1], cfg))

    return np.array([[pe.value for pe in row] for row in psum], dtype=np.int32)


def tc_dot4(
    x,
    w,
    acc: Accumulator,
    cfg: TrimConfig,
    rounding: bool = False,
    vsparq: bool = True,
) -> Accumulator:
    """One dot-product-unit step: four multiplier evaluations reduced by
    an adder tree together with the incoming accumulator."""
    x = [_int(v) for v in x]
    w = [_int(v) for v in w]
    if len(x) != 8 or len(w) != 8:
        raise ValueError(f"expected 8 activation and 8 weight lanes, got {len(x)}/{len(w)}")
    encode = encode_pair if vsparq else _trim_pair
    terms = [
        _pair_term(encode(x[s], x[s + 1], cfg, rounding), w[s], w[s + 1], cfg)
        for s in range(0, 8, 2)
    ]
    return acc.add((terms[0] + terms[1]) + (terms[2] + terms[3]))


def tc_matmul(
    a: np.ndarray,
    b: np.ndarray,
    cfg: TrimConfig,
    rounding: bool = False,
    vsparq: bool = True,
) -> np.ndarray:
    """Matmul composed from dot-product-unit steps over 8-lane chunks."""
    _check_operands(a, b)
    m, k = a.shape
    n = b.shape[1]
    pad = (-k) % 8
    a_lanes = np.pad(a, ((0, 0), (0, pad)))
    b_lanes = np.pad(b, ((0, pad), (0, 0)))
    out = np.zeros((m, n), dtype=np.int32)
    for i in range(m):
        for j in range(n):
            acc = Accumulator()
            for c in range(0, k + pad, 8):
                acc = tc_dot4(a_lanes[i, c : c + 8], b_lanes[c : c + 8, j], acc, cfg, rounding, vsparq)
            out[i, j] = acc.value
    return out


def stc_filter(x, w_dense, mask):
    """Pick the two activation/weight lanes a 2:4 coordinate pair keeps.

    The dense weight group must be zero off the stored coordinates; the
    surviving activations may themselves still contain zeros.
    """
    x = [_int(v) for v in x]
    w_dense = [_int(v) for v in w_dense]
    if len(x) != 4 or len(w_dense) != 4:
        raise ValueError("2:4 filtering works on groups of four lanes")
    coords = sorted({_int(c) for c in mask})
    if len(coords) != 2 or not all(0 <= c <= 3 for c in coords):
        raise ValueError(f"mask must select exactly 2 of 4 positions, got {mask!r}")
    for pos in range(4):
        if pos not in coords and w_dense[pos] != 0:
            raise ValueError(f"nonzero weight {w_dense[pos]} at unmasked position {pos}")
    lo, hi = coords
    return (x[lo], x[hi]), (w_dense[lo], w_dense[hi])


def make_24_mask(w: np.ndarray, group_axis: int = 0):
    """Magnitude-based 2:4 mask: per group of four adjacent weights keep
    the two largest by absolute value (ties to the lower index).

    Returns ``(mask, pruned)`` where ``pruned`` zeroes the dropped
    weights.
    """
    w = np.asarray(w)
    length = w.shape[group_axis]
    if length % 4:
        raise ValueError(f"axis {group_axis} length {length} is not divisible by 4")
    moved = np.moveaxis(w, group_axis, -1)
    groups = moved.reshape(*moved.shape[:-1], -1, 4)
    order = np.argsort(-np.abs(groups), axis=-1, kind="stable")
    keep = np.zeros(groups.shape, dtype=bool)
    np.put_along_axis(keep, order[..., :2], True, axis=-1)
    mask = np.moveaxis(keep.reshape(moved.shape), -1, group_axis)
    pruned = np.where(mask, w, np.zeros((), dtype=w.dtype))
    return mask, pruned


def _check_24_mask(b: np.ndarray, mask: np.ndarray) -> None:
    if mask.shape != b.shape:
        raise ValueError(f"mask shape {mask.shape} does not match weights {b.shape}")
    groups = mask.reshape(-1, 4, mask.shape[1]) if mask.ndim == 2 else mask.reshape(-1, 4)
    if not np.all(groups.sum(axis=1) == 2):
        raise ValueError("mask must keep exactly 2 of every 4 adjacent weights")
    if np.any(b[~mask] != 0):
        raise ValueError("weights carry nonzero values outside the 2:4 mask")


def stc_matmul(
    a: np.ndarray,
    b: np.ndarray,
    mask: np.ndarray,
    cfg: TrimConfig | None,
    rounding: bool = False,
    vsparq: bool = True,
) -> np.ndarray:
    """Sparse-tensor-core model: activations are filtered through the
    stored weight coordinates, then each surviving duo forms one pair.

    With ``cfg=None`` the surviving products are computed exactly, which
    makes the filtering itself observable: it must match the dense path
    over the pruned weights bit for bit.
    """
    _check_operands(a, b)
    k = a.shape[1]
    if k % 4:
        raise ValueError(f"reduction length {k} is not divisible by 4")
    _check_24_mask(b, np.asarray(mask, dtype=bool))
    encode = encode_pair if vsparq else _trim_pair

    coords = [
        [tuple(np.flatnonzero(mask[g : g + 4, j])) for g in range(0, k, 4)]
        for j in range(b.shape[1])
    ]
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.int32)
    for i in range(a.shape[0]):
        row = [int(v) for v in a[i]]
        for j in range(b.shape[1]):
            col = [int(v) for v in b[:, j]]
            acc = Accumulator()
            for gi, g in enumerate(range(0, k, 4)):
                (xa, xb), (wa, wb) = stc_filter(
                    row[g : g + 4], col[g : g + 4], coords[j][gi]
                )
                if cfg is None:
                    term = xa * wa + xb * wb
                else:
                    term = _pair_term(encode(xa, xb, cfg, rounding), wa, wb, cfg)
                acc = acc.add(term)
            out[i, j] = acc.value
    return out


def reference_matmul(
    a: np.ndarray,
    b: np.ndarray,
    cfg: TrimConfig,
    rounding: bool = False,
    vsparq: bool = True,
) -> np.ndarray:
    """Direct pairwise evaluation, the oracle the engines must match."""
    _check_operands(a, b)
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.int32)
    for i in range(a.shape[0]):
        row = [int(v) for v in a[i]]
        for j in range(b.shape[1]):
            out[i, j] = dot_product(row, [int(v) for v in b[:, j]], cfg, rounding, vsparq)
    return out


def fast_matmul(
    a: np.ndarray,
    b: np.ndarray,
    cfg: TrimConfig | None,
    rounding: bool = False,
    vsparq: bool = True,
) -> np.ndarray:
    """Vectorized reference-semantics matmul; ``cfg=None`` is the exact
    8-bit path."""
    from .vsparq import effective_dequant

    _check_operands(a, b)
    d = effective_dequant(a, cfg, rounding, vsparq)
    out = d.astype(np.int64) @ b.astype(np.int64)
    if out.size and max(out.max(), -out.min()) > _INT32_MAX:
        raise InvariantError("matmul result exceeds the 32-bit accumulator range")
    return out.astype(np.int32)
