"""Sparsity-aware 8-bit quantization: dynamic bit-window trimming,
zero-aware activation pairing, and functional models of the accelerator
datapaths that execute them."""

from .analysis import (
    SimReport,
    ToggleStats,
    activation_sparsity,
    bit_toggle_stats,
    empirical_window_probability,
    error_metrics,
    metadata_overhead,
    msb_window_probability,
    pair_zero_fraction,
    synthetic_activations,
    synthetic_weights,
)
from .bitquant import (
    NAMED_CONFIGS,
    TrimConfig,
    TrimmedValue,
    dequant,
    dequant_lut,
    select_window,
    trim,
    trim_wide,
    wide_dequant_lut,
)
from .datapath import (
    Accumulator,
    DualMultInput,
    InvariantError,
    MuxMode,
    dual_multiply,
    fast_matmul,
    make_24_mask,
    pair_to_dual_input,
    reference_matmul,
    sa_matmul,
    stc_filter,
    stc_matmul,
    tc_dot4,
    tc_matmul,
)
from .tensorio import (
    ManifestEntry,
    QuantTensor,
    TensorManifest,
    conv_output_shape,
    dequantize_output,
    im2col,
    load_tensor,
    quantize_activations,
    quantize_weights_per_kernel,
    save_tensor,
)
from .vsparq import (
    PairEncoding,
    PairMode,
    dot_product,
    effective_dequant,
    encode_pair,
    pair_contribution,
)

__version__ = "0.1.0"

__all__ = [
    "NAMED_CONFIGS",
    "TrimConfig",
    "TrimmedValue",
    "select_window",
    "trim",
    "trim_wide",
    "dequant",
    "dequant_lut",
    "wide_dequant_lut",
    "PairMode",
    "PairEncoding",
    "encode_pair",
    "pair_contribution",
    "dot_product",
    "effective_dequant",
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
    "stc_matmul",
    "make_24_mask",
    "reference_matmul",
    "fast_matmul",
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
    "__version__",
]
