"""Command-line front end: quantize tensors, run simulated matmuls,
sweep ablation grids, analyze activation statistics, and self-test.

Exit codes: 0 success, 1 validation error (bad inputs, flags, files),
2 internal invariant failure (arithmetic self-checks broke).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, datapath, tensorio, vsparq
from .bitquant import NAMED_CONFIGS, TrimConfig, dequant_lut, trim
from .datapath import InvariantError

__all__ = ["main", "entry", "run_selftest", "ValidationError"]

CONFIG_CHOICES = tuple(NAMED_CONFIGS) + ("int8",)
ENGINE_CHOICES = ("ref", "sa", "tc", "stc")


class ValidationError(Exception):
    """Bad user input; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _resolve_config(name: str) -> TrimConfig | None:
    if name == "int8":
        return None
    return TrimConfig.named(name)


def _load_operand(path, role: str) -> np.ndarray:
    arr = tensorio.load_tensor(path)
    want = np.uint8 if role == "activation" else np.int8
    if arr.dtype != want:
        raise ValidationError(
            f"{path}: {role} tensor must be {np.dtype(want).name}, got {arr.dtype} "
            "(run `sparq quantize` first?)"
        )
    return arr


def _lower_operands(a, b, stride: int, padding: int):
    """Bring (activation, weight) tensors into matmul form [M,K]x[K,N].

    2-D pairs pass through.  A 4-D kernel-leading weight tensor runs
    through im2col against a 3-D C x H x W activation, or against a
    4-D N x C x H x W batch whose patch rows are stacked sample by
    sample; a 2-D kernel-leading weight (dense layer) is transposed
    against a 2-D activation.
    """
    extra = {}
    if b.ndim == 4:
        if a.ndim == 3:
            batch = a[np.newaxis]
        elif a.ndim == 4 and a.shape[0] >= 1:
            batch = a
        else:
            raise ValidationError(
                f"4-D weights {b.shape} need a 3-D C x H x W activation "
                f"or a non-empty N x C x H x W batch, got {a.shape}"
            )
        o, c, kh, kw = b.shape
        if batch.shape[1] != c:
            raise ValidationError(f"channel mismatch: activation {a.shape} vs weights {b.shape}")
        out_h, out_w = tensorio.conv_output_shape(
            batch.shape[2], batch.shape[3], kh, kw, stride, padding
        )
        a_mat = np.vstack([tensorio.im2col(x, kh, kw, stride, padding) for x in batch])
        b_mat = np.ascontiguousarray(b.reshape(o, -1).T)
        extra.update({"out_h": out_h, "out_w": out_w, "stride": stride, "padding": padding})
        if a.ndim == 4:
            extra["samples"] = int(batch.shape[0])
    elif b.ndim == 2 and a.ndim == 2:
        a_mat, b_mat = a, b
    else:
        raise ValidationError(f"unsupported operand ranks: {a.shape} x {b.shape}")
    if a_mat.shape[1] != b_mat.shape[0]:
        raise ValidationError(f"inner dimensions disagree: {a_mat.shape} x {b_mat.shape}")
    return a_mat, b_mat, extra


def _simulate(a_mat, b_mat, cfg_name, rounding, vsparq_on, engine, mask=None):
    """Run one matmul on the chosen engine and score it against the
    exact 8-bit result.  Returns (result, SimReport)."""
    cfg = _resolve_config(cfg_name)
    extra = {}
    b_used = b_mat
    if engine == "stc":
        if mask is None:
            mask, b_used = datapath.make_24_mask(b_mat)
            extra["mask_generated"] = True
        else:
            mask = np.asarray(mask).astype(bool)

    try:
        exact = datapath.fast_matmul(a_mat, b_used, None)
        if cfg is None:
            if engine == "stc":
                datapath._check_24_mask(b_used, np.asarray(mask, dtype=bool))
            result = exact
        elif engine == "ref":
            result = datapath.fast_matmul(a_mat, b_used, cfg, rounding, vsparq_on)
        elif engine == "sa":
            result = datapath.sa_matmul(a_mat, b_used, cfg, rounding, vsparq_on)
        elif engine == "tc":
            result = datapath.tc_matmul(a_mat, b_used, cfg, rounding, vsparq_on)
        elif engine == "stc":
            result = datapath.stc_matmul(a_mat, b_used, mask, cfg, rounding, vsparq_on)
        else:
            raise ValidationError(f"unknown engine {engine!r}")
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    metrics = analysis.error_metrics(exact, result)
    report = analysis.SimReport(
        engine=engine,
        config=cfg_name,
        rounding=rounding,
        vsparq=vsparq_on,
        shape_a=tuple(a_mat.shape),
        shape_b=tuple(b_used.shape),
        mse=metrics["mse"],
        sqnr_db=metrics["sqnr_db"],
        activation_sparsity=analysis.activation_sparsity(a_mat),
        pair_zero_fraction=analysis.pair_zero_fraction(a_mat),
        toggle_rates=analysis.bit_toggle_stats(a_mat).rates,
        metadata_bits_per_activation=(
            0 if cfg is None else analysis.metadata_overhead(cfg, vsparq_on)
        ),
        extra=extra,
    )
    return result, report


def cmd_quantize(args) -> int:
    manifest = tensorio.TensorManifest.load_file(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    staged = []
    for entry in manifest.entries:
        arr = manifest.load(entry.name)
        new = tensorio.ManifestEntry(
            name=entry.name,
            path=Path(entry.path).stem + ".npy",
            role=entry.role,
            layer=entry.layer,
            shape=entry.shape,
            scale=entry.scale,
            scales=entry.scales,
            max_abs=entry.max_abs,
            exempt=entry.exempt,
            stride=entry.stride,
            padding=entry.padding,
        )
        if arr.dtype != np.float32:
            staged.append((new, arr, None))
            continue
        if entry.role == "activation":
            if np.any(arr < 0):
                raise ValidationError(
                    f"{entry.name}: unsigned activation violation (negative values)"
                )
            q = tensorio.quantize_activations(arr, entry.max_abs)
            new.scale = float(q.scales[0])
        elif entry.role == "weight":
            q = tensorio.quantize_weights_per_kernel(arr)
            new.scales = [float(s) for s in q.scales]
        else:
            raise ValidationError(f"{entry.name}: cannot quantize role {entry.role!r}")
        staged.append((new, q.data, entry.role))
    paths = [new.path for new, _, _ in staged]
    if len(set(paths)) != len(paths):
        raise ValidationError("manifest entries collapse onto the same output file name")

    out_manifest = tensorio.TensorManifest(root=out_dir, model=manifest.model)
    for new, data, role in staged:
        tensorio.save_tensor(out_dir / new.path, data)
        out_manifest.add(new)
        what = {"activation": "u8", "weight": "i8", None: "copied"}[role]
        print(f"quantize {new.name}: {what} {tuple(data.shape)} -> {new.path}")
    manifest_path = out_dir / "manifest.json"
    out_manifest.save(manifest_path)
    print(f"wrote {manifest_path}")
    return 0


def _matmul_inputs(args):
    """Resolve cmd_matmul inputs from either raw files or a manifest
    layer; returns operands, lowering params, and report extras."""
    extra = {}
    cfg_name = args.config
    if args.manifest:
        manifest = tensorio.TensorManifest.load_file(args.manifest)
        if not args.layer:
            raise ValidationError("--manifest requires --layer")
        acts = manifest.for_layer(args.layer, "activation")
        wts = manifest.for_layer(args.layer, "weight")
        if len(acts) != 1 or len(wts) != 1:
            raise ValidationError(
                f"layer {args.layer!r}: need exactly one activation and one weight entry, "
                f"found {len(acts)}/{len(wts)}"
            )
        act, wt = acts[0], wts[0]
        a = _load_operand(manifest.resolve(act), "activation")
        b = _load_operand(manifest.resolve(wt), "weight")
        stride = args.stride if args.stride is not None else wt.stride
        padding = args.padding if args.padding is not None else wt.padding
        extra["layer"] = args.layer
        if act.scale is not None:
            extra["act_scale"] = act.scale
        if wt.scales is not None:
            extra["w_scales"] = list(wt.scales)
        if act.exempt or wt.exempt:
            cfg_name = "int8"
            extra["exempt"] = True
    elif args.a and args.b:
        a = _load_operand(args.a, "activation")
        b = _load_operand(args.b, "weight")
        stride = args.stride if args.stride is not None else 1
        padding = args.padding if args.padding is not None else 0
    else:
        raise ValidationError("provide either --a and --b, or --manifest and --layer")
    return a, b, stride, padding, cfg_name, extra


def cmd_matmul(args) -> int:
    a, b, stride, padding, cfg_name, extra = _matmul_inputs(args)
    a_mat, b_mat, lower_extra = _lower_operands(a, b, stride, padding)
    mask = None
    if args.mask:
        if args.engine != "stc":
            raise ValidationError("--mask only applies to --engine stc")
        mask = tensorio.load_tensor(args.mask)
        if mask.shape != b_mat.shape:
            raise ValidationError(f"mask shape {mask.shape} does not match weights {b_mat.shape}")

    result, report = _simulate(a_mat, b_mat, cfg_name, args.rounding, args.vsparq, args.engine, mask)
    report.extra.update(lower_extra)
    report.extra.update(extra)
    report.extra["seed"] = args.seed

    out = Path(args.out)
    report_path = Path(args.report) if args.report else out.with_suffix(".report.json")
    tensorio.save_tensor(out, result)
    report_path.write_text(report.dumps() + "\n")
    print(f"matmul {report.shape_a} x {report.shape_b} engine={args.engine} config={cfg_name}")
    print(f"  mse={report.mse:.6g} sqnr_db={report.sqnr_db:.4g}")
    print(f"  wrote {out} and {report_path}")
    return 0


def _synthetic_operands(spec: str, sigma: float, sparsity: float, seed: int):
    try:
        m, k, n = (int(v) for v in spec.lower().split("x"))
    except ValueError:
        raise ValidationError(f"--synthetic expects MxKxN, got {spec!r}") from None
    if min(m, k, n) < 1:
        raise ValidationError(f"--synthetic dims must be positive, got {spec!r}")
    a = analysis.synthetic_activations((m, k), sigma=sigma, zero_fraction=sparsity, seed=seed)
    b = analysis.synthetic_weights((k, n), seed=seed + 1)
    return a, b


def cmd_sweep(args) -> int:
    configs = [c.strip() for c in args.configs.split(",") if c.strip()]
    if not configs:
        raise ValidationError("--configs needs at least one config name")
    for c in configs:
        if c not in CONFIG_CHOICES:
            raise ValidationError(f"unknown config {c!r} (choose from {', '.join(CONFIG_CHOICES)})")

    if args.synthetic:
        a, b = _synthetic_operands(args.synthetic, args.sigma, args.sparsity, args.seed)
    elif args.a and args.b:
        a = _load_operand(args.a, "activation")
        b = _load_operand(args.b, "weight")
    else:
        raise ValidationError("provide --a and --b, or --synthetic MxKxN")
    a_mat, b_mat, _ = _lower_operands(a, b, args.stride or 1, args.padding or 0)

    rounding_axis = [False, True] if args.vary_rounding else [args.rounding]
    vsparq_axis = [True, False] if args.vary_vsparq else [args.vsparq]
    rows = []
    for cfg_name in configs:
        for vsparq_on in vsparq_axis:
            for rounding in rounding_axis:
                _, report = _simulate(a_mat, b_mat, cfg_name, rounding, vsparq_on, "ref")
                report.extra["seed"] = args.seed
                rows.append(report.to_json())

    header = f"{'config':<8} {'round':<6} {'vsparq':<7} {'mse':>14} {'sqnr_db':>10} {'meta':>5}"
    print(header)
    print("-" * len(header))
    for r in rows:
        sqnr = f"{r['sqnr_db']:.3f}" if np.isfinite(r["sqnr_db"]) else str(r["sqnr_db"])
        print(
            f"{r['config']:<8} {'+R' if r['rounding'] else '-R':<6} "
            f"{'+vS' if r['vsparq'] else '-vS':<7} {r['mse']:>14.6g} {sqnr:>10} "
            f"{r['metadata_bits_per_activation']:>5}"
        )
    doc = json.dumps({"rows": rows}, indent=2)
    if args.report:
        Path(args.report).write_text(doc + "\n")
        print(f"wrote {args.report}")
    else:
        print(doc)
    return 0


def cmd_analyze(args) -> int:
    if args.synthetic:
        shape = tuple(int(v) for v in args.synthetic.lower().split("x"))
        x = analysis.synthetic_activations(shape, sigma=args.sigma, zero_fraction=args.sparsity, seed=args.seed)
        source = f"synthetic {args.synthetic} seed={args.seed}"
    elif args.input:
        x = _load_operand(args.input, "activation")
        source = str(args.input)
    else:
        raise ValidationError("provide --input or --synthetic")

    stats = analysis.bit_toggle_stats(x)
    doc = {
        "source": source,
        "shape": list(x.shape),
        "nonzero_count": stats.nonzero_count,
        "activation_sparsity": analysis.activation_sparsity(x),
        "pair_zero_fraction": analysis.pair_zero_fraction(x),
        "toggle_rates": list(stats.rates),
        "configs": [],
    }
    flat = x.reshape(-1).astype(np.int64)
    for name, cfg in NAMED_CONFIGS.items():
        row = {
            "config": name,
            "msb_window_probability": analysis.msb_window_probability(stats.rates, cfg.bits),
            "empirical_window_probability": analysis.empirical_window_probability(x, cfg.bits),
            "metadata_bits_per_activation": analysis.metadata_overhead(cfg, args.vsparq),
        }
        for rounding in (False, True):
            lut = dequant_lut(cfg, rounding).astype(np.int64)
            err = lut[flat] - flat
            row["trim_mse_rounding" if rounding else "trim_mse"] = float(np.mean(err**2))
        doc["configs"].append(row)

    print(f"analyze {source}: sparsity={doc['activation_sparsity']:.4f} "
          f"pair_zero={doc['pair_zero_fraction']:.4f}")
    for row in doc["configs"]:
        print(f"  {row['config']}: msb_window_p={row['msb_window_probability']:.4f} "
              f"trim_mse={row['trim_mse']:.4f}")
    text = json.dumps(doc, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n")
        print(f"wrote {args.report}")
    else:
        print(text)
    return 0


def _selftest_trim_bounds(configs) -> str:
    for name, cfg in configs.items():
        for rounding in (False, True):
            for x in range(256):
                t = trim(x, cfg, rounding)
                got = t.mantissa << t.shift
                # independent oracle: pick the window by bit length,
                # round by add-half-then-shift
                fits = [p for p in cfg.placements if p + cfg.bits >= x.bit_length()]
                if not fits:
                    raise AssertionError(f"{name}: no window for {x}")
                p = min(fits)
                if rounding:
                    m = (x + (1 << (p - 1) if p else 0)) >> p
                    sat = m >= (1 << cfg.bits)
                    m = min(m, (1 << cfg.bits) - 1)
                else:
                    m, sat = x >> p, False
                if (t.mantissa, t.shift, t.saturated) != (m, p, sat):
                    raise AssertionError(
                        f"{name} x={x} rounding={rounding}: got {t}, oracle ({m},{p},{sat})"
                    )
                if not rounding and not (0 <= x - got < (1 << t.shift)):
                    raise AssertionError(f"{name} x={x}: truncation bound broke ({got})")
                if rounding and not t.saturated and abs(x - got) > (1 << t.shift) >> 1:
                    raise AssertionError(f"{name} x={x}: rounding bound broke ({got})")
    return f"{len(configs)} configs x 2 rounding modes x 256 values"


def _selftest_recombination(configs) -> str:
    cands = [c for c in configs.values() if c.bits == 4 and 4 in c.placements and 0 in c.placements]
    if not cands:
        raise AssertionError("no 4-bit config with placements 4 and 0 available")
    cfg = cands[0]
    for x in range(256):
        for w in range(-128, 128):
            got = datapath.dual_multiply(
                datapath.DualMultInput(
                    x1=x >> 4, x2=x & 0xF, w1=w, w2=w, opt1=4, opt2=0,
                    mux=datapath.MuxMode.BOTH, cfg=cfg,
                )
            )
            if got != x * w:
                raise AssertionError(f"recombination broke: {x}*{w} gave {got}")
    return "65536 (x, w) pairs"


def _selftest_engines(configs) -> str:
    rng = np.random.default_rng(2024)
    cases = 0
    for name, cfg in configs.items():
        for _ in range(4):
            m, k, n = rng.integers(1, 9, size=3)
            a = analysis.synthetic_activations((m, k), zero_fraction=0.4, seed=int(rng.integers(1 << 30)))
            b = analysis.synthetic_weights((k, n), seed=int(rng.integers(1 << 30)))
            ref = datapath.reference_matmul(a, b, cfg, rounding=True)
            for eng in (datapath.sa_matmul, datapath.tc_matmul, datapath.fast_matmul):
                got = eng(a, b, cfg, rounding=True)
                if not np.array_equal(ref, got):
                    raise AssertionError(f"{name}: {eng.__name__} diverged from reference")
            cases += 1
    for _ in range(4):
        m, n = rng.integers(1, 9, size=2)
        k = int(rng.integers(1, 5)) * 4
        a = analysis.synthetic_activations((m, k), zero_fraction=0.3, seed=int(rng.integers(1 << 30)))
        b = analysis.synthetic_weights((k, n), seed=int(rng.integers(1 << 30)))
        mask, pruned = datapath.make_24_mask(b)
        exact = datapath.fast_matmul(a, pruned, None)
        got = datapath.stc_matmul(a, pruned, mask, None)
        if not np.array_equal(exact, got):
            raise AssertionError("stc filtering diverged from dense pruned result")
        cases += 1
    return f"{cases} seeded matmuls"


def _selftest_sparsity(configs) -> str:
    rng = np.random.default_rng(7)
    n4 = {name: cfg for name, cfg in configs.items() if cfg.bits == 4}
    checked = 0
    for _ in range(100):
        k = int(rng.integers(2, 33))
        x = rng.integers(0, 256, size=k)
        x[rng.integers(0, 2, size=k).astype(bool)] = 0
        for s in range(0, k - 1, 2):
            if x[s] and x[s + 1]:
                x[s + int(rng.integers(0, 2))] = 0
        w = rng.integers(-128, 128, size=k)
        exact = int(np.dot(x.astype(np.int64), w.astype(np.int64)))
        for name, cfg in n4.items():
            got = vsparq.dot_product([int(v) for v in x], [int(v) for v in w], cfg)
            if got != exact:
                raise AssertionError(f"{name}: sparse dot {got} != exact {exact}")
            checked += 1
    return f"{checked} zero-paired dot products"


_SELFTEST_SUITES = (
    ("trim bounds vs oracle", _selftest_trim_bounds),
    ("recombination identity", _selftest_recombination),
    ("engine equivalence", _selftest_engines),
    ("sparsity exactness", _selftest_sparsity),
)


def run_selftest(configs=None, out=None) -> int:
    """Run the built-in suites against a config table (the default named
    one unless a test harness substitutes its own). Returns the exit
    code: 0 all pass, 2 otherwise."""
    out = sys.stdout if out is None else out
    configs = dict(NAMED_CONFIGS if configs is None else configs)
    failures = 0
    for label, suite in _SELFTEST_SUITES:
        start = time.perf_counter()
        try:
            detail = suite(configs)
            status = "PASS"
        except Exception as exc:
            detail, status, failures = str(exc), "FAIL", failures + 1
        print(f"{status} {label}: {detail} [{time.perf_counter() - start:.2f}s]", file=out)
    print(("all suites passed" if not failures else f"{failures} suite(s) failed"), file=out)
    return 0 if not failures else 2


def cmd_selftest(args) -> int:
    return run_selftest()


def _add_trim_flags(p):
    p.add_argument("--config", choices=CONFIG_CHOICES, default="5opt",
                   help="window placement config, or int8 for the exact path")
    p.add_argument("--rounding", action=argparse.BooleanOptionalAction, default=False,
                   help="round trimmed values instead of truncating")
    p.add_argument("--vsparq", action=argparse.BooleanOptionalAction, default=True,
                   help="enable zero-aware pairing")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in reports")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a manifest of FP32 tensors to u8/i8")
    p.add_argument("--manifest", required=True, help="input manifest JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("matmul", help="run one matmul on a simulated engine")
    p.add_argument("--a", help="uint8 activation .npy")
    p.add_argument("--b", help="int8 weight .npy")
    p.add_argument("--manifest", help="quantized manifest JSON")
    p.add_argument("--layer", help="layer id inside the manifest")
    p.add_argument("--engine", choices=ENGINE_CHOICES, default="ref")
    p.add_argument("--mask", help="2:4 mask .npy for --engine stc")
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--padding", type=int, default=None)
    p.add_argument("--out", required=True, help="result .npy path")
    p.add_argument("--report", help="report JSON path (default: alongside --out)")
    _add_trim_flags(p)
    p.set_defaults(func=cmd_matmul)

    p = sub.add_parser("sweep", help="compare configs on one matmul")
    p.add_argument("--configs", required=True, help="comma-separated config names")
    p.add_argument("--a", help="uint8 activation .npy")
    p.add_argument("--b", help="int8 weight .npy")
    p.add_argument("--synthetic", help="generate MxKxN operands instead of loading")
    p.add_argument("--sigma", type=float, default=40.0)
    p.add_argument("--sparsity", type=float, default=0.5)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--padding", type=int, default=None)
    p.add_argument("--vary-rounding", action="store_true", help="sweep both rounding modes")
    p.add_argument("--vary-vsparq", action="store_true", help="sweep pairing on and off")
    p.add_argument("--report", help="JSON output path")
    _add_trim_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="bit statistics of an activation tensor")
    p.add_argument("--input", help="uint8 activation .npy")
    p.add_argument("--synthetic", help="generate a tensor of this shape, e.g. 64x64")
    p.add_argument("--sigma", type=float, default=40.0)
    p.add_argument("--sparsity", type=float, default=0.5)
    p.add_argument("--report", help="JSON output path")
    _add_trim_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("selftest", help="run the built-in exhaustive suites")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
