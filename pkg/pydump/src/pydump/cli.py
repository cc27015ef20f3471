"""Command line front end mirroring the DumpSpec fields.

    pydump --out dump/ --layers 'conv*' --sample-count 4 --exempt-first

With no --model/--samples the built-in demo CNN runs on a random
non-negative batch, which is enough to exercise the whole sparq
pipeline end to end.
"""

import argparse
import json
import sys

import numpy as np
import torch

from .demo import build_demo, make_samples
from .dump import DumpSpec, dump_model


def build_parser():
    p = argparse.ArgumentParser(
        prog="pydump",
        description="Dump per-layer conv weights and input activations to .npy + manifest.json",
    )
    p.add_argument("--model", help=".pt file holding a pickled torch module (default: built-in demo CNN)")
    p.add_argument("--samples", help=".npy float batch, N x C x H x W (required with --model)")
    p.add_argument("--layers", default="*",
                   help="comma-separated fnmatch patterns over module names (default: every conv)")
    p.add_argument("--sample-count", type=int, default=4,
                   help="calibration samples to run (default: 4)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--exempt-first", action="store_true",
                   help="mark the first convolution to run as exempt from trimming")
    p.add_argument("--seed", type=int, default=0, help="seed for the demo model and batch")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.model:
            if not args.samples:
                raise ValueError("--model also needs --samples (the demo generates its own)")
            model = torch.load(args.model, weights_only=False)
            samples = np.load(args.samples, allow_pickle=False)
        else:
            model = build_demo(args.seed)
            samples = make_samples(args.sample_count, seed=args.seed)

        patterns = tuple(s.strip() for s in args.layers.split(",") if s.strip())
        spec = DumpSpec(
            patterns=patterns,
            sample_count=args.sample_count,
            out_dir=args.out,
            exempt_first=args.exempt_first,
        )
        manifest_path = dump_model(model, samples, spec)
    except (ValueError, OSError) as exc:
        print(f"pydump: {exc}", file=sys.stderr)
        return 1

    doc = json.loads(manifest_path.read_text())
    for entry in doc["tensors"]:
        tag = " exempt" if entry.get("exempt") else ""
        stat = f" max_abs={entry['max_abs']:.4g}" if "max_abs" in entry else ""
        print(f"dump {entry['name']}: {entry['role']} {tuple(entry['shape'])}{stat}{tag}")
    print(f"wrote {manifest_path}")
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
