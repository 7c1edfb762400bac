#!/usr/bin/env python3
"""Full 1D fragmentation campaign: for each resource budget, optimize the
layout across a decreasing diffusivity ladder and persist reports, field
CSVs, and plots under out/frag1d-m<budget>/.

Usage: python3 scripts/run_fragmentation_1d.py [--out DIR] [--starts K] [--seed S]
"""
import argparse

from kppfrag.cli import PRESETS, parse_config, _cmd_sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out")
    ap.add_argument("--starts", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for preset in ("paper-1d-m03", "paper-1d-m06"):
        tag = preset.rsplit("-", 1)[-1]
        settings = dict(PRESETS[preset])
        settings.update(
            starts=args.starts,
            seed=args.seed,
            out=f"{args.out}/frag1d-{tag}",
            plot=True,
        )
        cfg = parse_config(settings, "sweep")
        print(f"== {preset} ==")
        rc = _cmd_sweep(cfg)
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
