#!/usr/bin/env python3
"""2D campaign on the 60x60 grid: optimize layouts for both budgets at
mu in {0.1, 0.01} and persist heatmaps. The 60x60 grid under-resolves the
mu = 0.01 boundary layers, so the sweep runs with the resolution guard
relaxed; treat those layouts as qualitative.

Usage: python3 scripts/run_2d_campaign.py [--out DIR] [--starts K] [--seed S]
"""
import argparse

from kppfrag.cli import PRESETS, parse_config, _cmd_sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out")
    ap.add_argument("--starts", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for preset in ("paper-2d-m03", "paper-2d-m06"):
        tag = preset.rsplit("-", 1)[-1]
        settings = dict(PRESETS[preset])
        settings.update(
            starts=args.starts,
            seed=args.seed,
            out=f"{args.out}/frag2d-{tag}",
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
