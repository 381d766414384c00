"""Scan the uniaxial power-tail family and report the largest a-norm with Picard ratios <= cap.

    python3 scripts/calibrate_eta.py [--n 32] [--box 24] [--cap 0.5] [--out eta.json]
"""
import argparse
import json
import time

import numpy as np

from nematic import GridSpec, ModelParams
from nematic import fixedpoint, initial


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--box", type=float, default=24.0)
    ap.add_argument("--cap", type=float, default=0.5)
    ap.add_argument("--alphas", default="0.01,0.02,0.05,0.1,0.15,0.2,0.3,0.4,0.6,0.8")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    p = ModelParams(1.0, 10.0, 1.0)
    grid = GridSpec(args.n, args.box)
    times = fixedpoint.make_time_grid(fixedpoint.horizon_for(p))
    alphas = [float(a) for a in args.alphas.split(",")]
    t0 = time.perf_counter()
    res = fixedpoint.calibrate_eta(
        lambda a: initial.power_tail(grid, a, p.delta).to_tensor(), alphas, p, times, ratio_cap=args.cap
    )
    res["grid"] = {"n": args.n, "box_len": args.box}
    res["wall_clock_s"] = time.perf_counter() - t0
    for row in res["scan"]:
        print(f"alpha={row['alpha']:<6g} a_norm={row['a_norm']:.4f} max_ratio={row['max_ratio']:.4f}")
    print(f"eta = {res['eta']:.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(res, fh, indent=2)


if __name__ == "__main__":
    main()
