"""Continuation from a football towards the round sphere, with CSV output.

Run: python3 demos/shrinking_cones.py [out_dir]
"""
from __future__ import annotations

import math
import sys
from fractions import Fraction

from singular_liouville import Divisor, SweepConfig, emit_plots, sweep

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "shrinking_cones"
    axis = [0.0, 0.6, 0.8]
    d = Divisor.from_beta(["1/2", "1/2"], points=[axis, [-t for t in axis]])
    cfg = SweepConfig(divisor=d, target=("1/16", "1/16"), grid="128x64", steps=6,
                      pohozaev={"center": 1, "radii": [0.05, 0.1, 0.2, 0.4, 0.8]})
    rec = sweep(cfg, out)
    for s in rec.steps:
        chi = 2 + sum(float(Fraction(b)) for b in s["beta"])
        print(f"tau {s['tau']:>4}: beta {s['beta'][0]:>5}, area {s['area'] / math.pi:8.5f} pi "
              f"(2 pi chi = {2 * chi:.5f} pi), {s['status']}")
    files = emit_plots(rec, f"{out}/plots")
    print("CSV:", ", ".join(str(p) for p in files.values()))
