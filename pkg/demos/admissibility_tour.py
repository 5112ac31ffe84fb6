"""Exact admissibility and bubble certificates for a few coefficient vectors.

Run: python3 demos/admissibility_tour.py
"""
from __future__ import annotations

from fractions import Fraction as Q

from singular_liouville import (d1_odd_lattice, enumerate_all, enumerate_collapse_one_level,
                                in_A_m, margin)


def show(beta):
    v = in_A_m(beta)
    lw = d1_odd_lattice(beta)
    print(f"beta = ({', '.join(map(str, beta))})")
    print(f"  chi/2 = {v.half_chi}, index set F = {v.index_set}")
    print(f"  d1 to the odd lattice = {lw.distance} (witness {lw.witness})")
    if v.member:
        mg = margin(beta)
        print(f"  admissible, margin {mg.value} ({mg.attaining_constraint})")
    else:
        for viol in v.violations:
            print(f"  not admissible: {viol.kind} on J = {viol.subset}")
        for cfg in enumerate_collapse_one_level(beta):
            sites = ", ".join(f"{s.site}: {s.theta}pi" for s in cfg.sites)
            print(f"    collapse certificate I = {cfg.singular}: {sites}")
    print(f"  {len(enumerate_all(beta))} certificate(s) over all regimes\n")


if __name__ == "__main__":
    alpha = Q(1, 128)
    for k in (0, 1):
        show([-(3 - 2 * alpha) / 10, 2 * k + (alpha - 1) / 10, (alpha - 1) / 10, 2 * k + Q(1, 10)])
    show([Q(-1, 2)] * 3)
    show([Q(1, 2), Q(1, 2)])
    show([Q(-1, 2), Q(-1, 2)])
