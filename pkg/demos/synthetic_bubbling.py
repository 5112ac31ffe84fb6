"""A synthetic concentrating family and the certificate it is matched to.

Run: python3 demos/synthetic_bubbling.py
"""
from __future__ import annotations

import math

from singular_liouville import (Divisor, SyntheticFamily, enumerate_collapse_one_level,
                                family_theta, match_certificate, synthesize_family)

if __name__ == "__main__":
    axis = [0.0, 0.6, 0.8]
    d = Divisor.from_beta(["-1/2", "-1/2"], points=[axis, [-t for t in axis]])
    certs = enumerate_collapse_one_level(d)
    cert = next(c for c in certs if c.singular == (1,))
    fam = SyntheticFamily(d, cert, [0.2, 0.1, 0.05], loaded_site=1, grid="2048x1024")
    members = synthesize_family(fam)
    radii = [math.pi / 2, 3 * math.pi / 8, math.pi / 4]
    ests = []
    for i in (1, 2):
        ladder, lim = family_theta(members, d, i, radii, spec=fam, terms=3)
        per_rung = ", ".join(f"{e.extrapolated / math.pi:.4f}" for e in ladder)
        print(f"p{i}: per rung [{per_rung}] pi -> limit {lim.extrapolated / math.pi:.4f} pi")
        ests.append(lim)
    report = match_certificate(ests, d)
    for m in report.matches:
        print(f"  {m.config.regime} I = {m.config.singular}: score {m.score:.4f}")
    print(f"balance defect {report.balance_defect:.4f}")
