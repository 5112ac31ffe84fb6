"""Solver against closed forms: the football and a Troyanov-regime divisor.

Run: python3 demos/exact_solutions.py
"""
from __future__ import annotations

import math

import numpy as np

from singular_liouville import Divisor, dirac_mass, football_exact, pohozaev, solve, theta_estimate


def unit(theta, phi):
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                     math.cos(theta)])


def football():
    axis = unit(1.0, 0.7)
    d = Divisor.from_beta(["1/2", "1/2"], points=[axis, -axis])
    res = solve(d, 1.0)
    diff = res.u.values - football_exact(0.5, res.grid, axis).values
    print(f"football beta = 1/2: {res.status}, residual {res.residual_sup:.1e}")
    print(f"  area {res.area / math.pi:.6f} pi (exact 6 pi), "
          f"spread of u - u_exact {np.ptp(diff):.1e}")
    ps = pohozaev(res, 1.0, 1, np.geomspace(0.05, 0.8, 8))
    print(f"  Pohozaev P(t) relative variation {ps.relative_variation:.1e}, "
          f"P(0+) = {ps.limit / math.pi:.5f} pi (exact 5/2 pi)")


def troyanov():
    pts = [unit(1.0, 0.3), unit(2.0, 2.5), unit(1.4, 4.4)]
    d = Divisor.from_beta(["-1/2"] * 3, points=pts)
    res = solve(d, 1.0)
    h = res.grid.h
    print(f"three cones of angle pi: {res.status}, area {res.area / math.pi:.6f} pi")
    fac = res.factor()
    for i, (p, b) in enumerate(zip(d.point_array, d.beta_float), start=1):
        flux = dirac_mass(fac, 1.0, p, 8 * h, b)
        th = theta_estimate(res, 1.0, None, i, [8 * h, 12 * h, 16 * h, 24 * h])
        print(f"  p{i}: Dirac mass {flux / math.pi:.4f} pi, Theta^ {th.extrapolated / math.pi:.4f} pi")


if __name__ == "__main__":
    football()
    troyanov()
