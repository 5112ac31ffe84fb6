"""Measurements on conformal factors: Pohozaev functional, concentration, totals.

Every operation accepts the conformal factor in one of three forms:

* a :class:`~singular_liouville.solver.SolveResult`;
* a :class:`~singular_liouville.solver.ConformalFactor` (closed forms,
  synthetic families);
* a :class:`~singular_liouville.sphere.SphereField` holding ``u`` on a grid,
  together with the divisor so that the logarithmic part can be split off.

Curvature may be a positive number, ``"const:c"``, a callable on points, or
a :class:`SphereField`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bubbles import REGIMES, BubbleConfig, enumerate_all, refine_placements
from .divisor import Divisor, as_fraction
from .solver import ConformalFactor, SolveResult, _numerical_gradient
from .sphere import (ChartRangeError, SphereField, chart_frame, chart_log_factor,
                     disk_quadrature, geodesic_distance, polar_quadrature, quadrature,
                     singular_part, sphere_to_chart)

__all__ = [
    "Curvature",
    "PohozaevSeries",
    "ThetaEstimate",
    "GaussBonnet",
    "AreaLedger",
    "Match",
    "MatchReport",
    "cap_integral",
    "pohozaev",
    "theta_estimate",
    "ladder_theta",
    "gauss_bonnet",
    "area_ledger",
    "match_certificate",
    "COLLAPSE_REGIMES",
    "EMPTY_REPORT",
]

COLLAPSE_REGIMES = tuple(r for r in REGIMES if r.startswith("collapse"))
EMPTY_REPORT = "no admissible certificate (β may lie in 𝒜_m)"
_SITE_TOL = 1e-9


class Curvature:
    """Uniform value/gradient access to a positive curvature function."""

    def __init__(self, K):
        self.constant: float | None = None
        self._field: SphereField | None = None
        self._func: Callable | None = None
        self._grad: Callable | None = None
        if isinstance(K, Curvature):
            self.__dict__.update(K.__dict__)
        elif isinstance(K, SphereField):
            self._field = K
        elif isinstance(K, tuple) and len(K) == 2 and callable(K[0]):
            self._func, self._grad = K
        elif callable(K):
            self._func = K
        else:
            if isinstance(K, str):
                if not K.startswith("const:"):
                    raise ValueError(f"unknown curvature spec {K!r}")
                K = K.split(":", 1)[1]
            self.constant = float(as_fraction(K) if isinstance(K, str) else K)
            if self.constant <= 0:
                raise ValueError("curvature must be positive")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.constant is not None:
            return np.full(x.shape[:-1], self.constant)
        if self._field is not None:
            return self._field.interpolate(x)
        return np.asarray(self._func(x), float)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.constant is not None:
            return np.zeros_like(x)
        if self._field is not None:
            return self._field.gradient(x)
        if self._grad is not None:
            return np.asarray(self._grad(x), float)
        return _numerical_gradient(self._func, x)

    def on_grid(self, grid) -> np.ndarray:
        if self._field is not None and self._field.grid.same_as(grid):
            return self._field.values
        return self(grid.nodes)


def _as_factor(u, d: Divisor | None) -> ConformalFactor:
    if isinstance(u, ConformalFactor):
        return u
    if isinstance(u, SolveResult):
        return u.factor()
    if isinstance(u, SphereField):
        if d is None or d.m == 0:
            pts, beta = np.zeros((0, 3)), []
            w = u
        else:
            S, _ = singular_part(d, u.grid)
            w = u.copy(u.values - S.values, name="w")
            pts, beta = d.point_array, d.beta_float
        return ConformalFactor(pts, beta, w)
    raise TypeError(f"cannot read a conformal factor from {type(u).__name__}")


def _divisor_of(u, d: Divisor | None) -> Divisor | None:
    if d is not None:
        return d
    if isinstance(u, SolveResult):
        return u.divisor
    return None


def _site_index(d: Divisor | None, x) -> int | None:
    """1-based index of the marked point at ``x``, if any."""
    if d is None:
        return None
    for i, p in enumerate(d.point_array, start=1):
        if np.linalg.norm(p - x) < _SITE_TOL:
            return i
    return None


def _resolve_point(d: Divisor | None, where) -> np.ndarray:
    """A 3-vector from a point, a 1-based marked index, or ``(lon, lat)`` in radians."""
    if isinstance(where, (int, np.integer)):
        if d is None or not 1 <= where <= d.m:
            raise ValueError(f"no marked point {where}")
        return d.point_array[where - 1]
    x = np.asarray(where, float)
    if x.shape == (2,):
        lon, lat = x
        x = np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])
    if x.shape != (3,):
        raise ValueError("a point must be a 3-vector, a (lon, lat) pair or a marked index")
    return x / np.linalg.norm(x)


def cap_integral(func: Callable, center, r: float, alpha: float = 0.0, inner: float | None = None,
                 n_rad: int = 32, n_ang: int = 128, ratio: float = 4.0) -> float:
    """Integral over ``B_r(center)``, graded towards the center.

    The disk is split at ``r, r/ratio, r/ratio^2, ...`` until the innermost
    radius is below ``inner``; the inner disk uses Gauss-Jacobi with exponent
    ``alpha``, each annulus Gauss-Legendre.  Use ``inner`` of the order of the
    smallest feature scale near the center.
    """
    edges = [r]
    if inner is not None:
        while edges[-1] > inner and len(edges) < 60:
            edges.append(edges[-1] / ratio)
    total = polar_quadrature(func, center, edges[-1], n_rad, n_ang, alpha)
    for lo, hi in zip(edges[1:], edges[:-1]):
        total += polar_quadrature(func, center, hi, n_rad, n_ang, alpha, r_inner=lo)
    return total


# Pohozaev ------------------------------------------------------------------------------

@dataclass
class PohozaevSeries:
    """Pohozaev functional on chart circles ``|z| = t`` around ``center``.

    ``drift[k]`` is ``P(t_{k+1}) - P(t_k)`` minus ``annulus[k]``, the
    integral of ``r e^{2u~} dK/dr`` over the annulus between the two circles.
    ``limit`` is the fit ``P0 + a t^q`` over the three smallest radii.
    """

    center: np.ndarray
    radii: np.ndarray
    P_values: np.ndarray
    drift: np.ndarray
    annulus: np.ndarray
    limit: float
    cone: float = 0.0

    def __post_init__(self):
        if not (len(self.radii) == len(self.P_values) == len(self.drift) + 1 == len(self.annulus) + 1):
            raise ValueError("series lengths disagree")

    @property
    def max_variation(self) -> float:
        return float(np.max(self.P_values) - np.min(self.P_values))

    @property
    def relative_variation(self) -> float:
        return self.max_variation / max(float(np.max(np.abs(self.P_values))), 1e-300)

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "radii": self.radii.tolist(),
                "P": self.P_values.tolist(), "drift": self.drift.tolist(),
                "annulus": self.annulus.tolist(), "limit": self.limit,
                "relative_variation": self.relative_variation, "cone": self.cone}


def _chart_geometry(center, t, psi):
    """Sphere points on the chart circle ``|z| = t`` and their ``r``/``psi`` tangents."""
    e1, e2, c = chart_frame(center)
    t = np.asarray(t, float)[..., None, None]
    ca, sa = np.cos(psi)[:, None], np.sin(psi)[:, None]
    radial = ca * e1 + sa * e2
    q = 1 + t * t
    x = ((1 - t * t) * c + 2 * t * radial) / q
    dx_dr = (-2 * t * c + 2 * radial) / q - x * (2 * t / q)
    dx_dpsi = 2 * t * (-sa * e1 + ca * e2) / q
    return x, dx_dr, dx_dpsi


def _exclusion_check(d, center, radii, exclusion):
    if d is None:
        return
    t_max = float(np.max(radii))
    for i, p in enumerate(d.point_array, start=1):
        if np.linalg.norm(p - center) < _SITE_TOL:
            continue
        if p @ center <= -1 + 1e-12:
            continue  # the antipode sits at chart infinity
        zp = abs(complex(sphere_to_chart(p[None, :], center)[0]))
        # geodesic clearance in chart units near |z| = zp
        if zp <= t_max + exclusion * 0.5 * (1 + zp * zp):
            raise ValueError(f"marked point {i} lies inside or near the Pohozaev disk")


def pohozaev(u, K, center, radii, d: Divisor | None = None, n_ang: int = 256, n_rad: int = 24,
             exclusion: float = 0.0, limit: float = 1.0) -> PohozaevSeries:
    """Pohozaev functional ``P(t)`` in the stereographic chart of ``center``.

    With ``u~ = u + log(2/(1+|z|^2))`` solving ``-Lap u~ = K e^{2u~}`` in the chart,

        P(t) = int_0^{2 pi} [ (t u~_r)^2 - u~_psi^2 + 2 t u~_r + t^2 K e^{2u~} ] dpsi,

    which is ``t (|u~_r|^2 - t^{-2}|u~_psi|^2) + 2 u~_r + t K e^{2u~}``
    integrated over the circle ``|z| = t``.  Derivatives come from the
    gradient of ``u``; the angular integral is a trapezoid rule.

    Parameters
    ----------
    u : conformal factor (see module docstring)
    K : curvature
    center : point, 1-based marked index, or ``(lon, lat)``
    radii : increasing chart radii in ``(0, limit]``
    d : Divisor, optional
        Needed for a bare :class:`SphereField`; also used to reject disks
        that contain other marked points.
    exclusion : float
        Extra geodesic clearance required around other marked points.

    Raises
    ------
    ChartRangeError
        If a radius is outside ``(0, limit]``.
    ValueError
        If another marked point lies inside the largest disk (plus clearance).
    """
    d = _divisor_of(u, d)
    c = _resolve_point(d, center)
    radii = np.asarray(radii, float)
    if radii.ndim != 1 or len(radii) < 2 or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing, at least two")
    if radii[0] <= 0 or radii[-1] > limit:
        raise ChartRangeError(f"chart radii must lie in (0, {limit}]")
    _exclusion_check(d, c, radii, exclusion)
    fac = _as_factor(u, d)
    Kc = Curvature(K)
    idx = _site_index(d, c)
    cone = float(d.beta_float[idx - 1]) if idx else 0.0
    psi = np.arange(n_ang) * (2 * math.pi / n_ang)

    x, dxr, dxp = _chart_geometry(c, radii, psi)
    g = fac.gradient(x)
    t = radii[:, None]
    ur = np.sum(g * dxr, axis=-1) - 2 * t / (1 + t * t)
    up = np.sum(g * dxp, axis=-1)
    e2 = np.exp(2 * (fac(x) + chart_log_factor(t)))
    dens = (t * ur) ** 2 - up ** 2 + 2 * t * ur + t * t * Kc(x) * e2
    P = dens.mean(axis=1) * 2 * math.pi

    annulus = np.zeros(len(radii) - 1)
    if Kc.constant is None:
        xi, wi = np.polynomial.legendre.leggauss(n_rad)
        for k, (a, b) in enumerate(zip(radii[:-1], radii[1:])):
            tt = a + 0.5 * (b - a) * (1 + xi)
            xs, dr, _ = _chart_geometry(c, tt, psi)
            Kr = np.sum(Kc.gradient(xs) * dr, axis=-1)
            ee = np.exp(2 * (fac(xs) + chart_log_factor(tt[:, None])))
            ring = (Kr * ee).mean(axis=1) * 2 * math.pi
            annulus[k] = 0.5 * (b - a) * np.sum(wi * tt * tt * ring)
    drift = np.diff(P) - annulus
    return PohozaevSeries(c, radii, P, drift, annulus,
                          _fit_limit(radii, P, 2 + 2 * cone), cone)


def _fit_limit(r, values, q: float) -> float:
    """Constant term of ``v0 + a r^q + b r^{q + min(2, q)}`` through the three smallest ``r``."""
    order = np.argsort(r)[:3]
    rr, vv = np.asarray(r)[order], np.asarray(values)[order]
    if len(rr) < 3:
        raise ValueError("extrapolation needs at least three radii")
    A = np.stack([np.ones_like(rr), rr ** q, rr ** (q + min(2.0, q))], axis=1)
    coef, *_ = np.linalg.lstsq(A, vv, rcond=None)
    return float(coef[0])


# concentration ---------------------------------------------------------------------------

@dataclass
class ThetaEstimate:
    """Curvature mass of geodesic disks around ``site``, Dirac part removed.

    ``values[k] = int_{B_{r_k}} K e^{2u} dV - 2 pi sum_{p_i in B_{r_k}} beta_i``
    with ``radii`` decreasing.  ``extrapolated`` passes
    ``theta + a r^q + b r^{q + min(2, q)}`` through the three smallest radii,
    ``q = 2 + 2 beta`` at a marked site and 2 elsewhere (the cap mass of a
    cone of coefficient beta scales like ``r^{2+2 beta}``).
    """

    site: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    extrapolated: float
    exponent: float
    site_index: int | None = None
    method: str = "polar"
    enclosed: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.radii) != len(self.values):
            raise ValueError("radii and values differ in length")
        if np.any(np.diff(self.radii) >= 0):
            raise ValueError("radii must be strictly decreasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite disk mass")

    @property
    def theta(self) -> float:
        return self.extrapolated

    def to_json(self) -> dict:
        return {"site": self.site.tolist(), "site_index": self.site_index,
                "radii": self.radii.tolist(), "values": self.values.tolist(),
                "extrapolated": self.extrapolated, "exponent": self.exponent,
                "method": self.method, "enclosed": list(self.enclosed)}


def _disk_mass(fac: ConformalFactor, Kc: Curvature, d, x, r, alpha, inner, n_rad, n_ang):
    def integrand(y):
        return Kc(y) * np.exp(2 * fac(y))
    return cap_integral(integrand, x, r, alpha=alpha, inner=inner, n_rad=n_rad, n_ang=n_ang)


def theta_estimate(u, K, d: Divisor | None, site, radii, method: str = "auto",
                   inner: float | None = None, n_rad: int = 32, n_ang: int = 128,
                   min_radius: float | None = None) -> ThetaEstimate:
    """Concentration estimate ``Theta^(site)`` from disk masses.

    Parameters
    ----------
    u : conformal factor (see module docstring)
    K : curvature
    d : Divisor (taken from ``u`` for a solve result)
    site : point, 1-based marked index, or ``(lon, lat)``
    radii : disk radii (any order; at least three)
    method : ``"polar"`` (graded polar quadrature of the factor), ``"grid"``
        (disk quadrature of the node values) or ``"auto"`` (grid for a bare
        field without divisor, polar otherwise)
    inner : float, optional
        Smallest feature scale; refines the polar rule towards the site.
    min_radius : float, optional
        Reject radii below this value (defaults to ``8 h`` on grid input).
    """
    d = _divisor_of(u, d)
    x = _resolve_point(d, site)
    radii = np.sort(np.asarray(radii, float))[::-1]
    if len(radii) < 3:
        raise ValueError("extrapolation needs at least three radii")
    if min_radius is None and isinstance(u, (SolveResult, SphereField)):
        grid = u.grid
        min_radius = 8 * grid.h
    if min_radius is not None and radii[-1] < min_radius * (1 - 1e-12):
        raise ValueError(f"radius {radii[-1]:.3g} below the resolution limit {min_radius:.3g}")
    Kc = Curvature(K)
    idx = _site_index(d, x)
    b_site = float(d.beta_float[idx - 1]) if idx else 0.0
    if method == "auto":
        method = "grid" if (isinstance(u, SphereField) and d is None) else "polar"
    vals, enclosed_all = [], []
    if method == "grid":
        if isinstance(u, SolveResult):
            grid, uf = u.grid, u.u
        elif isinstance(u, SphereField):
            grid, uf = u.grid, u
        else:
            raise ValueError("grid quadrature needs a field")
        mass_field = uf.copy(Kc.on_grid(grid) * np.exp(2 * uf.values), name="K e^2u")
        mass_field.mask = uf.mask
    else:
        fac = _as_factor(u, d)
    for r in radii:
        inside = []
        dirac = 0.0
        if d is not None:
            for i, (p, b) in enumerate(zip(d.point_array, d.beta_float), start=1):
                if geodesic_distance(p, x) < r:
                    inside.append(i)
                    dirac += 2 * math.pi * b
        if method == "grid":
            mass = disk_quadrature(mass_field, x, r)
        else:
            mass = _disk_mass(fac, Kc, d, x, r, 2 * b_site, inner, n_rad, n_ang)
        vals.append(mass - dirac)
        enclosed_all.append(inside)
    q = 2 + 2 * b_site
    vals = np.asarray(vals)
    return ThetaEstimate(x, radii, vals, _fit_limit(radii, vals, q), q, idx, method,
                         enclosed_all)


def ladder_theta(estimates: Sequence[ThetaEstimate], eps: Sequence[float],
                 order: float = 1.0, terms: int = 2) -> ThetaEstimate:
    """Double limit over a concentration ladder: ``eps -> 0`` first, then ``r -> 0``.

    ``estimates[k]`` must use the same site and radii for rung ``eps[k]``.
    At each radius the disk values of the ``terms`` finest rungs are
    interpolated by ``v0 + a_1 eps^order + ... + a_{terms-1} eps^{(terms-1) order}``
    (``terms = 1`` returns the finest rung); the ``v0`` values are then
    extrapolated in ``r`` as usual.
    """
    if len(estimates) != len(eps) or not estimates:
        raise ValueError("one estimate per rung is required")
    radii = estimates[0].radii
    for e in estimates:
        if not np.allclose(e.radii, radii) or not np.allclose(e.site, estimates[0].site):
            raise ValueError("rungs must share site and radii")
    order_idx = np.argsort(eps)[:max(1, terms)]
    E = np.asarray(eps, float)[order_idx]
    V = np.stack([estimates[k].values for k in order_idx])
    if len(E) == 1:
        lim = V[0]
    else:
        A = np.stack([E ** (j * order) for j in range(len(E))], axis=1)
        coef, *_ = np.linalg.lstsq(A, V, rcond=None)
        lim = coef[0]
    base = estimates[0]
    return ThetaEstimate(base.site, radii, lim, _fit_limit(radii, lim, base.exponent),
                         base.exponent, base.site_index, base.method + "+ladder",
                         base.enclosed)


# totals ----------------------------------------------------------------------------------

@dataclass
class GaussBonnet:
    total: float
    expected: float

    @property
    def deviation(self) -> float:
        return self.total - self.expected

    @property
    def relative(self) -> float:
        return abs(self.deviation) / abs(self.expected) if self.expected else abs(self.deviation)

    def to_json(self) -> dict:
        return {"total": self.total, "expected": self.expected,
                "deviation": self.deviation, "relative": self.relative}


def gauss_bonnet(u, K, d: Divisor | None = None, n_rad: int = 96, n_ang: int = 192,
                 inner: float | None = None) -> GaussBonnet:
    """``int K e^{2u} dV`` against ``2 pi chi``.

    Grid input uses the node quadrature (exact for the discrete solver, whose
    residual has zero weighted sum).  A closed-form factor is integrated by a
    partition of unity ``d_i^{-8} / sum_j d_j^{-8}`` over the marked points,
    each piece by polar Gauss-Jacobi over the whole sphere.
    """
    d = _divisor_of(u, d)
    Kc = Curvature(K)
    expected = 2 * math.pi * (2.0 + (float(sum(d.beta)) if d is not None else 0.0))
    if isinstance(u, (SolveResult, SphereField)):
        uf = u.u if isinstance(u, SolveResult) else u
        f = uf.copy(Kc.on_grid(uf.grid) * np.exp(2 * uf.values))
        f.mask = uf.mask
        return GaussBonnet(quadrature(f), expected)
    fac = _as_factor(u, d)
    pts = fac.points
    if len(pts) == 0:
        total = cap_integral(lambda y: Kc(y) * np.exp(2 * fac(y)), np.array([0.0, 0.0, 1.0]),
                             math.pi, 0.0, inner, n_rad, n_ang)
        return GaussBonnet(total, expected)

    def piece(i):
        def f(y):
            dist = np.stack([np.linalg.norm(y - p, axis=-1) for p in pts])
            with np.errstate(divide="ignore", over="ignore"):
                logw = -8 * np.log(dist)
                logw -= logw.max(axis=0)
                wts = np.exp(logw)
                chi_i = wts[i] / wts.sum(axis=0)
            return chi_i * Kc(y) * np.exp(2 * fac(y))
        return f

    total = sum(cap_integral(piece(i), pts[i], math.pi, 2 * fac.beta[i], inner, n_rad, n_ang)
                for i in range(len(pts)))
    return GaussBonnet(float(total), expected)


@dataclass
class AreaLedger:
    """Area bookkeeping for a bubble tree: ``total = base + sum(bubbles)``."""

    base_area: float
    bubbles: list
    observed: float | None = None

    @property
    def total(self) -> float:
        return self.base_area + sum(b["area"] for b in self.bubbles)

    @property
    def defect(self) -> float | None:
        return None if self.observed is None else self.observed - self.total

    def to_json(self) -> dict:
        return {"base_area": self.base_area, "bubbles": self.bubbles, "total": self.total,
                "observed": self.observed, "defect": self.defect}


def area_ledger(cfg: BubbleConfig, d: Divisor, K=1.0, base_area: float = 0.0,
                observed: float | None = None, free_points: Sequence | None = None) -> AreaLedger:
    """Bubble areas of a certificate: smooth ``4 pi / K(x0)``, singular ``4 pi (1 + beta) / K(x0)``.

    Second-level bubbles are smooth bubbles sitting on a singular one.
    Free sites are evaluated at ``free_points`` when given (in order),
    otherwise ``K`` must be constant.
    """
    Kc = Curvature(K)
    free_points = list(free_points or [])
    rows = []
    for s in cfg.sites:
        if s.site is None:
            if free_points:
                x0 = np.asarray(free_points.pop(0), float)
            elif Kc.constant is not None:
                x0 = np.array([0.0, 0.0, 1.0])
            else:
                raise ValueError("free site position needed for variable curvature")
            label, beta = "free", 0.0
        else:
            x0 = d.point_array[s.site - 1]
            label, beta = s.site, float(d.beta[s.site - 1])
        k0 = float(Kc(x0[None, :])[0])
        smooth = s.level1_smooth + s.level2_smooth
        if smooth:
            rows.append({"site": label, "kind": "smooth", "count": smooth,
                         "area": smooth * 4 * math.pi / k0})
        if s.level1_singular:
            rows.append({"site": label, "kind": "singular", "count": 1,
                         "area": 4 * math.pi * (1 + beta) / k0})
    return AreaLedger(base_area, rows, observed)


# certificate matching --------------------------------------------------------------------

@dataclass
class Match:
    score: float
    config: BubbleConfig
    placement: BubbleConfig

    def to_json(self) -> dict:
        return {"score": self.score, "certificate": self.config.to_json(),
                "placement": self.placement.to_json()}


@dataclass
class MatchReport:
    matches: list
    balance_defect: float
    message: str = ""

    @property
    def best(self) -> Match | None:
        return self.matches[0] if self.matches else None

    def to_json(self) -> dict:
        return {"matches": [m.to_json() for m in self.matches],
                "balance_defect": self.balance_defect, "message": self.message}


def _placement_score(placement: BubbleConfig, marked_obs: dict, free_obs: list) -> float:
    four_pi = 4 * math.pi
    score = 0.0
    by_site = {s.site: s for s in placement.sites if s.site is not None}
    for i, val in marked_obs.items():
        theta = float(by_site[i].theta) * math.pi if i in by_site else None
        if theta is None:
            raise ValueError(f"certificate has no site {i}")
        score += abs(val - theta) / four_pi
    free_theta = [float(s.theta) * math.pi for s in placement.sites if s.site is None]
    if free_obs:
        n = max(len(free_obs), len(free_theta))
        obs = list(free_obs) + [0.0] * (n - len(free_obs))
        cert = free_theta + [0.0] * (n - len(free_theta))
        if n <= 7:
            best = min(sum(abs(o - cert[j]) for o, j in zip(obs, perm))
                       for perm in itertools.permutations(range(n)))
        else:
            best = sum(abs(a - b) for a, b in zip(sorted(obs), sorted(cert)))
        score += best / four_pi
    return score


def match_certificate(estimates: Sequence[ThetaEstimate], d: Divisor,
                      regimes: Sequence[str] = COLLAPSE_REGIMES,
                      configs: Sequence[BubbleConfig] | None = None) -> MatchReport:
    """Rank certificates by ``sum_sites |Theta^ - theta_cert| / 4 pi``.

    Estimates at marked points are compared with that site's value; estimates
    elsewhere are matched to free sites of each placement of the aggregated
    smooth bubbles (best assignment).  The balance defect is
    ``|sum Theta^ - 4 pi| / 4 pi``.
    """
    if configs is None:
        configs = enumerate_all(d, regimes)
    marked_obs, free_obs = {}, []
    for e in estimates:
        idx = e.site_index if e.site_index is not None else _site_index(d, e.site)
        if idx is None:
            free_obs.append(e.theta)
        else:
            marked_obs[idx] = e.theta
    balance = abs(sum(e.theta for e in estimates) - 4 * math.pi) / (4 * math.pi)
    if not configs:
        return MatchReport([], balance, EMPTY_REPORT)
    out = []
    for cfg in configs:
        best = None
        for placement in refine_placements(cfg):
            s = _placement_score(placement, marked_obs, free_obs)
            if best is None or s < best[0]:
                best = (s, placement)
        out.append(Match(best[0], cfg, best[1]))
    rank = {r: k for k, r in enumerate(REGIMES)}
    out.sort(key=lambda m: (m.score, rank.get(m.config.regime, 99), m.config.key()))
    return MatchReport(out, balance, "")
