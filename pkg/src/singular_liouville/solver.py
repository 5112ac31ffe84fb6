"""Newton-continuation solver for the singular Liouville equation on the sphere.

With ``S = sum beta_i ln|x - p_i|`` and ``h = exp(2 S)``, the conformal factor
``u = S + w`` solves ``-Lap u = K e^{2u} - 1 - 2 pi sum beta_i delta_{p_i}``
exactly when the regular part solves

    F(w) = -L w - K h e^{2w} + chi/2 = 0.

Iterates and residuals are kept in extended precision while the Newton
correction is computed with a float64 sparse factorization; the extended
residual removes the rounding floor that the large polar stencil weights
would otherwise impose.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .divisor import Divisor, as_fraction, chi_pair
from .sphere import (SphereField, SphereGrid, chart_frame, chart_log_factor, geodesic_distance,
                     log_distance_sum, polar_quadrature, quadrature, singular_part)

__all__ = [
    "SolveParams",
    "StageRecord",
    "SolveResult",
    "ConformalFactor",
    "curvature_field",
    "solve",
    "residual",
    "football_exact",
    "football_factor",
    "football_planar",
    "radial_plane_solve",
    "RadialProfile",
    "continuation_sweep",
    "dirac_mass",
]

LD = np.longdouble


@dataclass
class SolveParams:
    """Newton and continuation settings.

    ``stages`` overrides the uniform continuation ladder ``k / continuation_steps``.
    A failed stage is retried after halving the step, at most ``max_bisections`` times.
    """

    newton_tol: float = 1e-10
    max_newton: int = 50
    damping: float = 0.5
    min_step: float = 2.0 ** -20
    continuation_steps: int = 4
    stages: Sequence[float] | None = None
    max_bisections: int = 6
    collapse_threshold: float = -10.0
    collapse_area_fraction: float = 0.01
    exclusion_factor: float = 4.0

    def __post_init__(self):
        if self.newton_tol <= 0 or self.min_step <= 0 or not 0 < self.damping < 1:
            raise ValueError("tolerances must be positive and damping in (0, 1)")

    def ladder(self) -> list[float]:
        if self.stages is not None:
            taus = [float(t) for t in self.stages]
        else:
            n = max(1, int(self.continuation_steps))
            taus = [(k + 1) / n for k in range(n)]
        if any(b <= a for a, b in zip(taus, taus[1:])) or not taus or taus[-1] != 1.0:
            raise ValueError("continuation stages must increase to 1")
        return taus

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, (list, tuple)) else v)
                for k, v in self.__dict__.items()}


@dataclass
class StageRecord:
    tau: float
    status: str
    newton_iters: int
    residuals: list[float]


def curvature_field(K, grid: SphereGrid) -> SphereField:
    """Curvature as a field: number, ``"const:c"``, callable on points, or a field."""
    if isinstance(K, SphereField):
        if not K.grid.same_as(grid):
            raise ValueError("curvature field lives on a different grid")
        field_ = K
    elif callable(K):
        field_ = grid.evaluate(K, name="K")
    else:
        if isinstance(K, str):
            if not K.startswith("const:"):
                raise ValueError(f"unknown curvature spec {K!r}")
            K = float(as_fraction(K.split(":", 1)[1]))
        field_ = grid.field(np.full(grid.shape, float(K)), name="K")
    if not np.all(field_.values > 0):
        raise ValueError("curvature must be positive at every node")
    return field_


class ConformalFactor:
    """``u = S + w`` with the singular part evaluated in closed form.

    ``w`` is a :class:`SphereField` (spline interpolated) or a callable
    returning values for points of shape ``(..., 3)``; in the latter case an
    optional ``w_grad`` callable supplies the tangential gradient.
    """

    def __init__(self, points, beta, w, w_grad: Callable | None = None):
        self.points = np.asarray(points, float).reshape(-1, 3)
        self.beta = np.asarray([float(b) for b in beta], float)
        self.w = w
        self._w_grad = w_grad

    def regular(self, x) -> np.ndarray:
        return self.w.interpolate(x) if isinstance(self.w, SphereField) else self.w(x)

    def regular_gradient(self, x) -> np.ndarray:
        if isinstance(self.w, SphereField):
            return self.w.gradient(x)
        if self._w_grad is None:
            return _numerical_gradient(self.w, x)
        return self._w_grad(x)

    def singular(self, x) -> np.ndarray:
        return log_distance_sum(x, self.points, self.beta)

    def singular_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        g = np.zeros_like(x)
        for p, b in zip(self.points, self.beta):
            d = x - p
            g += b * d / np.sum(d * d, axis=-1, keepdims=True)
        return g - np.sum(g * x, axis=-1, keepdims=True) * x

    def __call__(self, x) -> np.ndarray:
        return self.singular(x) + self.regular(x)

    def gradient(self, x) -> np.ndarray:
        return self.singular_gradient(x) + self.regular_gradient(x)


def _numerical_gradient(f, x, eps: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    for k in range(3):
        e = np.zeros(3)
        e[k] = eps
        xp = x + e
        xm = x - e
        xp /= np.linalg.norm(xp, axis=-1, keepdims=True)
        xm /= np.linalg.norm(xm, axis=-1, keepdims=True)
        out[..., k] = (f(xp) - f(xm)) / (2 * eps)
    return out - np.sum(out * x, axis=-1, keepdims=True) * x


@dataclass
class SolveResult:
    """Outcome of :func:`solve`; ``u`` is reconstructed as ``S + w``."""

    divisor: Divisor
    grid: SphereGrid
    K: SphereField
    w: SphereField
    S: SphereField
    residual_sup: float
    status: str
    stages: list[StageRecord]
    mean_u: float
    area: float
    curvature_total: float
    elapsed: float = 0.0

    @property
    def u(self) -> SphereField:
        out = self.w.copy(self.S.values + self.w.values, name="u")
        out.mask = self.S.mask
        return out

    @property
    def newton_iters(self) -> list[int]:
        return [s.newton_iters for s in self.stages]

    @property
    def residual_history(self) -> list[float]:
        return self.stages[-1].residuals if self.stages else []

    def factor(self) -> ConformalFactor:
        return ConformalFactor(self.divisor.point_array, self.divisor.beta_float, self.w)

    def summary(self) -> dict:
        return {"status": self.status, "residual_sup": self.residual_sup,
                "mean_u": self.mean_u, "area": self.area,
                "curvature_total": self.curvature_total,
                "newton_iters": self.newton_iters,
                "stages": [s.tau for s in self.stages], "elapsed": self.elapsed}


def exclusion_mask(grid: SphereGrid, points, radius: float) -> np.ndarray:
    mask = np.zeros(grid.shape, bool)
    for p in np.asarray(points, float).reshape(-1, 3):
        mask |= geodesic_distance(grid.nodes, p) < radius
    return mask


def residual(w, KH: np.ndarray, half_chi: float, grid: SphereGrid) -> np.ndarray:
    """Extended-precision ``-L w - K h e^{2w} + chi/2`` (shape of the grid)."""
    w = np.asarray(w, dtype=LD).reshape(grid.shape)
    return -grid.apply_laplacian(w, dtype=LD) - np.asarray(KH, LD) * np.exp(2 * w) + LD(half_chi)


def _newton(grid, KH, half_chi, w0, params: SolveParams, keep: np.ndarray):
    L = grid.laplacian_matrix()
    w = np.asarray(w0, dtype=LD).reshape(grid.shape).copy()
    KH = np.asarray(KH, LD)
    F = residual(w, KH, half_chi, grid)
    hist = [float(np.max(np.abs(F[keep])))]
    merit = float(np.max(np.abs(F)))
    for it in range(params.max_newton + 1):
        if not np.all(np.isfinite(F)):
            return w, hist, "diverged", it
        if hist[-1] <= params.newton_tol:
            return w, hist, "converged", it
        if it == params.max_newton:
            break
        jac = -L - sp.diags(np.asarray(2 * KH * np.exp(2 * w), float).ravel())
        dw = spla.spsolve(jac.tocsc(), -np.asarray(F, float).ravel()).reshape(grid.shape)
        lam = 1.0
        while lam >= params.min_step:
            w_try = w + LD(lam) * dw
            with np.errstate(over="ignore", invalid="ignore"):
                F_try = residual(w_try, KH, half_chi, grid)
                m_try = float(np.max(np.abs(F_try)))
            if np.isfinite(m_try) and m_try < merit:
                break
            lam *= params.damping
        else:
            return w, hist, "diverged", it
        w, F, merit = w_try, F_try, m_try
        hist.append(float(np.max(np.abs(F[keep]))))
    return w, hist, "diverged", params.max_newton


def _interp_beta(b0, b1, tau):
    return [(1 - tau) * a + tau * b for a, b in zip(b0, b1)]


def solve(d: Divisor, K=1.0, grid: SphereGrid | None = None, params: SolveParams | None = None,
          start: tuple | None = None) -> SolveResult:
    """Solve for the conformal factor of a positive-curvature cone metric.

    Parameters
    ----------
    d : Divisor
    K : curvature specification (see :func:`curvature_field`)
    grid : SphereGrid, optional
        Defaults to a 256x128 grid whose poles avoid the marked points.
    params : SolveParams, optional
    start : (beta0, K0, w0), optional
        Warm start: continuation runs from coefficients ``beta0`` (floats),
        curvature field ``K0`` and regular part ``w0`` (solved for them).
        Default is the exact anchor ``beta = 0, K = 1, w = 0``.

    Returns
    -------
    SolveResult
        ``status`` is ``converged``, ``diverged`` or ``collapsed``; a failed
        solve is reported, never raised.
    """
    t0 = time.perf_counter()
    params = params or SolveParams()
    pts = d.point_array
    if grid is None:
        grid = SphereGrid.avoiding(128, 256, pts)
    if d.m and grid.pole_clearance(pts) < 2 * grid.h:
        raise ValueError("a marked point sits too close to a grid pole; rotate the grid")
    Kf = curvature_field(K, grid)
    beta1 = [float(b) for b in d.beta]
    if start is None:
        beta0, K0, w = [0.0] * d.m, np.ones(grid.shape), np.zeros(grid.shape)
    else:
        beta0 = [float(b) for b in start[0]]
        K0 = curvature_field(start[1], grid).values
        w = np.asarray(start[2].values if isinstance(start[2], SphereField) else start[2], float)
    keep = ~exclusion_mask(grid, pts, params.exclusion_factor * grid.h)
    logs = [log_distance_sum(grid.nodes, p[None, :], [1.0]) for p in pts]
    if any(not np.all(np.isfinite(lg)) for lg in logs):
        raise ValueError("a grid node coincides with a marked point")

    def problem(tau):
        b = _interp_beta(beta0, beta1, tau)
        S = sum((bi * lg for bi, lg in zip(b, logs)), np.zeros(grid.shape))
        Kt = (1 - tau) * K0 + tau * Kf.values
        return Kt * np.exp(2 * S), 1.0 + 0.5 * sum(b)

    stages: list[StageRecord] = []
    taus = params.ladder()
    done, w_cur, status = 0.0, np.asarray(w, LD), "converged"
    queue = list(taus)
    depth = 0
    hist: list[float] = []
    while queue:
        tau = queue[0]
        KH, half = problem(tau)
        w_new, hist, st, its = _newton(grid, KH, half, w_cur, params, keep)
        stages.append(StageRecord(tau, st, its, hist))
        if st == "converged":
            w_cur, done = w_new, tau
            queue.pop(0)
            depth = 0
            continue
        if depth >= params.max_bisections:
            status = "diverged"
            w_cur = w_new
            break
        depth += 1
        queue.insert(0, 0.5 * (done + tau))
    w_field = grid.field(np.asarray(w_cur, float), name="w")
    S_field, _ = singular_part(d, grid)
    u_vals = S_field.values + w_field.values
    mean_u = quadrature(SphereField(grid, u_vals, mask=S_field.mask)) / (4 * math.pi)
    area = quadrature(SphereField(grid, np.exp(2 * u_vals), mask=S_field.mask))
    curv = quadrature(SphereField(grid, Kf.values * np.exp(2 * u_vals), mask=S_field.mask))
    chi = float(chi_pair(d).chi)
    if status != "converged" and mean_u < params.collapse_threshold \
            and chi > 0 and area < params.collapse_area_fraction * 2 * math.pi * chi:
        status = "collapsed"
    return SolveResult(d, grid, Kf, w_field, S_field, hist[-1] if hist else math.nan, status,
                       stages, mean_u, area, curv, time.perf_counter() - t0)


def continuation_sweep(d0: Divisor, d1: Divisor, K=1.0, grid: SphereGrid | None = None,
                       steps: int = 8, params: SolveParams | None = None) -> list[SolveResult]:
    """Solve along the straight coefficient path from ``d0`` to ``d1``.

    The first point is solved from the anchor, every later point is warm
    started from its predecessor.  The sweep stops after the first step
    that does not converge; that step is kept in the output.
    """
    if not np.allclose(d0.point_array, d1.point_array):
        raise ValueError("both endpoints must share the marked points")
    params = params or SolveParams()
    if grid is None:
        grid = SphereGrid.avoiding(128, 256, d0.point_array)
    if steps <= 0 or d0.beta == d1.beta:
        return [solve(d1, K, grid, params)]
    out = [solve(d0, K, grid, params)]
    single = SolveParams(**{**params.__dict__, "stages": None, "continuation_steps": 1})
    for k in range(1, steps + 1):
        prev = out[-1]
        if prev.status != "converged":
            break
        tau = Fraction(k, steps)
        beta = [a + tau * (b - a) for a, b in zip(d0.beta, d1.beta)]
        dk = d0.with_beta(beta)
        out.append(solve(dk, K, grid, single, start=(prev.divisor.beta_float, prev.K, prev.w)))
    return out


# diagnostics at marked points ----------------------------------------------------------

def dirac_mass(factor: ConformalFactor, K, p, r: float, beta_p: float = 0.0,
               n_ang: int = 256, n_rad: int = 48) -> float:
    """Point mass of ``-Lap u`` at ``p`` recovered from data on ``B_r(p)``.

    Returns ``-(flux of grad u through the circle) - integral_{B_r}(K e^{2u} - 1)``,
    which equals ``-2 pi beta`` for an exact solution.  ``K`` is a callable
    on points or a constant; ``beta_p`` sets the Gauss-Jacobi exponent for the
    disk integral.
    """
    p = np.asarray(p, float)
    e1, e2, _ = chart_frame(p)
    psi = np.arange(n_ang) * (2 * math.pi / n_ang)
    dirs = np.cos(psi)[:, None] * e1 + np.sin(psi)[:, None] * e2
    x = math.cos(r) * p + math.sin(r) * dirs
    normal = -math.sin(r) * p + math.cos(r) * dirs
    flux = np.sum(np.sum(factor.gradient(x) * normal, axis=-1)) * math.sin(r) * (2 * math.pi / n_ang)
    Kf = K if callable(K) else (lambda y, c=float(K): np.full(y.shape[:-1], c))
    mass = polar_quadrature(lambda y: Kf(y) * np.exp(2 * factor(y)), p, r, n_rad, n_ang,
                            alpha=2 * beta_p)
    cap = 2 * math.pi * (1 - math.cos(r))
    return float(-flux - (mass - cap))


# closed forms ------------------------------------------------------------------------

def football_planar(rad, beta: float) -> np.ndarray:
    """Planar factor ``log(2(b+1)) + b ln r - ln(1 + r^{2b+2})`` of the football."""
    rad = np.asarray(rad, float)
    return math.log(2 * (beta + 1)) + beta * np.log(rad) - np.log1p(rad ** (2 * beta + 2))


def football_values(x, beta: float, axis=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Football conformal factor ``u`` at points ``x`` with cone points at ``+-axis``."""
    x = np.asarray(x, float)
    a = np.asarray(axis, float) / np.linalg.norm(axis)
    t = np.clip(x @ a, -1.0, 1.0)
    with np.errstate(divide="ignore"):
        r2 = (1 - t) / (1 + t)
        rad = np.sqrt(r2)
        return football_planar(rad, beta) - chart_log_factor(rad)


def football_exact(beta: float, grid: SphereGrid, axis=(0.0, 0.0, 1.0)) -> SphereField:
    """Constant curvature 1 metric with cone coefficient ``beta`` at ``+-axis``.

    In the stereographic chart centred at ``axis`` the planar factor is
    ``log(2(b+1)) + b ln|z| - ln(1 + |z|^{2b+2})``; the spherical factor
    subtracts ``log(2 / (1 + |z|^2))``.
    """
    if beta <= -1:
        raise ValueError("beta must exceed -1")
    return grid.field(football_values(grid.nodes, beta, axis), name="u_football")


def football_factor(beta: float, axis=(0.0, 0.0, 1.0)) -> ConformalFactor:
    """Closed-form football as a :class:`ConformalFactor` (regular part analytic)."""
    a = np.asarray(axis, float) / np.linalg.norm(axis)
    pts = np.stack([a, -a])
    bet = [beta, beta]

    def w(x):
        return football_values(x, beta, a) - log_distance_sum(x, pts, bet)

    def w_grad(x):
        # d/dt of u along the axis coordinate t = x . a
        x = np.asarray(x, float)
        t = np.clip(x @ a, -1 + 1e-300, 1 - 1e-300)
        r2 = (1 - t) / (1 + t)
        q = r2 ** (beta + 1)
        # u(t) = const + (b/2) ln r2 - ln(1 + q) + ln(1 + r2), dr2/dt = -2/(1+t)^2
        du_dr2 = beta / (2 * r2) - (beta + 1) * q / (r2 * (1 + q)) + 1 / (1 + r2)
        du_dt = du_dr2 * (-2 / (1 + t) ** 2)
        # S along t: b/2 ln(2 - 2t) + b/2 ln(2 + 2t)
        dS_dt = beta / 2 * (-1 / (1 - t) + 1 / (1 + t))
        g = (du_dt - dS_dt)[..., None] * a
        return g - np.sum(g * x, axis=-1, keepdims=True) * x

    return ConformalFactor(pts, bet, w, w_grad)


@dataclass
class RadialProfile:
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    curvature: np.ndarray


def radial_plane_solve(K0: float, R: float, n: int) -> RadialProfile:
    """Classical RK4 for ``u'' + u'/r = -K0 e^{2u}``, ``u(0) = u'(0) = 0``.

    The state is ``(u, u', m)`` with ``m(r) = 2 pi int_0^r K0 e^{2u} s ds``.
    At ``r = 0`` the term ``u'/r`` is replaced by its limit ``u''(0) = -K0/2``.
    """
    if K0 <= 0:
        raise ValueError("K0 must be positive")
    hstep = R / n

    def rhs(r, y):
        u, du, _ = y
        e = K0 * math.exp(2 * u)
        ddu = -e / 2 if r == 0 else -e - du / r
        return np.array([du, ddu, 2 * math.pi * e * r])

    y = np.zeros(3)
    out = np.zeros((n + 1, 3))
    for k in range(n):
        r = k * hstep
        k1 = rhs(r, y)
        k2 = rhs(r + hstep / 2, y + hstep / 2 * k1)
        k3 = rhs(r + hstep / 2, y + hstep / 2 * k2)
        k4 = rhs(r + hstep, y + hstep * k3)
        y = y + hstep / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    rr = np.linspace(0.0, R, n + 1)
    return RadialProfile(rr, out[:, 0], out[:, 1], out[:, 2])
