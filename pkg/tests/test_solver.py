from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import CONE_AXIS
from singular_liouville import (Divisor, SolveParams, SphereGrid, continuation_sweep, dirac_mass,
                                football_exact, football_factor, radial_plane_solve,
                                singular_part, solve)
from singular_liouville.solver import (curvature_field, exclusion_mask, football_planar,
                                       residual)
from singular_liouville.sphere import quadrature


def aligned_sup_error(res, exact):
    keep = ~exclusion_mask(res.grid, res.divisor.point_array, 4 * res.grid.h)
    diff = res.u.values - exact.values
    return np.abs(diff[keep] - diff[keep].mean()).max()


class TestRoundSphere:
    def test_trivial(self):
        r = solve(Divisor.from_beta([]), 1.0, SphereGrid(32, 64))
        assert r.status == "converged"
        assert np.abs(r.w.values).max() == 0.0
        assert r.area == pytest.approx(4 * math.pi, rel=1e-12)
        assert r.mean_u == 0.0

    def test_constant_curvature_rescales(self):
        # K = 4 gives u = -ln 2
        r = solve(Divisor.from_beta([]), "const:4", SphereGrid(16, 32))
        assert r.status == "converged"
        assert np.allclose(r.u.values, -math.log(2), atol=1e-10)


class TestFootball:
    def test_converges(self, football_solve):
        assert football_solve.status == "converged"
        assert football_solve.residual_sup <= 1e-10

    def test_matches_closed_form(self, football_solve):
        exact = football_exact(0.5, football_solve.grid, CONE_AXIS)
        assert aligned_sup_error(football_solve, exact) <= 1e-3

    def test_area(self, football_solve):
        assert football_solve.area == pytest.approx(6 * math.pi, rel=1e-3)

    def test_flux(self, football_solve):
        fac = football_solve.factor()
        h = football_solve.grid.h
        for p, b in zip(football_solve.divisor.point_array, football_solve.divisor.beta_float):
            assert dirac_mass(fac, 1.0, p, 8 * h, b) == pytest.approx(-2 * math.pi * b, rel=0.02)

    def test_quadratic_tail(self, football_solve, troyanov_solve):
        for res in (football_solve, troyanov_solve):
            for stage in res.stages:
                hist = stage.residuals
                for a, b in zip(hist[-4:-1], hist[-3:]):
                    if b > 1e-11:
                        assert b <= 10.0 * a * a

    def test_discrete_mass_balance(self, football_solve):
        g = football_solve.grid
        w = football_solve.w.values
        assert abs(np.sum(g.weights * g.apply_laplacian(w))) < 1e-9
        _, h = singular_part(football_solve.divisor, g)
        total = np.sum(g.weights * h.values * np.exp(2 * w))
        assert total == pytest.approx(2 * math.pi * 3, rel=1e-9)

    def test_weighted_residual_sum_vanishes_for_any_field(self):
        g = SphereGrid(32, 64)
        rng = np.random.default_rng(3)
        w = rng.standard_normal(g.shape)
        KH = np.exp(rng.standard_normal(g.shape))
        F = residual(w, KH, 1.25, g)
        expected = -np.sum(g.weights * KH * np.exp(2 * w)) + 1.25 * 4 * math.pi
        assert float(np.sum(g.weights * F)) == pytest.approx(expected, rel=1e-12)

    def test_warm_start_is_fixed_point(self, football_solve):
        r = solve(football_solve.divisor, 1.0, football_solve.grid,
                  SolveParams(continuation_steps=1),
                  start=(football_solve.divisor.beta_float, football_solve.K, football_solve.w))
        # stored fields are float64; rounding lifts the residual just above the tolerance
        assert r.status == "converged" and r.newton_iters[0] <= 1
        assert r.stages[0].residuals[0] <= 1e-9

    @pytest.mark.xfail(strict=True, reason="discrete residual of the closed form is O(h), "
                                           "about 1e-2 at 256x128")
    def test_closed_form_discrete_residual(self, football_divisor):
        g = SphereGrid.avoiding(128, 256, football_divisor.point_array)
        S, h = singular_part(football_divisor, g)
        w = football_exact(0.5, g, CONE_AXIS).values - S.values
        keep = ~exclusion_mask(g, football_divisor.point_array, 4 * g.h)
        assert float(np.abs(residual(w, h.values, 1.5, g))[keep].max()) <= 1e-6

    def test_closed_form_discrete_residual_first_order(self, football_divisor):
        errs = []
        for n in (64, 128):
            g = SphereGrid.avoiding(n, 2 * n, football_divisor.point_array)
            S, h = singular_part(football_divisor, g)
            w = football_exact(0.5, g, CONE_AXIS).values - S.values
            keep = ~exclusion_mask(g, football_divisor.point_array, 4 * g.h)
            errs.append(float(np.abs(residual(w, h.values, 1.5, g))[keep].max()))
        assert errs[0] / errs[1] > 1.8


class TestTroyanov:
    def test_area_and_flux(self, troyanov_solve):
        assert troyanov_solve.status == "converged"
        assert troyanov_solve.area == pytest.approx(math.pi, rel=0.01)
        fac = troyanov_solve.factor()
        h = troyanov_solve.grid.h
        for p, b in zip(troyanov_solve.divisor.point_array, troyanov_solve.divisor.beta_float):
            assert dirac_mass(fac, 1.0, p, 8 * h, b) == pytest.approx(math.pi, rel=0.02)


class TestClosedForms:
    def test_zero_cone_is_round(self):
        g = SphereGrid(16, 32)
        assert np.allclose(football_exact(0.0, g).values, 0.0, atol=1e-14)

    def test_planar_residual(self):
        # radial Laplacian in s = ln r is r^-2 d^2/ds^2; sixth-order central differences
        beta = 0.5
        s = np.log(np.geomspace(0.05, 3.0, 40))
        ds = 1e-2
        stencil = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
        u = lambda t: football_planar(np.exp(t), beta)
        uss = sum(c * u(s + k * ds) for c, k in zip(stencil, range(-3, 4))) / ds ** 2
        res = -uss * np.exp(-2 * s) - np.exp(2 * u(s))
        assert np.abs(res).max() <= 1e-8

    def test_area(self):
        g = SphereGrid.avoiding(128, 256, [CONE_AXIS])
        u = football_exact(0.5, g, CONE_AXIS)
        assert quadrature(u.copy(np.exp(2 * u.values))) == pytest.approx(6 * math.pi, rel=1e-4)

    def test_factor_matches_field(self):
        g = SphereGrid.avoiding(32, 64, [CONE_AXIS])
        fac = football_factor(0.5, CONE_AXIS)
        assert np.allclose(fac(g.nodes), football_exact(0.5, g, CONE_AXIS).values, atol=1e-12)

    def test_factor_flux(self):
        fac = football_factor(0.5, CONE_AXIS)
        assert dirac_mass(fac, 1.0, CONE_AXIS, 0.2, 0.5) == pytest.approx(-math.pi, rel=1e-8)


class TestRadial:
    def test_profile(self):
        prof = radial_plane_solve(1.0, 50.0, 10_000)
        assert np.abs(prof.u + np.log1p(prof.r ** 2 / 4)).max() <= 1e-8
        assert prof.curvature[-1] == pytest.approx(4 * math.pi * 625 / 626, abs=1e-6)

    def test_scaling(self):
        prof = radial_plane_solve(4.0, 10.0, 4000)
        assert np.abs(prof.u + np.log1p(prof.r ** 2)).max() <= 1e-8

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            radial_plane_solve(0.0, 1.0, 10)


class TestContinuation:
    def test_shrinking_cones(self, football_divisor):
        g = SphereGrid.avoiding(64, 128, football_divisor.point_array)
        out = continuation_sweep(football_divisor, football_divisor.with_beta([0, 0]), 1.0, g, 8)
        assert len(out) == 9 and all(r.status == "converged" for r in out)
        areas = [r.area for r in out]
        assert all(b < a for a, b in zip(areas, areas[1:]))
        assert areas[0] == pytest.approx(6 * math.pi, rel=5e-3)
        assert areas[-1] == pytest.approx(4 * math.pi, rel=1e-9)
        for r in out:
            chi = 2 + float(sum(r.divisor.beta))
            assert r.curvature_total == pytest.approx(2 * math.pi * chi, rel=5e-3)

    def test_zero_length(self, football_divisor):
        g = SphereGrid.avoiding(32, 64, football_divisor.point_array)
        out = continuation_sweep(football_divisor, football_divisor, 1.0, g, 8)
        assert len(out) == 1 and out[0].status == "converged"

    def test_points_must_match(self, football_divisor):
        other = Divisor.from_beta(["1/2", "1/2"])
        with pytest.raises(ValueError):
            continuation_sweep(football_divisor, other, 1.0, SphereGrid(16, 32), 2)


class TestReporting:
    def test_failure_is_reported(self, football_divisor):
        g = SphereGrid.avoiding(32, 64, football_divisor.point_array)
        r = solve(football_divisor, 1.0, g, SolveParams(max_newton=1, continuation_steps=1,
                                                        max_bisections=0))
        assert r.status == "diverged"
        assert math.isfinite(r.area) and r.stages[-1].status == "diverged"

    def test_params_validation(self):
        with pytest.raises(ValueError):
            SolveParams(newton_tol=0)
        with pytest.raises(ValueError):
            SolveParams(stages=[0.5, 0.3, 1.0]).ladder()
        assert SolveParams(continuation_steps=3).ladder() == pytest.approx([1 / 3, 2 / 3, 1])

    def test_positive_curvature_required(self):
        with pytest.raises(ValueError):
            curvature_field(lambda x: x[..., 2], SphereGrid(8, 16))
        with pytest.raises(ValueError):
            curvature_field("linear:1", SphereGrid(8, 16))

    def test_pole_clearance_enforced(self):
        d = Divisor.from_beta(["1/2"], points=[[0.0, 0.0, 1.0]])
        with pytest.raises(ValueError):
            solve(d, 1.0, SphereGrid(16, 32))

    def test_reproducible(self, football_divisor):
        g = SphereGrid.avoiding(32, 64, football_divisor.point_array)
        a = solve(football_divisor, 1.0, g)
        b = solve(football_divisor, 1.0, g)
        assert np.array_equal(a.w.values, b.w.values)
