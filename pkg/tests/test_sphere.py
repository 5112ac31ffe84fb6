from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import sph_harm_y

from oracles import sphere_cap_mass_1d
from singular_liouville import (Divisor, SphereField, SphereGrid, from_chart, green,
                                laplace_beltrami, singular_part, to_chart)
from singular_liouville.solver import exclusion_mask
from singular_liouville.sphere import (ChartRangeError, SingularEvaluationError, chart_frame,
                                       chart_to_sphere, disk_quadrature, parse_grid,
                                       polar_quadrature, quadrature, sphere_to_chart)

C = np.array([0.48, 0.6, 0.64])


def harmonic(grid, l, m):
    th = np.arccos(np.clip(grid.nodes[..., 2], -1, 1))
    ph = np.arctan2(grid.nodes[..., 1], grid.nodes[..., 0])
    return np.real(sph_harm_y(l, m, th, ph))


def sup_rel_error(n, l, m):
    g = SphereGrid(n, 2 * n)
    f = harmonic(g, l, m)
    return np.abs(g.apply_laplacian(f) + l * (l + 1) * f).max() / np.abs(f).max()


class TestGrid:
    def test_weights(self):
        for n in (16, 64, 128):
            g = SphereGrid(n, 2 * n)
            assert g.weights.sum() == pytest.approx(4 * math.pi, rel=1e-12)

    def test_parse(self):
        assert parse_grid("256x128") == (128, 256)
        with pytest.raises(ValueError):
            parse_grid("12")

    def test_nodes_distinct_and_unit(self):
        g = SphereGrid(16, 32)
        pts = g.nodes.reshape(-1, 3)
        assert np.allclose(np.linalg.norm(pts, axis=1), 1)
        assert len(np.unique(np.round(pts, 12), axis=0)) == len(pts)

    def test_avoiding_poles(self):
        p = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        g = SphereGrid.avoiding(64, 128, p)
        assert g.pole_clearance(p) >= 16 * math.pi / 64

    def test_odd_field_integrates_to_zero(self):
        g = SphereGrid.avoiding(64, 128, [C])
        f = g.evaluate(lambda x: x[..., 0] ** 3 + x[..., 1] * x[..., 2] ** 2 - 0.3 * x[..., 2])
        assert abs(quadrature(f)) < 1e-10


class TestLaplacian:
    def test_constant(self):
        g = SphereGrid(32, 64)
        assert np.abs(g.apply_laplacian(np.full(g.shape, 3.0))).max() < 1e-10

    def test_degree_one_zonal(self):
        g = SphereGrid(128, 256)
        f = g.field(g.nodes[..., 2])
        err = np.abs(laplace_beltrami(f).values + 2 * f.values).max()
        assert err < 2 * g.h ** 2

    @pytest.mark.parametrize("m", [0, 2])
    def test_degree_two_refinement(self, m):
        assert sup_rel_error(32, 2, m) / sup_rel_error(64, 2, m) >= 3.5
        assert sup_rel_error(64, 2, m) / sup_rel_error(128, 2, m) >= 3.5

    @pytest.mark.parametrize("l,m", [(1, 1), (2, 1), (3, 1), (3, 3)])
    def test_odd_longitudinal_modes_first_order(self, l, m):
        # pole rows carry an O(h) error for odd longitudinal wave number
        ratio = sup_rel_error(64, l, m) / sup_rel_error(128, l, m)
        assert 1.8 <= ratio

    @pytest.mark.parametrize("l", [1, 2, 3, 4])
    def test_eigenvalues_second_order(self, l):
        errs = []
        for n in (64, 128):
            g = SphereGrid(n, 2 * n)
            worst = 0.0
            for m in range(l + 1):
                f = harmonic(g, l, m)
                rq = np.sum(g.weights * f * g.apply_laplacian(f)) / np.sum(g.weights * f * f)
                worst = max(worst, abs(rq + l * (l + 1)))
            errs.append(worst)
        assert errs[1] < 0.2 * l * (l + 1) * (math.pi / 128) ** 2 * 64
        assert errs[0] / errs[1] > 3.5

    def test_matrix_matches_operator(self):
        g = SphereGrid(16, 32)
        f = np.random.default_rng(0).standard_normal(g.shape)
        assert np.allclose(g.laplacian_matrix() @ f.ravel(), g.apply_laplacian(f).ravel())

    def test_self_adjoint_weighted(self):
        g = SphereGrid(16, 32)
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        lhs = np.sum(g.weights * a * g.apply_laplacian(b))
        rhs = np.sum(g.weights * b * g.apply_laplacian(a))
        assert lhs == pytest.approx(rhs, rel=1e-10)


class TestGreen:
    def test_antipode(self):
        assert green(-C, C) == pytest.approx(-math.log(2) / (2 * math.pi))

    def test_pole_raises(self):
        with pytest.raises(SingularEvaluationError):
            green(C, C)

    def test_integral(self):
        g = SphereGrid.avoiding(128, 256, [C])
        val = quadrature(g.evaluate(lambda x: green(x, C)))
        ref = sphere_cap_mass_1d(lambda t: -math.log(2 * math.sin(t / 2)) / (2 * math.pi), math.pi)
        assert ref == pytest.approx(1 - 2 * math.log(2), abs=1e-10)
        assert val == pytest.approx(ref, abs=1e-3)

    def test_discrete_laplacian(self):
        errs = []
        for n in (64, 128):
            g = SphereGrid.avoiding(n, 2 * n, [C])
            G = g.evaluate(lambda x: green(x, C)).values
            keep = ~exclusion_mask(g, [C], 0.3)
            errs.append(np.abs(g.apply_laplacian(G)[keep] - 1 / (4 * math.pi)).max())
        assert errs[0] / errs[1] > 3.0
        assert errs[1] < 0.02


class TestSingularPart:
    def test_empty(self):
        g = SphereGrid(16, 32)
        S, h = singular_part(Divisor.from_beta([]), g)
        assert np.all(S.values == 0) and np.all(h.values == 1)

    def test_antipodal_value(self):
        d = Divisor.from_beta([1], points=[C])
        x = -C
        S = sum(float(b) * math.log(np.linalg.norm(x - p)) for p, b in zip(d.point_array, d.beta))
        assert S == pytest.approx(math.log(2))

    def test_flux(self):
        d = Divisor.from_beta(["1/2", "-1/3"], points=[C, [0.0, 0.6, -0.8]])
        g = SphereGrid.avoiding(128, 256, d.point_array)
        S, _ = singular_part(d, g)
        r = 8 * g.h
        psi = np.arange(256) * (2 * math.pi / 256)
        for p, b in zip(d.point_array, d.beta_float):
            e1, e2, _ = chart_frame(p)
            dirs = np.cos(psi)[:, None] * e1 + np.sin(psi)[:, None] * e2
            x = math.cos(r) * p + math.sin(r) * dirs
            normal = -math.sin(r) * p + math.cos(r) * dirs
            flux = np.sum(np.sum(S.gradient(x) * normal, -1)) * math.sin(r) * (2 * math.pi / 256)
            # point mass of -Lap S at p
            assert -flux == pytest.approx(-2 * math.pi * b, rel=0.02)

    def test_weight_quadrature(self):
        d = Divisor.from_beta(["1/2"], points=[C])
        g = SphereGrid.avoiding(128, 256, d.point_array)
        _, h = singular_part(d, g)
        ref = sphere_cap_mass_1d(lambda t: 2 * math.sin(t / 2), math.pi)
        assert ref == pytest.approx(16 * math.pi / 3, rel=1e-12)
        assert quadrature(h) == pytest.approx(ref, rel=1e-5)

    def test_node_on_point_masked(self):
        g = SphereGrid(8, 16)
        p = g.nodes[3, 5]
        S, h = singular_part(Divisor.from_beta(["1/2"], points=[p]), g)
        assert S.mask[3, 5] and np.isnan(S.values[3, 5])
        assert np.isfinite(quadrature(h))


class TestQuadrature:
    def test_constant(self):
        g = SphereGrid(64, 128)
        assert quadrature(g.field(np.ones(g.shape))) == pytest.approx(4 * math.pi, rel=1e-12)

    @pytest.mark.parametrize("r", [0.3, 1.0, 2.5])
    def test_cap_area(self, r):
        g = SphereGrid(128, 256)
        one = g.field(np.ones(g.shape))
        assert disk_quadrature(one, C, r) == pytest.approx(2 * math.pi * (1 - math.cos(r)), rel=2e-3)

    def test_polar_quadrature_singular_weight(self):
        beta = -0.5
        val = polar_quadrature(lambda x: np.linalg.norm(x - C, axis=-1) ** (2 * beta), C, 1.0,
                               alpha=2 * beta)
        ref = sphere_cap_mass_1d(lambda t: (2 * math.sin(t / 2)) ** (2 * beta), 1.0)
        assert val == pytest.approx(ref, rel=1e-10)

    def test_polar_annulus(self):
        inner = polar_quadrature(lambda x: np.ones(x.shape[:-1]), C, 1.0, r_inner=0.4)
        assert inner == pytest.approx(2 * math.pi * (math.cos(0.4) - math.cos(1.0)), rel=1e-12)


class TestChart:
    def test_round_trip_points(self):
        z = np.array([0.1 + 0.2j, -0.7j, 0.5])
        assert np.allclose(sphere_to_chart(chart_to_sphere(z, C), C), z)
        assert np.allclose(sphere_to_chart(C, C), 0)

    def test_equator_convention(self):
        view = to_chart(lambda x: np.zeros(x.shape[:-1]), C, radii=[0.5, 1.0], n_circle=16)
        assert np.allclose(view.planar[1], 0.0)
        assert np.allclose(view.planar[0], math.log(2 / 1.25))

    def test_round_sphere_planar_equation(self):
        # -Lap_euc u~ = e^{2 u~} for u~ = log(2 / (1 + |z|^2)), checked by 5-point stencils
        view = to_chart(lambda x: np.zeros(x.shape[:-1]), C, radii=[0.3], n_circle=8)
        errs = []
        for step in (1e-2, 5e-3):
            z = view.radii[0] * np.exp(1j * view.angles)
            def ut(w):
                return np.log(2 / (1 + np.abs(w) ** 2))
            lap = (ut(z + step) + ut(z - step) + ut(z + 1j * step) + ut(z - 1j * step)
                   - 4 * ut(z)) / step ** 2
            errs.append(np.abs(-lap - np.exp(2 * ut(z))).max())
        assert errs[1] < 1e-4 and errs[0] / errs[1] > 3.5

    def test_field_round_trip(self):
        g = SphereGrid(128, 256)
        f = g.evaluate(lambda x: x[..., 2])
        back = from_chart(to_chart(f, C), g)
        keep = np.isfinite(back.values)
        assert keep.sum() > 1000
        assert np.abs(back.values[keep] - f.values[keep]).max() <= 1e-8

    def test_range_error(self):
        with pytest.raises(ChartRangeError):
            to_chart(lambda x: x[..., 0], C, radii=[0.5, 1.5])


class TestField:
    def test_save_load(self, tmp_path):
        g = SphereGrid.avoiding(16, 32, [[0.0, 0.0, 1.0]])
        f = g.evaluate(lambda x: np.exp(x[..., 0]), name="f")
        path = f.save(tmp_path / "f.bin")
        back = SphereField.load(path)
        assert np.array_equal(back.values, f.values)
        assert back.grid.same_as(g) and back.name == "f"

    def test_interpolation(self):
        g = SphereGrid(64, 128)
        f = g.evaluate(lambda x: x[..., 0] * x[..., 2])
        pts = chart_to_sphere(np.array([0.2 + 0.1j, -0.4j]), C)
        assert np.allclose(f.interpolate(pts), pts[:, 0] * pts[:, 2], atol=1e-7)

    def test_gradient_tangent(self):
        g = SphereGrid(64, 128)
        f = g.evaluate(lambda x: x[..., 2])
        pts = chart_to_sphere(np.array([0.3 + 0.1j]), C)
        grad = f.gradient(pts)
        expect = np.array([0.0, 0.0, 1.0]) - pts[0, 2] * pts[0]
        assert np.allclose(grad[0], expect, atol=1e-6)
