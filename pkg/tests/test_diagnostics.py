from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import CONE_AXIS, unit
from singular_liouville import (Divisor, SphereGrid, area_ledger, enumerate_collapse_one_level,
                                football_factor, gauss_bonnet, ladder_theta, match_certificate,
                                pohozaev, solve, theta_estimate)
from singular_liouville.diagnostics import EMPTY_REPORT, ThetaEstimate
from singular_liouville.sphere import ChartRangeError

RADII = np.geomspace(0.05, 0.8, 16)


def fixed_estimate(site, value, index=None):
    r = np.array([0.3, 0.2, 0.1])
    return ThetaEstimate(np.asarray(site, float), r, np.full(3, value), value, 2.0, index)


@pytest.fixture(scope="module")
def tilted_solve(football_divisor):
    c = CONE_AXIS
    K = lambda x: 1.3 - 0.3 * (x @ c) ** 2
    return solve(football_divisor, K), K


class TestPohozaev:
    def test_exact_football(self, football_divisor):
        ps = pohozaev(football_factor(0.5, CONE_AXIS), 1.0, 1, RADII, football_divisor)
        assert ps.relative_variation < 1e-12
        assert ps.limit == pytest.approx(5 * math.pi / 2, rel=1e-12)

    def test_solved_football(self, football_solve):
        ps = pohozaev(football_solve, 1.0, 1, RADII)
        assert ps.max_variation <= 1e-3 * np.abs(ps.P_values).max()
        assert ps.limit == pytest.approx(5 * math.pi / 2, rel=0.01)
        assert np.all(np.abs(ps.drift) <= 1e-3 * max(1.0, np.abs(ps.P_values).max()))

    @pytest.mark.parametrize("beta", [-0.5, 0.25, 1.5])
    def test_cone_limit(self, beta):
        ps = pohozaev(football_factor(beta, CONE_AXIS), 1.0, CONE_AXIS, RADII)
        assert ps.limit == pytest.approx(2 * math.pi * beta ** 2 + 4 * math.pi * beta, rel=1e-9)

    def test_round_sphere(self):
        r = solve(Divisor.from_beta([]), 1.0, SphereGrid(32, 64))
        ps = pohozaev(r, 1.0, unit(0.3, 0.2), RADII)
        assert np.abs(ps.P_values).max() < 1e-10 and abs(ps.limit) < 1e-10

    def test_radial_curvature_drift(self, tilted_solve):
        res, K = tilted_solve
        assert res.status == "converged"
        ps = pohozaev(res, K, 1, [0.05, 0.4, 0.6, 0.8])
        assert np.all(ps.annulus > 0)
        assert np.all(np.abs(ps.drift) <= 0.01 * ps.annulus)

    def test_other_marked_point_rejected(self):
        d = Divisor.from_beta(["1/2", "1/2"], points=[unit(1.0, 0.0), unit(1.2, 0.0)])
        fac = football_factor(0.5, unit(1.0, 0.0))
        with pytest.raises(ValueError):
            pohozaev(fac, 1.0, 1, [0.05, 0.1, 0.3], d)

    def test_chart_range(self, football_divisor):
        with pytest.raises(ChartRangeError):
            pohozaev(football_factor(0.5, CONE_AXIS), 1.0, 1, [0.5, 1.2], football_divisor)


class TestTheta:
    def test_cone_points(self, football_solve):
        h = football_solve.grid.h
        for i in (1, 2):
            te = theta_estimate(football_solve, 1.0, None, i, [8 * h, 12 * h, 16 * h, 24 * h])
            assert te.theta == pytest.approx(-math.pi, rel=0.02)
            assert te.exponent == pytest.approx(3.0)

    def test_troyanov_points(self, troyanov_solve):
        h = troyanov_solve.grid.h
        for i in (1, 2, 3):
            te = theta_estimate(troyanov_solve, 1.0, None, i, [8 * h, 12 * h, 16 * h, 24 * h])
            assert te.theta == pytest.approx(math.pi, rel=0.02)

    def test_grid_method(self, football_solve, football_divisor):
        h = football_solve.grid.h
        te = theta_estimate(football_solve.u, 1.0, football_divisor, 1,
                            [8 * h, 12 * h, 16 * h, 24 * h], method="grid")
        assert te.theta == pytest.approx(-math.pi, rel=0.02)

    def test_free_point(self, football_solve):
        h = football_solve.grid.h
        te = theta_estimate(football_solve, 1.0, None, unit(2.0, 0.2),
                            [8 * h, 12 * h, 16 * h, 24 * h])
        assert abs(te.theta) <= 0.02 * 4 * math.pi

    def test_partition_additivity(self, football_solve):
        x, r = unit(0.4, 2.0), 1.1
        a = theta_estimate(football_solve, 1.0, None, x, [r, r - 0.1, r - 0.2]).values[0]
        b = theta_estimate(football_solve, 1.0, None, -x,
                           [math.pi - r, math.pi - r - 0.1, math.pi - r - 0.2]).values[0]
        total = football_solve.curvature_total - 2 * math.pi * 1.0
        assert a + b == pytest.approx(total, rel=1e-4)

    def test_resolution_limit(self, football_solve):
        h = football_solve.grid.h
        with pytest.raises(ValueError):
            theta_estimate(football_solve, 1.0, None, 1, [2 * h, 4 * h, 8 * h])
        with pytest.raises(ValueError):
            theta_estimate(football_solve, 1.0, None, 1, [8 * h, 12 * h])

    def test_ladder_recovers_linear_rungs(self):
        r = np.array([0.4, 0.3, 0.2])
        eps = [0.4, 0.2, 0.1]
        ests = [ThetaEstimate(np.array([0, 0, 1.0]), r, 5.0 + 0.5 * r ** 2 + 3.0 * e, 0.0, 2.0)
                for e in eps]
        lim = ladder_theta(ests, eps, order=1.0, terms=2)
        assert np.allclose(lim.values, 5.0 + 0.5 * r ** 2)
        assert lim.theta == pytest.approx(5.0)

    def test_ladder_requires_shared_radii(self):
        a = ThetaEstimate(np.array([0, 0, 1.0]), np.array([0.3, 0.2, 0.1]), np.zeros(3), 0, 2)
        b = ThetaEstimate(np.array([0, 0, 1.0]), np.array([0.4, 0.2, 0.1]), np.zeros(3), 0, 2)
        with pytest.raises(ValueError):
            ladder_theta([a, b], [0.2, 0.1])


class TestGaussBonnet:
    def test_exact_football(self, football_divisor):
        gb = gauss_bonnet(football_factor(0.5, CONE_AXIS), 1.0, football_divisor)
        assert gb.expected == pytest.approx(6 * math.pi)
        assert gb.relative <= 1e-6

    def test_round_sphere(self):
        r = solve(Divisor.from_beta([]), 1.0, SphereGrid(32, 64))
        assert abs(gauss_bonnet(r, 1.0).deviation) <= 1e-10

    def test_solves(self, football_solve, troyanov_solve, tilted_solve):
        for res, K in ((football_solve, 1.0), (troyanov_solve, 1.0), tilted_solve):
            gb = gauss_bonnet(res, K)
            assert abs(gb.deviation) <= max(1e-6, 0.005 * gb.expected)


class TestAreaLedger:
    def test_identity_and_bubble_areas(self):
        d = Divisor.from_beta(["-1/2", "-1/2"])
        cfg = next(c for c in enumerate_collapse_one_level(d) if c.singular == (1,))
        led = area_ledger(cfg, d, K=2.0, base_area=0.25, observed=3.0)
        assert led.bubbles == [{"site": 1, "kind": "singular", "count": 1,
                                "area": 4 * math.pi * 0.5 / 2.0}]
        assert led.total == 0.25 + sum(b["area"] for b in led.bubbles)
        assert led.defect == 3.0 - led.total

    def test_free_sites_need_points_for_variable_curvature(self):
        d = Divisor.from_beta([])
        (cfg,) = enumerate_collapse_one_level(d)
        with pytest.raises(ValueError):
            area_ledger(cfg, d, K=lambda x: 1 + 0.1 * x[..., 2])
        led = area_ledger(cfg, d, K=lambda x: 1 + 0.1 * x[..., 2], free_points=[[0, 0, 1.0]])
        assert led.total == pytest.approx(4 * math.pi / 1.1)


class TestMatching:
    def test_exact_values_score_zero(self):
        d = Divisor.from_beta(["-1/2", "-1/2"])
        ests = [fixed_estimate(d.point_array[0], 3 * math.pi, 1),
                fixed_estimate(d.point_array[1], math.pi, 2)]
        rep = match_certificate(ests, d)
        assert rep.best.score == pytest.approx(0.0, abs=1e-15)
        assert rep.best.config.singular == (1,)
        assert rep.balance_defect == pytest.approx(0.0, abs=1e-15)
        assert [m.score for m in rep.matches] == sorted(m.score for m in rep.matches)

    def test_free_bubble_assignment(self):
        d = Divisor.from_beta([])
        rep = match_certificate([fixed_estimate(unit(1, 1), 4 * math.pi)], d)
        assert rep.best.score == pytest.approx(0.0, abs=1e-15)

    def test_empty_report(self):
        d = Divisor.from_beta(["-1/2"])
        rep = match_certificate([fixed_estimate(d.point_array[0], math.pi, 1)], d)
        assert rep.matches == [] and rep.message == EMPTY_REPORT
        assert "no admissible certificate" in rep.message
