from __future__ import annotations

import itertools
from fractions import Fraction as Q

import pytest
from hypothesis import assume, given, settings

from strategies import betas
from singular_liouville import (BubbleConfig, SiteConfig, chi_pair, enumerate_all,
                                enumerate_collapse_C1, enumerate_collapse_one_level,
                                enumerate_collapse_two_level, enumerate_noncollapse,
                                oracle_enumerate, refine_placements, theta_of_site)
from singular_liouville.bubbles import certificate_keys


def thetas(cfg: BubbleConfig):
    return tuple(s.theta for s in cfg.sites)


class TestTheta:
    def test_table(self):
        assert theta_of_site(3, s=2) == 2
        assert theta_of_site(Q(-1, 2), s=1, singular=True) == 3
        assert theta_of_site(None) == 0
        assert theta_of_site(None, s=2) == 8
        assert theta_of_site(Q(1, 3)) == Q(-2, 3)
        assert theta_of_site(3, s=3, singular=True, s_prime=1) == 14

    def test_invalid(self):
        with pytest.raises(ValueError):
            theta_of_site(None, s=1, singular=True)
        with pytest.raises(ValueError):
            theta_of_site(2, s=1, s_prime=1)

    def test_site_invariants(self):
        with pytest.raises(ValueError):
            SiteConfig(1, 0, 0, 1, Q(0))
        with pytest.raises(ValueError):
            SiteConfig(None, 0, 0, 0, Q(0))


class TestOneLevel:
    def test_mirror_pair(self):
        out = enumerate_collapse_one_level(["-1/2", "-1/2"])
        assert sorted(thetas(c) for c in out) == [(1, 3), (3, 1)]
        assert sorted(c.singular for c in out) == [(1,), (2,)]
        assert all(c.free_smooth == 0 for c in out)

    def test_empty(self):
        assert enumerate_collapse_one_level(["-1/2"]) == []

    def test_round_sphere(self):
        (c,) = enumerate_collapse_one_level([])
        assert c.singular == () and c.free_smooth == 1 and c.total_theta == 4

    @given(betas(max_m=4))
    @settings(max_examples=200, deadline=None)
    def test_identities(self, beta):
        half = chi_pair(beta).half_chi
        assume(half > 0)
        for c in enumerate_collapse_one_level(beta):
            I = c.singular
            assert c.total_theta == 4
            assert c.s1 == half - sum((beta[i - 1] for i in I), Q(0))
            assert all(beta[i - 1] <= half - 1 for i in I)
            assert c.s1 - len(I) <= half


class TestTwoLevel:
    def test_single_large_cone(self):
        assert enumerate_collapse_two_level([3]) == []

    def test_matches_oracle(self):
        beta = ["5/2", "1/2"]
        ours = enumerate_collapse_two_level(beta)
        assert certificate_keys(ours) == certificate_keys(
            oracle_enumerate(beta, 6, ["collapse_two_level"]))
        for c in ours:
            assert c.total_theta == 4
            I = c.singular
            assert c.s1 - c.s2 == chi_pair(beta).half_chi - sum(Q(beta[i - 1]) for i in I)
            for s in c.sites:
                if s.level2_smooth:
                    assert Q(beta[s.site - 1]) > 1

    def test_stacked_sites_flagged(self):
        out = enumerate_collapse_two_level(["1", "3/2", "3/2"])
        stacked = [c for c in out if sum(1 for s in c.sites if s.level2_smooth) > 1]
        assert stacked and all(c.beyond_paper for c in stacked)
        assert not any(c.beyond_paper for c in out if c not in stacked)


class TestNoncollapse:
    def test_large_cone(self):
        assert [c.sites[0].level1_smooth for c in enumerate_noncollapse([3])] == [0, 1]

    def test_small_cone(self):
        (c,) = enumerate_noncollapse(["1/2"])
        assert c.sites[0].level1_smooth == 0

    def test_two_cones(self):
        out = {tuple(s.level1_smooth for s in c.sites) for c in enumerate_noncollapse(["3/2", "3/2"])}
        assert out == {(0, 0), (1, 0), (0, 1), (1, 1)}


class TestC1:
    def test_integer_cone(self):
        assert enumerate_collapse_C1([1]) == []

    def test_round_sphere(self):
        (c,) = enumerate_collapse_C1([])
        assert c.free_smooth == 1 and c.total_theta == 4

    def test_mirror_pair(self):
        out = enumerate_collapse_C1(["-1/2", "-1/2"])
        assert sorted(thetas(c) for c in out) == [(1, 3), (3, 1)]

    @given(betas(max_m=3, max_den=6, high=3))
    @settings(max_examples=150, deadline=None)
    def test_subset_of_one_level(self, beta):
        assume(chi_pair(beta).half_chi > 0)
        one = {(c.singular, c.collapse_signature()[2]) for c in enumerate_collapse_one_level(beta)}
        for c in enumerate_collapse_C1(beta):
            assert (c.singular, c.collapse_signature()[2]) in one
            assert 2 * (sum(s.bubbles for s in c.sites)) <= 2 + sum(abs(b) for b in beta)


class TestOracle:
    def test_round_sphere(self):
        out = oracle_enumerate([], 2)
        by_regime = {c.regime: c for c in out}
        assert set(by_regime) == {"noncollapse", "collapse_one_level", "collapse_C1"}
        assert by_regime["noncollapse"].sites == ()
        assert by_regime["collapse_one_level"].free_smooth == 1

    @pytest.mark.parametrize("beta", [["-1/2", "-1/2"], [3], ["5/2", "1/2"], ["3/2", "3/2"],
                                      [], ["1/3", "-2/3", "7/4"]])
    def test_agreement(self, beta):
        assert certificate_keys(oracle_enumerate(beta, 6)) == certificate_keys(enumerate_all(beta))

    def test_guard(self):
        with pytest.raises(ValueError):
            oracle_enumerate(["1/2"] * 5, 9)
        with pytest.raises(ValueError):
            oracle_enumerate(["1/2"], 0)

    @given(betas(max_m=3, max_den=8, high=3))
    @settings(max_examples=150, deadline=None)
    def test_agreement_random(self, beta):
        assume(chi_pair(beta).half_chi > 0)
        assert certificate_keys(oracle_enumerate(beta, 6)) == certificate_keys(enumerate_all(beta))

    @given(betas(max_m=4))
    @settings(max_examples=150, deadline=None)
    def test_balance(self, beta):
        assume(chi_pair(beta).half_chi > 0)
        for c in enumerate_all(beta):
            if c.regime == "noncollapse":
                assert 4 - c.total_theta > 0
                assert all(s.level1_smooth == 0 or beta[s.site - 1] > 1 for s in c.sites)
            else:
                assert c.total_theta == 4


class TestPlacements:
    def test_totals_preserved(self):
        c = next(k for k in enumerate_collapse_one_level(["-3/4", "11/4"]) if k.free_smooth >= 2)
        placements = list(refine_placements(c))
        assert len(placements) > 1
        assert all(p.total_theta == 4 for p in placements)
        assert all(sum(s.bubbles for s in p.sites) == sum(s.bubbles for s in c.sites)
                   for p in placements)

    def test_other_regimes_unchanged(self):
        (c,) = enumerate_collapse_C1([])
        assert list(refine_placements(c)) == [c]

    def test_sorted_output(self):
        out = enumerate_all(["-1/2", "-1/2"])
        assert out == sorted(out, key=BubbleConfig.key)


def test_json_theta_units():
    (c,) = enumerate_collapse_one_level([])
    doc = c.to_json()
    assert doc["total_theta"] == "4/1 π" and doc["sites"][0]["site"] == "free"


def test_enumerators_schedule_independent():
    beta = ["-1/2", "-1/2", "1/3"]
    runs = [certificate_keys(enumerate_all(list(p))) for p in [beta, beta]]
    assert runs[0] == runs[1]
    assert len(list(itertools.islice(enumerate_all(beta), 100))) == len(enumerate_all(beta))
