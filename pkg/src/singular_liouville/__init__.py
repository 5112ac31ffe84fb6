"""Cone spherical metrics of positive curvature.

Exact admissibility tests and bubble-tree certificates for coefficient
vectors, a Newton-continuation solver for the singular Liouville equation on
the round sphere, and diagnostics that connect the two.
"""
from __future__ import annotations

from .admissibility import (AdmissibilityVerdict, DeyReport, Margin, NotAMemberError,
                            Violation, dey_criterion, in_A_m, margin)
from .bubbles import (REGIMES, BubbleConfig, SiteConfig, enumerate_all, enumerate_collapse_C1,
                      enumerate_collapse_one_level, enumerate_collapse_two_level,
                      enumerate_noncollapse, oracle_enumerate, refine_placements, theta_of_site,
                      two_level_search_bound)
from .diagnostics import (AreaLedger, GaussBonnet, MatchReport, PohozaevSeries, ThetaEstimate,
                          area_ledger, gauss_bonnet, ladder_theta, match_certificate, pohozaev,
                          theta_estimate)
from .divisor import (DomainError, Divisor, IndexSet, LatticeWitness, PairEuler, as_fraction,
                      chi_pair, d1_odd_lattice, index_set)
from .lab import (RunRecord, SweepConfig, SyntheticFamily, emit_plots, family_theta, load_run,
                  sweep, synthesize_family)
from .solver import (ConformalFactor, SolveParams, SolveResult, continuation_sweep, dirac_mass,
                     football_exact, football_factor, radial_plane_solve, solve)
from .sphere import (SphereField, SphereGrid, from_chart, green, laplace_beltrami, singular_part,
                     to_chart)

__version__ = "0.1.0"

__all__ = [
    "__version__", "AdmissibilityVerdict", "DeyReport", "Margin", "NotAMemberError", "Violation",
    "dey_criterion", "in_A_m", "margin", "REGIMES", "BubbleConfig", "SiteConfig", "enumerate_all",
    "enumerate_collapse_C1", "enumerate_collapse_one_level", "enumerate_collapse_two_level",
    "enumerate_noncollapse", "oracle_enumerate", "refine_placements", "theta_of_site",
    "two_level_search_bound", "AreaLedger", "GaussBonnet", "MatchReport", "PohozaevSeries",
    "ThetaEstimate", "area_ledger", "gauss_bonnet", "ladder_theta", "match_certificate",
    "pohozaev", "theta_estimate", "DomainError", "Divisor", "IndexSet", "LatticeWitness",
    "PairEuler", "as_fraction", "chi_pair", "d1_odd_lattice", "index_set", "RunRecord",
    "SweepConfig", "SyntheticFamily", "emit_plots", "family_theta", "load_run", "sweep",
    "synthesize_family", "ConformalFactor", "SolveParams", "SolveResult", "continuation_sweep",
    "dirac_mass", "football_exact", "football_factor", "radial_plane_solve", "solve",
    "SphereField", "SphereGrid", "from_chart", "green", "laplace_beltrami", "singular_part",
    "to_chart",
]
