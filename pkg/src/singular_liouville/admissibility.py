"""Membership in the stable nonexistence region and its margin.

A coefficient vector ``beta`` is *admissible* (a member) when

* every ``beta_i`` is nonzero,
* ``chi/2`` is positive and not an integer,
* for every subset ``J`` of the half-space index set ``F(beta)`` (including
  the empty set and ``F`` itself), ``chi/2 - sum_J beta`` avoids the integers
  ``|J|, ..., |J| + floor(chi/2)``.

All tests are exact.  The ``strict_literal`` switch replaces ``floor(chi/2)``
by ``floor(chi(S^2)/2) = 1`` in the last condition.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .divisor import (DomainError, Divisor, as_fraction, chi_pair, d1_odd_lattice,
                      index_set)

__all__ = [
    "Violation",
    "AdmissibilityVerdict",
    "Margin",
    "DeyReport",
    "NotAMemberError",
    "in_A_m",
    "margin",
    "dey_criterion",
    "constraint_family",
]

_KIND_ORDER = {"beta_zero": 0, "half_chi_nonpositive": 1, "half_chi_integer": 2, "subset_hit": 3}


@dataclass(frozen=True)
class Violation:
    """One failed membership condition (``subset`` is 1-based)."""

    kind: str
    subset: tuple[int, ...] = ()
    hit_value: int | None = None

    def sort_key(self):
        return (_KIND_ORDER[self.kind], len(self.subset), self.subset,
                -1 if self.hit_value is None else self.hit_value)

    def to_json(self) -> dict:
        return {"kind": self.kind, "subset": list(self.subset), "hit_value": self.hit_value}


@dataclass(frozen=True)
class AdmissibilityVerdict:
    """Result of :func:`in_A_m`.

    ``subset_values`` maps each checked ``J`` (1-based tuple) to the exact
    value ``chi/2 - sum_J beta``; useful for reproducing worked examples.
    """

    member: bool
    violations: tuple[Violation, ...]
    checked_subsets: int
    half_chi: Fraction
    floor_used: int
    index_set: tuple[int, ...]
    subset_values: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "member": self.member,
            "violations": [v.to_json() for v in self.violations],
            "checked_subsets": self.checked_subsets,
            "half_chi": str(self.half_chi),
            "floor_used": self.floor_used,
            "index_set": list(self.index_set),
            "subset_values": {",".join(map(str, k)) or "{}": str(v)
                              for k, v in self.subset_values.items()},
        }


class NotAMemberError(DomainError):
    """Raised by :func:`margin` for non-members; carries the verdict."""

    def __init__(self, verdict: AdmissibilityVerdict):
        super().__init__("coefficients are not admissible; margin undefined")
        self.verdict = verdict


def _beta(d) -> tuple[Fraction, ...]:
    beta = d.beta if isinstance(d, Divisor) else tuple(as_fraction(b) for b in d)
    for i, b in enumerate(beta, start=1):
        if b <= -1:
            raise DomainError(f"beta_{i} = {b} <= -1: cusp or worse")
    return beta


def _subsets(members: Sequence[int]):
    for k in range(len(members) + 1):
        yield from itertools.combinations(members, k)


def in_A_m(d: Divisor | Sequence, strict_literal: bool = False) -> AdmissibilityVerdict:
    """Decide membership exactly and list every violated condition.

    Parameters
    ----------
    d : Divisor or sequence of rationals
    strict_literal : bool
        Use the forbidden range ``|J|..|J|+1`` instead of ``|J|..|J|+floor(chi/2)``.

    Raises
    ------
    DomainError
        If some ``beta_i <= -1``.
    """
    beta = _beta(d)
    pe = chi_pair(beta)
    half = pe.half_chi
    span = 1 if strict_literal else (pe.floor_half_chi if pe.floor_half_chi is not None
                                      else (half.numerator // half.denominator))
    viol: list[Violation] = []
    for i, b in enumerate(beta, start=1):
        if b == 0:
            viol.append(Violation("beta_zero", (i,)))
    if half <= 0:
        viol.append(Violation("half_chi_nonpositive"))
    elif half.denominator == 1:
        viol.append(Violation("half_chi_integer", (), int(half)))
    F = index_set(beta).members
    values = {}
    checked = 0
    for J in _subsets(F):
        checked += 1
        val = half - sum((beta[j - 1] for j in J), Fraction(0))
        values[J] = val
        if val.denominator == 1 and len(J) <= val <= len(J) + span:
            viol.append(Violation("subset_hit", J, int(val)))
    viol.sort(key=Violation.sort_key)
    return AdmissibilityVerdict(member=not viol, violations=tuple(viol), checked_subsets=checked,
                                half_chi=half, floor_used=span, index_set=F,
                                subset_values=values)


# margin ------------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    """Affine constraint ``a . beta = c`` whose zero set is an excluded wall.

    ``coeffs`` and ``const`` are exact; ``label`` describes the wall.
    """

    label: str
    coeffs: tuple[Fraction, ...]
    const: Fraction

    def residual(self, beta: Sequence[Fraction]) -> Fraction:
        return sum((a * b for a, b in zip(self.coeffs, beta)), Fraction(0)) - self.const

    def distance(self, beta: Sequence[Fraction]) -> Fraction | None:
        """ℓ∞ distance from ``beta`` to the hyperplane, ``None`` if the gradient vanishes."""
        norm = sum((abs(a) for a in self.coeffs), Fraction(0))
        if norm == 0:
            return None
        return abs(self.residual(beta)) / norm


@dataclass(frozen=True)
class Margin:
    """Certified ℓ∞ radius in coefficient space around an admissible vector.

    ``k_direction`` is always ``"unquantified"``: only the coefficient factor
    of the neighbourhood is measured.
    """

    value: Fraction
    attaining_constraint: str
    k_direction: str = "unquantified"

    def to_json(self) -> dict:
        return {"value": str(self.value), "attaining_constraint": self.attaining_constraint,
                "k_direction": self.k_direction}


def constraint_family(beta: Sequence[Fraction]) -> list[Constraint]:
    """Walls bounding the admissible cell that contains ``beta``.

    The family is fixed by the stratum of ``beta`` (its index set and the
    floor of ``chi/2``):

    * coordinate walls ``beta_i = 0`` and cone walls ``beta_i = -1``;
    * integer walls ``chi/2 = n`` for the two integers around ``chi/2``;
    * subset walls ``chi/2 - sum_J beta = n`` for ``J`` in the index set and
      ``|J| <= n <= |J| + floor(chi/2) + 1``;
    * stratum walls ``beta_i = sum(beta)/2`` for indices outside the index set,
      beyond which new subset constraints would appear.
    """
    beta = tuple(as_fraction(b) for b in beta)
    m = len(beta)
    half = Fraction(1, 2)
    pe = chi_pair(beta)
    fl = pe.half_chi.numerator // pe.half_chi.denominator
    out: list[Constraint] = []
    for i in range(m):
        e = tuple(Fraction(int(j == i)) for j in range(m))
        out.append(Constraint(f"beta_{i + 1} = 0", e, Fraction(0)))
        out.append(Constraint(f"beta_{i + 1} = -1 (cone wall)", e, Fraction(-1)))
    # chi/2 = 1 + sum(beta)/2
    for n in sorted({max(fl, 0), fl + 1}):
        out.append(Constraint(f"chi/2 = {n}", tuple([half] * m), Fraction(n - 1)))
    F = index_set(beta).members
    for J in _subsets(F):
        coeffs = tuple(-half if (j + 1) in J else half for j in range(m))
        for n in range(len(J), len(J) + fl + 2):
            label = "J={" + ",".join(map(str, J)) + f"}} hits {n}"
            out.append(Constraint(label, coeffs, Fraction(n - 1)))
    for i in range(1, m + 1):
        if i not in F:
            coeffs = tuple(half if j + 1 == i else -half for j in range(m))
            out.append(Constraint(f"index {i} enters F", coeffs, Fraction(0)))
    return out


def margin(d: Divisor | Sequence) -> Margin:
    """Smallest ℓ∞ distance from ``beta`` to a wall of :func:`constraint_family`.

    Any perturbation of ``beta`` with ℓ∞ size strictly below the value keeps
    every listed condition satisfied, and stays inside the stratum, so the
    value is a certified lower bound for the radius of the admissible cell.

    Raises
    ------
    NotAMemberError
        If ``beta`` is not admissible.
    """
    beta = _beta(d)
    verdict = in_A_m(beta)
    if not verdict.member:
        raise NotAMemberError(verdict)
    best: tuple[Fraction, str] | None = None
    for c in constraint_family(beta):
        dist = c.distance(beta)
        if dist is not None and (best is None or dist < best[0]):
            best = (dist, c.label)
    assert best is not None  # at least the coordinate walls exist when m >= 1
    return Margin(value=best[0], attaining_constraint=best[1])


@dataclass(frozen=True)
class DeyReport:
    """Dey-type nonexistence criterion with its three ingredients."""

    holds: bool
    member: bool
    distance: Fraction
    witness: tuple[int, ...]
    integral_shifts: tuple[int, ...]

    def to_json(self) -> dict:
        return {"holds": self.holds, "member": self.member, "d1": str(self.distance),
                "witness": list(self.witness), "integral_shifts": list(self.integral_shifts)}


def dey_criterion(d: Divisor | Sequence) -> DeyReport:
    """Admissible, ℓ¹ distance exactly 1 to the odd lattice, and no ``beta_i - 1`` integral."""
    beta = _beta(d)
    member = in_A_m(beta).member
    lw = d1_odd_lattice(beta)
    integral = tuple(i for i, b in enumerate(beta, start=1) if (b - 1).denominator == 1)
    holds = member and lw.distance == 1 and not integral
    return DeyReport(holds, member, lw.distance, lw.witness, integral)
