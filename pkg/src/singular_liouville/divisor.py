"""Exact arithmetic on divisors of the round sphere.

A divisor is a finite list of marked unit vectors ``p_i`` with rational cone
coefficients ``beta_i > -1``.  Every combinatorial predicate in this package
is evaluated on :class:`fractions.Fraction` values, never on floats.

Indices exposed to users (index sets, subsets, site labels) are 1-based so
that they read the same as the mathematics; Python sequences stay 0-based.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "Divisor",
    "PairEuler",
    "IndexSet",
    "LatticeWitness",
    "as_fraction",
    "format_fraction",
    "chi_pair",
    "index_set",
    "d1_odd_lattice",
    "generic_points",
]

_UNIT_TOL = 1e-9


class DomainError(ValueError):
    """Input lies outside the domain of an exact operation."""


def as_fraction(value) -> Fraction:
    """Parse an exact rational from ``int``, ``Fraction`` or a ``"p/q"`` string.

    Floats are accepted only when they are dyadic-exact and are converted
    without rounding; decimal strings such as ``"0.25"`` are parsed exactly.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise DomainError(f"non-finite coefficient {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(f"cannot parse rational {value!r}") from exc
    raise TypeError(f"unsupported rational type {type(value).__name__}")


def format_fraction(q: Fraction) -> str:
    """Serialize a rational as ``"p/q"`` (``"p/1"`` for integers)."""
    return f"{q.numerator}/{q.denominator}"


def generic_points(m: int) -> np.ndarray:
    """Deterministic, well separated unit vectors away from the z-axis.

    Used when only the coefficients matter (combinatorics) and as a default
    placement for numerical experiments.
    """
    if m == 0:
        return np.zeros((0, 3))
    golden = math.pi * (3.0 - math.sqrt(5.0))
    k = np.arange(m, dtype=float)
    z = 0.8 * (1.0 - 2.0 * (k + 0.5) / m)
    r = np.sqrt(1.0 - z * z)
    phi = 0.37 + golden * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@dataclass(frozen=True)
class Divisor:
    """Marked points ``p_i`` on the unit sphere with coefficients ``beta_i``.

    Parameters
    ----------
    points : sequence of 3-vectors
        Unit vectors, pairwise distinct.
    beta : sequence of rationals
        Exact cone coefficients, each strictly greater than -1.
    float_view : sequence of (value, radius), optional
        Floating stand-ins for irrational inputs; each value must lie within
        ``radius`` of the matching exact coefficient.
    """

    points: tuple[tuple[float, float, float], ...]
    beta: tuple[Fraction, ...]
    float_view: tuple[tuple[float, float], ...] | None = field(default=None)

    def __post_init__(self) -> None:
        beta = tuple(as_fraction(b) for b in self.beta)
        pts = tuple(tuple(float(c) for c in p) for p in self.points)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "points", pts)
        if len(pts) != len(beta):
            raise DomainError(f"{len(pts)} points but {len(beta)} coefficients")
        for i, b in enumerate(beta, start=1):
            if b <= -1:
                raise DomainError(f"beta_{i} = {b} <= -1: cusp or worse")
        for i, p in enumerate(pts, start=1):
            if len(p) != 3:
                raise DomainError(f"point {i} is not a 3-vector")
            if abs(math.sqrt(sum(c * c for c in p)) - 1.0) > _UNIT_TOL:
                raise DomainError(f"point {i} is not a unit vector")
        arr = np.asarray(pts, dtype=float).reshape(-1, 3)
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.linalg.norm(arr[i] - arr[j]) <= 0.0:
                    raise DomainError(f"points {i + 1} and {j + 1} coincide")
        if self.float_view is not None:
            fv = tuple((float(v), float(r)) for v, r in self.float_view)
            if len(fv) != len(beta):
                raise DomainError("float_view length differs from beta")
            for i, ((v, r), b) in enumerate(zip(fv, beta), start=1):
                if r < 0 or abs(v - float(b)) > r:
                    raise DomainError(f"float_view entry {i} disagrees with beta_{i}")
            object.__setattr__(self, "float_view", fv)

    # construction -------------------------------------------------------
    @classmethod
    def from_beta(cls, beta: Iterable, points=None) -> "Divisor":
        """Divisor with given coefficients; points default to :func:`generic_points`."""
        beta = tuple(as_fraction(b) for b in beta)
        if points is None:
            points = generic_points(len(beta))
        return cls(points=tuple(map(tuple, np.asarray(points, float).reshape(-1, 3))), beta=beta)

    @classmethod
    def from_json(cls, doc: dict | str | Path) -> "Divisor":
        """Parse ``{"points": [[x,y,z],...], "beta": ["p/q",...]}``.

        ``doc`` may be a parsed mapping, a JSON string, or a file path.
        Points are normalized to unit length when within 1e-6 of the sphere.
        """
        if isinstance(doc, Path) or (isinstance(doc, str) and not doc.lstrip().startswith("{")):
            doc = json.loads(Path(doc).read_text())
        elif isinstance(doc, str):
            doc = json.loads(doc)
        beta = [as_fraction(b) for b in doc.get("beta", [])]
        raw = doc.get("points")
        if raw is None:
            pts = generic_points(len(beta))
        else:
            pts = np.asarray(raw, dtype=float).reshape(-1, 3)
            norms = np.linalg.norm(pts, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise DomainError("points must lie on the unit sphere")
            off = np.abs(norms - 1.0) > _UNIT_TOL
            pts[off] = pts[off] / norms[off, None]
        fv = doc.get("float_view")
        return cls(points=tuple(map(tuple, pts)), beta=tuple(beta),
                   float_view=None if fv is None else tuple(map(tuple, fv)))

    def to_json(self) -> dict:
        out = {"points": [list(p) for p in self.points],
               "beta": [format_fraction(b) for b in self.beta]}
        if self.float_view is not None:
            out["float_view"] = [list(v) for v in self.float_view]
        return out

    # views ----------------------------------------------------------------
    @property
    def m(self) -> int:
        return len(self.beta)

    @property
    def point_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float).reshape(-1, 3)

    @property
    def beta_float(self) -> np.ndarray:
        if self.float_view is not None:
            return np.array([v for v, _ in self.float_view], dtype=float)
        return np.array([float(b) for b in self.beta], dtype=float)

    def with_beta(self, beta: Iterable) -> "Divisor":
        """Same points, new coefficients."""
        return Divisor(points=self.points, beta=tuple(as_fraction(b) for b in beta))

    def permuted(self, perm: Sequence[int]) -> "Divisor":
        """Reorder points and coefficients by the 0-based permutation ``perm``."""
        return Divisor(points=tuple(self.points[i] for i in perm),
                       beta=tuple(self.beta[i] for i in perm))

    def rotated(self, rot: np.ndarray) -> "Divisor":
        """Apply a rotation matrix to the marked points."""
        pts = self.point_array @ np.asarray(rot, float).T
        return Divisor(points=tuple(map(tuple, pts)), beta=self.beta)


@dataclass(frozen=True)
class PairEuler:
    """Euler characteristic of the pair ``chi = 2 + sum(beta)`` and its half."""

    chi: Fraction
    half_chi: Fraction
    floor_half_chi: int | None


@dataclass(frozen=True)
class IndexSet:
    """Sorted 1-based indices ``i`` with ``beta_i <= sum(beta)/2``."""

    members: tuple[int, ...]

    def __contains__(self, i: int) -> bool:
        return i in self.members

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class LatticeWitness:
    """ℓ¹ distance to the odd-sum integer lattice together with a minimizer."""

    distance: Fraction
    witness: tuple[int, ...]


def _betas(d: Divisor | Sequence) -> tuple[Fraction, ...]:
    if isinstance(d, Divisor):
        return d.beta
    return tuple(as_fraction(b) for b in d)


def chi_pair(d: Divisor | Sequence) -> PairEuler:
    """Return ``chi = 2 + sum(beta)``, its half, and ``floor(chi/2)`` when positive."""
    beta = _betas(d)
    chi = 2 + sum(beta, Fraction(0))
    half = chi / 2
    return PairEuler(chi=chi, half_chi=half,
                     floor_half_chi=math.floor(half) if chi > 0 else None)


def index_set(d: Divisor | Sequence) -> IndexSet:
    """Return ``{i : beta_i <= sum(beta)/2}`` (equality counts)."""
    beta = _betas(d)
    half_sum = sum(beta, Fraction(0)) / 2
    return IndexSet(tuple(i for i, b in enumerate(beta, start=1) if b <= half_sum))


def d1_odd_lattice(d: Divisor | Sequence) -> LatticeWitness:
    """Exact ℓ¹ distance from ``beta`` to integer vectors with odd coordinate sum.

    Each coordinate is rounded to a nearest integer (halves round up).  If
    the rounded vector has even sum, the coordinate whose move to its
    second-nearest integer costs least is moved; ties go to the lowest index.
    Moving exactly one coordinate is optimal because any odd-sum vector must
    differ in parity from the rounded one in an odd number of coordinates,
    and every such change costs at least that coordinate's surcharge.

    Raises
    ------
    DomainError
        For the empty divisor (no coordinates, so no odd-sum vector exists).
    """
    beta = _betas(d)
    if not beta:
        raise DomainError("empty divisor: the odd-sum lattice in Z^0 is empty")
    nearest = [math.floor(b + Fraction(1, 2)) for b in beta]
    dist = sum((abs(b - n) for b, n in zip(beta, nearest)), Fraction(0))
    if sum(nearest) % 2 == 1:
        return LatticeWitness(dist, tuple(nearest))
    best_i, best_cost, best_n = -1, None, 0
    for i, (b, n) in enumerate(zip(beta, nearest)):
        alt = n + 1 if b >= n else n - 1
        cost = abs(b - alt) - abs(b - n)
        if best_cost is None or cost < best_cost:
            best_i, best_cost, best_n = i, cost, alt
    witness = list(nearest)
    witness[best_i] = best_n
    return LatticeWitness(dist + best_cost, tuple(witness))
