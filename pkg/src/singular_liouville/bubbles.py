"""Curvature-concentration certificates for bubbling sequences.

A certificate records, per site, how many bubbles sit there and of what type,
together with the resulting concentration value ``theta`` (stored as an exact
rational multiple of pi).  Four regimes are enumerated:

``noncollapse``
    The limit metric survives; only smooth bubbles, only at sites with
    ``beta_i > 1``.
``collapse_one_level``
    The base collapses; one singular bubble at each site of ``I`` and ``t``
    further smooth bubbles.
``collapse_two_level``
    As above, with ``s'`` second-level smooth bubbles on top of the singular
    bubble at some sites.
``collapse_C1``
    The restricted list allowed when the curvature functions converge in C^1.

Smooth bubbles not tied to a singular site are kept as an aggregate count
carried by one anonymous free pseudo-site; :func:`refine_placements`
distributes them over marked points and anonymous free sites.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .divisor import DomainError, Divisor, as_fraction, chi_pair, format_fraction

__all__ = [
    "REGIMES",
    "SiteConfig",
    "BubbleConfig",
    "theta_of_site",
    "enumerate_noncollapse",
    "enumerate_collapse_one_level",
    "enumerate_collapse_two_level",
    "enumerate_collapse_C1",
    "enumerate_all",
    "oracle_enumerate",
    "refine_placements",
    "certificate_keys",
]

REGIMES = ("noncollapse", "collapse_one_level", "collapse_two_level", "collapse_C1")
FOUR = Fraction(4)


def theta_of_site(beta_i, s: int = 0, singular: bool = False, s_prime: int = 0) -> Fraction:
    """Concentration value at a site, in units of pi.

    Parameters
    ----------
    beta_i : rational or None
        Cone coefficient of a marked site; ``None`` for a free site.
    s : int
        Number of first-level bubbles at the site, the singular one included.
    singular : bool
        Whether one of the ``s`` bubbles is singular.
    s_prime : int
        Number of second-level bubbles (sitting on the singular bubble).

    Returns
    -------
    Fraction
        ``theta / pi``.
    """
    if s < 0 or s_prime < 0:
        raise ValueError("bubble counts must be non-negative")
    if s_prime > 0 and not singular:
        raise ValueError("second-level bubbles require a singular first-level bubble")
    if beta_i is None:
        if singular:
            raise ValueError("a free site cannot carry a singular bubble")
        return FOUR * s
    b = as_fraction(beta_i)
    if singular:
        if s < 1:
            raise ValueError("singular flag requires s >= 1")
        return FOUR * (s - s_prime) + 2 * b
    return FOUR * s - 2 * b


@dataclass(frozen=True)
class SiteConfig:
    """Bubble content of one site.

    ``site`` is a 1-based marked index or ``None`` for a free site.
    ``level1_smooth`` counts smooth first-level bubbles only; the singular
    bubble is flagged separately by ``level1_singular``.
    """

    site: int | None
    level1_smooth: int
    level1_singular: int
    level2_smooth: int
    theta: Fraction
    kind: str = ""

    def __post_init__(self) -> None:
        if self.level1_singular not in (0, 1):
            raise ValueError("level1_singular must be 0 or 1")
        if self.level2_smooth > 0 and not self.level1_singular:
            raise ValueError("second-level bubbles need a singular bubble below them")
        if self.site is None and (self.level1_singular or self.level2_smooth
                                  or self.level1_smooth < 1):
            raise ValueError("free sites carry only (at least one) smooth bubbles")

    @property
    def bubbles(self) -> int:
        return self.level1_smooth + self.level1_singular + self.level2_smooth

    def key(self) -> tuple:
        return (0 if self.site is None else 1, self.site or 0, self.level1_smooth,
                self.level1_singular, self.level2_smooth, self.theta, self.kind)

    def to_json(self) -> dict:
        return {"site": "free" if self.site is None else self.site,
                "level1_smooth": self.level1_smooth,
                "level1_singular": self.level1_singular,
                "level2_smooth": self.level2_smooth,
                "theta": format_fraction(self.theta) + " π",
                "kind": self.kind}


@dataclass(frozen=True)
class BubbleConfig:
    """A certificate: regime plus per-site content.

    Marked sites appear in index order, followed by free sites.
    """

    regime: str
    sites: tuple[SiteConfig, ...]
    beyond_paper: bool = False

    @property
    def s1(self) -> int:
        return sum(s.level1_smooth + s.level1_singular for s in self.sites)

    @property
    def s2(self) -> int:
        return sum(s.level2_smooth for s in self.sites)

    @property
    def singular(self) -> tuple[int, ...]:
        return tuple(s.site for s in self.sites if s.level1_singular)

    @property
    def total_theta(self) -> Fraction:
        return sum((s.theta for s in self.sites), Fraction(0))

    @property
    def free_smooth(self) -> int:
        return sum(s.level1_smooth for s in self.sites if s.site is None)

    def marked(self, i: int) -> SiteConfig:
        for s in self.sites:
            if s.site == i:
                return s
        raise KeyError(i)

    def collapse_signature(self) -> tuple:
        """``(I, s' on I, t)`` with kinds erased; ``t`` counts smooth level-1 bubbles."""
        I = self.singular
        sp = tuple(self.marked(i).level2_smooth for i in I)
        t = sum(s.level1_smooth for s in self.sites)
        return (I, sp, t)

    def key(self) -> tuple:
        return (REGIMES.index(self.regime), tuple(s.key() for s in self.sites))

    def to_json(self) -> dict:
        return {"regime": self.regime, "s1": self.s1, "s2": self.s2,
                "singular": list(self.singular), "beyond_paper": self.beyond_paper,
                "total_theta": format_fraction(self.total_theta) + " π",
                "sites": [s.to_json() for s in self.sites]}


def certificate_keys(configs: Sequence[BubbleConfig]) -> set:
    return {c.key() for c in configs}


# shared builders (representation only) ------------------------------------

def _beta_of(d) -> tuple[Fraction, ...]:
    if isinstance(d, Divisor):
        return d.beta
    beta = tuple(as_fraction(b) for b in d)
    for i, b in enumerate(beta, start=1):
        if b <= -1:
            raise DomainError(f"beta_{i} = {b} <= -1: cusp or worse")
    return beta


def _positive_half_chi(beta) -> Fraction:
    half = chi_pair(beta).half_chi
    if half <= 0:
        raise DomainError(f"chi/2 = {half} is not positive")
    return half


@functools.lru_cache(maxsize=65536)
def _site(i, b, smooth, singular, sp, kind) -> SiteConfig:
    s = smooth + singular
    return SiteConfig(i, smooth, singular, sp, theta_of_site(b, s, bool(singular), sp), kind)


def _collapse_config(regime, beta, I, sprime, t, beyond=False) -> BubbleConfig:
    sites = []
    for i, b in enumerate(beta, start=1):
        if i in I:
            sites.append(_site(i, b, 0, 1, sprime.get(i, 0), "singular"))
        else:
            sites.append(_site(i, b, 0, 0, 0, "unbubbled"))
    if t > 0:
        sites.append(_site(None, None, t, 0, 0, "free"))
    return BubbleConfig(regime, tuple(sites), beyond)


def _noncollapse_config(beta, n) -> BubbleConfig:
    sites = tuple(_site(i, b, k, 0, 0, "smooth" if k else "unbubbled")
                  for i, (b, k) in enumerate(zip(beta, n), start=1))
    return BubbleConfig("noncollapse", sites)


_C1_KINDS = ("unbubbled", "integer_smooth", "singular")


def _c1_config(beta, kinds, f) -> BubbleConfig:
    sites = []
    for i, (b, k) in enumerate(zip(beta, kinds), start=1):
        if k == "integer_smooth":
            sites.append(_site(i, b, int(b) + 1, 0, 0, k))
        elif k == "singular":
            sites.append(_site(i, b, 0, 1, 0, k))
        else:
            sites.append(_site(i, b, 0, 0, 0, k))
    sites.extend(_site(None, None, 1, 0, 0, "free") for _ in range(f))
    return BubbleConfig("collapse_C1", tuple(sites))


def _check_balance(cfg: BubbleConfig) -> BubbleConfig:
    if cfg.total_theta != 4:
        raise AssertionError(f"unbalanced certificate {cfg}")
    return cfg


def _sorted(configs) -> list[BubbleConfig]:
    return sorted(configs, key=BubbleConfig.key)


# targeted enumerators -------------------------------------------------------

class _Scaled:
    """Coefficients multiplied by ``S = 2 * lcm(denominators)`` so every
    quantity used below (``beta_i``, ``chi/2``, integers) is an exact int."""

    def __init__(self, beta):
        den = 1
        for b in beta:
            den = math.lcm(den, b.denominator)
        self.S = S = 2 * den
        self.B = [b.numerator * (S // b.denominator) for b in beta]
        self.H = S + sum(self.B) // 2
        if self.H <= 0:
            raise DomainError(f"chi/2 = {Fraction(self.H, S)} is not positive")


def enumerate_noncollapse(d) -> list[BubbleConfig]:
    """Smooth-bubble counts ``n_i`` at sites with ``beta_i > 1`` leaving a valid limit.

    Conditions: ``sum(n) <= floor(chi/2)``, residual mass
    ``4 pi + 2 pi sum(beta) - 4 pi sum(n) > 0`` and ``beta_i - 2 n_i > -1``.
    The all-zero assignment (no bubbles) is included.
    """
    beta = _beta_of(d)
    sc = _Scaled(beta)
    S, B, H = sc.S, sc.B, sc.H
    fl = H // S
    ranges = []
    for b in B:
        if b > S:
            top = -(-(b + S) // (2 * S)) - 1  # largest n with beta - 2n > -1
            ranges.append(range(0, min(top, fl) + 1))
        else:
            ranges.append(range(1))
    out = []
    for n in itertools.product(*ranges):
        tot = sum(n)
        if tot <= fl and H - S * tot > 0:
            out.append(_noncollapse_config(beta, n))
    return _sorted(out)


def enumerate_collapse_one_level(d) -> list[BubbleConfig]:
    """Pairs ``(I, t)`` with ``t + |I| = chi/2 - sum_I beta``.

    ``t`` must be a non-negative integer with ``t <= chi/2`` and every index of
    ``I`` must satisfy ``beta_i <= chi/2 - 1``.  The ``t`` smooth bubbles are
    aggregated on one free pseudo-site.
    """
    beta = _beta_of(d)
    sc = _Scaled(beta)
    S, B, H = sc.S, sc.B, sc.H
    eligible = [i for i in range(len(beta)) if B[i] <= H - S]
    out = []
    for k in range(len(eligible) + 1):
        for I in itertools.combinations(eligible, k):
            t, r = divmod(H - sum(B[i] for i in I) - k * S, S)
            if r or t < 0 or t * S > H:
                continue
            I1 = tuple(i + 1 for i in I)
            out.append(_check_balance(_collapse_config("collapse_one_level", beta, I1, {}, t)))
    return _sorted(out)


def two_level_search_bound(d) -> int:
    """``ceil(chi/2) + sum_{beta_i > 1} ceil(beta_i)``, reported for reference."""
    beta = _beta_of(d)
    half = chi_pair(beta).half_chi
    return math.ceil(half) + sum(math.ceil(b) for b in beta if b > 1)


def enumerate_collapse_two_level(d) -> list[BubbleConfig]:
    """Certificates with at least one second-level bubble.

    A second-level stack of ``s'`` bubbles at site ``i`` needs ``beta_i > 1``
    and leaves the singular bubble positive area ``4 pi (1 + beta_i - 2 s')``,
    i.e. ``s' < (1 + beta_i)/2``.  For each choice of ``I`` and stacks, the
    count ``t`` of remaining smooth first-level bubbles is forced by
    ``s1 - s2 = chi/2 - sum_I beta`` and must be a non-negative integer.
    Certificates with more than one stacked site are flagged ``beyond_paper``.
    """
    beta = _beta_of(d)
    sc = _Scaled(beta)
    S, B, H = sc.S, sc.B, sc.H
    m = len(beta)
    out = []
    stackable = [i for i in range(m) if B[i] > S]
    for k in range(1, len(stackable) + 1):
        for T in itertools.combinations(stackable, k):
            rest = [i for i in range(m) if i not in T]
            # s' < (1 + beta)/2  <=>  2 s' S < S + B
            choices = [range(1, -(-(S + B[i]) // (2 * S))) for i in T]
            for r_ in range(len(rest) + 1):
                for extra in itertools.combinations(rest, r_):
                    I = tuple(sorted(T + extra))
                    base = H - sum(S + B[i] for i in I)
                    for sp in itertools.product(*choices):
                        t, r = divmod(base + S * sum(sp), S)
                        if r or t < 0:
                            continue
                        cfg = _collapse_config("collapse_two_level", beta,
                                               tuple(i + 1 for i in I),
                                               {i + 1: p for i, p in zip(T, sp)},
                                               t, beyond=len(T) > 1)
                        out.append(_check_balance(cfg))
    return _sorted(out)


def enumerate_collapse_C1(d) -> list[BubbleConfig]:
    """Certificates built from the three site kinds allowed under C^1 convergence.

    Kinds: ``beta_i + 1`` smooth bubbles at a site with ``beta_i + 1`` a
    positive integer; one singular bubble at a marked site; one smooth bubble
    at a free site.  Balance fixes the number of free sites; the total number
    of bubbles is at most ``1 + sum|beta_i|/2``.
    """
    beta = _beta_of(d)
    sc = _Scaled(beta)
    S, B = sc.S, sc.B
    budget2 = 2 * S + sum(abs(b) for b in B)  # 2 S (1 + sum|beta|/2)
    options = []
    for i, b in enumerate(beta):
        opts = [("unbubbled", -2 * B[i], 0), ("singular", 4 * S + 2 * B[i], 1)]
        if b.denominator == 1 and b >= 0:
            opts.insert(1, ("integer_smooth", 4 * S + 2 * B[i], int(b) + 1))
        options.append(opts)
    out = []
    for combo in itertools.product(*options):
        theta = sum(c[1] for c in combo)
        f, r = divmod(4 * S - theta, 4 * S)
        if r or f < 0:
            continue
        if 2 * S * (sum(c[2] for c in combo) + f) > budget2:
            continue
        out.append(_check_balance(_c1_config(beta, [c[0] for c in combo], f)))
    return _sorted(out)


def enumerate_all(d, regimes: Sequence[str] = REGIMES) -> list[BubbleConfig]:
    """Concatenate the requested regimes in canonical order."""
    funcs = {"noncollapse": enumerate_noncollapse,
             "collapse_one_level": enumerate_collapse_one_level,
             "collapse_two_level": enumerate_collapse_two_level,
             "collapse_C1": enumerate_collapse_C1}
    out = []
    for r in REGIMES:
        if r in regimes:
            out.extend(funcs[r](d))
    return out


# brute-force oracle -----------------------------------------------------------

def _outer_sum(parts: list[np.ndarray]) -> np.ndarray:
    total = np.zeros((), dtype=np.int64)
    for p in parts:
        total = np.add.outer(total, p)
    return total


def oracle_enumerate(d, bound: int, regimes: Sequence[str] = REGIMES) -> list[BubbleConfig]:
    """Exhaustive search over per-site bubble contents with every count ``<= bound``.

    Each marked site independently takes any raw state (smooth count,
    singular flag, second-level count); smooth bubbles may also sit on free
    sites.  Only the site formulas, balance / positivity, and the structural
    rules of each regime are applied; surviving raw states are then written
    in the aggregate form used by the targeted enumerators.  Smooth
    first-level bubbles enter the site values additively, so the search runs
    over their total ``0 .. bound*(m+1)``.  Arithmetic is on integers scaled
    by twice the common denominator.

    Raises
    ------
    ValueError
        If ``bound < 1`` or ``m * bound > 40``.
    """
    beta = _beta_of(d)
    m = len(beta)
    if bound < 1:
        raise ValueError("bound must be at least 1")
    if m * bound > 40:
        raise ValueError(f"search box too large (m*bound = {m * bound} > 40)")
    sc = _Scaled(beta)
    S, B, H = sc.S, sc.B, sc.H
    Bv = np.array(B, dtype=np.int64)
    found: dict[tuple, BubbleConfig] = {}

    def add(cfg):
        found.setdefault(cfg.key(), cfg)

    if {"collapse_one_level", "collapse_two_level"} & set(regimes):
        states = [(0, 0)] + [(1, sp) for sp in range(bound + 1)]
        parts = [np.array([(4 * S - 4 * sp * S + 2 * b) if sg else -2 * b
                           for sg, sp in states], dtype=np.int64) for b in B]
        parts.append(np.arange(bound * (m + 1) + 1, dtype=np.int64) * 4 * S)
        total = _outer_sum(parts)
        for idx in zip(*np.nonzero(total == 4 * S)):
            st = [states[j] for j in idx[:m]]
            t = int(idx[m])
            I = [i for i, (sg, _) in enumerate(st) if sg]
            sp = {i: p for i, (_, p) in enumerate(st) if p}
            # a stack needs beta > 1 and leaves the singular bubble positive area
            if any(not (B[i] > S and S + B[i] - 2 * p * S > 0) for i, p in sp.items()):
                continue
            rhs = H - sum(B[i] for i in I)  # S * (chi/2 - sum_I beta)
            s1, s2 = t + len(I), sum(sp.values())
            if not sp:
                if "collapse_one_level" not in regimes or s1 * S != rhs:
                    continue
                if any(B[i] > H - S for i in I) or t * S > H:
                    continue
                add(_collapse_config("collapse_one_level", beta,
                                     tuple(i + 1 for i in I), {}, t))
            else:
                if "collapse_two_level" not in regimes or (s1 - s2) * S != rhs:
                    continue
                add(_collapse_config("collapse_two_level", beta, tuple(i + 1 for i in I),
                                     {i + 1: p for i, p in sp.items()}, t,
                                     beyond=len(sp) > 1))

    if "noncollapse" in regimes:
        if m:
            grids = np.stack(np.meshgrid(*[np.arange(bound + 1)] * m, indexing="ij"),
                             axis=-1).reshape(-1, m)
        else:
            grids = np.zeros((1, 0), dtype=np.int64)
        ok = np.all((grids == 0) | (Bv > S), axis=1)          # bubbles only where beta > 1
        ok &= np.all(Bv - 2 * grids * S > -S, axis=1)          # residual cone stays > -1
        ok &= H - S * grids.sum(axis=1) > 0                   # residual mass positive
        for n in grids[ok]:
            add(_noncollapse_config(beta, tuple(int(k) for k in n)))

    if "collapse_C1" in regimes:
        budget2 = 2 * S + sum(abs(b) for b in B)
        kinds_theta = {"unbubbled": lambda b: -2 * b, "integer_smooth": lambda b: 4 * S + 2 * b,
                       "singular": lambda b: 4 * S + 2 * b}
        for kinds in itertools.product(_C1_KINDS, repeat=m):
            if any(k == "integer_smooth" and not (B[i] % S == 0 and B[i] >= 0)
                   for i, k in enumerate(kinds)):
                continue
            theta = sum(kinds_theta[k](B[i]) for i, k in enumerate(kinds))
            count = sum((B[i] // S + 1) if k == "integer_smooth" else int(k == "singular")
                        for i, k in enumerate(kinds))
            for f in range(bound + 1):
                if theta + 4 * S * f != 4 * S:
                    continue
                if 2 * S * (count + f) > budget2:
                    continue
                add(_c1_config(beta, kinds, f))

    return sorted(found.values(), key=BubbleConfig.key)


# placements ---------------------------------------------------------------------

def _partitions(n: int, largest: int | None = None) -> Iterator[tuple[int, ...]]:
    if n == 0:
        yield ()
        return
    largest = n if largest is None else largest
    for k in range(min(n, largest), 0, -1):
        for rest in _partitions(n - k, k):
            yield (k,) + rest


def _compositions(n: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 0:
        if n == 0:
            yield ()
        return
    for k in range(n + 1):
        for rest in _compositions(n - k, parts - 1):
            yield (k,) + rest


def refine_placements(cfg: BubbleConfig, beta: Sequence | None = None) -> Iterator[BubbleConfig]:
    """Distribute the aggregate free smooth bubbles of a collapse certificate.

    Yields every way of moving some of the aggregate smooth bubbles onto
    marked points (raising that site's value by 4 pi each) and splitting the
    rest into anonymous free sites.  The total value is unchanged.
    C^1 and noncollapse certificates are yielded unchanged.
    """
    if cfg.regime not in ("collapse_one_level", "collapse_two_level"):
        yield cfg
        return
    marked = [s for s in cfg.sites if s.site is not None]
    t = cfg.free_smooth
    for comp in _compositions(t, len(marked) + 1):
        on_marked, free = comp[:-1], comp[-1]
        new_marked = []
        for s, c in zip(marked, on_marked):
            if c == 0:
                new_marked.append(s)
            else:
                new_marked.append(replace(s, level1_smooth=s.level1_smooth + c,
                                          theta=s.theta + 4 * c,
                                          kind=s.kind if s.kind == "singular" else "smooth"))
        for part in _partitions(free):
            free_sites = [SiteConfig(None, k, 0, 0, FOUR * k, "free") for k in part]
            yield BubbleConfig(cfg.regime, tuple(new_marked) + tuple(free_sites), cfg.beyond_paper)
