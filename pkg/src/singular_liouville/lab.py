"""Experiment harness: run records, degeneration sweeps, synthetic families, CSV output.

A run record is a JSON document with the inputs, one entry per continuation
step and references to binary field snapshots stored next to it.  Timings
live in their own section so that two runs of the same configuration can be
compared after dropping it.
"""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gamma

from .bubbles import BubbleConfig
from .diagnostics import (COLLAPSE_REGIMES, ThetaEstimate, gauss_bonnet,
                          ladder_theta, match_certificate, pohozaev, theta_estimate)
from .divisor import DomainError, Divisor, as_fraction, format_fraction
from .solver import ConformalFactor, SolveParams, SolveResult, continuation_sweep
from .sphere import SphereField, SphereGrid, atomic_write, geodesic_distance, parse_grid

__all__ = [
    "SCHEMA_VERSION",
    "DISCLAIMER",
    "RunRecord",
    "SweepConfig",
    "sweep",
    "load_run",
    "SyntheticFamily",
    "SyntheticMember",
    "synthesize_family",
    "family_theta",
    "emit_plots",
]

SCHEMA_VERSION = 1
DISCLAIMER = ("Numerical record only. A diverged or collapsed continuation is not evidence "
              "that no solution exists.")


# records -----------------------------------------------------------------------------------

@dataclass
class RunRecord:
    """Serializable experiment record; steps are append-only."""

    inputs: dict
    environment: dict = field(default_factory=dict)
    steps: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    disclaimer: str = DISCLAIMER
    path: Path | None = field(default=None, repr=False, compare=False)

    def append_step(self, entry: dict) -> None:
        self.steps.append(entry)

    def to_json(self) -> dict:
        return {"schema_version": self.schema_version, "disclaimer": self.disclaimer,
                "inputs": self.inputs, "environment": self.environment,
                "steps": self.steps, "extras": self.extras, "timings": self.timings}

    def comparable(self) -> dict:
        """The record without timings (for replay comparisons)."""
        doc = self.to_json()
        doc.pop("timings")
        return doc

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        if path.exists():
            old = json.loads(path.read_text())
            if old.get("schema_version", 0) > self.schema_version:
                raise ValueError("refusing to overwrite a record with a newer schema")
            if len(old.get("steps", [])) > len(self.steps):
                raise ValueError("records are append-only")
        atomic_write(path, json.dumps(self.to_json(), indent=1, allow_nan=True).encode())
        self.path = path
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunRecord":
        path = Path(path)
        doc = json.loads(path.read_text())
        if doc.get("schema_version", 0) > SCHEMA_VERSION:
            raise ValueError(f"record schema {doc['schema_version']} is newer than {SCHEMA_VERSION}")
        rec = cls(inputs=doc["inputs"], environment=doc.get("environment", {}),
                  steps=doc.get("steps", []), extras=doc.get("extras", {}),
                  timings=doc.get("timings", {}),
                  schema_version=doc.get("schema_version", SCHEMA_VERSION),
                  disclaimer=doc.get("disclaimer", DISCLAIMER))
        rec.path = path
        return rec


@dataclass
class SweepConfig:
    """Inputs of :func:`sweep`.

    ``divisor`` is the start of the path (points and coefficients);
    ``target`` the end coefficients (same points; ``None`` for a single
    solve).  ``theta_radii`` are multiples of the grid spacing ``h``.
    ``pohozaev`` optionally requests ``{"center": i, "radii": [...]}`` on the
    final converged step.
    """

    divisor: Divisor
    target: tuple | None = None
    K: str = "const:1"
    grid: str = "256x128"
    steps: int = 8
    params: dict = field(default_factory=dict)
    snapshot_every: int = 4
    theta_radii: tuple = (8.0, 12.0, 16.0, 24.0)
    pohozaev: dict | None = None

    def __post_init__(self):
        if self.target is not None:
            self.target = tuple(as_fraction(b) for b in self.target)

    @classmethod
    def from_json(cls, doc: dict | str | Path) -> "SweepConfig":
        if isinstance(doc, (str, Path)) and not str(doc).lstrip().startswith("{"):
            doc = json.loads(Path(doc).read_text())
        elif isinstance(doc, str):
            doc = json.loads(doc)
        doc = dict(doc)
        d = Divisor.from_json(doc.pop("divisor"))
        target = doc.pop("target", None)
        cfg = cls(divisor=d, target=None if target is None else tuple(as_fraction(b) for b in target),
                  **{k: v for k, v in doc.items() if k in cls.__dataclass_fields__})
        if cfg.target is not None and len(cfg.target) != d.m:
            raise ValueError("target length differs from the divisor")
        return cfg

    def to_json(self) -> dict:
        return {"divisor": self.divisor.to_json(),
                "target": None if self.target is None else [format_fraction(b) for b in self.target],
                "K": self.K, "grid": self.grid, "steps": self.steps, "params": self.params,
                "snapshot_every": self.snapshot_every, "theta_radii": list(self.theta_radii),
                "pohozaev": self.pohozaev}


def _curvature_input(spec):
    if isinstance(spec, str) and not spec.startswith("const:"):
        return SphereField.load(spec)
    return spec


def _grid_for(spec: str, points) -> SphereGrid:
    n_theta, n_phi = parse_grid(spec)
    return SphereGrid.avoiding(n_theta, n_phi, points)


def _theta_block(res: SolveResult, radii_h) -> list:
    out = []
    h = res.grid.h
    for i in range(1, res.divisor.m + 1):
        try:
            est = theta_estimate(res, res.K, None, i, [r * h for r in radii_h])
            out.append({"site": i, "radii": est.radii.tolist(), "values": est.values.tolist(),
                        "theta": est.extrapolated})
        except ValueError as exc:
            out.append({"site": i, "error": str(exc)})
    return out


def sweep(config: SweepConfig | dict, out_dir: str | Path | None = None,
          record_name: str = "record.json") -> RunRecord:
    """Continuation sweep with per-step diagnostics, persisted under ``out_dir``.

    Field snapshots (regular part ``w``) are written for every step that did
    not converge, every ``snapshot_every``-th step and the last step.  If the
    path ends in a collapse, the final step is matched against the collapse
    certificates of its coefficients.
    """
    cfg = config if isinstance(config, SweepConfig) else SweepConfig.from_json(config)
    d0 = cfg.divisor
    d1 = d0 if cfg.target is None else d0.with_beta(cfg.target)
    grid = _grid_for(cfg.grid, d0.point_array)
    params = SolveParams(**cfg.params)
    K = _curvature_input(cfg.K)
    rec = RunRecord(inputs={**cfg.to_json(), "resolved_params": params.to_json()},
                    environment={"grid": cfg.grid, "n_theta": grid.n_theta, "n_phi": grid.n_phi,
                                 "rotation": grid.rotation.tolist(), "h": grid.h,
                                 "numpy": np.__version__, "python": platform.python_version()})
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    steps = 0 if cfg.target is None else cfg.steps
    results = continuation_sweep(d0, d1, K, grid, steps, params)
    n = len(results)
    for k, res in enumerate(results):
        tau = Fraction(k, steps) if steps else Fraction(1)
        entry = {"step": k, "tau": format_fraction(tau),
                 "beta": [format_fraction(b) for b in res.divisor.beta],
                 "status": res.status, "residual": res.residual_sup,
                 "newton_iters": res.newton_iters, "mean_u": res.mean_u, "area": res.area,
                 "gauss_bonnet_deviation": gauss_bonnet(res, res.K).deviation,
                 "theta_estimates": _theta_block(res, cfg.theta_radii),
                 "matched_certificates": None, "snapshot": None}
        if k == n - 1 and res.status == "collapsed":
            ests = [theta_estimate(res, res.K, None, i, [r * grid.h for r in cfg.theta_radii])
                    for i in range(1, res.divisor.m + 1)]
            entry["matched_certificates"] = match_certificate(ests, res.divisor).to_json()
        if k == n - 1 and cfg.pohozaev and res.status == "converged":
            ps = pohozaev(res, res.K, cfg.pohozaev.get("center", 1), cfg.pohozaev["radii"],
                          exclusion=4 * grid.h)
            rec.extras["pohozaev"] = {"step": k, **ps.to_json()}
        snap = res.status != "converged" or k == n - 1 or (
            cfg.snapshot_every > 0 and k % cfg.snapshot_every == 0)
        if snap and out is not None:
            name = f"step_{k:03d}_w.bin"
            res.w.save(out / name)
            entry["snapshot"] = name
        rec.append_step(entry)
        rec.timings[f"step_{k:03d}"] = res.elapsed
    rec.timings["total"] = time.perf_counter() - t0
    if out is not None:
        rec.save(out / record_name)
    return rec


def load_run(path: str | Path, step: int = -1):
    """Return ``(divisor, K, w)`` of a stored step that has a snapshot."""
    rec = path if isinstance(path, RunRecord) else RunRecord.load(path)
    base = rec.path.parent if rec.path is not None else Path(".")
    entry = rec.steps[step]
    if not entry.get("snapshot"):
        raise ValueError(f"step {entry['step']} has no field snapshot")
    w = SphereField.load(base / entry["snapshot"])
    d = Divisor.from_json(rec.inputs["divisor"]).with_beta(entry["beta"])
    K = _curvature_input(rec.inputs.get("K", "const:1"))
    return d, K, w


# synthetic families ------------------------------------------------------------------------

@dataclass
class SyntheticFamily:
    """A concentrating family that realizes a collapse certificate.

    ``certificate`` must have every bubble placed: marked sites, and free
    sites in the order of ``free_points``.  ``eps`` is the ladder of bubble
    scales at ``loaded_site`` (a 1-based marked index, or ``"free:k"``);
    other bubbled sites concentrate at the rate forced by a common constant.
    ``K`` is a positive constant.
    """

    divisor: Divisor
    certificate: BubbleConfig
    eps: Sequence[float]
    loaded_site: int | str | None = None
    free_points: Sequence | None = None
    K: float = 1.0
    grid: str | SphereGrid = "256x128"


@dataclass
class _Site:
    x: np.ndarray
    beta: float
    theta: float      # concentration value (radians of curvature)
    mass: float       # bubble mass theta + 2 pi beta
    label: object

    @property
    def a(self) -> float:
        return self.mass / (2 * math.pi)

    @property
    def tail(self) -> float:
        return 2 * self.a - 2 - 2 * self.beta


@dataclass
class SyntheticMember:
    eps: float
    c: float
    site_eps: dict
    factor: ConformalFactor
    grid: SphereGrid

    @property
    def field(self) -> SphereField:
        return self.grid.field(self.factor(self.grid.nodes), name=f"u_eps={self.eps!r}")


def _default_free_points(d: Divisor, n: int) -> list[np.ndarray]:
    cand = SphereGrid(16, 32).nodes.reshape(-1, 3)
    chosen: list[np.ndarray] = []
    taken = list(d.point_array)
    for _ in range(n):
        if taken:
            gap = np.min(np.stack([geodesic_distance(cand, p) for p in taken]), axis=0)
        else:
            gap = -cand[:, 2]
        x = cand[int(np.argmax(gap))]
        chosen.append(x)
        taken.append(x)
    return chosen


def _sites(fam: SyntheticFamily) -> tuple[list[_Site], list[_Site]]:
    d = fam.divisor
    if fam.certificate.regime not in COLLAPSE_REGIMES:
        raise DomainError("synthetic families realize collapse certificates only")
    free_cfg = [s for s in fam.certificate.sites if s.site is None]
    pts = list(fam.free_points) if fam.free_points is not None else _default_free_points(d, len(free_cfg))
    if len(pts) != len(free_cfg):
        raise ValueError("one point per free site is required")
    bubbled, plain = [], []
    free_iter = iter(pts)
    for s in fam.certificate.sites:
        if s.site is None:
            x, beta, label = np.asarray(next(free_iter), float), 0.0, f"free:{free_cfg.index(s) + 1}"
        else:
            x, beta, label = d.point_array[s.site - 1], float(d.beta[s.site - 1]), s.site
        theta = float(s.theta) * math.pi
        site = _Site(x / np.linalg.norm(x), beta, theta, theta + 2 * math.pi * beta, label)
        if s.bubbles == 0:
            plain.append(site)
        else:
            if site.a <= 1 + beta:
                raise DomainError(f"site {label}: bubble mass too small for a finite-area profile")
            bubbled.append(site)
    return bubbled, plain


def synthesize_family(spec: SyntheticFamily) -> list[SyntheticMember]:
    """Build the family ``u_eps`` for each rung of the ladder.

    With ``V = -sum_s (Theta_s / 2 pi) ln|x - x_s|`` over all sites,

        u_eps = c + V - sum_{bubbled s} ln(1 + (eps_s / tan(gamma_s / 2))^{a_s}),

    ``gamma_s`` the geodesic distance to ``x_s`` and ``a_s`` the bubble mass
    over ``2 pi``.  Each bubble carries mass ``a_s 2 pi`` as ``c -> -inf``;
    with ``p_s = 2 a_s - 2 - 2 beta_s`` the scales obey
    ``eps_s^{p_s} = 4 K E_s Gamma(k) Gamma(2 - k) / a_s^2``, ``k = (2 + 2 beta_s) / a_s``,
    ``E_s = e^{2 c + 2 R_s} 2^{2 (beta_s - a_s)}`` and ``R_s`` the value of the
    other terms of ``V`` at ``x_s``.  A single bubble with ``a = 2 + 2 beta``
    reproduces a dilated round sphere or football exactly.

    Raises
    ------
    ValueError
        If a rung is below ``16 h`` for the family's grid, or the ladder is
        not decreasing.
    DomainError
        For non-collapse certificates or bubble masses without finite area.
    """
    d = spec.divisor
    grid = spec.grid if isinstance(spec.grid, SphereGrid) else _grid_for(spec.grid, d.point_array)
    eps = [float(e) for e in spec.eps]
    if any(b >= a for a, b in zip(eps, eps[1:])) or not eps:
        raise ValueError("eps ladder must be strictly decreasing")
    if eps[-1] < 16 * grid.h:
        raise ValueError(f"eps = {eps[-1]:.3g} is below the grid resolution 16h = {16 * grid.h:.3g}")
    if spec.K <= 0:
        raise ValueError("curvature must be positive")
    bubbled, plain = _sites(spec)
    if not bubbled:
        raise DomainError("certificate has no bubble")
    allsites = bubbled + plain
    if spec.loaded_site is None:
        loaded = bubbled[0]
    else:
        match = [s for s in bubbled if s.label == spec.loaded_site]
        if not match:
            raise ValueError(f"site {spec.loaded_site} carries no bubble")
        loaded = match[0]

    def R(site):
        return sum(-(o.theta / (2 * math.pi)) * math.log(np.linalg.norm(site.x - o.x))
                   for o in allsites if o is not site)

    def G(site):
        k = (2 + 2 * site.beta) / site.a
        return float(gamma(k) * gamma(2 - k))

    marked_pts = d.point_array
    marked_beta = d.beta_float
    members = []
    for e in eps:
        s = loaded
        e2c = (e ** s.tail * s.a ** 2 / (4 * spec.K * G(s) * math.exp(2 * R(s))
                                          * 2.0 ** (2 * (s.beta - s.a))))
        c = 0.5 * math.log(e2c)
        site_eps = {}
        for b in bubbled:
            E = math.exp(2 * c + 2 * R(b)) * 2.0 ** (2 * (b.beta - b.a))
            site_eps[b.label] = (4 * spec.K * E * G(b) / b.a ** 2) ** (1 / b.tail)
        members.append(SyntheticMember(e, c, site_eps,
                                       _family_factor(c, bubbled, site_eps, marked_pts, marked_beta),
                                       grid))
    return members


def _family_factor(c, bubbled, site_eps, marked_pts, marked_beta) -> ConformalFactor:
    """Regular part ``u - sum beta_i ln|x - p_i|`` in a form smooth at every site."""
    bub = [(b.x, b.a, site_eps[b.label]) for b in bubbled]

    def w(x):
        x = np.asarray(x, float)
        out = np.full(x.shape[:-1], c)
        for xs, a, es in bub:
            cosg = np.clip(x @ xs, -1.0, 1.0)
            half_cos = np.sqrt(0.5 * (1 + cosg))
            half_sin = np.sqrt(0.5 * (1 - cosg))
            # -a ln|x - xs| - ln(1 + (eps/tan)^a) = -ln((2 eps cos)^a + (2 sin)^a)
            with np.errstate(divide="ignore"):
                out -= np.logaddexp(a * np.log(2 * es * half_cos), a * np.log(2 * half_sin))
        return out

    # a marked site carries (beta - a) ln|x - p|: S holds beta ln, w the rest
    return ConformalFactor(marked_pts, marked_beta, w)


def family_theta(members: Sequence[SyntheticMember], d: Divisor, site, radii,
                 K: float = 1.0, order: float | None = None, terms: int = 2,
                 spec: SyntheticFamily | None = None) -> tuple[list[ThetaEstimate], ThetaEstimate]:
    """Per-rung estimates at ``site`` and their ladder limit (``eps -> 0`` then ``r -> 0``).

    ``order`` is the power of ``eps`` in the ladder fit; by default the
    smallest tail exponent ``2 a_s - 2 - 2 beta_s`` of the family.
    """
    ests = []
    for m in members:
        inner = min(m.site_eps.values()) / 8
        ests.append(theta_estimate(m.factor, K, d, site, radii, method="polar", inner=inner))
    if order is None:
        if spec is None:
            order = 1.0
        else:
            order = min(b.tail for b in _sites(spec)[0])
    return ests, ladder_theta(ests, [m.eps for m in members], order=order, terms=terms)


# plot data ---------------------------------------------------------------------------------

def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write(path, buf.getvalue().encode())
    return path


def emit_plots(record: RunRecord | str | Path, out_dir: str | Path) -> dict:
    """Write CSV plot data for a record; returns ``{name: path}``.

    * ``area.csv``: ``step,tau,area,status``
    * ``mean_u.csv``: ``step,tau,mean_u,status``
    * ``theta.csv``: ``step,site,r,value``
    * ``pohozaev.csv``: ``t,P`` (when the record carries a Pohozaev series)

    Floats are written with ``repr`` so that parsing reproduces them exactly.
    """
    rec = record if isinstance(record, RunRecord) else RunRecord.load(record)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    steps = rec.steps

    def tau(s):
        return float(Fraction(s["tau"]))

    files["area"] = _write_csv(out / "area.csv", ["step", "tau", "area", "status"],
                               [(s["step"], tau(s), float(s["area"]), s["status"]) for s in steps])
    files["mean_u"] = _write_csv(out / "mean_u.csv", ["step", "tau", "mean_u", "status"],
                                 [(s["step"], tau(s), float(s["mean_u"]), s["status"]) for s in steps])
    rows = []
    for s in steps:
        for t in s.get("theta_estimates") or []:
            for r, v in zip(t.get("radii", []), t.get("values", [])):
                rows.append((s["step"], t["site"], float(r), float(v)))
    files["theta"] = _write_csv(out / "theta.csv", ["step", "site", "r", "value"], rows)
    ps = rec.extras.get("pohozaev")
    if ps:
        files["pohozaev"] = _write_csv(out / "pohozaev.csv", ["t", "P"],
                                       [(float(t), float(p)) for t, p in zip(ps["radii"], ps["P"])])
    return files
