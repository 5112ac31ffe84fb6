"""Command-line entry point ``ssl``.

Exit codes: 0 success (``check``: admissible), 1 ``check`` found violations,
2 invalid input or domain error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .admissibility import NotAMemberError, dey_criterion, in_A_m, margin
from .bubbles import REGIMES, enumerate_all, oracle_enumerate, two_level_search_bound
from .diagnostics import COLLAPSE_REGIMES, match_certificate, pohozaev, theta_estimate
from .divisor import DomainError, Divisor, as_fraction, chi_pair, d1_odd_lattice, format_fraction
from .lab import (RunRecord, SweepConfig, SyntheticFamily, emit_plots, family_theta, load_run,
                  sweep, synthesize_family)
from .solver import football_exact, football_factor
from .sphere import ChartRangeError, SphereGrid, parse_grid

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--grid", default=dflt("256x128"), help="grid as NxM = n_phi x n_theta")
    parser.add_argument("--json", action="store_true", default=dflt(False),
                        help="machine-readable output")
    parser.add_argument("--out", default=dflt(None), help="output path or directory")
    parser.add_argument("--seed", type=int, default=dflt(None),
                        help="reserved; nothing is random")


def _beta_list(text: str) -> list:
    return [as_fraction(t) for t in text.split(",") if t.strip()] if text.strip() else []


def _divisor(args) -> Divisor:
    if getattr(args, "divisor", None):
        d = Divisor.from_json(Path(args.divisor))
        if getattr(args, "beta", None) is not None:
            d = d.with_beta(_beta_list(args.beta))
        return d
    if getattr(args, "beta", None) is None:
        raise DomainError("give --beta or --divisor")
    return Divisor.from_beta(_beta_list(args.beta))


def _emit(args, doc, text: str) -> None:
    if args.json:
        print(json.dumps(doc, indent=1, default=str))
    else:
        print(text)


def _float_list(text: str) -> list[float]:
    return [float(as_fraction(t)) for t in text.split(",") if t.strip()]


def _radii(text: str) -> np.ndarray:
    """``r0:r1:n`` (geometric) or a comma list."""
    if ":" in text:
        a, b, n = text.split(":")
        return np.geomspace(float(a), float(b), int(n))
    return np.asarray(_float_list(text))


def _point(text: str, d: Divisor | None):
    """Marked index ``i`` or ``lon,lat`` in degrees."""
    if "," in text:
        lon, lat = (math.radians(float(t)) for t in text.split(","))
        return (lon, lat)
    return int(text)


# commands ------------------------------------------------------------------------------------

def cmd_check(args) -> int:
    d = _divisor(args)
    verdict = in_A_m(d, strict_literal=args.strict_literal)
    doc = {"beta": [format_fraction(b) for b in d.beta], **verdict.to_json()}
    lines = [f"beta = ({', '.join(map(str, d.beta))})",
             f"chi/2 = {verdict.half_chi}", f"index set F = {{{', '.join(map(str, verdict.index_set))}}}"]
    if d.m:
        lw = d1_odd_lattice(d)
        dey = dey_criterion(d)
        doc["d1"] = {"distance": format_fraction(lw.distance), "witness": list(lw.witness)}
        doc["dey"] = dey.to_json()
        lines.append(f"d1 to odd lattice = {lw.distance}, witness {lw.witness}")
        lines.append(f"Dey criterion holds: {dey.holds}")
    for J, v in verdict.subset_values.items():
        lines.append(f"  J = {{{', '.join(map(str, J))}}}: chi/2 - sum_J beta = {v}")
    if verdict.member:
        mg = margin(d)
        doc["margin"] = mg.to_json()
        lines.append(f"member: yes (margin {mg.value} at '{mg.attaining_constraint}', "
                     f"K-direction {mg.k_direction})")
    else:
        lines.append("member: no")
        for v in verdict.violations:
            lines.append(f"  violation {v.kind} J={list(v.subset)} value={v.hit_value}")
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK if verdict.member else EXIT_VIOLATION


_REGIME_ALIASES = {"one-level": ("collapse_one_level",), "two-level": ("collapse_two_level",),
                   "c1": ("collapse_C1",), "all": REGIMES}


def cmd_enumerate(args) -> int:
    d = _divisor(args)
    regimes = []
    for name in args.regime or ["all"]:
        for r in _REGIME_ALIASES.get(name, (name,)):
            if r not in regimes:
                regimes.append(r)
    if args.oracle_bound is not None:
        args.oracle, args.bound = True, args.oracle_bound
    if args.oracle:
        configs = oracle_enumerate(d, args.bound, regimes)
    else:
        configs = enumerate_all(d, regimes)
    doc = {"beta": [format_fraction(b) for b in d.beta], "regimes": regimes,
           "two_level_search_bound": two_level_search_bound(d) if chi_pair(d).chi > 0 else None,
           "certificates": [c.to_json() for c in configs]}
    lines = [f"{len(configs)} certificate(s)"]
    for k, c in enumerate(configs):
        sites = "; ".join(f"{'free' if s.site is None else s.site}: {s.theta}π ({s.kind})"
                          for s in c.sites)
        flag = " [beyond_paper]" if c.beyond_paper else ""
        lines.append(f"[{k}] {c.regime} s1={c.s1} s2={c.s2} singular={list(c.singular)}{flag} | {sites}")
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


def _continuation(text: str | None) -> dict:
    params = {}
    for item in (text or "").split(","):
        if not item.strip():
            continue
        key, _, val = item.partition("=")
        key = key.strip()
        if key == "steps":
            params["continuation_steps"] = int(val)
        elif key in ("tol", "newton_tol"):
            params["newton_tol"] = float(val)
        elif key == "max_newton":
            params["max_newton"] = int(val)
        else:
            raise DomainError(f"unknown continuation option {key!r}")
    return params


def _record_target(out: str | None, default_dir: str) -> tuple[Path, str]:
    path = Path(out or default_dir)
    if path.suffix == ".json":
        return path.parent if str(path.parent) else Path("."), path.name
    return path, "record.json"


def cmd_solve(args) -> int:
    d = _divisor(args)
    parse_grid(args.grid)
    cfg = SweepConfig(divisor=d, target=None, K=args.K, grid=args.grid, steps=0,
                      params=_continuation(args.continuation))
    out_dir, name = _record_target(args.out, "run")
    rec = sweep(cfg, out_dir, name)
    step = rec.steps[-1]
    doc = {"record": str(out_dir / name), **{k: step[k] for k in
                                             ("status", "residual", "mean_u", "area",
                                              "gauss_bonnet_deviation", "newton_iters")}}
    _emit(args, doc, "\n".join(f"{k}: {v}" for k, v in doc.items()))
    return EXIT_OK


def cmd_football(args) -> int:
    beta = float(as_fraction(args.beta))
    n_theta, n_phi = parse_grid(args.grid)
    axis = np.asarray(_float_list(args.axis), float)
    grid = SphereGrid.avoiding(n_theta, n_phi, np.stack([axis, -axis]) / np.linalg.norm(axis))
    u = football_exact(beta, grid, axis)
    doc = {"beta": beta, "grid": args.grid, "axis": axis.tolist(),
           "area": float(np.sum(grid.weights * np.exp(2 * u.values)))}
    if args.out:
        doc["field"] = str(u.save(args.out))
    _emit(args, doc, "\n".join(f"{k}: {v}" for k, v in doc.items()))
    return EXIT_OK


def _run_factor(args):
    if args.football is not None:
        beta = float(as_fraction(args.football))
        axis = np.array([0.0, 0.0, 1.0])
        d = Divisor.from_beta([args.football, args.football], points=[axis, -axis])
        return football_factor(beta, axis), d, 1.0
    if not args.run:
        raise DomainError("give --run or --football")
    d, K, w = load_run(args.run)
    from .solver import ConformalFactor
    return ConformalFactor(d.point_array, d.beta_float, w), d, K


def _csv(path, header, rows) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) for v in row])


def cmd_pohozaev(args) -> int:
    fac, d, K = _run_factor(args)
    ps = pohozaev(fac, K, _point(args.center, d), _radii(args.radii), d=d)
    doc = ps.to_json()
    if args.csv:
        _csv(args.csv, ["t", "P"], zip(ps.radii, ps.P_values))
        doc["csv"] = args.csv
    text = "\n".join(f"t={float(t)!r} P={float(p)!r}" for t, p in zip(ps.radii, ps.P_values))
    text += f"\nlimit P(0+) = {ps.limit!r}; relative variation {ps.relative_variation:.3e}"
    _emit(args, doc, text)
    return EXIT_OK


def cmd_theta(args) -> int:
    fac, d, K = _run_factor(args)
    if args.run:
        h = load_run(args.run)[2].grid.h
    else:
        h = SphereGrid.from_string(args.grid).h
    sites = range(1, d.m + 1) if args.sites == "all" else [_point(s, d) for s in args.sites.split(";")]
    radii = [r * h for r in _float_list(args.radii_h)]
    ests = [theta_estimate(fac, K, d, s, radii, min_radius=8 * h) for s in sites]
    doc = {"estimates": [e.to_json() for e in ests]}
    if args.csv:
        _csv(args.csv, ["site", "r", "value"],
             [(k + 1, r, v) for k, e in enumerate(ests) for r, v in zip(e.radii, e.values)])
        doc["csv"] = args.csv
    text = "\n".join(f"site {e.site_index or e.site.tolist()}: theta^ = {e.extrapolated!r} "
                     f"(= {e.extrapolated / math.pi:.6f} pi)" for e in ests)
    _emit(args, doc, text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = SweepConfig.from_json(Path(args.config))
    if args.grid_given:
        cfg.grid = args.grid
    out_dir, name = _record_target(args.out, "sweep")
    rec = sweep(cfg, out_dir, name)
    doc = {"record": str(out_dir / name),
           "steps": [{k: s[k] for k in ("step", "tau", "status", "area", "mean_u")} for s in rec.steps]}
    text = "\n".join(f"step {s['step']} tau={s['tau']} {s['status']} area={s['area']!r} "
                     f"mean_u={s['mean_u']!r}" for s in rec.steps)
    _emit(args, doc, text + f"\nrecord: {out_dir / name}")
    return EXIT_OK


def cmd_synth(args) -> int:
    d = _divisor(args)
    configs = enumerate_all(d, COLLAPSE_REGIMES)
    if not configs:
        _emit(args, {"message": "no collapse certificate"}, "no collapse certificate")
        return EXIT_INPUT
    if not 0 <= args.certificate < len(configs):
        raise DomainError(f"certificate index out of range 0..{len(configs) - 1}")
    cert = configs[args.certificate]
    free = None
    if args.free_points:
        free = [np.asarray(_float_list(p), float) for p in args.free_points.split(";")]
    fam = SyntheticFamily(d, cert, _float_list(args.eps), loaded_site=None, free_points=free,
                          grid=args.grid)
    members = synthesize_family(fam)
    radii = _float_list(args.radii)
    ests = []
    for i in range(1, d.m + 1):
        _, lim = family_theta(members, d, i, radii, spec=fam, terms=args.terms)
        ests.append(lim)
    report = match_certificate(ests, d)
    doc = {"certificate": cert.to_json(),
           "rungs": [{"eps": m.eps, "c": m.c, "site_eps": {str(k): v for k, v in m.site_eps.items()}}
                     for m in members],
           "theta": [{"site": e.site_index, "theta": e.extrapolated} for e in ests],
           "match": report.to_json()}
    text = [f"emulating {cert.regime} singular={list(cert.singular)}"]
    text += [f"site {e.site_index}: theta^ = {e.extrapolated / math.pi:.5f} pi" for e in ests]
    if report.best:
        text.append(f"best match score {report.best.score:.4f}: {report.best.config.regime} "
                    f"singular={list(report.best.config.singular)}")
    _emit(args, doc, "\n".join(text))
    return EXIT_OK


def cmd_emit(args) -> int:
    rec = RunRecord.load(args.run)
    files = emit_plots(rec, args.out or "plots")
    _emit(args, {k: str(v) for k, v in files.items()},
          "\n".join(f"{k}: {v}" for k, v in files.items()))
    return EXIT_OK


# parser --------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(prog="ssl", description="Cone spherical metrics: exact "
                                   "admissibility, bubble certificates and numerical diagnostics.")
    _global_flags(root, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = root.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    def divisor_args(p):
        p.add_argument("--beta", help="comma-separated rationals, e.g. 1/2,-1/3")
        p.add_argument("--divisor", help="JSON file with points and beta")

    p = add("check", cmd_check, "exact admissibility, index set, lattice distance, margin")
    divisor_args(p)
    p.add_argument("--strict-literal", action="store_true",
                   help="forbid only |J| and |J|+1 in the subset condition")
    p = add("enumerate", cmd_enumerate, "list bubble-tree certificates")
    divisor_args(p)
    p.add_argument("--regime", action="append", choices=list(REGIMES) + list(_REGIME_ALIASES),
                   help="regime name or alias (one-level, two-level, noncollapse, c1, all)")
    p.add_argument("--oracle", action="store_true", help="use the brute-force oracle")
    p.add_argument("--bound", type=int, default=6, help="per-site box of the oracle")
    p.add_argument("--oracle-bound", type=int, help="same as --oracle --bound N")
    p = add("solve", cmd_solve, "solve for a cone metric and write a run record")
    divisor_args(p)
    p.add_argument("--K", default="const:1", help="const:c or a field file")
    p.add_argument("--continuation", default="steps=8", help="steps=N[,tol=T][,max_newton=M]")
    p = add("football", cmd_football, "write the closed-form football field")
    p.add_argument("--beta", required=True)
    p.add_argument("--axis", default="0,0,1")
    for name, func, help_ in (("pohozaev", cmd_pohozaev, "Pohozaev functional on chart circles"),
                              ("theta", cmd_theta, "concentration estimates at sites")):
        p = add(name, func, help_)
        p.add_argument("--run", help="run record with a field snapshot")
        p.add_argument("--football", help="use the closed-form football with this beta")
        p.add_argument("--csv")
    pz = sub.choices["pohozaev"]
    pz.add_argument("--center", default="1", help="marked index or lon,lat in degrees")
    pz.add_argument("--radii", default="0.05:0.8:16", help="r0:r1:n (geometric) or a list")
    th = sub.choices["theta"]
    th.add_argument("--sites", default="all", help="'all' or ';'-separated indices / lon,lat")
    th.add_argument("--radii-h", default="8,12,16,24", help="radii in units of h")
    p = add("sweep", cmd_sweep, "continuation sweep with diagnostics")
    p.add_argument("--config", required=True)
    p = add("synth", cmd_synth, "synthetic concentrating family for a collapse certificate")
    divisor_args(p)
    p.add_argument("--certificate", type=int, default=0, help="index in the collapse list")
    p.add_argument("--eps", default="0.2,0.1,0.05")
    p.add_argument("--radii", default="1.5707963267948966,1.1780972450961724,0.7853981633974483")
    p.add_argument("--terms", type=int, default=3)
    p.add_argument("--free-points", help="';'-separated x,y,z for free sites")
    p = add("emit", cmd_emit, "CSV plot data from a run record")
    p.add_argument("--run", required=True)
    return root


# flags whose values may start with '-' (negative rationals, coordinates)
_SIGNED_VALUE_FLAGS = {"--beta", "--football", "--axis", "--center", "--sites", "--free-points"}


def _glue_signed_values(raw: list[str]) -> list[str]:
    out, k = [], 0
    while k < len(raw):
        if raw[k] in _SIGNED_VALUE_FLAGS and k + 1 < len(raw):
            out.append(f"{raw[k]}={raw[k + 1]}")
            k += 2
        else:
            out.append(raw[k])
            k += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    raw = _glue_signed_values(list(sys.argv[1:] if argv is None else argv))
    args = parser.parse_args(raw)
    args.grid_given = any(a == "--grid" or a.startswith("--grid=") for a in raw)
    try:
        return args.func(args)
    except NotAMemberError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except (DomainError, ChartRangeError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
