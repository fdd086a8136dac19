"""Batch command-line front end.

Every JSON document embeds the run configuration and the package version.
Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import evolve as ev
from . import exceptional as ex
from . import oracle as orc
from . import riesz as rz
from . import spectrum as sp
from .core import ParameterError, Regime, classify, draw_params, make_params

PI = math.pi


class CheckFailed(RuntimeError):
    """A computed artifact violates its own acceptance bound."""


def _threads() -> int:
    raw = os.environ.get("GUIDE_SPECTRA_THREADS", "")
    try:
        return max(1, int(raw)) if raw else max(1, min(8, os.cpu_count() or 1))
    except ValueError:
        raise ParameterError(f"GUIDE_SPECTRA_THREADS must be an integer, got {raw!r}")


def _pmap(fn: Callable, items: Sequence) -> List:
    """Ordered parallel map capped by GUIDE_SPECTRA_THREADS."""
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _clean(obj.real), "im": _clean(obj.imag)}
    return obj


def _dump_json(doc: Dict, path: Optional[str]):
    text = json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"
    _write(text, path)


def _write(text: str, path: Optional[str]):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _envelope(args, result: Dict) -> Dict:
    return {"version": __version__, "command": args.command, "config": _config_of(args),
            "result": result}


def _config_of(args) -> Dict:
    skip = {"command", "func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _params(args):
    return make_params(args.a, args.b, args.ell)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _csv(header: Sequence[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def cmd_spectrum(args) -> int:
    p = _params(args)
    s = sp.compute_spectrum(p, n_max=args.n_max)
    _dump_json(_envelope(args, sp.spectrum_to_dict(s)), args.output)
    return 0


def cmd_weyl(args) -> int:
    p = _params(args)
    if not args.r_max > 0:
        raise ParameterError("--r-max must be positive")
    n_max = max(5, int(math.ceil(math.sqrt(args.r_max) / p.nu)) + 2)
    s = sp.compute_spectrum(p, n_max=n_max)
    rs = np.geomspace(args.r_max * 1e-3, args.r_max, args.points)
    rows, ok = [], True
    for r in rs:
        n = sp.weyl_count(s, float(r))
        lo, hi = sp.weyl_bounds(s, float(r))
        ok &= lo <= n <= hi
        rows.append((float(r), n, lo, hi))
    _write(_csv(["r", "N", "lower_bound", "upper_bound"], rows), args.output)
    if not ok:
        raise CheckFailed("Weyl bounds violated on at least one row")
    return 0


def cmd_theta(args) -> int:
    if args.k_max < 0:
        raise ParameterError("--k-max must be >= 0")
    if not args.ell > 0:
        raise ParameterError("--ell must be positive")
    pts = _pmap(lambda k: ex.theta_point(k, args.ell), list(range(args.k_max + 1)))
    _write(ex.theta_table_csv(pts), args.output)
    bad = [t.k for t in pts if max(t.phi_abs, t.phi_prime_abs) > 1e-10]
    if bad:
        raise CheckFailed(f"double-zero certificate fails for k = {bad}")
    return 0


def cmd_riesz(args) -> int:
    p = _params(args)
    fam = rz.family_for(p, args.n)
    g = rz.gram_matrix(fam)
    lam_min, lam_max = rz.riesz_condition(g)
    result = {"N": args.n, "lambda_min": lam_min, "lambda_max": lam_max,
              "ratio": lam_max / lam_min, "c1": fam.c1,
              "max_member_residual": float(np.max(fam.residuals)),
              "quadrature_panels": fam.grid.panels}
    if args.gram_csv:
        rows = [(j, k, g[j, k].real, g[j, k].imag) for j in range(fam.size) for k in range(fam.size)]
        _write(_csv(["j", "k", "re", "im"], rows), args.gram_csv)
    _dump_json(_envelope(args, result), args.output)
    return 0


def cmd_evolve(args) -> int:
    p = _params(args)
    if not (args.dt > 0 and args.t_end > 0):
        raise ParameterError("--dt and --t-end must be positive")
    op = orc.DiscreteOperator(p, args.n_h)
    if classify(p) is Regime.DECOUPLED:
        u = ev.sample_mode(op, rz.reference_family(p, 4).members[2])
        u /= math.sqrt(ev.energy(op, u))
    else:
        s = sp.compute_spectrum(p, n_max=max(5, args.max_strip))
        u = ev.random_modal_data(p, op, s.eigenvalues, args.seed, args.max_strip)
    state = ev.new_state(op, u)
    steps = int(round(args.t_end / args.dt))
    ev.CrankNicolson(op, args.dt).run(state, steps, record_every=args.record_every)
    _write(ev.trace_csv(state.trace), args.output)
    meta = {"seed": args.seed, "steps": steps, "final_energy": state.trace[-1].energy,
            "energy_monotone": ev.energy_monotone(state.trace)}
    if args.record_every == 1:
        meta["balance_residual"] = ev.energy_balance_residual(state.trace, p.a)
    try:
        meta["fitted_rate"] = ev.fit_decay_rate(state.trace, args.t_end / 2)
    except ev.InsufficientDecay as exc:
        meta["fitted_rate"] = None
        meta["fit_note"] = str(exc)
    if args.meta:
        _dump_json(_envelope(args, meta), args.meta)
    return 0


def cmd_resolvent(args) -> int:
    p = _params(args)
    if not (args.re_min < args.re_max and args.im_min < args.im_max):
        raise ParameterError("need re_min < re_max and im_min < im_max")
    s = sp.compute_spectrum(p, n_max=max(5, int(math.sqrt(max(abs(args.re_min), abs(args.re_max))
                                                         + abs(args.im_max)) / p.nu) + 3))
    m = s.m
    op = orc.DiscreteOperator(p, args.n_h)
    grid = [complex(x, y) for y in np.linspace(args.im_min, args.im_max, args.points)
            for x in np.linspace(args.re_min, args.re_max, args.points)]

    def one(z):
        est = orc.resolvent_norm(op, z)
        d = sp.dist_to_sigma(s, z)
        return (z.real, z.imag, est, d, m, est * sp.s_bracket_m(d, m))

    rows = _pmap(one, grid)
    _write(_csv(["re_zeta", "im_zeta", "estimate", "dist", "m", "product"], rows), args.output)
    return 0


def cmd_crosscheck(args) -> int:
    regimes = list(Regime) if args.regime == "all" else [Regime(args.regime)]
    rng = np.random.default_rng(args.seed)
    cases = []
    for ell in args.ells:
        for reg in regimes:
            for _ in range(args.draws):
                cases.append(draw_params(reg, rng, ell))
    reports = _pmap(lambda p: orc.cross_validate(p, args.strips, args.n_h), cases)
    all_ok = all(r["ok"] for r in reports)
    _dump_json(_envelope(args, {"ok": all_ok, "cases": reports}), args.output)
    if not all_ok:
        raise CheckFailed("cross-oracle mismatch")
    return 0


def _add_params(sp_: argparse.ArgumentParser, need_ab: bool = True):
    if need_ab:
        sp_.add_argument("--a", type=float, default=1.0, help="boundary damping coefficient")
        sp_.add_argument("--b", type=float, default=0.3, help="boundary coupling coefficient")
    sp_.add_argument("--ell", type=float, default=PI, help="guide width")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    ap = argparse.ArgumentParser(prog="guide-spectra", formatter_class=fmt,
                                 description="Spectra of a dissipative two-component wave guide.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", default=None,
                    help="JSON file with option values (keys as in the reference config)")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("spectrum", formatter_class=fmt, help="eigenvalues as JSON")
    _add_params(c)
    c.add_argument("--n-max", type=int, default=10, help="highest certified strip")
    c.add_argument("--output", default="-")
    c.set_defaults(func=cmd_spectrum)

    c = sub.add_parser("weyl", formatter_class=fmt, help="counting function vs bounds (CSV)")
    _add_params(c)
    c.add_argument("--r-max", type=float, default=400.0)
    c.add_argument("--points", type=int, default=50)
    c.add_argument("--output", default="-")
    c.set_defaults(func=cmd_weyl)

    c = sub.add_parser("theta", formatter_class=fmt, help="double-eigenvalue parameter table (CSV)")
    _add_params(c, need_ab=False)
    c.add_argument("--k-max", type=int, default=4)
    c.add_argument("--output", default="-")
    c.set_defaults(func=cmd_theta)

    c = sub.add_parser("riesz", formatter_class=fmt, help="Gram conditioning (JSON)")
    _add_params(c)
    c.add_argument("--n", type=int, default=50, help="family size (even)")
    c.add_argument("--gram-csv", default=None, help="optional path for the normalized Gram matrix")
    c.add_argument("--output", default="-")
    c.set_defaults(func=cmd_riesz)

    c = sub.add_parser("evolve", formatter_class=fmt, help="Crank-Nicolson energy trace (CSV)")
    _add_params(c)
    c.add_argument("--n-h", type=int, default=800)
    c.add_argument("--dt", type=float, default=0.01)
    c.add_argument("--t-end", type=float, default=10.0)
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("--max-strip", type=int, default=3, help="modes up to this strip in the data")
    c.add_argument("--record-every", type=int, default=1)
    c.add_argument("--output", default="-")
    c.add_argument("--meta", default=None, help="path for the run metadata JSON")
    c.set_defaults(func=cmd_evolve)

    c = sub.add_parser("resolvent", formatter_class=fmt, help="resolvent norm sweep (CSV)")
    _add_params(c)
    c.add_argument("--n-h", type=int, default=800)
    c.add_argument("--re-min", type=float, default=-20.0)
    c.add_argument("--re-max", type=float, default=20.0)
    c.add_argument("--im-min", type=float, default=0.0)
    c.add_argument("--im-max", type=float, default=5.0)
    c.add_argument("--points", type=int, default=11, help="grid points per axis")
    c.add_argument("--output", default="-")
    c.set_defaults(func=cmd_resolvent)

    c = sub.add_parser("crosscheck", formatter_class=fmt,
                       help="characteristic zeros vs shooting and finite differences")
    c.add_argument("--regime", default="all", choices=["all"] + [r.value for r in Regime])
    c.add_argument("--draws", type=int, default=2)
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("--ells", type=float, nargs="+", default=[1.0, PI])
    c.add_argument("--strips", type=int, default=9, help="strips C_0 .. C_{strips-1}")
    c.add_argument("--n-h", type=int, default=800)
    c.add_argument("--output", default="-")
    c.set_defaults(func=cmd_crosscheck)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: Sequence[str]):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        ap.error(f"cannot read config {known.config}: {exc}")
    subs = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    for name, parser in subs.choices.items():
        section = cfg.get(name, {})
        if not isinstance(section, dict):
            ap.error(f"config section {name!r} must be an object")
        valid = {a.dest for a in parser._actions}
        unknown = set(section) - valid
        if unknown:
            ap.error(f"unknown keys in config section {name!r}: {sorted(unknown)}")
        parser.set_defaults(**section)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    _apply_config(ap, argv)
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, ValueError) as exc:
        print(f"guide-spectra: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical failure in any module
        print(f"guide-spectra: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
