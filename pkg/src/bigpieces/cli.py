"""Command-line front end.

Exit codes: 0 all requested checks pass, 1 a verification failed, 2 usage or
input error, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .construct import (TREE_RATIO, ConstructionError, ConstructionParams, calibrate_alpha,
                        collapse_bp_level, construct_superset, glue_unbounded, read_trace,
                        regular_extension, write_trace)
from .cubes import build_tree, read_tree, verify_center_ball, write_tree
from .families import OracleError
from .geometry import GeometryError, read_pcs, write_pcs
from .scenario import ScenarioError, load_scenario
from .verify import (VerificationReport, check_two_level_oracle, format_reports, read_reports,
                     verify_adr, verify_bp, verify_containment, verify_decay, verify_extension,
                     verify_gluing, verify_lemma1, verify_separation, verify_trace)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _emit(reports, args):
    text = format_reports(reports, getattr(args, "format", "json"))
    out = getattr(args, "output_report", None)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _write_tsv(path, header, rows):
    lines = ["\t".join(header)] + ["\t".join(repr(float(v)) if isinstance(v, float) else str(v) for v in r)
                                   for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _piece_oracles(scn):
    """Rebuild each traced piece's oracle from the scenario's scripted pieces."""
    def make(name, P):
        base = scn.piece(name).oracle(scn.delta)
        d, j = base.S.tree.query(P.points, k=1)
        if np.any(d > 1e-9):
            raise GeometryError(f"trace piece {name!r} is not a subset of the scenario piece")
        return base.restrict(j)
    return make


def _tree_for(args, E):
    if getattr(args, "tree", None):
        return read_tree(args.tree)
    T = build_tree(E, args.ratio)
    verify_center_ball(T)
    return T


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args):
    scn = load_scenario(args.scenario)
    out = Path(args.output)
    write_pcs(scn.E, out)
    info = {"E": str(out), "points": len(scn.E), "mass": scn.E.mass}
    if args.pieces:
        pieces = {}
        for p in scn.pieces:
            path = out.with_name(f"{out.stem}.{p.name.replace('+', '_')}.pcs")
            write_pcs(p.points, path)
            pieces[p.name] = str(path)
        info["pieces"] = pieces
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def cmd_cubes(args):
    E = read_pcs(args.pcs)
    T = build_tree(E, args.ratio)
    status = EXIT_OK
    try:
        c1, c2 = verify_center_ball(T)
    except GeometryError as exc:
        print(json.dumps({"error": "GeometryError", "message": str(exc)}), file=sys.stderr)
        status = EXIT_FAIL
        c1 = c2 = None
    if args.output:
        write_tree(T, args.output)
    print(json.dumps({"cubes": len(T.cubes), "levels": T.depth, "c1": c1, "c2": c2}, sort_keys=True))
    return status


def cmd_adr(args):
    S = read_pcs(args.pcs)
    rep = verify_adr(S, args.cap, args.scales, max(1, args.samples // args.scales), args.seed)
    if args.plot:
        from .geometry import estimate_adr

        r = estimate_adr(S, args.scales, max(1, args.samples // args.scales), args.seed)
        _write_tsv(args.plot, ["r", "ratio"], zip(r.radii.tolist(), r.ratios.tolist()))
    return _emit([rep], args)


def cmd_certify_bp(args):
    S = read_pcs(args.pcs)
    rep = verify_bp(S, args.theta, args.L, args.samples, args.seed, orientation_grid=args.orientations)
    return _emit([rep], args)


def cmd_extend(args):
    G = read_pcs(args.pcs)
    E = read_pcs(args.ambient)
    Gt, tr = regular_extension(G, E, args.A)
    write_pcs(Gt, args.output)
    if args.trace:
        Path(args.trace).write_text(json.dumps(tr.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps({"points": len(Gt), "rounds": len(tr.rounds), "D": tr.D}, sort_keys=True))
    return EXIT_OK


def _params(args):
    return ConstructionParams(alpha=args.alpha, max_stages=args.max_stages, residual_tol=args.residual_tol,
                              A_ext=args.A_ext)


def cmd_construct(args):
    E = read_pcs(args.pcs)
    scn = load_scenario(args.scenario)
    oracle = scn.oracle(validate=not args.no_validate).with_ambient(E)
    T = build_tree(E, args.ratio)
    verify_center_ball(T)
    F, trace = construct_superset(E, oracle, T, _params(args))
    write_pcs(F, args.output)
    if args.trace:
        write_trace(trace, args.trace)
    if args.tree:
        write_tree(T, args.tree)
    if args.plot:
        _write_tsv(args.plot, ["stage", "residual"], [(s.m, s.residual) for s in trace.stages])
    alpha, worst, ok = calibrate_alpha(trace, T)
    print(json.dumps({"points": len(F), "stages": len(trace.stages), "c0_achieved": trace.c0_achieved,
                      "final_residual": trace.residuals[-1], "halted": trace.halted,
                      "alpha_calibrated": alpha, "alpha_satisfied": ok}, sort_keys=True))
    return EXIT_OK


def cmd_glue(args):
    E = read_pcs(args.pcs)
    scn = load_scenario(args.scenario)
    oracle = scn.oracle(validate=False)
    F, recs = glue_unbounded(E, args.x0, oracle, args.A, args.N, _params(args), args.ratio)
    if args.output:
        write_pcs(F, args.output)
    return _emit([verify_gluing(recs, args.x0, args.A, rng_seed=args.seed)], args)


def cmd_verify(args):
    claim = args.claim
    if claim == "containment":
        _need(args, "E", "F")
        reps = [verify_containment(read_pcs(args.E), read_pcs(args.F), args.delta)]
    elif claim == "adr":
        _need(args, "F")
        reps = [verify_adr(read_pcs(args.F), args.cap, args.scales, max(1, args.samples // args.scales),
                           args.seed)]
    elif claim == "bp":
        _need(args, "F")
        F = read_pcs(args.F)
        trace = None
        if args.trace:
            _need(args, "scenario")
            trace = read_trace(args.trace, F.space, _piece_oracles(load_scenario(args.scenario)))
        reps = [verify_bp(F, args.theta, args.L, args.samples, args.seed, trace, args.alpha)]
    elif claim in ("separation", "decay", "lemma1", "trace"):
        _need(args, "trace")
        trace = read_trace(args.trace)
        if claim == "decay":
            reps = [verify_decay(trace)]
        else:
            if not (args.tree or args.E):
                raise UsageError("--tree or --E is required for this claim")
            T = read_tree(args.tree) if args.tree else _tree_for(args, read_pcs(args.E))
            reps = {"separation": lambda: [verify_separation(trace, T)],
                    "lemma1": lambda: [verify_lemma1(trace, T)],
                    "trace": lambda: verify_trace(trace, T)}[claim]()
    elif claim in ("lemma2", "lemma2_containment", "lemma2_smallball"):
        _need(args, "G", "E")
        G, E = read_pcs(args.G), read_pcs(args.E)
        Gt, tr = regular_extension(G, E, args.A)
        reps = verify_extension(G, E, args.A, Gt, tr, args.samples, args.seed, args.cap,
                                args.theta if claim == "lemma2" else None, args.L)
        if claim != "lemma2":
            reps = [r for r in reps if r.claim == claim]
    elif claim == "gluing":
        _need(args, "scenario")
        scn = load_scenario(args.scenario)
        g = scn.extra.get("glue", {})
        x0 = args.x0 or g.get("x0")
        A = args.A_glue or g.get("A", 16.0)
        N = args.N or g.get("N", 3)
        _, recs = glue_unbounded(scn.E, x0, scn.oracle(validate=False), A, N, None, args.ratio)
        reps = [verify_gluing(recs, x0, A, rng_seed=args.seed)]
    elif claim == "collapse":
        _need(args, "scenario")
        scn = load_scenario(args.scenario)
        co = collapse_bp_level(scn.E, scn.oracle3(), None, args.ratio)
        reps = [check_two_level_oracle(co, scn.E, args.theta, rng_seed=args.seed)]
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown claim {claim!r}")
    return _emit(reps, args)


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise UsageError(f"--{n} is required for 'verify {args.claim}'")


def cmd_report(args):
    reports = []
    for path in args.reports:
        d = read_reports(path)
        for r in d["reports"]:
            reports.append(VerificationReport(r["claim"], r["status"], r["measured"], r["counterexamples"],
                                              r["config"], r.get("notes", [])))
    return _emit(reports, args)


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="bigpieces", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"bigpieces {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def reporting(sp):
        sp.add_argument("--format", choices=("json", "text"), default="json", help="report format")
        sp.add_argument("--report", dest="output_report", help="write the report here instead of stdout")

    def construction(sp):
        sp.add_argument("--alpha", type=float, default=20.0, help="chain-stopping constant (> 10)")
        sp.add_argument("--max-stages", type=int, default=40, help="stage cap")
        sp.add_argument("--residual-tol", type=float, default=1e-3, help="stop at this residual mass fraction")
        sp.add_argument("--A-ext", type=float, default=10.0, help="regular-extension constant")
        sp.add_argument("--ratio", type=float, default=TREE_RATIO, help="cube-tree scale ratio")

    s = sub.add_parser("gen", help="materialize a scenario's E as a point cloud")
    s.add_argument("scenario", help="scenario file or shipped scenario name")
    s.add_argument("-o", "--output", required=True, help="output pcs file")
    s.add_argument("--pieces", action="store_true", help="also write each scripted piece next to it")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("cubes", help="build the dyadic cube tree")
    s.add_argument("pcs")
    s.add_argument("--ratio", type=float, default=0.5, help="scale ratio in [1/4, 3/4]")
    s.add_argument("-o", "--output", help="write the tree (cubes v1)")
    s.set_defaults(func=cmd_cubes)

    s = sub.add_parser("adr", help="sampled Ahlfors-David regularity estimate")
    s.add_argument("pcs")
    s.add_argument("--samples", type=int, default=500, help="total (x, r) samples")
    s.add_argument("--scales", type=int, default=10, help="number of radii")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cap", type=float, help="fail samples whose ratio spread exceeds this")
    s.add_argument("--plot", help="write r/ratio columns as TSV")
    reporting(s)
    s.set_defaults(func=cmd_adr)

    s = sub.add_parser("certify-bp", help="fit Lipschitz-graph big pieces on sampled balls")
    s.add_argument("pcs")
    s.add_argument("--L", type=float, default=1.0, help="Lipschitz constant")
    s.add_argument("--theta", type=float, default=0.5, help="required overlap")
    s.add_argument("--samples", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--orientations", type=int, default=16, help="orientation grid size")
    reporting(s)
    s.set_defaults(func=cmd_certify_bp)

    s = sub.add_parser("extend", help="regular extension of G inside E")
    s.add_argument("pcs", help="G")
    s.add_argument("--ambient", required=True, help="E")
    s.add_argument("--A", type=float, default=10.0)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--trace", help="write the round record as JSON")
    s.set_defaults(func=cmd_extend)

    s = sub.add_parser("construct", help="stopping-time superset construction")
    s.add_argument("pcs")
    s.add_argument("--scenario", required=True, help="scenario providing the scripted oracle")
    construction(s)
    s.add_argument("-o", "--output", required=True, help="final F (pcs v1)")
    s.add_argument("--trace", help="trace v1 output")
    s.add_argument("--tree", help="also write the cube tree used")
    s.add_argument("--plot", help="write stage/residual columns as TSV")
    s.add_argument("--no-validate", action="store_true", help="skip the sampled check of declared thetas")
    s.set_defaults(func=cmd_construct)

    s = sub.add_parser("glue", help="truncated annulus gluing")
    s.add_argument("pcs")
    s.add_argument("--scenario", required=True)
    s.add_argument("--x0", type=float, nargs="+", required=True)
    s.add_argument("--A", type=float, default=16.0)
    s.add_argument("--N", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output")
    construction(s)
    reporting(s)
    s.set_defaults(func=cmd_glue)

    s = sub.add_parser("verify", help="check one claim and emit a report")
    s.add_argument("claim", choices=("containment", "adr", "bp", "separation", "decay", "lemma1", "trace",
                                     "lemma2", "lemma2_containment", "lemma2_smallball", "gluing", "collapse"))
    s.add_argument("--E", help="ambient / original set (pcs)")
    s.add_argument("--F", help="constructed set (pcs)")
    s.add_argument("--G", help="subset to extend (pcs)")
    s.add_argument("--trace", help="trace v1 file")
    s.add_argument("--tree", help="cubes v1 file matching the trace")
    s.add_argument("--scenario")
    s.add_argument("--delta", type=float)
    s.add_argument("--cap", type=float, help="ADR cap")
    s.add_argument("--theta", type=float, default=0.05, help="overlap threshold")
    s.add_argument("--L", type=float, default=1.0)
    s.add_argument("--alpha", type=float)
    s.add_argument("--A", type=float, default=10.0, help="extension constant")
    s.add_argument("--A-glue", dest="A_glue", type=float)
    s.add_argument("--N", type=int)
    s.add_argument("--x0", type=float, nargs="+")
    s.add_argument("--ratio", type=float, default=TREE_RATIO)
    s.add_argument("--samples", type=int, default=500)
    s.add_argument("--scales", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    reporting(s)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("report", help="merge and re-render report v1 files")
    s.add_argument("reports", nargs="+")
    reporting(s)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScenarioError, GeometryError, FileNotFoundError, ValueError) as exc:
        _error(exc)
        return EXIT_USAGE
    except OracleError as exc:
        _error(exc, x=None if exc.x is None else exc.x.tolist(), R=exc.R)
        return EXIT_FAIL
    except (ConstructionError, AssertionError) as exc:
        _error(exc)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - any other failure is an internal error
        _error(exc)
        return EXIT_INTERNAL


def _error(exc, **extra):
    msg = {"error": type(exc).__name__, "message": str(exc)}
    msg.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(msg, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
