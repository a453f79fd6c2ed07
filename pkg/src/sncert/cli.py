"""Command-line entry point.

Subcommands: rke, rkdm, rsc, game, verify-theorem2, verify-theorem5,
decompose, choi.  All inputs and reports are JSON (complex numbers as
[re, im] pairs, matrices as row-major nested arrays).  Reports embed the
run configuration, library version and relaxation tags, and are
byte-identical across runs with the same seed and inputs.

Exit codes: 0 success, 2 input validation failure, 3 solver failure,
4 failed exact-mode assertion in the verify-* subcommands.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .objects import (
    BipartiteState,
    ChoiMatrix,
    DistributedMeasurement,
    TeleportationInstrument,
    apply_choi,
)
from .sdp import SolveOptions, SolverFailure
from .serialize import encode_matrix, from_json_dict, to_json_dict

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_ASSERTION = 4


class ValidationError(Exception):
    pass


def worker_count() -> int:
    """Worker cap for batch subcommands; SNCERT_THREADS limits it."""
    env = os.environ.get("SNCERT_THREADS", "1")
    try:
        return max(1, int(env))
    except ValueError:
        raise ValidationError(f"SNCERT_THREADS: not an integer: {env!r}")


def _load_json(path: str, flag: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{flag}: file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{flag}: invalid JSON in {path}: {exc}")


def _load_typed(path: str, flag: str, want_type, type_name: str):
    data = _load_json(path, flag)
    try:
        obj = from_json_dict(data)
    except (ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"{flag}: cannot decode {path}: {exc}")
    if not isinstance(obj, want_type):
        raise ValidationError(f"{flag}: expected a {type_name}, got {type(obj).__name__}")
    return obj


def _solve_options(args) -> SolveOptions:
    return SolveOptions(feas_tol=args.tol, gap_tol=args.tol)


def _config_dict(args, subcommand: str) -> dict:
    inputs = {}
    for flag in ("state", "measurement", "instrument", "ensemble"):
        val = getattr(args, flag, None)
        if val:
            inputs[flag] = val
    return {
        "subcommand": subcommand,
        "k": getattr(args, "k", None),
        "tol": args.tol,
        "restarts": args.restarts,
        "seed": args.seed,
        "inputs": inputs,
        "dump_problem": bool(args.dump_problem),
    }


def _emit(report: dict, args) -> None:
    blob = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(blob)
    else:
        sys.stdout.write(blob)


def _attach_problems(report: dict, sink: list | None) -> None:
    if sink is not None:
        report["conic_problems"] = sink


def _cmd_rke(args) -> int:
    from .robustness import r_ke

    states = args.state or []
    if not states:
        raise ValidationError("--state: at least one state file is required")
    opts = _solve_options(args)
    sink = [] if args.dump_problem else None
    if sink is not None:
        opts.dump_sink = sink
    rows = []
    for path in states:
        rho = _load_typed(path, "--state", BipartiteState, "bipartite_state")
        rep = r_ke(rho, args.k, restarts=args.restarts, seed=args.seed, opts=opts)
        rows.append({"instance": path, "report": rep.to_json_dict()})
    report = {"config": _config_dict(args, "rke"), "version": __version__, "results": rows}
    _attach_problems(report, sink)
    _emit(report, args)
    return EXIT_OK


def _cmd_rkdm(args) -> int:
    from .robustness import r_kdm

    if not args.measurement:
        raise ValidationError("--measurement: a distributed-measurement file is required")
    m = _load_typed(args.measurement, "--measurement", DistributedMeasurement,
                    "distributed_measurement")
    opts = _solve_options(args)
    sink = [] if args.dump_problem else None
    if sink is not None:
        opts.dump_sink = sink
    rep = r_kdm(m, args.k, restarts=args.restarts, seed=args.seed, opts=opts)
    report = {
        "config": _config_dict(args, "rkdm"),
        "version": __version__,
        "results": [{"instance": args.measurement, "report": rep.to_json_dict()}],
    }
    _attach_problems(report, sink)
    _emit(report, args)
    return EXIT_OK


def _cmd_rsc(args) -> int:
    from .robustness import r_sc

    if not args.instrument:
        raise ValidationError("--instrument: a teleportation-instrument file is required")
    inst = _load_typed(args.instrument, "--instrument", TeleportationInstrument,
                       "teleportation_instrument")
    opts = _solve_options(args)
    sink = [] if args.dump_problem else None
    if sink is not None:
        opts.dump_sink = sink
    rep = r_sc(inst, args.k, restarts=args.restarts, seed=args.seed, opts=opts)
    report = {
        "config": _config_dict(args, "rsc"),
        "version": __version__,
        "results": [{"instance": args.instrument, "report": rep.to_json_dict()}],
    }
    _attach_problems(report, sink)
    _emit(report, args)
    return EXIT_OK


def _cmd_game(args) -> int:
    from .game import GameInstance, evaluate_game

    if not args.ensemble:
        raise ValidationError("--ensemble: a game-instance file is required")
    data = _load_json(args.ensemble, "--ensemble")
    if data.get("type") == "game_instance":
        try:
            g = GameInstance.from_json_dict(data)
        except (ValueError, KeyError) as exc:
            raise ValidationError(f"--ensemble: cannot decode game instance: {exc}")
        if args.k is not None and args.k != g.k:
            g = GameInstance(g.ensemble, g.shared, args.k)
    else:
        from .objects import Ensemble

        if not args.state:
            raise ValidationError("--state: required when --ensemble holds a bare ensemble")
        if args.k is None:
            raise ValidationError("--k: required when --ensemble holds a bare ensemble")
        ens = _load_typed(args.ensemble, "--ensemble", Ensemble, "ensemble")
        shared = _load_typed(args.state[0], "--state", BipartiteState, "bipartite_state")
        g = GameInstance(ens, shared, args.k)
    opts = _solve_options(args)
    sink = [] if args.dump_problem else None
    if sink is not None:
        opts.dump_sink = sink
    res = evaluate_game(g, restarts=args.restarts, seed=args.seed, opts=opts)
    report = {
        "config": _config_dict(args, "game"),
        "version": __version__,
        "results": [{"instance": args.ensemble, "result": res.to_json_dict()}],
    }
    _attach_problems(report, sink)
    _emit(report, args)
    return EXIT_OK


def _run_batch(fn, paths, workers):
    if workers <= 1 or len(paths) <= 1:
        return [fn(p) for p in paths]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, paths))


def _cmd_verify_theorem2(args) -> int:
    from .robustness import verify_theorem2

    states = args.state or []
    if not states:
        raise ValidationError("--state: at least one state file is required")
    opts = _solve_options(args)

    def run(path):
        rho = _load_typed(path, "--state", BipartiteState, "bipartite_state")
        return path, verify_theorem2(rho, args.k, restarts=args.restarts,
                                     seed=args.seed, opts=opts)

    results = _run_batch(run, states, worker_count())
    header = f"{'instance':<32} {'R_ke':>10} {'R_sc':>10} {'R_kDM':>10} {'max dev':>10}"
    print(header)
    print("-" * len(header))
    rows = []
    failed = False
    for path, rec in results:
        print(
            f"{os.path.basename(path):<32} {rec.r_ke_report.lower.value:>10.6f} "
            f"{rec.r_sc_report.lower.value:>10.6f} {rec.r_kdm_report.lower.value:>10.6f} "
            f"{rec.max_deviation:>10.2e}"
        )
        rows.append({"instance": path, "record": rec.to_json_dict()})
        if rec.passed is False:
            failed = True
    report = {"config": _config_dict(args, "verify-theorem2"), "version": __version__,
              "results": rows}
    _emit(report, args)
    return EXIT_ASSERTION if failed else EXIT_OK


def _cmd_verify_theorem5(args) -> int:
    from .game import verify_theorem5

    states = args.state or []
    if not states:
        raise ValidationError("--state: at least one state file is required")
    opts = _solve_options(args)

    def run(path):
        rho = _load_typed(path, "--state", BipartiteState, "bipartite_state")
        return path, verify_theorem5(rho, args.k, restarts=args.restarts,
                                     seed=args.seed, opts=opts)

    results = _run_batch(run, states, worker_count())
    header = f"{'instance':<32} {'R_ke':>10} {'ratio lo':>10} {'ratio hi':>10} {'pass':>6}"
    print(header)
    print("-" * len(header))
    rows = []
    failed = False
    for path, rec in results:
        status = "-" if rec.passed is None else ("ok" if rec.passed else "FAIL")
        print(
            f"{os.path.basename(path):<32} {rec.r_ke_value:>10.6f} "
            f"{rec.ratio_lower:>10.6f} {rec.ratio_upper:>10.6f} {status:>6}"
        )
        rows.append({"instance": path, "record": rec.to_json_dict()})
        if rec.passed is False:
            failed = True
    report = {"config": _config_dict(args, "verify-theorem5"), "version": __version__,
              "results": rows}
    _emit(report, args)
    return EXIT_ASSERTION if failed else EXIT_OK


def _cmd_decompose(args) -> int:
    from .cone import inner_decomposition

    if not args.state:
        raise ValidationError("--state: a state file is required")
    rho = _load_typed(args.state[0], "--state", BipartiteState, "bipartite_state")
    dec = inner_decomposition(rho.mat, rho.dims, args.k, seed=args.seed)
    result = {"certified": dec is not None}
    if dec is not None:
        result["decomposition"] = to_json_dict(dec)
    report = {"config": _config_dict(args, "decompose"), "version": __version__,
              "results": [{"instance": args.state[0], "result": result}]}
    _emit(report, args)
    return EXIT_OK


def _cmd_choi(args) -> int:
    """Conversions: extract instrument Choi matrices, or read a bipartite
    state as a channel's Choi matrix and report its action."""
    rows = []
    if args.instrument:
        inst = _load_typed(args.instrument, "--instrument", TeleportationInstrument,
                           "teleportation_instrument")
        for i, c in enumerate(inst.chois):
            rows.append({
                "outcome": i,
                "choi": to_json_dict(c),
                "trace": float(np.trace(c.mat).real),
            })
        rows = [{"instance": args.instrument, "chois": rows,
                 "aggregate_trace_preserving": True}]
    elif args.state:
        rho = _load_typed(args.state[0], "--state", BipartiteState, "bipartite_state")
        try:
            choi = ChoiMatrix(rho.mat, rho.dims[0], rho.dims[1])
        except ValueError as exc:
            raise ValidationError(f"--state: not a valid Choi matrix: {exc}")
        action_on_mixed = apply_choi(choi, np.eye(choi.d_in) / choi.d_in)
        rows = [{
            "instance": args.state[0],
            "choi": to_json_dict(choi),
            "trace_preserving": choi.is_trace_preserving(),
            "action_on_maximally_mixed": encode_matrix(action_on_mixed),
        }]
    else:
        raise ValidationError("--instrument or --state: one input is required")
    report = {"config": _config_dict(args, "choi"), "version": __version__, "results": rows}
    _emit(report, args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sncert",
        description="Schmidt-number robustness of states, distributed measurements "
                    "and teleportation instruments",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    commands = {
        "rke": _cmd_rke,
        "rkdm": _cmd_rkdm,
        "rsc": _cmd_rsc,
        "game": _cmd_game,
        "verify-theorem2": _cmd_verify_theorem2,
        "verify-theorem5": _cmd_verify_theorem5,
        "decompose": _cmd_decompose,
        "choi": _cmd_choi,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--state", action="append", help="bipartite state JSON (repeatable)")
        p.add_argument("--measurement", help="distributed measurement JSON")
        p.add_argument("--instrument", help="teleportation instrument JSON")
        p.add_argument("--ensemble", help="ensemble or game-instance JSON")
        p.add_argument("--k", type=int, default=None, help="Schmidt-number threshold")
        p.add_argument("--tol", type=float, default=1e-8, help="solver tolerance")
        p.add_argument("--restarts", type=int, default=32, help="see-saw restarts")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--dump-problem", action="store_true",
                       help="embed every conic instance solved in the report")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    needs_k = args.subcommand in {"rke", "rkdm", "rsc", "verify-theorem2",
                                  "verify-theorem5", "decompose"}
    try:
        worker_count()  # fail fast on a malformed SNCERT_THREADS
        if needs_k:
            if args.k is None:
                raise ValidationError("--k: required for this subcommand")
            if args.k < 1:
                raise ValidationError(f"--k: must be >= 1, got {args.k}")
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
