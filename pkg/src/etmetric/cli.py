"""Command-line interface: ``etmetric dist``, ``etmetric gram`` and ``etmetric check``.

Results go to stdout as JSON; logs and structured errors go to stderr.
Exit codes: 0 success, 1 validation error, 2 solver failure, 3 check failure.
The ``ET_LOG`` environment variable sets the log level (default ``warning``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .entropy import DomainError
from .et_solver import EtOptions, EtProblem, et_distance, et_objective
from .jsonio import SpaceFileError, dumps, load_space, result_record
from .lp import LpError
from .mmspace import StructuralError
from .presets import as_preset
from .sturm import SturmOptions, SturmProblem, joint_objective, sturm_distance

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("etmetric")


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind, self.message = code, kind, message


def _classify(exc: BaseException) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, (SpaceFileError, StructuralError, DomainError)):
        return CliError(EXIT_VALIDATION, type(exc).__name__, str(exc))
    return CliError(EXIT_SOLVER, type(exc).__name__, str(exc))


def _schedule(text: str) -> tuple:
    try:
        values = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad epsilon schedule {text!r}") from None
    if not values or any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("epsilon schedule needs positive numbers")
    return values


def _options(args) -> SturmOptions:
    et = EtOptions(tol=args.tol, max_iter=args.max_iter, seed=args.seed,
                   epsilon_schedule=args.epsilon_schedule or EtOptions().epsilon_schedule)
    return SturmOptions(seeds=args.seeds, tol=args.tol, seed=args.seed, et=et)


def compute_record(space_a, space_b, preset_text: str, mode: str, options: SturmOptions,
                   verify: bool = False) -> dict:
    """Distance between two parsed spaces as a result record."""
    preset = as_preset(preset_text)
    if mode == "measure":
        if space_a.dist.shape != space_b.dist.shape or \
                not np.array_equal(space_a.dist, space_b.dist):
            raise CliError(EXIT_VALIDATION, "ModeError",
                           "measure mode needs both files to share one distance matrix")
        value, sol = et_distance(space_a, space_b, preset, options.et, return_solution=True)
        rec = result_record(value, preset, sol.gamma.gamma, sol.breakdown, sol.diagnostics,
                            __version__)
        if verify:
            problem = EtProblem(preset.cost(space_a.dist), space_a.mass, space_b.mass, preset.F)
            rec["diagnostics"]["roundtrip_error"] = _roundtrip(
                value, et_objective(problem, np.array(rec["gamma"]))[0], preset.a)
        return rec
    if mode != "sturm":
        raise CliError(EXIT_VALIDATION, "ModeError", f"unknown mode {mode!r}")
    problem = SturmProblem.from_preset(space_a, space_b, preset)
    sol = sturm_distance(problem, options)
    gamma = sol.gamma.gamma
    D = sol.D.D
    total = joint_objective(problem, gamma, D)
    breakdown = {}
    if np.isfinite(total):
        _, d1, d2, tr = et_objective(problem.et_problem(D), gamma)
        breakdown = {"divergence_1": d1, "divergence_2": d2, "transport": tr}
    diagnostics = dict(sol.diagnostics)
    diagnostics.update(seeds_tried=sol.seeds_tried, seed_values=sol.seed_values)
    rec = result_record(sol.value, preset, gamma, breakdown, diagnostics, __version__,
                        cross_dist=D)
    if verify:
        again = joint_objective(problem, np.array(rec["gamma"]), np.array(rec["cross_dist"]))
        rec["diagnostics"]["roundtrip_error"] = _roundtrip(sol.value, again, preset.a)
    return rec


def _roundtrip(value: float, raw: float, a: float) -> float:
    if not np.isfinite(value):
        return 0.0 if not np.isfinite(raw) else float("inf")
    return abs(raw ** a - value)


def cmd_dist(args) -> int:
    space_a = load_space(args.space_a)
    space_b = load_space(args.space_b)
    rec = compute_record(space_a, space_b, args.preset, args.mode, _options(args), args.verify)
    print(dumps(rec, indent=1 if args.pretty else None))
    return EXIT_OK


def _pair_job(job):
    i, j, path_a, path_b, preset, mode, options = job
    try:
        rec = compute_record(load_space(path_a), load_space(path_b), preset, mode, options)
        return i, j, rec["value"], None
    except Exception as exc:  # recorded per cell; the run continues
        err = _classify(exc)
        return i, j, None, {"kind": err.kind, "message": err.message}


def cmd_gram(args) -> int:
    folder = Path(args.corpus)
    if not folder.is_dir():
        raise CliError(EXIT_VALIDATION, "CorpusError", f"not a directory: {folder}")
    files = sorted(folder.glob("*.json"), key=lambda p: p.name)
    if len(files) < 2:
        raise CliError(EXIT_VALIDATION, "CorpusError", "a corpus needs at least two space files")
    as_preset(args.preset)
    options = _options(args)
    jobs = [(i, j, str(files[i]), str(files[j]), args.preset, args.mode, options)
            for i in range(len(files)) for j in range(i, len(files))]
    workers = args.jobs or os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_pair_job, jobs))
    else:
        results = [_pair_job(job) for job in jobs]
    n = len(files)
    matrix = [[None] * n for _ in range(n)]
    errors = []
    for i, j, value, err in sorted(results, key=lambda r: (r[0], r[1])):
        matrix[i][j] = matrix[j][i] = value
        if err is not None:
            errors.append({"i": i, "j": j, "files": [files[i].name, files[j].name], **err})
            log.warning("pair %s / %s failed: %s", files[i].name, files[j].name, err["message"])
    out = {"files": [f.name for f in files], "preset": as_preset(args.preset).name,
           "mode": args.mode, "matrix": matrix, "errors": errors, "version": __version__}
    print(dumps(out, indent=1 if args.pretty else None))
    return EXIT_SOLVER if errors else EXIT_OK


def cmd_check(args) -> int:
    from .checks import SUITES, run_suite
    suites = sorted(SUITES) if args.suite == "all" else [args.suite]
    report = {"passed": True, "suites": [], "version": __version__}
    for name in suites:
        results = run_suite(name, scale=args.scale, oracle_step=args.oracle_step,
                            progress=lambda r: log.info("%s", r.line()))
        passed = all(r.passed for r in results)
        report["passed"] &= passed
        report["suites"].append({"suite": name, "passed": passed,
                                 "checks": [r.to_dict() for r in results]})
    print(dumps(report, indent=1 if args.pretty else None))
    return EXIT_OK if report["passed"] else EXIT_CHECK


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: structured JSON on stderr, exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(dumps({"error": {"kind": "UsageError", "message": message,
                                          "exit_code": EXIT_VALIDATION}}) + "\n")
        sys.exit(EXIT_VALIDATION)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="etmetric",
        description="Entropy-Transport and Sturm-Entropy-Transport distances between "
                    "finite metric measure spaces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--preset", default="hk",
                       help="distance preset, e.g. hk, ghk, bl, qpl:2, lpl:2, pl:1, wp:2")
        p.add_argument("--mode", choices=("measure", "sturm"), default="sturm",
                       help="measure: two measures on one space; sturm: any two spaces")
        p.add_argument("--tol", type=float, default=1e-9, help="solver tolerance")
        p.add_argument("--seeds", type=int, default=8, help="multi-start budget (sturm mode)")
        p.add_argument("--max-iter", type=int, default=100000, help="iteration cap")
        p.add_argument("--epsilon-schedule", type=_schedule, default=None,
                       help="comma-separated decreasing Sinkhorn epsilons")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--pretty", action="store_true", help="indent the JSON output")

    p = sub.add_parser("dist", help="distance between two space files")
    p.add_argument("space_a")
    p.add_argument("space_b")
    solver_flags(p)
    p.add_argument("--verify", action="store_true",
                   help="re-evaluate the objective from the emitted plan and report the error")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("gram", help="pairwise distance matrix of a folder of space files")
    p.add_argument("corpus")
    solver_flags(p)
    p.add_argument("--jobs", type=int, default=0, help="worker processes (default: all CPUs)")
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("check", help="run a property suite on the bundled fixtures")
    p.add_argument("suite", choices=("axioms", "bounds", "limits", "conic", "oracle", "all"))
    p.add_argument("--scale", type=float, default=1.0,
                   help="fraction of the full case counts to run")
    p.add_argument("--oracle-step", type=float, default=1.0 / 128,
                   help="grid step of the brute-force oracle")
    p.add_argument("--pretty", action="store_true", help="indent the JSON output")
    p.set_defaults(func=cmd_check)
    return parser


def _setup_logging():
    level = os.environ.get("ET_LOG", "warning").upper()
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level=getattr(logging, level, logging.WARNING))


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    try:
        return args.func(args)
    except (CliError, SpaceFileError, StructuralError, DomainError, LpError, RuntimeError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        err = _classify(exc)
        sys.stderr.write(dumps({"error": {"kind": err.kind, "message": err.message,
                                          "exit_code": err.code}}) + "\n")
        return err.code


if __name__ == "__main__":
    sys.exit(main())
