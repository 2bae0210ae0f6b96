#!/usr/bin/python3
"""
Command-line entry point.

Subcommands:
    path      LAR knots and entered variables of a data set
    test      one generalized spacing test (a, b, c)
    falseneg  false-negative test after model selection
    fdr       spacing p-values and BH rejections
    simulate  run a Monte-Carlo experiment from a JSON config

Exit status: 0 on success, 2 on configuration or input errors, 3 when the
test was refused or a simulation produced no usable replicates (or more than
half of them were refused).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional

from conditional_law import frozen_geometry, verify_selection_event
from config import ConfigError, load_config
from dataio import DataError, read_design_csv, read_response_csv, write_json
from harness import HarnessError, run_experiment
from inference import (
    InferenceError,
    Refusal,
    RefusalError,
    SelectionRule,
    false_negative_test,
    gst_pvalue,
    gtst_pvalue,
    split_variance,
)
from lar_engine import FORMULATIONS, LarPath, paths_agree, theta_x_space
from model_core import (
    DesignMatrix,
    ModelError,
    SingularityError,
    build_correlation_state,
    normalize_columns,
)
from multiple_testing import (
    bh_reject,
    fdp,
    null_set_from_truth,
    spacing_pvalue_sequence,
)
from quadrature import (
    DEFAULT_POINTS,
    DEFAULT_SHIFTS,
    LatticeRule,
    OrderingError,
    QuadratureError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_REFUSED = 3

# Runs every formulation and compares them.
FORMULATION_ALL = "all"


def parse_args(argv: Optional[list[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments.

    Returns:
        Parsed command-line arguments.
    """
    p = argparse.ArgumentParser(
        prog="lar", description="LAR spacing tests and FDR control"
    )
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp: argparse.ArgumentParser, allow_all: bool = False) -> None:
        sp.add_argument("--design", required=True, help="n x p CSV, no header")
        sp.add_argument("--response", required=True, help="length-n CSV")
        sp.add_argument("--normalize", action="store_true")
        choices = sorted(FORMULATIONS) + ([FORMULATION_ALL] if allow_all else [])
        sp.add_argument("--formulation", default="recursive", choices=choices)
        sp.add_argument("--out", default=None, help="JSON report path")

    def qmc_args(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--points", type=int, default=DEFAULT_POINTS)
        sp.add_argument("--shifts", type=int, default=DEFAULT_SHIFTS)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("path", help="compute the LAR path")
    data_args(sp, allow_all=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--diagnostics", action="store_true")

    sp = sub.add_parser("test", help="generalized spacing test")
    data_args(sp)
    qmc_args(sp)
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--a", type=int, required=True)
    sp.add_argument("--b", type=int, required=True)
    sp.add_argument("--c", type=int, required=True)
    mode = sp.add_mutually_exclusive_group(required=True)
    mode.add_argument("--sigma", type=float)
    mode.add_argument("--split", action="store_true")

    sp = sub.add_parser("falseneg", help="false-negative test after selection")
    data_args(sp)
    qmc_args(sp)
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--rule", default="sequential", choices=["sequential", "fixed"])
    sp.add_argument("--alpha-prime", type=float, default=0.1)
    sp.add_argument("--gamma-fp", type=int, default=1)
    sp.add_argument("--m-hat", type=int, default=1)
    sp.add_argument("--sigma", type=float, default=None)

    sp = sub.add_parser("fdr", help="spacing p-values with BH")
    data_args(sp)
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--alpha", type=float, default=0.2)
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--truth", default=None, help="beta0 CSV (simulation)")

    sp = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    sp.add_argument("--config", required=True, help="JSON experiment config")
    sp.add_argument("--out", default=None, help="output directory")

    return p.parse_args(argv)


def _emit(payload: dict[str, Any], out: Optional[str]) -> None:
    if out:
        write_json(out, payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))


def _load(args: argparse.Namespace):
    design = read_design_csv(args.design)
    response = read_response_csv(args.response)
    if args.normalize:
        design = normalize_columns(design)
    return design, response


def _lattice(args: argparse.Namespace, dim: int) -> LatticeRule:
    return LatticeRule.korobov(
        dim, n_points=args.points, n_shifts=args.shifts, seed=args.seed
    )


def _path_diagnostics(
    design: DesignMatrix, state, path: LarPath
) -> dict[str, Any]:
    geometry = frozen_geometry(state, path, 1.0)
    plain = path.plain_indices
    theta_x = []
    for k in range(1, len(path) + 1):
        inactive = [j for j in range(design.p) if j not in plain[:k]]
        values = [
            abs(theta_x_space(design, plain[:k], path.signs[:k], j))
            for j in inactive
        ]
        theta_x.append(max(values) if values else 0.0)
    return {
        "geometry": geometry.to_dict(),
        "theta_x_max_per_step": theta_x,
        "selection_event_verified": verify_selection_event(state, path),
    }


def cmd_path(args: argparse.Namespace) -> int:
    design, response = _load(args)
    state = build_correlation_state(design, response)
    if args.formulation == FORMULATION_ALL:
        return _path_all(args, design, state)
    path = FORMULATIONS[args.formulation](state, args.steps)
    payload = path.to_dict()
    if args.diagnostics:
        payload["diagnostics"] = _path_diagnostics(design, state, path)
    _emit(payload, args.out)
    return EXIT_OK


def _path_all(args: argparse.Namespace, design: DesignMatrix, state) -> int:
    names = sorted(FORMULATIONS)
    paths = [FORMULATIONS[name](state, args.steps) for name in names]
    agree = paths_agree(paths)
    payload: dict[str, Any] = {
        "formulation": FORMULATION_ALL,
        "agree": agree,
        "paths": {name: path.to_dict() for name, path in zip(names, paths)},
    }
    if args.diagnostics:
        reference = paths[names.index("recursive")]
        payload["diagnostics"] = _path_diagnostics(design, state, reference)
    _emit(payload, args.out)
    if not agree:
        print("Formulations disagree", file=sys.stderr)
        return EXIT_REFUSED
    return EXIT_OK


def _refusal_exit(refusal: Refusal, out: Optional[str]) -> int:
    _emit(refusal.to_dict(), out)
    print(f"Refused: {refusal.reason}", file=sys.stderr)
    return EXIT_REFUSED


def cmd_test(args: argparse.Namespace) -> int:
    design, response = _load(args)
    K = args.K
    state = build_correlation_state(design, response)
    path = FORMULATIONS[args.formulation](state, K + 1)
    if args.c > K + 1:
        raise InferenceError(f"c={args.c} exceeds K + 1 = {K + 1}")

    rule = _lattice(args, max(1, args.c - args.a - 1))
    try:
        if args.split:
            if len(path) < K + 1:
                raise RefusalError(f"path truncated ({path.status.value})")
            split = split_variance(design, response, path.plain_indices, K)
            geometry = frozen_geometry(state, path, split.sigma_test)
            report = gtst_pvalue(path, geometry, split, args.a, args.b, args.c, rule)
            payload = {**report.to_dict(), "split": split.to_dict()}
        else:
            geometry = frozen_geometry(state, path, args.sigma)
            report = gst_pvalue(
                path, geometry, args.sigma, args.a, args.b, args.c, rule
            )
            payload = report.to_dict()
    except RefusalError as exc:
        refusal = Refusal(
            reason=str(exc),
            irrepresentable_upto=path.irrepresentable_upto,
            required=args.c - 1,
        )
        return _refusal_exit(refusal, args.out)

    _emit(payload, args.out)
    return EXIT_OK


def cmd_falseneg(args: argparse.Namespace) -> int:
    design, response = _load(args)
    selection = SelectionRule(
        kind=args.rule,
        alpha_prime=args.alpha_prime,
        gamma_fp=args.gamma_fp,
        m_hat=args.m_hat,
    )
    outcome = false_negative_test(
        design,
        response,
        args.K,
        selection,
        sigma=args.sigma,
        rule=_lattice(args, 1),
        formulation=args.formulation,
    )
    if isinstance(outcome, Refusal):
        return _refusal_exit(outcome, args.out)
    _emit(outcome.to_dict(), args.out)
    return EXIT_OK


def cmd_fdr(args: argparse.Namespace) -> int:
    design, response = _load(args)
    state = build_correlation_state(design, response)
    path = FORMULATIONS[args.formulation](state, args.K + 1)
    if len(path) < args.K + 1:
        raise InferenceError(
            f"Path stopped after {len(path)} knots ({path.status.value})"
        )
    geometry = frozen_geometry(state, path, args.sigma)
    try:
        pvalues = spacing_pvalue_sequence(path, geometry, args.sigma, args.K)
    except RefusalError as exc:
        refusal = Refusal(
            reason=str(exc),
            irrepresentable_upto=path.irrepresentable_upto,
            required=args.K,
        )
        return _refusal_exit(refusal, args.out)

    rejected = bh_reject(pvalues, args.alpha)
    payload: dict[str, Any] = {
        "pvalues": pvalues.to_dict(),
        "rejection": rejected.to_dict(),
        "entered": list(path.plain_indices[: args.K]),
    }
    if args.truth:
        truth = read_response_csv(args.truth).values
        nulls = null_set_from_truth(state, path, truth, args.K)
        payload["null_set"] = sorted(nulls)
        payload["fdp"] = fdp(rejected, nulls)
    _emit(payload, args.out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    report = run_experiment(cfg)
    out_dir = args.out or cfg.output
    if out_dir:
        report.write(Path(out_dir))
    else:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))

    ok = report.count("ok")
    if not report.replicates or not ok:
        print("Empty run: no usable replicates", file=sys.stderr)
        return EXIT_REFUSED
    if report.refusal_rate > 0.5:
        print(
            f"Refusal-dominated run: {report.refusal_rate:.1%} refused",
            file=sys.stderr,
        )
        return EXIT_REFUSED
    return EXIT_OK


COMMANDS = {
    "path": cmd_path,
    "test": cmd_test,
    "falseneg": cmd_falseneg,
    "fdr": cmd_fdr,
    "simulate": cmd_simulate,
}


def _fail(prefix: str, exc: Exception) -> SystemExit:
    print(f"{prefix}: {exc}", file=sys.stderr)
    return SystemExit(EXIT_INPUT)


def main(argv: Optional[list[str]] = None) -> None:
    """Run the command-line entry point."""
    args = parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        code = COMMANDS[args.command](args)
    except ConfigError as exc:
        raise _fail("Config error", exc) from exc
    except DataError as exc:
        raise _fail("Data error", exc) from exc
    except (
        ModelError,
        SingularityError,
        InferenceError,
        QuadratureError,
        OrderingError,
    ) as exc:
        raise _fail("Input error", exc) from exc
    except HarnessError as exc:
        raise _fail("Harness error", exc) from exc
    raise SystemExit(code)


if __name__ == "__main__":
    main()
