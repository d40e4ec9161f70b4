"""Command line front end: run one session, sweep a plan, or query the oracle.

Exit codes for `run` are a total function of the session outcome:
0 clean decode with matching (or unrequested) digest, 2 session aborted,
3 digest mismatch, 1 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import replace
from typing import Sequence

import numpy as np

from .analysis import (
    TruncationError,
    eve_accuracy_sweep,
    exact_detection_oracle,
    first_reaching_target,
    tradeoff_csv_lines,
)
from .config import ConfigError, build_scenario, parse_plan_file, parse_scenario_file
from .protocol import DetectionRule, HashCheck, run_session
from .pulses import Stage

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORTED = 2
EXIT_HASH_MISMATCH = 3

SEED_ENV_VAR = "K06_SEED"


def _resolve_seed(flag_seed: int | None, file_seed: int | None) -> int:
    """Precedence: --seed, then the K06_SEED environment variable, then the file."""
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    if file_seed is not None:
        return file_seed
    return 0


def _write_atomic(path: str, text: str) -> None:
    """Write via a temp file in the target directory plus rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".k06sim-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_scenario_file(args.config)
    seed = _resolve_seed(args.seed, cfg.seed)
    rng = np.random.default_rng(seed)
    scenario = build_scenario(cfg, rng)
    transcript = run_session(scenario, rng)
    text = transcript.serialize()

    out_path = args.out or cfg.transcript_path
    if out_path:
        _write_atomic(out_path, text)
        stream = sys.stdout
    else:
        sys.stdout.write(text)
        stream = sys.stderr

    if transcript.aborted:
        print(
            f"aborted at stage {transcript.abort_stage.value} "
            f"({transcript.alarm_count()} alarmed pulses)",
            file=stream,
        )
        return EXIT_ABORTED
    summary = f"decoded {len(transcript.decoded_bits)} bits, hash {transcript.hash_check.value}"
    print(summary, file=stream)
    if transcript.hash_check is HashCheck.MISMATCH:
        return EXIT_HASH_MISMATCH
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    plan_cfg = parse_plan_file(args.config)
    plan = plan_cfg.plan
    seed = _resolve_seed(args.seed, plan.master_seed)
    plan = replace(plan, master_seed=seed)
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        plan = replace(plan, trials=args.trials)

    out_path = args.out or plan_cfg.csv_path
    if not out_path:
        raise ConfigError("sweep needs an output path (--out or [output] csv)")

    points = eve_accuracy_sweep(plan)
    _write_atomic(out_path, "\n".join(tradeoff_csv_lines(points)) + "\n")
    print(f"wrote {len(points)} cells to {out_path}")

    reached = first_reaching_target(points, plan.accuracy_target)
    if reached is None:
        print(f"accuracy target {plan.accuracy_target} not reached on this grid")
    else:
        print(
            f"accuracy target {plan.accuracy_target} first reached at "
            f"siphon {reached.siphon} (accuracy {reached.eve_accuracy.point:.4f})"
        )
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace) -> int:
    rule = DetectionRule({Stage.S2: args.mu}, args.z)
    try:
        value = exact_detection_oracle(args.mu, args.fraction, rule)
    except TruncationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{value:.12f}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="k06sim",
        description="Three-stage rotation-protocol simulator with intensity monitoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one session from a scenario file")
    run_p.add_argument("--config", required=True, help="scenario file path")
    run_p.add_argument("--seed", type=int, default=None, help="override the session seed")
    run_p.add_argument("--out", default=None, help="transcript output path")
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a sweep plan and write the CSV")
    sweep_p.add_argument("--config", required=True, help="plan file path")
    sweep_p.add_argument("--seed", type=int, default=None, help="override the master seed")
    sweep_p.add_argument("--out", default=None, help="CSV output path")
    sweep_p.add_argument("--trials", type=int, default=None, help="override trials per cell")
    sweep_p.set_defaults(func=_cmd_sweep)

    oracle_p = sub.add_parser("oracle", help="print the exact per-pulse detection probability")
    oracle_p.add_argument("--mu", type=float, required=True, help="nominal mean photons per pulse")
    oracle_p.add_argument("--fraction", type=float, required=True, help="beam-split fraction taken")
    oracle_p.add_argument("--z", type=float, required=True, help="alarm threshold in sigmas")
    oracle_p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_err:
        # argparse exits 2 on usage errors; fold into the documented usage code
        return EXIT_USAGE if exit_err.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
