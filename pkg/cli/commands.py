import argparse
import logging
import os
from typing import Optional, Sequence

from pydantic import ValidationError

from advantage import EstimatorConfig, Variant, write_advantage_table
from evalkit import (
    DEFAULT_KS,
    InvalidQueryError,
    ads_report,
    parse_ks,
    passk_table,
    read_ads_log,
    read_passk_log,
    write_ads_report,
    write_passk_table,
)
from exactsim import Flow, simulate, write_simulation
from trainer import rollout_workers, train_run

from .config import load_config, resolve_suites
from .sweep import sweep

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="agpolab", description="Desk-scale RLVR laboratory")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="sampled training run")
    train.add_argument("--config", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--log-rollouts", action="store_true")

    sim = commands.add_parser("simulate", help="exact flow simulation")
    sim.add_argument("--config", required=True)
    sim.add_argument("--mode", choices=[f.value for f in Flow])
    sim.add_argument("--steps", type=int)
    sim.add_argument("--out", required=True)

    passk = commands.add_parser("eval-passk", help="unbiased Pass@k from a JSONL log of {prompt_id, n, c}")
    passk.add_argument("--log", required=True)
    passk.add_argument("--ks", default=",".join(str(k) for k in DEFAULT_KS))
    passk.add_argument("--out", required=True)

    ads = commands.add_parser("metrics-ads", help="search-ads metrics from a JSONL log of records")
    ads.add_argument("--log", required=True)
    ads.add_argument("--out", required=True)

    table = commands.add_parser("advantage-table", help="advantage of correct and incorrect members for k = 0..G")
    table.add_argument("--G", type=int, required=True)
    table.add_argument("--estimator", default="agpo", choices=[v.value for v in Variant])
    table.add_argument("--delta", type=float, default=2.0)
    table.add_argument("--r-floor", type=float, default=-1.0)
    table.add_argument("--lambda", dest="lambda_pos", type=float)
    table.add_argument("--out", required=True)

    grid = commands.add_parser("sweep", help="train over a (delta, beta) grid")
    grid.add_argument("--config", required=True)
    grid.add_argument("--out", required=True)
    return parser


def _require_file(path: str) -> None:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"file not found: {path}")


def cmd_train(args) -> None:
    config = load_config(args.config)
    cfg = config.train_config()
    if args.log_rollouts:
        cfg = cfg.model_copy(update={"log_rollouts": True})
    suite, heldout = resolve_suites(config)
    train_run(cfg, suite, heldout, args.out)


def cmd_simulate(args) -> None:
    config = load_config(args.config)
    suite, _ = resolve_suites(config)
    mode = config.simulate.flow_mode(Flow(args.mode) if args.mode else None)
    steps = args.steps if args.steps is not None else config.simulate.steps
    frame, _ = simulate(suite, mode, steps, config.simulate.learning_rate)
    write_simulation(frame, args.out)


def cmd_eval_passk(args) -> None:
    _require_file(args.log)
    try:
        ks = parse_ks(args.ks)
    except InvalidQueryError as e:
        raise UsageError(f"--ks: {e}") from e
    write_passk_table(passk_table(read_passk_log(args.log), ks), args.out)


def cmd_metrics_ads(args) -> None:
    _require_file(args.log)
    write_ads_report(ads_report(read_ads_log(args.log)), args.out)


def cmd_advantage_table(args) -> None:
    cfg = EstimatorConfig(variant=args.estimator, delta=args.delta, r_floor=args.r_floor, lambda_pos=args.lambda_pos)
    write_advantage_table(args.G, cfg, args.out)


def cmd_sweep(args) -> None:
    config = load_config(args.config)
    try:
        config.check_sweep()
    except ValueError as e:
        raise UsageError(str(e)) from e
    sweep(config, args.out, workers=rollout_workers())


COMMANDS = {
    "train": cmd_train,
    "simulate": cmd_simulate,
    "eval-passk": cmd_eval_passk,
    "metrics-ads": cmd_metrics_ads,
    "advantage-table": cmd_advantage_table,
    "sweep": cmd_sweep,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse and dispatch; 0 on success, 1 on usage or input errors, 2 on runtime errors."""
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except (UsageError, ValidationError, FileNotFoundError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        return EXIT_RUNTIME
    return EXIT_OK
