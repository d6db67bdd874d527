"""Grid over the AGPO constraint factor delta and the KL coefficient beta."""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np
import pandas as pd
from jinja2 import Template

from envs import TaskSuite
from exactsim import exact_passk_curve
from trainer import TrainConfig, initial_policy, train_run

from .config import ExperimentConfig, resolve_suites

logger = logging.getLogger(__name__)

base_dir = os.path.dirname(__file__)

with open(os.path.join(base_dir, "..", "templates", "sweep_report.j2"), "r", encoding="utf-8") as f:
    SWEEP_REPORT_TEMPLATE = f.read()

SUMMARY_COLUMNS = ["delta", "beta", "final_greedy_acc", "final_entropy", "exact_pass_16"]

MASK64 = (1 << 64) - 1


def mix64(value: int) -> int:
    """splitmix64 finalizer; a bijection on 64-bit integers with mix64(0) == 0."""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def float_bits(value: float) -> int:
    """IEEE-754 bit pattern of ``value``; -0.0 maps to the pattern of 0.0."""
    return int(np.array(float(value) + 0.0, dtype=np.float64).view(np.uint64).item())


def derive_seed(root: int, delta: float, beta: float) -> int:
    """Grid-point seed from the root seed and the point's (delta, beta) coordinates.

    The seed depends on the coordinates only, never on the grid's shape, so
    extending a grid leaves the seeds of existing points unchanged.
    """
    return (root ^ mix64(mix64(float_bits(delta)) ^ float_bits(beta))) & MASK64


def grid_points(config: ExperimentConfig) -> list[tuple[float, float]]:
    config.check_sweep()
    return [(float(delta), float(beta)) for delta in config.sweep.deltas for beta in config.sweep.betas]


def point_config(config: ExperimentConfig, delta: float, beta: float) -> TrainConfig:
    base = config.train_config()
    return base.model_copy(
        update={
            "seed": derive_seed(config.seed, delta, beta),
            "estimator": base.estimator.model_copy(update={"delta": delta}),
            "clip": base.clip.model_copy(update={"kl_coeff": beta}),
        }
    )


def point_dir(out_dir: str, delta: float, beta: float) -> str:
    return os.path.join(out_dir, f"point_delta_{delta:.12g}_beta_{beta:.12g}")


def _run_point(cfg: TrainConfig, suite: TaskSuite, heldout: Optional[TaskSuite], directory: str) -> dict:
    result = train_run(cfg, suite, heldout, directory)
    eval_tasks = heldout.tasks if heldout is not None else suite.tasks
    pass16 = [
        exact_passk_curve(result.policies.get(t.prompt_id) or initial_policy(t, cfg), t, [16])[16] for t in eval_tasks
    ]
    return {
        "delta": cfg.estimator.delta,
        "beta": cfg.clip.kl_coeff,
        "final_greedy_acc": result.final_greedy_acc,
        "final_entropy": result.final_entropy,
        "exact_pass_16": float(np.mean(pass16)) if pass16 else 0.0,
    }


def sweep(config: ExperimentConfig, out_dir: str, workers: int = 1) -> pd.DataFrame:
    """One train run per (delta, beta) point, then ``sweep_summary.csv`` and ``sweep_report.md``."""
    points = grid_points(config)
    suite, heldout = resolve_suites(config)
    jobs = [
        (point_config(config, delta, beta), suite, heldout, point_dir(out_dir, delta, beta))
        for delta, beta in points
    ]
    logger.info(f"Sweeping {len(jobs)} grid points with {workers} worker(s) into {out_dir}")

    rows = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_run_point, *job) for job in jobs]
            for (delta, beta), future in zip(points, futures):
                rows.append(_point_result(future.result, delta, beta))
    else:
        for (delta, beta), job in zip(points, jobs):
            rows.append(_point_result(lambda: _run_point(*job), delta, beta))

    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS).sort_values(["delta", "beta"], kind="mergesort")
    summary = summary.reset_index(drop=True)
    os.makedirs(out_dir, exist_ok=True)
    summary.to_csv(os.path.join(out_dir, "sweep_summary.csv"), index=False, float_format="%.7g", na_rep="")

    report = Template(SWEEP_REPORT_TEMPLATE).render(
        seed=config.seed,
        variant=config.train.estimator.variant.value,
        steps=config.train.total_steps,
        rows=summary.to_dict(orient="records"),
    )
    with open(os.path.join(out_dir, "sweep_report.md"), "w", encoding="utf-8") as f:
        f.write(report)
    logger.info(f"Wrote sweep summary for {len(summary)} points to {out_dir}")
    return summary


def _point_result(run, delta: float, beta: float) -> dict:
    try:
        return run()
    except Exception as e:
        raise RuntimeError(f"sweep point delta={delta:g}, beta={beta:g} failed: {e}") from e
