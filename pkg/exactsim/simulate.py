import logging
import os
from typing import Optional

import numpy as np
import pandas as pd

from envs import TaskSuite
from policy import TabularPolicy, mean_token_entropy

from .flows import FlowMode, exact_gradient_step, exact_passk_curve, psr_nsr_decomposition

logger = logging.getLogger(__name__)

SIMULATE_COLUMNS = ["step", "j_psr", "j_nsr", "passk_1", "passk_16", "passk_256", "entropy"]
SIMULATE_KS = (1, 16, 256)


def _snapshot(step: int, policies: dict[str, TabularPolicy], suite: TaskSuite) -> dict:
    j_psr, j_nsr, entropy = [], [], []
    passk = {k: [] for k in SIMULATE_KS}
    for task in suite.tasks:
        policy = policies[task.prompt_id]
        report = psr_nsr_decomposition(policy, task)
        j_psr.append(report.j_psr)
        j_nsr.append(report.j_nsr)
        for k, value in exact_passk_curve(policy, task, SIMULATE_KS).items():
            passk[k].append(value)
        entropy.append(mean_token_entropy(policy))
    return {
        "step": step,
        "j_psr": float(np.mean(j_psr)),
        "j_nsr": float(np.mean(j_nsr)),
        **{f"passk_{k}": float(np.mean(passk[k])) for k in SIMULATE_KS},
        "entropy": float(np.mean(entropy)),
    }


def simulate(
    suite: TaskSuite,
    mode: FlowMode,
    steps: int,
    learning_rate: float,
    initial: Optional[dict[str, TabularPolicy]] = None,
) -> tuple[pd.DataFrame, dict[str, TabularPolicy]]:
    """Run ``steps`` exact flow steps on every task; row 0 is the starting point.

    Suite-level columns are means over tasks. Without ``initial`` every task
    starts from the uniform policy.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    policies = {
        t.prompt_id: (initial or {}).get(t.prompt_id) or TabularPolicy.uniform(t.vocab_size, t.seq_len, t.prompt_id)
        for t in suite.tasks
    }
    rows = [_snapshot(0, policies, suite)]
    for step in range(1, steps + 1):
        policies = {
            t.prompt_id: exact_gradient_step(policies[t.prompt_id], t, mode, learning_rate) for t in suite.tasks
        }
        rows.append(_snapshot(step, policies, suite))
        if step % max(1, steps // 10) == 0:
            logger.info(f"simulate {mode.mode.value} step {step}/{steps}: j_psr={rows[-1]['j_psr']:.4f}")
    return pd.DataFrame(rows, columns=SIMULATE_COLUMNS), policies


def write_simulation(frame: pd.DataFrame, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.7g", na_rep="")
    logger.info(f"Wrote {len(frame)} simulation rows to {path}")
