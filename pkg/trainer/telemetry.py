import json
import logging
import os
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

TELEMETRY_COLUMNS = [
    "step",
    "train_correct_ratio",
    "heldout_greedy_acc",
    "mean_entropy",
    "mean_abs_adv_pos",
    "mean_abs_adv_neg",
    "mean_kl",
    "clip_fraction",
]


class TelemetryRecord(BaseModel):
    step: int = Field(ge=0)
    train_correct_ratio: float = Field(ge=0.0, le=1.0)
    heldout_greedy_acc: float = Field(ge=0.0, le=1.0)
    mean_entropy: float = Field(ge=0.0)
    mean_abs_adv_pos: float = Field(ge=0.0)
    mean_abs_adv_neg: float = Field(ge=0.0)
    mean_kl: float = Field(ge=0.0)
    clip_fraction: float = Field(ge=0.0, le=1.0)


def telemetry_frame(records: Iterable[TelemetryRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in records], columns=TELEMETRY_COLUMNS)


def write_telemetry(records: Sequence[TelemetryRecord], path: str) -> pd.DataFrame:
    frame = telemetry_frame(records)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.7g", na_rep="")
    logger.info(f"Wrote {len(frame)} telemetry rows to {path}")
    return frame


def entropy_at_ratio(frame: pd.DataFrame, ratio: float, window: int = 1) -> Optional[float]:
    """Mean entropy at the first step whose (rolling) train_correct_ratio reaches ``ratio``.

    Returns None when the run never gets there.
    """
    rolling = frame["train_correct_ratio"].rolling(window, min_periods=1).mean().to_numpy()
    reached = np.flatnonzero(rolling >= ratio)
    if reached.size == 0:
        return None
    return float(frame["mean_entropy"].iloc[int(reached[0])])


class RolloutLog:
    """Append-only JSONL of every sampled trajectory."""

    def __init__(self, path: str):
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self.path = path
        self._file = open(path, "w", encoding="utf-8")

    def write(self, step: int, groups) -> None:
        for group in groups:
            for traj in group.trajectories:
                row = {
                    "step": step,
                    "prompt_id": traj.prompt_id,
                    "member": traj.member,
                    "tokens": list(traj.tokens),
                    "logprob_old": traj.logprob_old,
                    "reward": traj.reward,
                }
                self._file.write(json.dumps(row, separators=(",", ":")) + "\n")

    def close(self) -> None:
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
