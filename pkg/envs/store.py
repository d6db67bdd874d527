import json
import logging
import os

import numpy as np

from policy import all_sequences

from .tasks import TaskSpec, TaskSuite

logger = logging.getLogger(__name__)


def enumerate_sequences(V: int, T: int) -> np.ndarray:
    """All V**T sequences as rows, lexicographic order."""
    return all_sequences(V, T)


def dumps_task(task: TaskSpec) -> str:
    record = {
        "prompt_id": task.prompt_id,
        "family": task.family.value,
        "V": task.vocab_size,
        "T": task.seq_len,
        "params": task.params,
        "correct_set": [list(seq) for seq in task.correct_set],
    }
    return json.dumps(record, sort_keys=False, separators=(",", ":"))


def save_suite(suite: TaskSuite, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for task in suite.tasks:
            f.write(dumps_task(task) + "\n")
    logger.info(f"Saved {len(suite.tasks)} tasks to {path}")


def load_suite(path: str, seed: int = 0) -> TaskSuite:
    tasks = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                task = TaskSpec.model_validate_json(line)
                tasks.append(task.model_copy(update={"difficulty_target": task.density}))
    suite = TaskSuite(tasks=tasks, seed=seed)
    logger.info(f"Loaded {len(tasks)} tasks from {path}: regimes={suite.regime_mix}")
    return suite
