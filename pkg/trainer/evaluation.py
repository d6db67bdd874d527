import logging
import zlib
from typing import Sequence, Union

import numpy as np
import pandas as pd

from envs import TaskSpec, TaskSuite, check_compatible, verify, verify_batch
from evalkit import InvalidQueryError, passk_curve_from_log
from policy import TabularPolicy, greedy_decode, sample_sequences

from .rollout import as_tasks

logger = logging.getLogger(__name__)


def policy_for(policies: dict[str, TabularPolicy], task: TaskSpec) -> TabularPolicy:
    policy = policies.get(task.prompt_id)
    if policy is None:
        return TabularPolicy.uniform(task.vocab_size, task.seq_len, task.prompt_id)
    return policy


def greedy_accuracy(policies: dict[str, TabularPolicy], suite: Union[TaskSuite, Sequence[TaskSpec]]) -> float:
    """Fraction of prompts whose greedy decode verifies; the Pass@1 proxy."""
    tasks = as_tasks(suite)
    if not tasks:
        return 0.0
    hits = 0
    for task in tasks:
        policy = policy_for(policies, task)
        check_compatible(policy, task)
        hits += verify(task, greedy_decode(policy).tokens)
    return hits / len(tasks)


def eval_passk_sampled(
    policies: dict[str, TabularPolicy],
    suite: Union[TaskSuite, Sequence[TaskSpec]],
    n: int,
    ks: Sequence[int],
    temperature: float = 0.6,
    seed: int = 0,
) -> pd.DataFrame:
    """Draw n samples per prompt, count the correct ones, and average unbiased Pass@k over prompts."""
    if any(k > n for k in ks):
        raise InvalidQueryError(f"every k must be <= n = {n}, got {list(ks)}")
    records = []
    for task in as_tasks(suite):
        policy = policy_for(policies, task)
        check_compatible(policy, task)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(task.prompt_id.encode("utf-8")),)))
        tokens, _ = sample_sequences(policy, temperature, rng, size=n)
        records.append((n, int(verify_batch(task, tokens).sum())))
    curve = passk_curve_from_log(records, ks)
    logger.info(f"Sampled Pass@k over {len(records)} prompts (n={n}): {curve}")
    return pd.DataFrame({"k": list(curve.keys()), "pass_at_k": list(curve.values())})
