import numpy as np
import pytest

from envs import TaskFamily, TaskSpec
from policy import TabularPolicy
from policy.tree import context_path

BIG = 1e6


def one_hot_policy(V: int, T: int, sequence, prompt_id: str = "") -> TabularPolicy:
    """Every context puts logit BIG on one token; the contexts along ``sequence`` pick its tokens."""
    policy = TabularPolicy.uniform(V, T, prompt_id)
    logits = np.zeros(policy.shape)
    logits[:, 0] = BIG
    for context, token in zip(context_path(sequence, V, T), sequence):
        logits[context] = 0.0
        logits[context, token] = BIG
    return policy.with_logits(logits)


def make_task(V: int, T: int, correct, prompt_id: str = "t-000") -> TaskSpec:
    return TaskSpec(prompt_id=prompt_id, family=TaskFamily.SUBSET, V=V, T=T, correct_set=tuple(map(tuple, correct)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
