import asyncio
import logging
import os
import zlib
from typing import Sequence, Union

import numpy as np
from pydantic import BaseModel, model_validator

from advantage import GroupRewards, InvalidGroupError, sign_reward
from envs import TaskSpec, TaskSuite, check_compatible, verify_batch
from policy import TabularPolicy, Trajectory, sample_from_uniforms

logger = logging.getLogger(__name__)


class RolloutGroup(BaseModel):
    prompt_id: str
    trajectories: list[Trajectory]
    group_rewards: GroupRewards

    @model_validator(mode="after")
    def rewards_match_trajectories(self):
        if len(self.trajectories) != self.group_rewards.size:
            raise ValueError(f"{len(self.trajectories)} trajectories but {self.group_rewards.size} rewards")
        if tuple(t.reward for t in self.trajectories) != self.group_rewards.rewards:
            raise ValueError("trajectory rewards disagree with group rewards")
        return self

    @property
    def count_correct(self) -> int:
        return self.group_rewards.count_correct


def member_rng(seed: int, step: int, prompt_id: str, member: int) -> np.random.Generator:
    """Independent stream per (step, prompt, member); results do not depend on collection order."""
    key = (step, zlib.crc32(prompt_id.encode("utf-8")), member)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def collect_group(
    policy: TabularPolicy,
    task: TaskSpec,
    group_size: int,
    temperature: float,
    seed: int,
    step: int = 0,
) -> RolloutGroup:
    if group_size < 2:
        raise InvalidGroupError(f"group size {group_size} < 2")
    check_compatible(policy, task)
    uniforms = np.stack(
        [member_rng(seed, step, task.prompt_id, m).random(task.seq_len) for m in range(group_size)]
    )
    tokens, token_logp = sample_from_uniforms(policy, temperature, uniforms)
    rewards = [sign_reward(int(v)) for v in verify_batch(task, tokens)]
    trajectories = [
        Trajectory(
            tokens=tuple(int(t) for t in tokens[m]),
            logprob_old=float(token_logp[m].sum()),
            per_token_logprob_old=tuple(float(x) for x in token_logp[m]),
            reward=rewards[m],
            prompt_id=task.prompt_id,
            member=m,
        )
        for m in range(group_size)
    ]
    group = RolloutGroup(
        prompt_id=task.prompt_id,
        trajectories=trajectories,
        group_rewards=GroupRewards(rewards=tuple(rewards), prompt_id=task.prompt_id),
    )
    logger.debug(f"step {step} {task.prompt_id}: k={group.count_correct}/{group_size}")
    return group


def as_tasks(suite: Union[TaskSuite, Sequence[TaskSpec]]) -> list[TaskSpec]:
    return list(suite.tasks) if isinstance(suite, TaskSuite) else list(suite)


async def acollect_groups(
    policies: dict[str, TabularPolicy],
    suite: Union[TaskSuite, Sequence[TaskSpec]],
    group_size: int,
    temperature: float,
    seed: int,
    step: int = 0,
    workers: int = 4,
) -> list[RolloutGroup]:
    """Fan prompts out over worker threads; results come back in prompt order."""
    semaphore = asyncio.Semaphore(max(1, workers))

    async def one(task: TaskSpec) -> RolloutGroup:
        async with semaphore:
            return await asyncio.to_thread(
                collect_group, policies[task.prompt_id], task, group_size, temperature, seed, step
            )

    return list(await asyncio.gather(*(one(task) for task in as_tasks(suite))))


def collect_groups(
    policies: dict[str, TabularPolicy],
    suite: Union[TaskSuite, Sequence[TaskSpec]],
    group_size: int,
    temperature: float,
    seed: int,
    step: int = 0,
    workers: int = 1,
) -> list[RolloutGroup]:
    """G samples per prompt from the snapshot policies, verified and sign-mapped."""
    if group_size < 2:
        raise InvalidGroupError(f"group size {group_size} < 2")
    if workers > 1:
        return asyncio.run(acollect_groups(policies, suite, group_size, temperature, seed, step, workers))
    return [
        collect_group(policies[task.prompt_id], task, group_size, temperature, seed, step)
        for task in as_tasks(suite)
    ]


def rollout_workers() -> int:
    return max(1, int(os.getenv("AGPOLAB_THREADS", "1")))
