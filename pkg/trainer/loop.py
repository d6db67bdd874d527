"""Sampled RLVR training: rollouts from the snapshot policy, group advantages, clipped surrogate ascent."""

import logging
import os
import zlib
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from advantage import Variant, compute_advantages
from envs import TaskSpec, TaskSuite
from objective import SurrogateReport, sequence_objective
from policy import TabularPolicy, apply_update, mean_token_entropy, save_checkpoint

from .config import TrainConfig
from .critic import ValueTable
from .evaluation import greedy_accuracy
from .rollout import RolloutGroup, collect_group, collect_groups, rollout_workers
from .telemetry import RolloutLog, TelemetryRecord, write_telemetry

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message: str, step: Optional[int] = None, prompt_id: Optional[str] = None):
        context = []
        if step is not None:
            context.append(f"step {step}")
        if prompt_id is not None:
            context.append(f"prompt {prompt_id}")
        super().__init__(f"{', '.join(context)}: {message}" if context else message)
        self.step = step
        self.prompt_id = prompt_id


class TrainResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: list[TelemetryRecord]
    policies: dict[str, TabularPolicy]
    initial_policies: dict[str, TabularPolicy]
    final_greedy_acc: float
    final_entropy: float


def initial_policy(task: TaskSpec, cfg: TrainConfig) -> TabularPolicy:
    """Base-model prior for one prompt: uniform, or seeded Gaussian logits of scale ``init_logit_scale``."""
    if cfg.init_logit_scale == 0.0:
        return TabularPolicy.uniform(task.vocab_size, task.seq_len, task.prompt_id)
    sequence = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(zlib.crc32(task.prompt_id.encode("utf-8")),))
    seed = int(sequence.generate_state(1)[0])
    return TabularPolicy.random(task.vocab_size, task.seq_len, cfg.init_logit_scale, seed, task.prompt_id)


def select_batch(tasks: list[TaskSpec], cfg: TrainConfig, step: int) -> list[TaskSpec]:
    if len(tasks) <= cfg.batch_prompts:
        return list(tasks)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(step,)))
    chosen = np.sort(rng.choice(len(tasks), size=cfg.batch_prompts, replace=False))
    return [tasks[i] for i in chosen]


def mean_entropy(policies: dict[str, TabularPolicy]) -> float:
    if not policies:
        return 0.0
    return float(np.mean([mean_token_entropy(p) for p in policies.values()]))


def _mean_abs(values: list[float]) -> float:
    return float(np.mean(np.abs(values))) if values else 0.0


def _group_advantages(group: RolloutGroup, cfg: TrainConfig, critic: Optional[ValueTable]) -> np.ndarray:
    baseline = critic.value(group.prompt_id) if critic is not None else None
    return compute_advantages(group.group_rewards, cfg.estimator, baseline=baseline)


def first_step_gradient(cfg: TrainConfig, task: TaskSpec, policy: Optional[TabularPolicy] = None) -> np.ndarray:
    """Surrogate gradient of one sampled group at the snapshot, before any update."""
    policy = policy or initial_policy(task, cfg)
    group = collect_group(policy, task, cfg.group_size, cfg.temperature, cfg.seed, step=0)
    advantages = compute_advantages(group.group_rewards, cfg.estimator)
    report = sequence_objective(group.trajectories, advantages, policy, policy, cfg.clip, cfg.temperature)
    return report.gradient


def minibatch_update(
    mini_batch: list[RolloutGroup],
    advantages: dict[str, np.ndarray],
    policies: dict[str, TabularPolicy],
    references: dict[str, TabularPolicy],
    cfg: TrainConfig,
    step: int,
) -> list[SurrogateReport]:
    """One ascent step on the mini-batch surrogate, averaged over every member of its groups.

    Each group's own surrogate enters with weight ``group size / mini-batch members``,
    so a prompt's step shrinks as the mini-batch grows. All gradients are taken
    at the pre-update policies, then applied together.
    """
    members = sum(len(g.trajectories) for g in mini_batch)
    reports, updated = [], {}
    for group in mini_batch:
        prompt_id = group.prompt_id
        try:
            report = sequence_objective(
                group.trajectories,
                advantages[prompt_id],
                policies[prompt_id],
                references[prompt_id],
                cfg.clip,
                cfg.temperature,
            )
            share = len(group.trajectories) / members
            updated[prompt_id] = apply_update(policies[prompt_id], report.gradient * share, cfg.learning_rate)
        except ValueError as e:
            raise TrainingError(str(e), step=step, prompt_id=prompt_id) from e
        reports.append(report)
    policies.update(updated)
    return reports


def _write_checkpoints(policies: dict[str, TabularPolicy], out_dir: str, steps_done: int) -> None:
    directory = os.path.join(out_dir, "checkpoints", f"step_{steps_done:06d}")
    for prompt_id, policy in policies.items():
        save_checkpoint(policy, os.path.join(directory, f"{prompt_id}.tsv"))
    logger.info(f"Saved {len(policies)} checkpoints to {directory}")


def train_run(
    cfg: TrainConfig,
    suite: TaskSuite,
    heldout: Optional[TaskSuite] = None,
    out_dir: Optional[str] = None,
) -> TrainResult:
    """Run ``cfg.total_steps`` steps; one telemetry record per step, deterministic in ``cfg.seed``.

    Each prompt owns its policy. The record of step s describes the snapshot
    that sampled the step's batch; greedy accuracy is refreshed every
    ``eval_every`` steps and carried forward in between.
    """
    tasks = list(suite.tasks)
    policies = {t.prompt_id: initial_policy(t, cfg) for t in tasks}
    initial = dict(policies)
    eval_tasks = list(heldout.tasks) if heldout is not None else tasks
    critic = ValueTable(cfg.critic_learning_rate) if cfg.estimator.variant is Variant.PPO_BASELINE else None
    workers = rollout_workers()

    def eval_policies() -> dict[str, TabularPolicy]:
        return {t.prompt_id: policies.get(t.prompt_id) or initial_policy(t, cfg) for t in eval_tasks}

    rollout_log = None
    if out_dir is not None and cfg.log_rollouts:
        rollout_log = RolloutLog(os.path.join(out_dir, "rollouts.jsonl"))

    records: list[TelemetryRecord] = []
    greedy_acc = 0.0
    try:
        for step in range(cfg.total_steps):
            if step % cfg.eval_every == 0:
                greedy_acc = greedy_accuracy(eval_policies(), eval_tasks)
            entropy = mean_entropy(policies)

            batch = select_batch(tasks, cfg, step)
            snapshot = {t.prompt_id: policies[t.prompt_id] for t in batch}
            try:
                groups = collect_groups(snapshot, batch, cfg.group_size, cfg.temperature, cfg.seed, step, workers)
            except ValueError as e:
                raise TrainingError(str(e), step=step) from e
            if rollout_log is not None:
                rollout_log.write(step, groups)

            advantages = {}
            adv_pos, adv_neg = [], []
            for group in groups:
                try:
                    values = _group_advantages(group, cfg, critic)
                except ValueError as e:
                    raise TrainingError(str(e), step=step, prompt_id=group.prompt_id) from e
                advantages[group.prompt_id] = values
                for traj, value in zip(group.trajectories, values):
                    (adv_pos if traj.reward > 0 else adv_neg).append(float(value))
            if critic is not None:
                for group in groups:
                    critic.update(group.group_rewards)

            kl_sum = clip_sum = 0.0
            token_total = 0
            for _ in range(cfg.epochs_per_batch):
                for start in range(0, len(groups), cfg.mini_batch_prompts):
                    mini_batch = groups[start : start + cfg.mini_batch_prompts]
                    for report in minibatch_update(mini_batch, advantages, policies, initial, cfg, step):
                        kl_sum += report.mean_kl * report.token_count
                        clip_sum += report.clip_fraction * report.token_count
                        token_total += report.token_count

            members = sum(g.group_rewards.size for g in groups)
            record = TelemetryRecord(
                step=step,
                train_correct_ratio=sum(g.count_correct for g in groups) / members if members else 0.0,
                heldout_greedy_acc=greedy_acc,
                mean_entropy=entropy,
                mean_abs_adv_pos=_mean_abs(adv_pos),
                mean_abs_adv_neg=_mean_abs(adv_neg),
                mean_kl=max(kl_sum / token_total, 0.0) if token_total else 0.0,
                clip_fraction=min(clip_sum / token_total, 1.0) if token_total else 0.0,
            )
            records.append(record)

            steps_done = step + 1
            if steps_done % cfg.eval_every == 0 or steps_done == cfg.total_steps:
                logger.info(
                    f"step {step}: correct_ratio={record.train_correct_ratio:.3f} "
                    f"greedy_acc={record.heldout_greedy_acc:.3f} entropy={record.mean_entropy:.4f} "
                    f"kl={record.mean_kl:.3g} clip={record.clip_fraction:.3f}"
                )
                if out_dir is not None:
                    _write_checkpoints(policies, out_dir, steps_done)
    finally:
        if rollout_log is not None:
            rollout_log.close()

    result = TrainResult(
        records=records,
        policies=policies,
        initial_policies=initial,
        final_greedy_acc=greedy_accuracy(eval_policies(), eval_tasks),
        final_entropy=mean_entropy(policies),
    )
    if out_dir is not None:
        write_telemetry(records, os.path.join(out_dir, "telemetry.csv"))
    logger.info(
        f"Finished {cfg.total_steps} steps with {cfg.estimator.variant.value}: "
        f"greedy_acc={result.final_greedy_acc:.3f} entropy={result.final_entropy:.4f}"
    )
    return result
