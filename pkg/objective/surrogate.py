"""Clipped surrogate objective with an exact per-token KL penalty.

The objective is returned for maximization; callers ascend it.
"""

import logging
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import rel_entr

from policy import TabularPolicy, Trajectory
from policy.tabular import batch_contexts

logger = logging.getLogger(__name__)


class InvalidRatioError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


class SupportMismatchError(ValueError):
    pass


class LengthNorm(str, Enum):
    PER_TOKEN_MEAN = "per_token_mean"
    SEQUENCE_SUM = "sequence_sum"


class ClipConfig(BaseModel):
    epsilon: float = Field(default=0.2, gt=0.0, lt=1.0)
    kl_coeff: float = Field(default=0.0, ge=0.0)
    length_norm: LengthNorm = LengthNorm.PER_TOKEN_MEAN


class SurrogateReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    objective_value: float
    clip_fraction: float = Field(ge=0.0, le=1.0)
    mean_kl: float = Field(ge=0.0)
    gradient: np.ndarray
    token_count: int = 0


def clipped_term(ratio: float, advantage: float, eps: float) -> float:
    """min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)."""
    if not ratio > 0:
        raise InvalidRatioError(f"probability ratio must be > 0, got {ratio}")
    clipped = min(max(ratio, 1.0 - eps), 1.0 + eps)
    return min(ratio * advantage, clipped * advantage)


def exact_token_kl(p, q) -> float:
    """KL(p || q) summed over the whole vocabulary, in nats."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise SupportMismatchError(f"distributions over different vocabularies: {p.shape} vs {q.shape}")
    if np.any((q <= 0.0) & (p > 0.0)):
        raise SupportMismatchError("q is zero where p has mass")
    return max(float(rel_entr(p, q).sum()), 0.0)


def context_kl(policy: TabularPolicy, reference: TabularPolicy, temperature: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-context KL(policy || reference) and its gradient with respect to the policy logits."""
    p = policy.probs(temperature)
    log_ratio = policy.log_probs(temperature) - reference.log_probs(temperature)
    kl = np.maximum((p * log_ratio).sum(axis=1), 0.0)
    grad = p * (log_ratio - kl[:, None]) / temperature
    return kl, grad


def _stack_trajectories(trajectories: Sequence[Trajectory], max_len: int) -> tuple[np.ndarray, np.ndarray]:
    for i, traj in enumerate(trajectories):
        if len(traj.tokens) != max_len:
            raise AlignmentError(f"trajectory {i} has {len(traj.tokens)} tokens, policy expects {max_len}")
        if len(traj.per_token_logprob_old) != len(traj.tokens):
            raise AlignmentError(
                f"trajectory {i}: {len(traj.tokens)} tokens but {len(traj.per_token_logprob_old)} old log-probs"
            )
    tokens = np.array([t.tokens for t in trajectories], dtype=np.int64).reshape(len(trajectories), max_len)
    old = np.array([t.per_token_logprob_old for t in trajectories], dtype=np.float64).reshape(len(trajectories), max_len)
    return tokens, old


def sequence_objective(
    trajectories: Sequence[Trajectory],
    advantages,
    policy: TabularPolicy,
    reference: Optional[TabularPolicy],
    cfg: ClipConfig,
    temperature: float = 1.0,
) -> SurrogateReport:
    """Group surrogate: mean over members of normalized per-token clipped terms minus beta * KL.

    Current log-probs and the KL both use the temperature-adjusted distribution
    the trajectories were sampled from. The gradient is exact with respect to
    ``policy.logits``.
    """
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.shape != (len(trajectories),):
        raise AlignmentError(f"{len(trajectories)} trajectories but advantages of shape {advantages.shape}")
    if not trajectories:
        return SurrogateReport(objective_value=0.0, clip_fraction=0.0, mean_kl=0.0, gradient=np.zeros(policy.shape))

    vocab, max_len = policy.vocab_size, policy.max_len
    tokens, old = _stack_trajectories(trajectories, max_len)
    if np.any(tokens < 0) or np.any(tokens >= vocab):
        raise AlignmentError("trajectory tokens fall outside the policy vocabulary")
    contexts = batch_contexts(policy, tokens)
    count = len(trajectories)

    log_probs = policy.log_probs(temperature)
    probs = np.exp(log_probs)
    ratio = np.exp(log_probs[contexts, tokens] - old)
    adv = advantages[:, None]
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon) * adv
    surrogate = np.minimum(unclipped, clipped)
    clip_active = clipped < unclipped

    if cfg.length_norm is LengthNorm.PER_TOKEN_MEAN:
        weight = 1.0 / max_len
    else:
        weight = 1.0

    if reference is not None:
        kl_table, kl_grad_table = context_kl(policy, reference, temperature)
        token_kl = kl_table[contexts]
    else:
        kl_table = kl_grad_table = None
        token_kl = np.zeros_like(ratio)

    per_token = surrogate - cfg.kl_coeff * token_kl
    objective = float((weight * per_token.sum(axis=1)).sum() / count)

    # d(rho * A) / d logits = A * rho * d ln pi; the clipped branch is constant.
    coeff = np.where(clip_active, 0.0, unclipped) * (weight / (count * temperature))
    flat_contexts = contexts.reshape(-1)
    flat_coeff = coeff.reshape(-1)
    gradient = np.zeros(policy.shape)
    np.add.at(gradient, (flat_contexts, tokens.reshape(-1)), flat_coeff)
    np.add.at(gradient, flat_contexts, -flat_coeff[:, None] * probs[flat_contexts])
    if cfg.kl_coeff > 0.0 and kl_grad_table is not None:
        visits = np.bincount(flat_contexts, minlength=policy.shape[0]).astype(np.float64)
        gradient -= (cfg.kl_coeff * weight / count) * visits[:, None] * kl_grad_table

    report = SurrogateReport(
        objective_value=objective,
        clip_fraction=float(clip_active.mean()),
        mean_kl=float(token_kl.mean()),
        gradient=gradient,
        token_count=int(ratio.size),
    )
    logger.debug(
        f"Surrogate for {policy.prompt_id}: objective={report.objective_value:.6g} "
        f"clip_fraction={report.clip_fraction:.3f} mean_kl={report.mean_kl:.3g}"
    )
    return report
