"""Group-based advantage estimators over signed outcome rewards.

Every estimator assigns one value to the correct members of a group and one to
the incorrect members, so a group is fully described by its size G and its
number of correct samples k.
"""

import logging
import math
from enum import Enum
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

logger = logging.getLogger(__name__)

RewardSign = Literal[-1, 1]


class InvalidGroupError(ValueError):
    pass


class DegenerateDenominatorError(ValueError):
    pass


class InvalidBaselineError(ValueError):
    pass


class Variant(str, Enum):
    AGPO = "agpo"
    GRPO = "grpo"
    REINFORCE = "reinforce"
    W_REINFORCE = "w_reinforce"
    PPO_BASELINE = "ppo_baseline"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            normalized = value.strip().lower().replace("-", "_")
            for member in cls:
                if member.value == normalized:
                    return member
        return None


# Per-variant hyperparameter defaults.
VARIANT_PRESETS: dict[Variant, dict[str, float]] = {
    Variant.PPO_BASELINE: {"kl_coeff": 0.001, "lambda_pos": 1.0},
    Variant.GRPO: {"kl_coeff": 0.005, "lambda_pos": 1.0},
    Variant.REINFORCE: {"kl_coeff": 0.0, "lambda_pos": 1.0},
    Variant.W_REINFORCE: {"kl_coeff": 0.0, "lambda_pos": 0.1},
    Variant.AGPO: {"kl_coeff": 0.0, "lambda_pos": 1.0},
}


class EstimatorConfig(BaseModel):
    variant: Variant = Variant.AGPO
    delta: float = Field(default=2.0, ge=0.0)
    r_floor: float = Field(default=-1.0, le=0.0)
    lambda_pos: float = Field(default=None, gt=0.0, validate_default=False)
    eps_std: float = Field(default=1e-6, gt=0.0)

    @model_validator(mode="before")
    @classmethod
    def default_lambda_for_variant(cls, data):
        if isinstance(data, dict) and data.get("lambda_pos") is None:
            variant = Variant(data.get("variant", Variant.AGPO))
            data = {**data, "lambda_pos": VARIANT_PRESETS[variant]["lambda_pos"]}
        return data


def estimator_config_for(variant: Variant | str, **overrides) -> EstimatorConfig:
    return EstimatorConfig(variant=Variant(variant), **overrides)


class GroupRewards(BaseModel):
    rewards: tuple[RewardSign, ...]
    prompt_id: str = ""

    @property
    def size(self) -> int:
        return len(self.rewards)

    @property
    def count_correct(self) -> int:
        return sum(1 for r in self.rewards if r > 0)

    @classmethod
    def canonical(cls, group_size: int, count_correct: int, prompt_id: str = "") -> "GroupRewards":
        """k leading +1 rewards followed by G - k rewards of -1."""
        return cls(rewards=(1,) * count_correct + (-1,) * (group_size - count_correct), prompt_id=prompt_id)


class GroupStats(BaseModel):
    mean: float
    std: float = Field(ge=0.0)
    count_correct: int


def sign_reward(verdict: int) -> int:
    """Verifier output {0, 1} to signed reward {-1, +1}."""
    if verdict not in (0, 1):
        raise ValueError(f"verdict must be 0 or 1, got {verdict}")
    return 1 if verdict == 1 else -1


def _count_stats(group_size: int, count_correct: int) -> tuple[float, float]:
    # Integer numerators keep mu and sigma^2 correctly rounded; sigma^2 = 1 - mu^2.
    mean = (2 * count_correct - group_size) / group_size
    variance = (4 * count_correct * (group_size - count_correct)) / (group_size * group_size)
    return mean, variance


def group_stats(group: GroupRewards) -> GroupStats:
    """Mean, population standard deviation and correct count of a group."""
    if group.size < 2:
        raise InvalidGroupError(f"group {group.prompt_id!r} has {group.size} members; at least 2 are required")
    k = group.count_correct
    mean, variance = _count_stats(group.size, k)
    return GroupStats(mean=mean, std=math.sqrt(variance), count_correct=k)


def _broadcast(group: GroupRewards, positive: float, negative: float) -> np.ndarray:
    return np.array([positive if r > 0 else negative for r in group.rewards], dtype=np.float64)


def _agpo_pair(mean: float, variance: float, cfg: EstimatorConfig) -> tuple[float, float]:
    denominator_sq = variance + cfg.delta * cfg.delta
    if denominator_sq == 0.0:
        raise DegenerateDenominatorError("AGPO with delta = 0 on a homogeneous group divides by zero")
    denominator = math.sqrt(denominator_sq)
    positive = (1.0 - mean) / denominator
    negative = (-1.0 - mean) / denominator + cfg.r_floor
    return positive, negative


def agpo_advantage(group: GroupRewards, cfg: EstimatorConfig) -> np.ndarray:
    """Constrained group-relative term plus the gated negative term."""
    stats = group_stats(group)
    positive, negative = _agpo_pair(stats.mean, stats.std * stats.std, cfg)
    return _broadcast(group, positive, negative)


def grpo_advantage(group: GroupRewards, cfg: EstimatorConfig) -> np.ndarray:
    stats = group_stats(group)
    scale = stats.std + cfg.eps_std
    return _broadcast(group, (1.0 - stats.mean) / scale, (-1.0 - stats.mean) / scale)


def signed_reinforce_advantage(group: GroupRewards, cfg: EstimatorConfig) -> np.ndarray:
    """+lambda for correct members, -1 for incorrect ones, whatever the group looks like."""
    if group.size < 2:
        raise InvalidGroupError(f"group {group.prompt_id!r} has {group.size} members; at least 2 are required")
    return _broadcast(group, cfg.lambda_pos, -1.0)


def ppo_baseline_advantage(reward: int, baseline: float) -> float:
    """Episodic outcome reward with discount 1: reward minus the state value."""
    if not -1.0 <= baseline <= 1.0:
        raise InvalidBaselineError(f"baseline {baseline} outside [-1, 1]")
    return float(reward) - baseline


def compute_advantages(
    group: GroupRewards,
    cfg: EstimatorConfig,
    baseline: Optional[float] = None,
) -> np.ndarray:
    """Dispatch to the estimator named by ``cfg.variant``.

    PPO_BASELINE needs the critic's value for the prompt; without one the group
    mean is used.
    """
    if cfg.variant is Variant.AGPO:
        return agpo_advantage(group, cfg)
    if cfg.variant is Variant.GRPO:
        return grpo_advantage(group, cfg)
    if cfg.variant in (Variant.REINFORCE, Variant.W_REINFORCE):
        return signed_reinforce_advantage(group, cfg)
    if cfg.variant is Variant.PPO_BASELINE:
        if baseline is None:
            baseline = group_stats(group).mean
        return np.array([ppo_baseline_advantage(r, baseline) for r in group.rewards], dtype=np.float64)
    raise ValueError(f"unknown estimator variant {cfg.variant}")


def advantage_by_count(group_size: int, cfg: EstimatorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Positive and negative advantage for every k in 0..G, vectorized.

    Undefined cells (positive at k = 0, negative at k = G) are NaN. PPO_BASELINE
    uses the group mean as its baseline.
    """
    if group_size < 2:
        raise InvalidGroupError(f"group size {group_size} < 2")
    k = np.arange(group_size + 1)
    mean = (2 * k - group_size) / group_size
    variance = (4 * k * (group_size - k)) / (group_size * group_size)

    if cfg.variant is Variant.AGPO:
        denominator_sq = variance + cfg.delta * cfg.delta
        if np.any(denominator_sq == 0.0):
            raise DegenerateDenominatorError("AGPO with delta = 0 on a homogeneous group divides by zero")
        denominator = np.sqrt(denominator_sq)
        positive = (1.0 - mean) / denominator
        negative = (-1.0 - mean) / denominator + cfg.r_floor
    elif cfg.variant is Variant.GRPO:
        scale = np.sqrt(variance) + cfg.eps_std
        positive = (1.0 - mean) / scale
        negative = (-1.0 - mean) / scale
    elif cfg.variant in (Variant.REINFORCE, Variant.W_REINFORCE):
        positive = np.full(k.shape, cfg.lambda_pos)
        negative = np.full(k.shape, -1.0)
    else:
        positive = 1.0 - mean
        negative = -1.0 - mean

    positive = np.where(k > 0, positive, np.nan)
    negative = np.where(k < group_size, negative, np.nan)
    return positive, negative
