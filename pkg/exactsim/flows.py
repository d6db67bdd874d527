"""Exact-distribution RLVR dynamics by enumeration of the whole sequence space.

Flow weights per sequence y (the gradient is sum_y w(y) pi(y) grad ln pi(y)):

    PSR_ONLY       w = 1[y correct]
    NSR_ONLY       w = -1[y incorrect]
    WEIGHTED(lam)  w = lam * 1[y correct] - 1[y incorrect]
    GRPO_EXPECTED  w = a+(p) if correct else a-(p)
    AGPO_EXPECTED  same, with the AGPO estimator

For the group flows, p is the prior correctness and the weight is the
expected advantage of a sample conditioned on its own verdict. A correct
sample sees the other G - 1 members as k' ~ Binomial(G - 1, p), so

    a+(p) = E[A+(k' + 1)]    a-(p) = E[A-(k')]

where A+/A- are the per-count advantages of the group estimator. Because
sequence probabilities sum to one, PSR_ONLY and NSR_ONLY share the same ascent
direction on the prior correctness; their difference only shows up under
sampling.
"""

import logging
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.stats import binom

from advantage import EstimatorConfig, Variant, advantage_by_count
from envs import TaskSpec, check_compatible
from policy import TabularPolicy, apply_update, grad_expected_value, grad_sequence_logprob

logger = logging.getLogger(__name__)

PROBE_TOLERANCE = 1e-12


class DecompositionReport(BaseModel):
    j_psr: float = Field(ge=0.0, le=1.0)
    j_nsr: float = Field(ge=0.0, le=1.0)
    j_total: float


class Flow(str, Enum):
    PSR_ONLY = "psr_only"
    NSR_ONLY = "nsr_only"
    WEIGHTED = "weighted"
    GRPO_EXPECTED = "grpo_expected"
    AGPO_EXPECTED = "agpo_expected"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            normalized = value.strip().lower().replace("-", "_")
            for member in cls:
                if member.value == normalized:
                    return member
        return None


class FlowMode(BaseModel):
    mode: Flow
    lam: float = 1.0
    group_size: int = Field(default=8, ge=2)
    estimator: Optional[EstimatorConfig] = None

    @model_validator(mode="after")
    def check_mode(self):
        if self.mode is Flow.WEIGHTED and not self.lam > 0:
            raise ValueError(f"WEIGHTED flow needs lam > 0, got {self.lam}")
        if self.estimator is None:
            if self.mode is Flow.GRPO_EXPECTED:
                self.estimator = EstimatorConfig(variant=Variant.GRPO)
            elif self.mode is Flow.AGPO_EXPECTED:
                self.estimator = EstimatorConfig(variant=Variant.AGPO)
        return self


class ProbeRow(BaseModel):
    position: int
    token: int
    pi_chosen: float
    gradient_magnitude: float


def psr_nsr_decomposition(policy: TabularPolicy, task: TaskSpec) -> DecompositionReport:
    check_compatible(policy, task)
    probs = policy.sequence_probabilities()
    mask = task.correct_mask
    j_psr = min(max(float(probs[mask].sum()), 0.0), 1.0)
    j_nsr = min(max(float(probs[~mask].sum()), 0.0), 1.0)
    return DecompositionReport(j_psr=j_psr, j_nsr=j_nsr, j_total=j_psr - j_nsr)


def exact_expected_advantages(p: float, group_size: int, cfg: EstimatorConfig) -> tuple[float, float]:
    """Expected advantage of a correct and of an incorrect sample when the group is drawn at prior p."""
    positive, negative = advantage_by_count(group_size, cfg)
    others = np.arange(group_size)
    weights = binom.pmf(others, group_size - 1, p)
    # k = k' + 1 for a correct sample, k = k' for an incorrect one
    a_pos = float(np.dot(weights, positive[others + 1]))
    a_neg = float(np.dot(weights, negative[others]))
    return a_pos, a_neg


def flow_weights(policy: TabularPolicy, task: TaskSpec, mode: FlowMode) -> np.ndarray:
    """Per-sequence weight w(y) of the flow, lexicographic order."""
    check_compatible(policy, task)
    correct = task.correct_mask.astype(np.float64)
    incorrect = 1.0 - correct
    if mode.mode is Flow.PSR_ONLY:
        return correct
    if mode.mode is Flow.NSR_ONLY:
        return -incorrect
    if mode.mode is Flow.WEIGHTED:
        return mode.lam * correct - incorrect
    p = float(policy.sequence_probabilities()[task.correct_mask].sum())
    a_pos, a_neg = exact_expected_advantages(min(max(p, 0.0), 1.0), mode.group_size, mode.estimator)
    return a_pos * correct + a_neg * incorrect


def exact_flow_gradient(policy: TabularPolicy, task: TaskSpec, mode: FlowMode) -> np.ndarray:
    gradient, _ = grad_expected_value(policy, flow_weights(policy, task, mode))
    return gradient


def exact_gradient_step(policy: TabularPolicy, task: TaskSpec, mode: FlowMode, learning_rate: float) -> TabularPolicy:
    return apply_update(policy, exact_flow_gradient(policy, task, mode), learning_rate)


def passk_from_prior(p: float, ks: Sequence[int]) -> dict[int, float]:
    p = min(max(float(p), 0.0), 1.0)
    return {int(k): 1.0 - (1.0 - p) ** int(k) for k in ks}


def exact_passk_curve(
    policy: TabularPolicy,
    task: TaskSpec,
    ks: Sequence[int],
    subset: Optional[Sequence[tuple[int, ...]]] = None,
) -> dict[int, float]:
    """1 - (1 - p)^k with p the exact mass on the correct set, or on ``subset`` of it when given."""
    check_compatible(policy, task)
    mask = task.correct_mask if subset is None else task.subset_mask(subset)
    p = float(policy.sequence_probabilities()[mask].sum())
    return passk_from_prior(p, ks)


def nsr_dampening_probe(policy: TabularPolicy, sequence) -> list[ProbeRow]:
    """Chosen-token probability and the NSR push on its logit, per position.

    Penalizing y moves each chosen logit by -(1 - pi_chosen), so confident
    tokens are barely penalized.
    """
    tokens = policy.check_tokens(sequence)
    gradient = -grad_sequence_logprob(policy, tokens)
    probs = policy.probs()
    rows = []
    local = 0
    for position, token in enumerate(tokens):
        context = policy.level(position).start + local
        pi_chosen = float(probs[context, token])
        magnitude = float(abs(gradient[context, token]))
        if abs(magnitude - (1.0 - pi_chosen)) > PROBE_TOLERANCE:
            raise AssertionError(
                f"NSR gradient magnitude {magnitude!r} differs from 1 - pi = {1.0 - pi_chosen!r} at position {position}"
            )
        rows.append(ProbeRow(position=position, token=token, pi_chosen=pi_chosen, gradient_magnitude=magnitude))
        local = local * policy.vocab_size + token
    return rows
