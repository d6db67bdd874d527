import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import entr, log_softmax

from .tree import (
    ShapeError,
    check_space,
    context_path,
    context_paths,
    level_offsets,
    num_contexts,
)

logger = logging.getLogger(__name__)


class InvalidTokenError(ValueError):
    pass


class Trajectory(BaseModel):
    """One fixed-length episode and the log-probs it was sampled with."""

    tokens: tuple[int, ...]
    logprob_old: float
    per_token_logprob_old: tuple[float, ...]
    reward: Optional[int] = None
    prompt_id: str = ""
    member: int = 0

    @model_validator(mode="after")
    def logprob_is_token_sum(self):
        if abs(self.logprob_old - sum(self.per_token_logprob_old)) > 1e-10:
            raise ValueError("logprob_old must equal the sum of per_token_logprob_old")
        if self.reward is not None and self.reward not in (-1, 1):
            raise ValueError("reward must be -1 or +1")
        return self


class TabularPolicy:
    """Softmax logits over every prefix context of a V-ary tree of depth T.

    Instances are immutable: updates return a new policy and leave the old one
    usable as the sampling snapshot.
    """

    def __init__(
        self,
        vocab_size: int,
        max_len: int,
        logits: Optional[np.ndarray] = None,
        prompt_id: str = "",
    ):
        check_space(vocab_size, max_len)
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.prompt_id = prompt_id
        shape = (num_contexts(vocab_size, max_len), vocab_size)
        if logits is None:
            table = np.zeros(shape)
        else:
            table = np.array(logits, dtype=np.float64, copy=True)
            if table.shape != shape:
                raise ShapeError(f"logits shape {table.shape} does not match {shape}")
        table.setflags(write=False)
        self.logits = table
        self._log_prob_cache: dict[float, np.ndarray] = {}

    @classmethod
    def uniform(cls, vocab_size: int, max_len: int, prompt_id: str = "") -> "TabularPolicy":
        return cls(vocab_size, max_len, prompt_id=prompt_id)

    @classmethod
    def random(
        cls,
        vocab_size: int,
        max_len: int,
        scale: float = 1.0,
        seed: int = 0,
        prompt_id: str = "",
    ) -> "TabularPolicy":
        """Gaussian logits with standard deviation ``scale``; scale 0 is uniform."""
        rng = np.random.default_rng(seed)
        shape = (num_contexts(vocab_size, max_len), vocab_size)
        return cls(vocab_size, max_len, scale * rng.standard_normal(shape), prompt_id)

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape

    def with_logits(self, logits: np.ndarray) -> "TabularPolicy":
        return TabularPolicy(self.vocab_size, self.max_len, logits, self.prompt_id)

    def log_probs(self, temperature: float = 1.0) -> np.ndarray:
        """Per-context log-distribution of softmax(logits / temperature)."""
        cached = self._log_prob_cache.get(temperature)
        if cached is None:
            cached = log_softmax(self.logits / temperature, axis=1)
            cached.setflags(write=False)
            self._log_prob_cache[temperature] = cached
        return cached

    def probs(self, temperature: float = 1.0) -> np.ndarray:
        return np.exp(self.log_probs(temperature))

    def level(self, depth: int) -> slice:
        offsets = level_offsets(self.vocab_size, self.max_len)
        return slice(offsets[depth], offsets[depth + 1])

    def reach_probabilities(self, temperature: float = 1.0) -> list[np.ndarray]:
        """Probability of reaching every context, one array per depth."""
        probs = self.probs(temperature)
        reach = [np.ones(1)]
        for depth in range(self.max_len - 1):
            reach.append((reach[-1][:, None] * probs[self.level(depth)]).reshape(-1))
        return reach

    def sequence_probabilities(self, temperature: float = 1.0) -> np.ndarray:
        """Exact probability of all V**T sequences in lexicographic order."""
        probs = self.probs(temperature)
        reach = self.reach_probabilities(temperature)
        return (reach[-1][:, None] * probs[self.level(self.max_len - 1)]).reshape(-1)

    def check_tokens(self, tokens) -> tuple[int, ...]:
        tokens = tuple(int(t) for t in tokens)
        if len(tokens) != self.max_len:
            raise InvalidTokenError(f"expected {self.max_len} tokens, got {len(tokens)}")
        for token in tokens:
            if not 0 <= token < self.vocab_size:
                raise InvalidTokenError(f"token {token} outside vocabulary of size {self.vocab_size}")
        return tokens

    def __repr__(self) -> str:
        return f"TabularPolicy(V={self.vocab_size}, T={self.max_len}, prompt_id={self.prompt_id!r})"


def sample_sequences(
    policy: TabularPolicy,
    temperature: float,
    rng: np.random.Generator,
    size: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` sequences at once; returns tokens and per-token log-probs, both (size, T)."""
    return sample_from_uniforms(policy, temperature, rng.random((size, policy.max_len)))


def sample_from_uniforms(
    policy: TabularPolicy,
    temperature: float,
    uniforms: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-CDF decoding of one uniform draw per position; row i of ``uniforms`` drives sequence i."""
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    uniforms = np.asarray(uniforms, dtype=np.float64)
    if uniforms.ndim != 2 or uniforms.shape[1] != policy.max_len:
        raise ShapeError(f"expected uniforms of shape (n, {policy.max_len}), got {uniforms.shape}")
    size = uniforms.shape[0]
    log_probs = policy.log_probs(temperature)
    cumulative = np.cumsum(np.exp(log_probs), axis=1)
    offsets = level_offsets(policy.vocab_size, policy.max_len)
    tokens = np.empty((size, policy.max_len), dtype=np.int64)
    token_logp = np.empty((size, policy.max_len))
    local = np.zeros(size, dtype=np.int64)
    for depth in range(policy.max_len):
        contexts = offsets[depth] + local
        chosen = (cumulative[contexts] <= uniforms[:, depth, None]).sum(axis=1)
        chosen = np.minimum(chosen, policy.vocab_size - 1)
        tokens[:, depth] = chosen
        token_logp[:, depth] = log_probs[contexts, chosen]
        local = local * policy.vocab_size + chosen
    return tokens, token_logp


def sample_trajectory(policy: TabularPolicy, temperature: float, rng: np.random.Generator) -> Trajectory:
    tokens, token_logp = sample_sequences(policy, temperature, rng, size=1)
    per_token = tuple(float(x) for x in token_logp[0])
    return Trajectory(
        tokens=tuple(int(t) for t in tokens[0]),
        logprob_old=sum(per_token),
        per_token_logprob_old=per_token,
        prompt_id=policy.prompt_id,
    )


def greedy_decode(policy: TabularPolicy) -> Trajectory:
    """Argmax token at every context; ties go to the lowest token id."""
    log_probs = policy.log_probs()
    offsets = level_offsets(policy.vocab_size, policy.max_len)
    tokens, per_token = [], []
    local = 0
    for depth in range(policy.max_len):
        context = offsets[depth] + local
        token = int(np.argmax(policy.logits[context]))
        tokens.append(token)
        per_token.append(float(log_probs[context, token]))
        local = local * policy.vocab_size + token
    return Trajectory(
        tokens=tuple(tokens),
        logprob_old=sum(per_token),
        per_token_logprob_old=tuple(per_token),
        prompt_id=policy.prompt_id,
    )


def token_logprobs(policy: TabularPolicy, tokens, temperature: float = 1.0) -> np.ndarray:
    tokens = policy.check_tokens(tokens)
    path = context_path(tokens, policy.vocab_size, policy.max_len)
    return policy.log_probs(temperature)[path, list(tokens)]


def sequence_logprob(policy: TabularPolicy, tokens, temperature: float = 1.0) -> float:
    return float(token_logprobs(policy, tokens, temperature).sum())


def grad_sequence_logprob(policy: TabularPolicy, tokens, temperature: float = 1.0) -> np.ndarray:
    """d ln pi(tokens) / d logits: 1 - pi on chosen entries, -pi on the rest of each visited row."""
    tokens = policy.check_tokens(tokens)
    path = context_path(tokens, policy.vocab_size, policy.max_len)
    probs = policy.probs(temperature)
    grad = np.zeros(policy.shape)
    for context, token in zip(path, tokens):
        grad[context] = -probs[context]
        grad[context, token] = 1.0 - probs[context, token]
    if temperature != 1.0:
        grad /= temperature
    return grad


def grad_expected_value(policy: TabularPolicy, leaf_values: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradient of sum_y f(y) pi(y) for fixed per-sequence values f, by backward tree recursion.

    Entry (c, v) equals reach(c) * pi(v|c) * (F(c v) - F(c)), where F is the
    conditional expectation of f below a prefix.
    """
    vocab = policy.vocab_size
    values = np.asarray(leaf_values, dtype=np.float64)
    if values.shape != (vocab ** policy.max_len,):
        raise ShapeError(f"expected {vocab ** policy.max_len} leaf values, got shape {values.shape}")
    probs = policy.probs()
    reach = policy.reach_probabilities()
    grad = np.zeros(policy.shape)
    for depth in reversed(range(policy.max_len)):
        level_probs = probs[policy.level(depth)]
        child_values = values.reshape(vocab ** depth, vocab)
        parent_values = (level_probs * child_values).sum(axis=1)
        grad[policy.level(depth)] = reach[depth][:, None] * level_probs * (child_values - parent_values[:, None])
        values = parent_values
    return grad, float(values[0])


def mean_token_entropy(policy: TabularPolicy, temperature: float = 1.0) -> float:
    """Visitation-weighted per-token Shannon entropy in nats."""
    entropy = entr(policy.probs(temperature)).sum(axis=1)
    reach = policy.reach_probabilities(temperature)
    total = sum(float(np.dot(reach[d], entropy[policy.level(d)])) for d in range(policy.max_len))
    return max(total / policy.max_len, 0.0)


def apply_update(policy: TabularPolicy, gradient: np.ndarray, learning_rate: float) -> TabularPolicy:
    """Plain gradient ascent on the logits."""
    if learning_rate <= 0:
        raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != policy.shape:
        raise ShapeError(f"gradient shape {gradient.shape} does not match logits shape {policy.shape}")
    return policy.with_logits(policy.logits + learning_rate * gradient)


def batch_contexts(policy: TabularPolicy, tokens: np.ndarray) -> np.ndarray:
    return context_paths(tokens, policy.vocab_size, policy.max_len)
