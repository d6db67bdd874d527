"""Synthetic verifiable tasks over enumerable token-sequence spaces.

Families:
    MODSUM    correct iff sum(tokens) = target (mod m)
    SUBSET    correct iff the sequence is in a seeded random subset of the given density
    LONGTAIL  a Hamming ball of radius 1 around a seeded center (the easy cluster)
              plus rare correct sequences drawn uniformly from outside the ball
"""

import logging
from enum import Enum
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationInfo, field_validator, model_validator

from policy import TabularPolicy, all_sequences, sequence_index
from policy.tree import MAX_SEQUENCES, ShapeError

logger = logging.getLogger(__name__)


class TaskSizeError(ValueError):
    pass


class InvalidResponseError(ValueError):
    pass


class TaskFamily(str, Enum):
    MODSUM = "modsum"
    SUBSET = "subset"
    LONGTAIL = "longtail"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            for member in cls:
                if member.value == value.strip().lower():
                    return member
        return None


class Regime(str, Enum):
    HARD = "hard"  # prior correctness -> 0
    LEARNABLE = "learnable"
    MASTERED = "mastered"  # prior correctness -> 1


def regime_of(prior: float, low: float = 0.05, high: float = 0.95) -> Regime:
    if prior <= low:
        return Regime.HARD
    if prior >= high:
        return Regime.MASTERED
    return Regime.LEARNABLE


class TaskSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    prompt_id: str
    family: TaskFamily
    vocab_size: int = Field(alias="V", ge=2)
    seq_len: int = Field(alias="T", ge=1)
    params: dict[str, Any] = Field(default_factory=dict)
    correct_set: tuple[tuple[int, ...], ...] = ()
    difficulty_target: float = Field(default=0.0, ge=0.0, le=1.0)

    _lookup: frozenset = PrivateAttr(default=frozenset())
    _mask: np.ndarray = PrivateAttr(default=None)

    @field_validator("seq_len")
    @classmethod
    def space_is_enumerable(cls, seq_len: int, info: ValidationInfo):
        vocab = info.data.get("vocab_size")
        if vocab is not None and vocab ** seq_len > MAX_SEQUENCES:
            raise ValueError(f"V^T exceeds the desk-scale cap of {MAX_SEQUENCES} sequences")
        return seq_len

    @field_validator("correct_set")
    @classmethod
    def correct_set_in_space(cls, correct_set, info: ValidationInfo):
        vocab, seq_len = info.data.get("vocab_size"), info.data.get("seq_len")
        if vocab is None or seq_len is None:
            return correct_set
        for seq in correct_set:
            if len(seq) != seq_len or any(not 0 <= t < vocab for t in seq):
                raise ValueError(f"correct sequence {seq} is not in the V={vocab}, T={seq_len} space")
        return tuple(sorted(set(correct_set)))

    def model_post_init(self, __context):
        self._lookup = frozenset(self.correct_set)
        mask = np.zeros(self.vocab_size ** self.seq_len, dtype=bool)
        for seq in self.correct_set:
            mask[sequence_index(seq, self.vocab_size)] = True
        mask.setflags(write=False)
        self._mask = mask

    @property
    def correct_mask(self) -> np.ndarray:
        """Boolean membership of every sequence, lexicographic order."""
        return self._mask

    @property
    def density(self) -> float:
        return len(self.correct_set) / self.vocab_size ** self.seq_len

    def contains(self, tokens) -> bool:
        return tuple(int(t) for t in tokens) in self._lookup

    def rare_paths(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(s) for s in self.params.get("rare", ()))

    def cluster_paths(self) -> tuple[tuple[int, ...], ...]:
        rare = set(self.rare_paths())
        return tuple(s for s in self.correct_set if s not in rare)

    def subset_mask(self, sequences) -> np.ndarray:
        mask = np.zeros(self.vocab_size ** self.seq_len, dtype=bool)
        for seq in sequences:
            mask[sequence_index(seq, self.vocab_size)] = True
        return mask


class TaskSuite(BaseModel):
    tasks: list[TaskSpec]
    seed: int = 0
    regime_mix: dict[str, int] = Field(default_factory=dict)

    @field_validator("tasks")
    @classmethod
    def prompt_ids_unique(cls, tasks: list[TaskSpec]):
        ids = [t.prompt_id for t in tasks]
        if len(ids) != len(set(ids)):
            raise ValueError("prompt_ids must be unique within a suite")
        return tasks

    @model_validator(mode="after")
    def fill_regime_mix(self):
        if not self.regime_mix:
            mix = {r.value: 0 for r in Regime}
            for task in self.tasks:
                mix[regime_of(task.density).value] += 1
            self.regime_mix = mix
        return self


def _modsum_set(space: np.ndarray, modulus: int, target: int) -> np.ndarray:
    return space[space.sum(axis=1) % modulus == target % modulus]


def _longtail_sets(space: np.ndarray, vocab: int, rng: np.random.Generator, n_rare: int):
    center = rng.integers(vocab, size=space.shape[1])
    distance = (space != center).sum(axis=1)
    cluster = space[distance <= 1]
    outside = np.flatnonzero(distance > 1)
    n_rare = min(n_rare, outside.size)
    rare = space[np.sort(rng.choice(outside, size=n_rare, replace=False))]
    return center, cluster, rare


def _as_tuples(rows: np.ndarray) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(t) for t in row) for row in rows)


def build_task_family(
    family: TaskFamily | str,
    V: int,
    T: int,
    seed: int,
    params: Optional[dict[str, Any]] = None,
) -> TaskSuite:
    """Deterministic suite of ``params['n_tasks']`` tasks (default 1) from one family.

    MODSUM reads ``m`` and either ``targets`` (one per task), ``target`` or draws
    targets from the seed. SUBSET reads ``density`` (a number or one per task).
    LONGTAIL reads ``n_rare`` (default 8).
    """
    family = TaskFamily(family)
    params = dict(params or {})
    if V < 2 or T < 1:
        raise TaskSizeError(f"need V >= 2 and T >= 1, got V={V}, T={T}")
    if V ** T > MAX_SEQUENCES:
        raise TaskSizeError(f"V^T = {V}^{T} exceeds the desk-scale cap of {MAX_SEQUENCES} sequences")

    rng = np.random.default_rng(seed)
    space = all_sequences(V, T)
    n_tasks = int(params.get("n_tasks", 1))
    prefix = params.get("prefix", family.value)
    tasks = []

    for i in range(n_tasks):
        task_params: dict[str, Any] = {"seed": seed}
        if family is TaskFamily.MODSUM:
            modulus = int(params.get("m", V))
            if "targets" in params:
                target = int(params["targets"][i])
            elif "target" in params:
                target = int(params["target"])
            else:
                target = int(rng.integers(modulus))
            task_params.update(m=modulus, target=target)
            correct = _modsum_set(space, modulus, target)
        elif family is TaskFamily.SUBSET:
            density = params.get("density", 0.25)
            if isinstance(density, (list, tuple)):
                density = density[i]
            density = float(density)
            if not 0.0 <= density <= 1.0:
                raise ValueError(f"density must lie in [0, 1], got {density}")
            count = int(round(density * len(space)))
            chosen = np.sort(rng.permutation(len(space))[:count])
            task_params.update(density=density)
            correct = space[chosen]
        else:
            n_rare = int(params.get("n_rare", 8))
            center, cluster, rare = _longtail_sets(space, V, rng, n_rare)
            correct = np.concatenate([cluster, rare]) if len(rare) else cluster
            correct = correct[np.lexsort(correct.T[::-1])]
            task_params.update(center=[int(t) for t in center], n_rare=len(rare), rare=[list(map(int, r)) for r in rare])

        task = TaskSpec(
            prompt_id=f"{prefix}-{i:03d}",
            family=family,
            V=V,
            T=T,
            params=task_params,
            correct_set=_as_tuples(correct),
            difficulty_target=len(correct) / len(space),
        )
        tasks.append(task)

    suite = TaskSuite(tasks=tasks, seed=seed)
    logger.info(f"Built {family.value} suite: {n_tasks} tasks, V={V}, T={T}, seed={seed}, regimes={suite.regime_mix}")
    return suite


def verify(task: TaskSpec, tokens) -> int:
    """1 iff the response is in the task's correct set."""
    tokens = tuple(int(t) for t in tokens)
    if len(tokens) != task.seq_len:
        raise InvalidResponseError(f"{task.prompt_id}: expected {task.seq_len} tokens, got {len(tokens)}")
    return 1 if tokens in task._lookup else 0


def verify_batch(task: TaskSpec, tokens: np.ndarray) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 2 or tokens.shape[1] != task.seq_len:
        raise InvalidResponseError(f"{task.prompt_id}: expected responses of length {task.seq_len}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= task.vocab_size):
        raise InvalidResponseError(f"{task.prompt_id}: tokens must lie in [0, {task.vocab_size})")
    index = np.zeros(tokens.shape[0], dtype=np.int64)
    for depth in range(task.seq_len):
        index = index * task.vocab_size + tokens[:, depth]
    return task.correct_mask[index].astype(np.int64)


def check_compatible(policy: TabularPolicy, task: TaskSpec) -> None:
    if (policy.vocab_size, policy.max_len) != (task.vocab_size, task.seq_len):
        raise ShapeError(
            f"policy space V={policy.vocab_size}, T={policy.max_len} does not match task "
            f"{task.prompt_id} with V={task.vocab_size}, T={task.seq_len}"
        )


def prior_correctness_exact(policy: TabularPolicy, task: TaskSpec) -> float:
    """Exact probability mass the policy puts on the correct set."""
    check_compatible(policy, task)
    mass = float(policy.sequence_probabilities()[task.correct_mask].sum())
    return min(max(mass, 0.0), 1.0)
