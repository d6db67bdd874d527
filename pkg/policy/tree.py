"""Prefix-tree indexing for fixed-length token sequences.

Contexts are stored breadth-first: depth 0 holds the empty prefix, depth d holds
the V**d prefixes of length d in lexicographic order. The child of the context
with local index c reached by token v has local index c * V + v one level down.
"""

import itertools
from functools import lru_cache

import numpy as np

# Desk-scale cap on the size of the sequence space.
MAX_SEQUENCES = 65536


class ShapeError(ValueError):
    pass


def check_space(vocab_size: int, max_len: int) -> None:
    if vocab_size < 2:
        raise ShapeError(f"vocab_size must be >= 2, got {vocab_size}")
    if max_len < 1:
        raise ShapeError(f"max_len must be >= 1, got {max_len}")
    if vocab_size ** max_len > MAX_SEQUENCES:
        raise ShapeError(
            f"V^T = {vocab_size}^{max_len} exceeds the desk-scale cap of {MAX_SEQUENCES} sequences"
        )


@lru_cache(maxsize=None)
def level_offsets(vocab_size: int, max_len: int) -> tuple[int, ...]:
    """Start index of each depth 0..T; the last entry is the context count."""
    offsets = [0]
    for depth in range(max_len):
        offsets.append(offsets[-1] + vocab_size ** depth)
    return tuple(offsets)


def num_contexts(vocab_size: int, max_len: int) -> int:
    return level_offsets(vocab_size, max_len)[-1]


def context_path(tokens, vocab_size: int, max_len: int) -> list[int]:
    """Indices of the contexts visited while generating ``tokens``."""
    offsets = level_offsets(vocab_size, max_len)
    path = []
    local = 0
    for depth, token in enumerate(tokens):
        path.append(offsets[depth] + local)
        local = local * vocab_size + int(token)
    return path


def context_paths(tokens: np.ndarray, vocab_size: int, max_len: int) -> np.ndarray:
    """Vectorized ``context_path`` for an (N, T) token array."""
    offsets = level_offsets(vocab_size, max_len)
    tokens = np.asarray(tokens, dtype=np.int64)
    contexts = np.empty_like(tokens)
    local = np.zeros(tokens.shape[0], dtype=np.int64)
    for depth in range(tokens.shape[1]):
        contexts[:, depth] = offsets[depth] + local
        local = local * vocab_size + tokens[:, depth]
    return contexts


def context_tokens(index: int, vocab_size: int, max_len: int) -> tuple[int, ...]:
    """The prefix stored at a context index."""
    offsets = level_offsets(vocab_size, max_len)
    depth = int(np.searchsorted(offsets, index, side="right")) - 1
    local = index - offsets[depth]
    prefix = []
    for _ in range(depth):
        local, token = divmod(local, vocab_size)
        prefix.append(token)
    return tuple(reversed(prefix))


def sequence_index(tokens, vocab_size: int) -> int:
    index = 0
    for token in tokens:
        index = index * vocab_size + int(token)
    return index


@lru_cache(maxsize=32)
def all_sequences(vocab_size: int, max_len: int) -> np.ndarray:
    """Every sequence of the space as a read-only (V**T, T) array, lexicographic order."""
    check_space(vocab_size, max_len)
    grid = np.array(list(itertools.product(range(vocab_size), repeat=max_len)), dtype=np.int64)
    grid.setflags(write=False)
    return grid
