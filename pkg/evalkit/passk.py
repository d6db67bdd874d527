"""Unbiased Pass@k from n samples with c correct, and its per-prompt averages."""

import logging
import os
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError, model_validator

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 2, 4, 8, 16, 32, 64, 128, 256)


class InvalidQueryError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


class PasskQuery(BaseModel):
    n: int = Field(ge=1)
    c: int = Field(ge=0)
    k: int = Field(ge=1)

    @model_validator(mode="after")
    def counts_within_n(self):
        if self.c > self.n:
            raise ValueError(f"c={self.c} exceeds n={self.n}")
        if self.k > self.n:
            raise ValueError(f"k={self.k} exceeds n={self.n}")
        return self


def _query(n: int, c: int, k: int) -> PasskQuery:
    try:
        return PasskQuery(n=n, c=c, k=k)
    except ValidationError as e:
        raise InvalidQueryError(f"invalid Pass@k query (n={n}, c={c}, k={k}): {e.errors()[0]['msg']}") from e


def passk_unbiased(n, c: Optional[int] = None, k: Optional[int] = None) -> float:
    """1 - C(n-c, k) / C(n, k) in product form; accepts a PasskQuery or (n, c, k)."""
    q = n if isinstance(n, PasskQuery) else _query(n, c, k)
    if q.n - q.c < q.k:
        return 1.0
    # prod_{i=n-c+1}^{n} (1 - k / i) == C(n-c, k) / C(n, k)
    return float(1.0 - np.prod(1.0 - q.k / np.arange(q.n - q.c + 1, q.n + 1)))


def passk_curve_from_log(records: Iterable[tuple[int, int]], ks: Sequence[int]) -> dict[int, float]:
    """Mean of passk_unbiased over prompts for every k."""
    records = [(int(n), int(c)) for n, c in records]
    if not records:
        raise EmptyInputError("Pass@k needs at least one (n, c) record")
    return {int(k): float(np.mean([passk_unbiased(n, c, k) for n, c in records])) for k in ks}


def read_passk_log(path: str) -> pd.DataFrame:
    """JSONL rows of {prompt_id, n, c}."""
    if os.path.getsize(path) == 0:
        raise EmptyInputError(f"{path} is empty")
    frame = pd.read_json(path, lines=True)
    missing = {"n", "c"} - set(frame.columns)
    if missing:
        raise InvalidQueryError(f"{path} lacks columns {sorted(missing)}")
    return frame


def passk_table(frame: pd.DataFrame, ks: Sequence[int] = DEFAULT_KS) -> pd.DataFrame:
    curve = passk_curve_from_log(zip(frame["n"], frame["c"]), ks)
    return pd.DataFrame({"k": list(curve.keys()), "pass_at_k": list(curve.values())})


def write_passk_table(table: pd.DataFrame, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    table.to_csv(path, index=False, float_format="%.7g", na_rep="")
    logger.info(f"Wrote Pass@k for k={list(table['k'])} to {path}")


def parse_ks(text: str) -> list[int]:
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise InvalidQueryError(f"could not parse k list {text!r}") from e
    if not ks or any(k < 1 for k in ks):
        raise InvalidQueryError(f"k list must hold positive integers, got {text!r}")
    return ks
