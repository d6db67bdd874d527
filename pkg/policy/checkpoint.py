import logging
import os

import numpy as np

from .tabular import TabularPolicy
from .tree import context_tokens, num_contexts

logger = logging.getLogger(__name__)


class CheckpointFormatError(ValueError):
    pass


def _format_header(policy: TabularPolicy) -> str:
    return f"V={policy.vocab_size}\tT={policy.max_len}\tprompt_id={policy.prompt_id}"


def dumps_policy(policy: TabularPolicy) -> str:
    """Text form: a header line, then ``context_tokens<TAB>logit_0,logit_1,...`` per context, breadth-first."""
    lines = [_format_header(policy)]
    for index, row in enumerate(policy.logits):
        prefix = ",".join(str(t) for t in context_tokens(index, policy.vocab_size, policy.max_len))
        lines.append(prefix + "\t" + ",".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def loads_policy(text: str) -> TabularPolicy:
    lines = text.splitlines()
    if not lines:
        raise CheckpointFormatError("empty checkpoint")
    try:
        header = dict(field.split("=", 1) for field in lines[0].split("\t"))
        vocab_size, max_len = int(header["V"]), int(header["T"])
        prompt_id = header.get("prompt_id", "")
    except (KeyError, ValueError) as e:
        raise CheckpointFormatError(f"bad checkpoint header {lines[0]!r}") from e

    rows = []
    for number, line in enumerate(lines[1:], start=2):
        prefix, _, values = line.partition("\t")
        expected = ",".join(str(t) for t in context_tokens(len(rows), vocab_size, max_len))
        if prefix != expected:
            raise CheckpointFormatError(f"line {number}: expected context {expected!r}, found {prefix!r}")
        try:
            row = [float(x) for x in values.split(",")]
        except ValueError as e:
            raise CheckpointFormatError(f"line {number}: unparseable logits") from e
        if len(row) != vocab_size:
            raise CheckpointFormatError(f"line {number}: expected {vocab_size} logits, found {len(row)}")
        rows.append(row)
    if len(rows) != num_contexts(vocab_size, max_len):
        raise CheckpointFormatError(f"expected {num_contexts(vocab_size, max_len)} contexts, found {len(rows)}")
    return TabularPolicy(vocab_size, max_len, np.array(rows), prompt_id)


def save_checkpoint(policy: TabularPolicy, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_policy(policy))
    logger.debug(f"Wrote checkpoint for {policy.prompt_id} to {path}")
    return path


def load_checkpoint(path: str) -> TabularPolicy:
    with open(path, "r", encoding="utf-8") as f:
        return loads_policy(f.read())
