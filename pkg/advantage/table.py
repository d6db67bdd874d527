import logging
import os
from typing import Optional

import pandas as pd

from .estimators import EstimatorConfig, GroupRewards, InvalidGroupError, compute_advantages

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ["k", "adv_pos", "adv_neg"]


def advantage_table(group_size: int, cfg: EstimatorConfig) -> list[tuple[int, Optional[float], Optional[float]]]:
    """Advantage of a correct and an incorrect member for every k in 0..G.

    Each row is computed on the canonical group with k leading +1 rewards. The
    positive cell is None at k = 0 and the negative cell is None at k = G.
    """
    if group_size < 2:
        raise InvalidGroupError(f"group size {group_size} < 2")
    rows = []
    for k in range(group_size + 1):
        values = compute_advantages(GroupRewards.canonical(group_size, k), cfg)
        positive = float(values[0]) if k > 0 else None
        negative = float(values[-1]) if k < group_size else None
        rows.append((k, positive, negative))
    return rows


def advantage_table_frame(group_size: int, cfg: EstimatorConfig) -> pd.DataFrame:
    return pd.DataFrame(advantage_table(group_size, cfg), columns=TABLE_COLUMNS).astype(
        {"adv_pos": "float64", "adv_neg": "float64"}
    )


def write_advantage_table(group_size: int, cfg: EstimatorConfig, path: str) -> pd.DataFrame:
    frame = advantage_table_frame(group_size, cfg)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.7g", na_rep="")
    logger.info(f"Wrote {cfg.variant.value} advantage table (G={group_size}) to {path}")
    return frame
