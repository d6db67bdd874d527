from .estimators import (
    VARIANT_PRESETS,
    DegenerateDenominatorError,
    EstimatorConfig,
    GroupRewards,
    GroupStats,
    InvalidBaselineError,
    InvalidGroupError,
    RewardSign,
    Variant,
    advantage_by_count,
    agpo_advantage,
    compute_advantages,
    estimator_config_for,
    group_stats,
    grpo_advantage,
    ppo_baseline_advantage,
    sign_reward,
    signed_reinforce_advantage,
)
from .table import advantage_table, advantage_table_frame, write_advantage_table
