from .config import TrainConfig
from .critic import ValueTable
from .evaluation import eval_passk_sampled, greedy_accuracy
from .loop import (
    TrainingError,
    TrainResult,
    first_step_gradient,
    initial_policy,
    mean_entropy,
    minibatch_update,
    select_batch,
    train_run,
)
from .rollout import RolloutGroup, acollect_groups, collect_group, collect_groups, member_rng, rollout_workers
from .telemetry import (
    TELEMETRY_COLUMNS,
    RolloutLog,
    TelemetryRecord,
    entropy_at_ratio,
    telemetry_frame,
    write_telemetry,
)
