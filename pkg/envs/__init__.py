from .store import dumps_task, enumerate_sequences, load_suite, save_suite
from .tasks import (
    InvalidResponseError,
    Regime,
    TaskFamily,
    TaskSizeError,
    TaskSpec,
    TaskSuite,
    build_task_family,
    check_compatible,
    prior_correctness_exact,
    regime_of,
    verify,
    verify_batch,
)
