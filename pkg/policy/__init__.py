from .tree import MAX_SEQUENCES, ShapeError, all_sequences, num_contexts, sequence_index
from .tabular import (
    InvalidTokenError,
    TabularPolicy,
    Trajectory,
    apply_update,
    grad_expected_value,
    grad_sequence_logprob,
    greedy_decode,
    mean_token_entropy,
    sample_from_uniforms,
    sample_sequences,
    sample_trajectory,
    sequence_logprob,
    token_logprobs,
)
from .checkpoint import CheckpointFormatError, dumps_policy, load_checkpoint, loads_policy, save_checkpoint
