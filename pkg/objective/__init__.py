from .surrogate import (
    AlignmentError,
    ClipConfig,
    InvalidRatioError,
    LengthNorm,
    SupportMismatchError,
    SurrogateReport,
    clipped_term,
    context_kl,
    exact_token_kl,
    sequence_objective,
)
