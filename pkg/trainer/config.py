from typing import Optional

from pydantic import BaseModel, Field, model_validator

from advantage import EstimatorConfig
from objective import ClipConfig


class TrainConfig(BaseModel):
    """One sampled training run. Defaults keep G = 8 and a 4:1 batch to mini-batch ratio."""

    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    clip: ClipConfig = Field(default_factory=ClipConfig)
    group_size: int = Field(default=8, ge=2)
    batch_prompts: int = Field(default=32, ge=1)
    mini_batch_prompts: int = Field(default=8, ge=1)
    temperature: float = Field(default=0.6, gt=0.0)
    learning_rate: float = Field(default=4.0, gt=0.0)
    critic_learning_rate: float = Field(default=0.1, gt=0.0, le=1.0)
    epochs_per_batch: int = Field(default=1, ge=1)
    total_steps: int = Field(default=100, ge=0)
    eval_every: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)
    init_logit_scale: float = Field(default=0.0, ge=0.0)
    task_suite: Optional[str] = None
    heldout_suite: Optional[str] = None
    log_rollouts: bool = False

    @model_validator(mode="after")
    def mini_batch_divides_batch(self):
        if self.batch_prompts % self.mini_batch_prompts != 0:
            raise ValueError(
                f"mini_batch_prompts ({self.mini_batch_prompts}) must divide batch_prompts ({self.batch_prompts})"
            )
        return self
