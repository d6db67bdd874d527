import logging
import os
from typing import Any, Optional

from pydantic import BaseModel, Field, ValidationInfo, model_validator

from envs import TaskFamily, TaskSuite, build_task_family, load_suite
from exactsim import Flow, FlowMode
from trainer import TrainConfig

logger = logging.getLogger(__name__)


class SuiteConfig(BaseModel):
    """Inline task family, built when no suite file is given."""

    family: TaskFamily = TaskFamily.MODSUM
    V: int = Field(default=4, ge=2)
    T: int = Field(default=3, ge=1)
    params: dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None


class SweepConfig(BaseModel):
    deltas: list[float] = Field(default_factory=lambda: [2.0])
    betas: list[float] = Field(default_factory=lambda: [0.0])


class SimulateConfig(BaseModel):
    mode: Flow = Flow.PSR_ONLY
    lam: float = 1.0
    group_size: int = Field(default=8, ge=2)
    steps: int = Field(default=100, ge=0)
    learning_rate: float = Field(default=0.5, gt=0.0)

    def flow_mode(self, mode: Optional[Flow] = None) -> FlowMode:
        return FlowMode(mode=mode or self.mode, lam=self.lam, group_size=self.group_size)


class ExperimentConfig(BaseModel):
    """Everything one experiment needs; ``seed`` is the single root of all randomness."""

    seed: int = Field(default=0, ge=0)
    output_dir: Optional[str] = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    suite: SuiteConfig = Field(default_factory=SuiteConfig)
    heldout: Optional[SuiteConfig] = None
    task_suite_path: Optional[str] = None
    heldout_suite_path: Optional[str] = None
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    simulate: SimulateConfig = Field(default_factory=SimulateConfig)

    @model_validator(mode="before")
    @classmethod
    def paths_relative_to_config(cls, data, info: ValidationInfo):
        base_dir = (info.context or {}).get("base_dir")
        if isinstance(data, dict) and base_dir:
            data = dict(data)
            for name in ("task_suite_path", "heldout_suite_path"):
                path = data.get(name)
                if path and not os.path.isabs(path) and not os.path.exists(path):
                    data[name] = os.path.join(base_dir, path)
        return data

    @model_validator(mode="after")
    def referenced_files_exist(self):
        for name in ("task_suite_path", "heldout_suite_path"):
            path = getattr(self, name)
            if path is not None and not os.path.isfile(path):
                raise ValueError(f"{name} {path!r} does not exist")
        return self

    def train_config(self) -> TrainConfig:
        return self.train.model_copy(
            update={"seed": self.seed, "task_suite": self.task_suite_path, "heldout_suite": self.heldout_suite_path}
        )

    def check_sweep(self) -> None:
        if not self.sweep.deltas or not self.sweep.betas:
            raise ValueError("sweep needs at least one delta and one beta")
        for name, values in (("deltas", self.sweep.deltas), ("betas", self.sweep.betas)):
            if len(set(values)) != len(values):
                raise ValueError(f"sweep {name} must be distinct, got {values}")


def load_config(path: str) -> ExperimentConfig:
    """Parse a JSON experiment config; suite paths may be relative to the config file."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        raw = f.read()
    config = ExperimentConfig.model_validate_json(raw, context={"base_dir": os.path.dirname(os.path.abspath(path))})
    logger.info(f"Loaded config {path}: seed={config.seed}, estimator={config.train.estimator.variant.value}")
    return config


def _build_suite(suite_cfg: SuiteConfig, seed: int) -> TaskSuite:
    suite_seed = suite_cfg.seed if suite_cfg.seed is not None else seed
    return build_task_family(suite_cfg.family, suite_cfg.V, suite_cfg.T, suite_seed, suite_cfg.params)


def resolve_suites(config: ExperimentConfig) -> tuple[TaskSuite, Optional[TaskSuite]]:
    if config.task_suite_path:
        suite = load_suite(config.task_suite_path, seed=config.seed)
    else:
        suite = _build_suite(config.suite, config.seed)
    heldout = None
    if config.heldout_suite_path:
        heldout = load_suite(config.heldout_suite_path, seed=config.seed)
    elif config.heldout is not None:
        heldout = _build_suite(config.heldout, config.seed)
    return suite, heldout
