from .commands import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, UsageError, build_parser, run
from .config import ExperimentConfig, SimulateConfig, SuiteConfig, SweepConfig, load_config, resolve_suites
from .sweep import derive_seed, float_bits, mix64, point_config, sweep
