from .flows import (
    DecompositionReport,
    Flow,
    FlowMode,
    ProbeRow,
    exact_expected_advantages,
    exact_flow_gradient,
    exact_gradient_step,
    exact_passk_curve,
    flow_weights,
    nsr_dampening_probe,
    passk_from_prior,
    psr_nsr_decomposition,
)
from .simulate import SIMULATE_COLUMNS, simulate, write_simulation
