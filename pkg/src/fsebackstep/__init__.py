"""Composite FSE-RBFNN fast finite-time backstepping: controller, plants and simulation harness."""

from .config import ConfigError, Scenario, ScenarioConfig
from .controller import (
    BacksteppingController,
    ControllerGains,
    GainError,
    StepGains,
    control_pipeline,
)
from .mathkit import FourierBasis, FseRbfEstimator, SwitchRegion
from .plant import PlantModel, Reference, pendulum_example
from .sim import (
    VARIANTS,
    SimulationDiverged,
    Trace,
    VariantConfig,
    compare_variants,
    metrics,
    run_closed_loop,
)

__version__ = "0.1.0"

__all__ = [
    "BacksteppingController", "ConfigError", "ControllerGains", "FourierBasis", "FseRbfEstimator",
    "GainError", "PlantModel", "Reference", "Scenario", "ScenarioConfig", "SimulationDiverged",
    "StepGains", "SwitchRegion", "Trace", "VARIANTS", "VariantConfig", "compare_variants",
    "control_pipeline", "metrics", "pendulum_example", "run_closed_loop",
]
