"""Built-in forward models."""
from .algebraic import (
    IDENTITY_MAP,
    PAIRWISE_GD_MATRIX,
    SKEWED_MAP,
    LinearMapModel,
    PolynomialMapModel,
    analytic_polynomial_jacobian,
    eval_linear,
    eval_polynomial,
)
from .diffusion import (
    DiffusionModel,
    PlateExperiment,
    QoIFunctional,
    TemperatureTrajectory,
    apply_region_average,
    default_sensor_layout,
    desk_sensor_layout,
    solve_diffusion,
)

__all__ = [
    "IDENTITY_MAP", "PAIRWISE_GD_MATRIX", "SKEWED_MAP", "LinearMapModel", "PolynomialMapModel",
    "analytic_polynomial_jacobian", "eval_linear", "eval_polynomial", "DiffusionModel",
    "PlateExperiment", "QoIFunctional", "TemperatureTrajectory", "apply_region_average",
    "default_sensor_layout", "desk_sensor_layout", "solve_diffusion",
]
