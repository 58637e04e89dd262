"""Simulate flow-model probability paths as discretized Schrodinger dynamics on a periodic grid."""

__version__ = "0.1.0"

from .errors import (
    BudgetError,
    ConfigurationError,
    DomainError,
    ParameterError,
    QSampleFlowError,
    ToleranceError,
)
from .evolution import (
    SimulationPlan,
    evolve,
    local_error_bound,
    pf_step,
    plan,
    reference_evolve,
    reference_propagator,
)
from .grid import GridSpec, flatten, grid_point, unflatten, wave_vector
from .models import (
    ConstantPotential,
    DDPMFlow,
    GaussianLinear,
    TabulatedPotential,
    TrigTorus,
    default_trig_torus,
)
from .qsample import born_sample, ideal_state, qsample_vector, tv_distance
from .spectral import StateVector, apply_H, apply_K, exp_diag_potential, exp_K

__all__ = [
    "BudgetError", "ConfigurationError", "DomainError", "ParameterError", "QSampleFlowError", "ToleranceError",
    "SimulationPlan", "evolve", "local_error_bound", "pf_step", "plan", "reference_evolve", "reference_propagator",
    "GridSpec", "flatten", "grid_point", "unflatten", "wave_vector",
    "ConstantPotential", "DDPMFlow", "GaussianLinear", "TabulatedPotential", "TrigTorus", "default_trig_torus",
    "born_sample", "ideal_state", "qsample_vector", "tv_distance",
    "StateVector", "apply_H", "apply_K", "exp_diag_potential", "exp_K",
]
