"""Age-of-information and monitor-error analysis for correlated sensors
sharing a zero-buffer exponential server, with a validating discrete-event
simulator and sensing-allocation optimizers."""

from .aoi import INFINITE, AoiResult, average_aoi, aoi_result, interdeparture_moments, sum_aoi
from .error import (
    EmbeddedChain,
    ErrorResult,
    UntrackedProcessError,
    build_embedded_chain,
    embedded_stationary,
    error_ratio,
    service_transition_matrix,
)
from .model import (
    DerivedRates,
    ProcessModel,
    SystemConfig,
    ValidationError,
    derive_rates,
    stationary_distribution,
    validate_config,
)
from .opt import (
    AllocationResult,
    ConstraintSet,
    Family,
    KktCertificate,
    kkt_residuals,
    objective,
    solve_closed_form,
    solve_grid,
)
from .sim import ReplicatedMetrics, SimMetrics, SimParams, replicate, run_simulation

__version__ = "0.1.0"

__all__ = [
    "INFINITE",
    "AoiResult",
    "AllocationResult",
    "ConstraintSet",
    "DerivedRates",
    "EmbeddedChain",
    "ErrorResult",
    "Family",
    "KktCertificate",
    "ProcessModel",
    "ReplicatedMetrics",
    "SimMetrics",
    "SimParams",
    "SystemConfig",
    "UntrackedProcessError",
    "ValidationError",
    "aoi_result",
    "average_aoi",
    "build_embedded_chain",
    "derive_rates",
    "embedded_stationary",
    "error_ratio",
    "interdeparture_moments",
    "kkt_residuals",
    "objective",
    "replicate",
    "run_simulation",
    "service_transition_matrix",
    "solve_closed_form",
    "solve_grid",
    "stationary_distribution",
    "sum_aoi",
    "validate_config",
]
