"""Homodyne quantum tomography: estimators, simulators, likelihood fits and imaging."""

from .detector_sim import (
    DataSet,
    sample_displaced_parity,
    sample_gaussian_homodyne,
    sample_heterodyne,
    sample_homodyne,
    sample_photocount,
    sample_twin_beam_homodyne,
    sample_twin_beam_two_channel,
)
from .errors import (
    ConfigError,
    CutoffTooSmall,
    Divergent,
    DomainError,
    EmptyData,
    EtaBoundViolation,
    EtaOutOfDomain,
    NonConvergence,
    QtomoError,
    SOutOfDomain,
    ZeroState,
)
from .estimators import (
    Estimator,
    MatrixKernelBank,
    average,
    kernel_displaced_parity,
    kernel_factorized,
    kernel_matrix_element,
    kernel_observable,
    reconstruct_matrix,
)
from .kernels import BACKEND_NAME
from .states import DensityMatrix, GaussianState, StateSpec, make_state, quadrature_pdf, wigner_eval
from .stats import AverageResult

__version__ = "0.1.0"

__all__ = [
    "AverageResult",
    "BACKEND_NAME",
    "ConfigError",
    "CutoffTooSmall",
    "DataSet",
    "DensityMatrix",
    "Divergent",
    "DomainError",
    "EmptyData",
    "Estimator",
    "EtaBoundViolation",
    "EtaOutOfDomain",
    "GaussianState",
    "MatrixKernelBank",
    "NonConvergence",
    "QtomoError",
    "SOutOfDomain",
    "StateSpec",
    "ZeroState",
    "average",
    "kernel_displaced_parity",
    "kernel_factorized",
    "kernel_matrix_element",
    "kernel_observable",
    "make_state",
    "quadrature_pdf",
    "reconstruct_matrix",
    "sample_displaced_parity",
    "sample_gaussian_homodyne",
    "sample_heterodyne",
    "sample_homodyne",
    "sample_photocount",
    "sample_twin_beam_homodyne",
    "sample_twin_beam_two_channel",
    "wigner_eval",
]
