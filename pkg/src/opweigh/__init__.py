"""Perturbation weighing for constrained near-critical linear source problems.

The package solves parameterized linear source problems pinned to a
reference gauge output by a control variable, expands the constrained
response to a switched-on perturbation as power series via recursion
relations, and weighs the perturbation from simulated observations of
the balancing control.
"""

from .constraint import (
    BalancePoint,
    PreparedProblem,
    balance,
    balance_at,
    constrained_value,
    gauge_rescale,
    prepare,
    shift_to_balance,
)
from .errors import NumericsError, SchemaError
from .families import (
    CombinedFamily,
    GaugeReference,
    PolyMatrix,
    PolyVector,
    SystemParams,
    SystemValue,
    is_linear_control,
    is_remote,
    load_problem,
    save_problem,
)
from .series import (
    BracketTable,
    ScalarSeries,
    SeriesBundle,
    VectorSeries,
    bilinear_series,
    bracket_table,
    compose,
    linear_control_series,
    perturbation_series,
    remainder_terms,
)
from .spectral import (
    FluxDecomposition,
    FluxPair,
    SpectralData,
    adjoint_flux,
    decompose_flux,
    flux,
    flux_pair,
    fundamental_eigenpair,
    gauge_output,
    harmonic_solve,
    project_harmonic,
    project_harmonic_adjoint,
)
from .weighing import (
    RecoveredScale,
    WeighingReport,
    WeightScale,
    control_response,
    differential_weight,
    realization_error,
    recover_coefficients,
    second_kind_via_exchange,
    weighing_integral,
    weighing_report,
    weight_scale,
)

__version__ = "0.1.0"

__all__ = [
    "BalancePoint",
    "BracketTable",
    "CombinedFamily",
    "FluxDecomposition",
    "FluxPair",
    "GaugeReference",
    "NumericsError",
    "PolyMatrix",
    "PolyVector",
    "PreparedProblem",
    "RecoveredScale",
    "ScalarSeries",
    "SchemaError",
    "SeriesBundle",
    "SpectralData",
    "SystemParams",
    "SystemValue",
    "VectorSeries",
    "WeighingReport",
    "WeightScale",
    "adjoint_flux",
    "balance",
    "balance_at",
    "bilinear_series",
    "bracket_table",
    "compose",
    "constrained_value",
    "control_response",
    "decompose_flux",
    "differential_weight",
    "flux",
    "flux_pair",
    "fundamental_eigenpair",
    "gauge_output",
    "gauge_rescale",
    "harmonic_solve",
    "is_linear_control",
    "is_remote",
    "linear_control_series",
    "load_problem",
    "perturbation_series",
    "prepare",
    "project_harmonic",
    "project_harmonic_adjoint",
    "realization_error",
    "recover_coefficients",
    "remainder_terms",
    "save_problem",
    "second_kind_via_exchange",
    "shift_to_balance",
    "weighing_integral",
    "weighing_report",
    "weight_scale",
    "__version__",
]
