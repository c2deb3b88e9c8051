"""Numerical laboratory for the parabolic quaternionic Monge-Ampere flow
and the adapted Chern-Ricci flow on flat hyperkahler tori."""

from .errors import (
    ConfigError,
    ConventionError,
    FieldShapeError,
    FlowBlowupError,
    GeometryError,
    QmaflowError,
    SnapshotError,
    SolvabilityError,
)
from .fields import MatrixField, QReal2Form, ScalarField, pairwise_sum, weighted_mean
from .flow import (
    CRFlowResult,
    DiagnosticsRecord,
    FlowConfig,
    FlowResult,
    FlowState,
    cr_rhs,
    extract_b,
    first_variation,
    initial_state,
    qma_rhs,
    read_diagnostics_csv,
    run_cr_flow,
    run_qma_flow,
    step,
    sup_phidot_centered,
    write_diagnostics_csv,
)
from .geometry import TorusGeometry, build_flat_torus
from .operator import (
    background_form,
    chern_ricci_conformal,
    ddj,
    j_projection,
    ma_ratio,
    metric_from_potential,
    metric_of_form,
    pfaffian,
    positivity_margin,
    ricci_log_det,
)
from .oracles import (
    EllipticSolution,
    OracleReport,
    decay_fit,
    elliptic_exact_n1,
    fd_hessian,
    monitor_suite,
    random_band_limited,
    wedge_power_oracle,
)
from .snapshot import read_scalar_field, write_scalar_field
from .spectral import complex_derivative, complex_hessian, laplace_flat, poisson_solve_flat

__version__ = "0.1.0"

__all__ = [
    "build_flat_torus",
    "TorusGeometry",
    "ScalarField",
    "MatrixField",
    "QReal2Form",
    "weighted_mean",
    "pairwise_sum",
    "complex_derivative",
    "complex_hessian",
    "laplace_flat",
    "poisson_solve_flat",
    "background_form",
    "ddj",
    "pfaffian",
    "ma_ratio",
    "metric_of_form",
    "metric_from_potential",
    "j_projection",
    "positivity_margin",
    "chern_ricci_conformal",
    "ricci_log_det",
    "FlowConfig",
    "FlowState",
    "FlowResult",
    "CRFlowResult",
    "DiagnosticsRecord",
    "qma_rhs",
    "first_variation",
    "extract_b",
    "step",
    "initial_state",
    "run_qma_flow",
    "cr_rhs",
    "run_cr_flow",
    "sup_phidot_centered",
    "write_diagnostics_csv",
    "read_diagnostics_csv",
    "wedge_power_oracle",
    "fd_hessian",
    "elliptic_exact_n1",
    "EllipticSolution",
    "monitor_suite",
    "decay_fit",
    "random_band_limited",
    "OracleReport",
    "read_scalar_field",
    "write_scalar_field",
    "QmaflowError",
    "GeometryError",
    "FieldShapeError",
    "SolvabilityError",
    "ConventionError",
    "FlowBlowupError",
    "SnapshotError",
    "ConfigError",
]
