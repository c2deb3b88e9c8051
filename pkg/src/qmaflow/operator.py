"""The quaternionic Monge-Ampere operator and its companions.

Two routes to the same density are kept alive deliberately:

* the wedge/Pfaffian route: the ratio of top wedge powers of q-real forms,
  evaluated as a ratio of Pfaffians of coefficient matrices;
* the hermitian route: determinants of the induced metrics.

With the stored conventions (see :mod:`qmaflow.algebra`) the two are tied
by the exact identity det(metric) = Pf(coefficients)^2, so their agreement
on sampled fields is a genuine cross-check of every kernel in between.
"""
from __future__ import annotations

import numpy as np

from .algebra import (
    ddj_coeff,
    j_project_coeff,
    metric_of_coeff,
    min_eig_hermitian,
    pfaffian_field,
    _pfaffian_recursive,
)
from .errors import ConventionError, FieldShapeError
from .fields import (
    KIND_ANTISYMMETRIC,
    KIND_HERMITIAN,
    MatrixField,
    QReal2Form,
    ScalarField,
)
from .geometry import TorusGeometry
from .spectral import complex_hessian

_ANTISYM_TOL = 1e-10
_IMAG_TOL = 1e-9


def background_form(geometry: TorusGeometry) -> QReal2Form:
    """The flat background form as a constant-coefficient QReal2Form."""
    coeffs = MatrixField.constant(geometry, KIND_ANTISYMMETRIC, geometry.omega_matrix)
    return QReal2Form(coeffs)


def ddj(hessian: MatrixField, geometry: TorusGeometry | None = None) -> QReal2Form:
    """Twisted Hessian form of a potential, from its complex Hessian.

    Returns the q-real (2,0)-form with coefficient matrix B - B^T where
    B = -H J; for the identity Hessian at n=1 the single independent
    coefficient is +2 with the calibrated orientation, i.e. the model
    potential adds a positive multiple of the background form.
    """
    if hessian.kind != KIND_HERMITIAN:
        raise FieldShapeError(f"ddj expects a hermitian matrix field, got {hessian.kind!r}")
    geom = geometry or hessian.geometry
    a = ddj_coeff(hessian.values, geom.j_matrix)
    return QReal2Form(MatrixField(geom, KIND_ANTISYMMETRIC, a))


def pfaffian(a: np.ndarray) -> complex:
    """Pfaffian of a single 2n x 2n antisymmetric complex matrix.

    Normalised so that the n-th wedge power of ``sum_{i<s} A[i,s] dz^i^dz^s``
    equals n! Pf(A) dz^1^...^dz^{2n}. Rejects non-antisymmetric input.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] % 2:
        raise FieldShapeError(f"expected a square even-dimensional matrix, got shape {a.shape}")
    scale = float(np.max(np.abs(a)))
    if scale > 0 and float(np.max(np.abs(a + a.T))) > _ANTISYM_TOL * max(1.0, scale):
        raise FieldShapeError("matrix is not antisymmetric within tolerance")
    return complex(_pfaffian_recursive(a))


def _ratio_values(phi: ScalarField) -> np.ndarray:
    geom = phi.geometry
    hess = complex_hessian(phi)
    total = geom.omega_matrix + ddj_coeff(hess.values, geom.j_matrix)
    pf = pfaffian_field(total)
    pf0 = complex(_pfaffian_recursive(geom.omega_matrix))
    ratio = pf / pf0
    imag_max = float(np.max(np.abs(ratio.imag)))
    if imag_max > _IMAG_TOL * max(1.0, float(np.max(np.abs(ratio.real)))):
        raise ConventionError(
            f"wedge-power ratio has imaginary residue {imag_max:.3e}; "
            "this indicates a convention or aliasing bug"
        )
    return ratio.real


def ma_ratio(phi: ScalarField, geometry: TorusGeometry | None = None) -> ScalarField:
    """Pointwise wedge-power ratio of the perturbed and background forms.

    The imaginary part is asserted to vanish (q-reality makes the ratio
    real) and discarded; positivity of the perturbed form is not required.
    """
    if geometry is not None and geometry is not phi.geometry:
        phi = ScalarField(geometry, phi.values)
    return ScalarField(phi.geometry, _ratio_values(phi))


def j_projection(h: MatrixField, geometry: TorusGeometry | None = None) -> MatrixField:
    """Idempotent hermitian projection onto the J-compatible part."""
    if h.kind != KIND_HERMITIAN:
        raise FieldShapeError("j_projection expects a hermitian matrix field")
    geom = geometry or h.geometry
    return MatrixField(geom, KIND_HERMITIAN, j_project_coeff(h.values, geom.j_matrix))


def metric_of_form(form: QReal2Form) -> MatrixField:
    """Hermitian metric induced by a q-real (2,0)-form.

    Normalised so the background form maps to the identity; satisfies
    det(metric) = Pf(coefficients)^2 identically, which keeps the volume
    normalisation between the two densities exact with no constants.
    """
    geom = form.geometry
    g = metric_of_coeff(form.coeffs.values, geom.j_matrix)
    return MatrixField(geom, KIND_HERMITIAN, g)


def metric_from_potential(phi: ScalarField) -> MatrixField:
    """Metric of the perturbed form: background plus the projected Hessian.

    Computed through the form route, so it is consistent by construction
    with the metric reconstructed from the perturbed q-real form; the
    perturbation equals twice the J-projection of the complex Hessian in
    the calibrated normalisation.
    """
    geom = phi.geometry
    hess = complex_hessian(phi)
    total = geom.omega_matrix + ddj_coeff(hess.values, geom.j_matrix)
    return MatrixField(geom, KIND_HERMITIAN, metric_of_coeff(total, geom.j_matrix))


def positivity_margin(g: MatrixField) -> ScalarField:
    """Pointwise smallest eigenvalue; positive everywhere iff admissible."""
    if g.kind != KIND_HERMITIAN:
        raise FieldShapeError("positivity_margin expects a hermitian matrix field")
    return ScalarField(g.geometry, min_eig_hermitian(g.values))


def chern_ricci_conformal(u: ScalarField) -> MatrixField:
    """Chern-Ricci form of the conformal background e^u * (flat form).

    The flat torus is Chern-Ricci flat, so only the conformal exponent
    contributes: R = -2n * (complex Hessian of u). Linear in u.
    """
    geom = u.geometry
    hess = complex_hessian(u)
    return MatrixField(geom, KIND_HERMITIAN, -2.0 * geom.n * hess.values)


def ricci_log_det(g: MatrixField) -> MatrixField:
    """Chern-Ricci form of an arbitrary hermitian metric field.

    Generic log-det route, kept as the slow cross-check for the conformal
    formula and as the driver of the tensor-level flow comparison:
    R = -(complex Hessian of log det g).
    """
    geom = g.geometry
    sign, logabs = np.linalg.slogdet(g.values)
    if np.any(sign.real <= 0):
        raise FieldShapeError("ricci_log_det requires a positive-definite metric field")
    hess = complex_hessian(ScalarField(geom, logabs))
    return MatrixField(geom, KIND_HERMITIAN, -hess.values)


def log_det_ratio(g: MatrixField, g0: MatrixField) -> np.ndarray:
    """Pointwise log(det g / det g0) for positive hermitian fields."""
    sign, logabs = np.linalg.slogdet(g.values)
    sign0, logabs0 = np.linalg.slogdet(g0.values)
    if np.any(sign.real <= 0) or np.any(sign0.real <= 0):
        raise FieldShapeError("log_det_ratio requires positive-definite metric fields")
    return logabs - logabs0
