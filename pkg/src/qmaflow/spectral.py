"""Spectral differentiation and the flat Poisson solver.

Derivatives are exact for trigonometric polynomials resolved by the grid;
axes with a single sample contribute zero derivative. No dealiasing is
performed; resolution is the caller's responsibility.
"""
from __future__ import annotations

import numpy as np

from .errors import SolvabilityError
from .fields import ScalarField, MatrixField, KIND_HERMITIAN, weighted_mean
from .geometry import TorusGeometry

_MEAN_TOL = 1e-10


def _values_and_geometry(field, geometry):
    if isinstance(field, ScalarField):
        return field.values, field.geometry
    if geometry is None:
        raise ValueError("geometry is required when passing a bare array")
    return np.asarray(field), geometry


def complex_derivative(field, k: int, conjugate: bool = False,
                       geometry: TorusGeometry | None = None) -> np.ndarray:
    """Holomorphic derivative d/dz^k of a field (0-based complex index).

    With ``conjugate=True`` computes d/dzbar^k instead. Accepts a
    ScalarField or a complex array (then ``geometry`` is required) and
    returns a complex array.
    """
    values, geom = _values_and_geometry(field, geometry)
    symbol = (geom.antiholo_symbols if conjugate else geom.holo_symbols)[k]
    hat = np.fft.fftn(values)
    return np.fft.ifftn(symbol * hat)


def complex_hessian(phi: ScalarField) -> MatrixField:
    """Mixed complex Hessian H[i,j] = d^2 phi / dz^i dzbar^j, hermitian.

    All (2n)^2 entries are computed independently from one forward
    transform; hermitian symmetry is a measured property of the result,
    not enforced by mirroring.
    """
    geom = phi.geometry
    m = geom.complex_dim
    hat = np.fft.fftn(phi.values)
    out = np.empty(geom.grid_shape + (m, m), dtype=complex)
    for i in range(m):
        zi = geom.holo_symbols[i]
        for j in range(m):
            out[..., i, j] = np.fft.ifftn(zi * geom.antiholo_symbols[j] * hat)
    return MatrixField(geom, KIND_HERMITIAN, out)


def laplace_flat(phi: ScalarField) -> ScalarField:
    """Flat Laplacian: the background-metric trace of the complex Hessian."""
    geom = phi.geometry
    hat = np.fft.fftn(phi.values)
    return ScalarField(geom, np.fft.ifftn(geom.flat_laplace_symbol * hat).real)


def poisson_solve_flat(rhs: ScalarField) -> ScalarField:
    """Unique zero-mean solution of (flat Laplacian) phi = rhs.

    The right-hand side must have zero mean (torus solvability); the
    offending mean is reported otherwise.
    """
    geom = rhs.geometry
    mean = weighted_mean(rhs)
    if abs(mean) > _MEAN_TOL:
        raise SolvabilityError(
            f"right-hand side must have zero mean on the torus; got mean = {mean:.6e}"
        )
    symbol = geom.flat_laplace_symbol
    hat = np.fft.fftn(rhs.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_hat = np.where(symbol != 0.0, hat / np.where(symbol != 0.0, symbol, 1.0), 0.0)
    phi = np.fft.ifftn(phi_hat).real
    return ScalarField(geom, phi)
