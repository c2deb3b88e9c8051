"""Grid fields over a torus geometry and deterministic reductions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FieldShapeError
from .geometry import TorusGeometry

KIND_HERMITIAN = "hermitian"
KIND_ANTISYMMETRIC = "antisymmetric"

_KIND_TOL = 1e-12


def pairwise_sum(values: np.ndarray):
    """Sum with a fixed pairwise-tree order, bit-identical across runs.

    Adjacent elements are combined level by level; an odd trailing element
    passes through to the next level unchanged.
    """
    x = np.asarray(values).ravel()
    if x.size == 0:
        return x.dtype.type(0)
    while x.size > 1:
        if x.size % 2:
            x = np.concatenate([x[0:-1:2] + x[1::2], x[-1:]])
        else:
            x = x[0::2] + x[1::2]
    return x[0]


@dataclass
class ScalarField:
    """Real-valued function sampled on the periodic grid (row-major)."""

    geometry: TorusGeometry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.geometry.grid_shape:
            raise FieldShapeError(
                f"scalar field shape {self.values.shape} does not match grid "
                f"{self.geometry.grid_shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise FieldShapeError("scalar field contains non-finite entries")

    @classmethod
    def zeros(cls, geometry: TorusGeometry) -> "ScalarField":
        return cls(geometry, np.zeros(geometry.grid_shape))

    @classmethod
    def constant(cls, geometry: TorusGeometry, value: float) -> "ScalarField":
        return cls(geometry, np.full(geometry.grid_shape, float(value)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.geometry, self.values.copy())

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def oscillation(self) -> float:
        return float(np.max(self.values) - np.min(self.values))


@dataclass
class MatrixField:
    """Grid of 2n x 2n complex matrices, hermitian or antisymmetric."""

    geometry: TorusGeometry
    kind: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        m = self.geometry.complex_dim
        expected = self.geometry.grid_shape + (m, m)
        if self.values.shape != expected:
            raise FieldShapeError(
                f"matrix field shape {self.values.shape} does not match {expected}"
            )
        if self.kind not in (KIND_HERMITIAN, KIND_ANTISYMMETRIC):
            raise FieldShapeError(f"unknown matrix field kind {self.kind!r}")
        scale = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        if scale > 0.0:
            swapped = np.swapaxes(self.values, -1, -2)
            if self.kind == KIND_HERMITIAN:
                residual = float(np.max(np.abs(self.values - np.conj(swapped))))
            else:
                residual = float(np.max(np.abs(self.values + swapped)))
            if residual > _KIND_TOL * scale:
                raise FieldShapeError(
                    f"{self.kind} matrix field violates its symmetry: relative "
                    f"residual {residual / scale:.3e} exceeds {_KIND_TOL:.0e}"
                )

    @classmethod
    def constant(cls, geometry: TorusGeometry, kind: str, matrix: np.ndarray) -> "MatrixField":
        values = np.broadcast_to(
            np.asarray(matrix, dtype=complex),
            geometry.grid_shape + np.asarray(matrix).shape,
        ).copy()
        return cls(geometry, kind, values)

    def copy(self) -> "MatrixField":
        return MatrixField(self.geometry, self.kind, self.values.copy())

    def trace(self) -> np.ndarray:
        return np.einsum("...ii->...", self.values).real


@dataclass
class QReal2Form:
    """A (2,0)-form with q-real coefficients, stored antisymmetrically.

    The form equals ``sum_{i<s} A[i,s] dz^i ^ dz^s`` where ``A`` is the
    coefficient matrix of the wrapped antisymmetric field.
    """

    coeffs: MatrixField

    def __post_init__(self):
        if self.coeffs.kind != KIND_ANTISYMMETRIC:
            raise FieldShapeError("QReal2Form requires an antisymmetric matrix field")

    @property
    def geometry(self) -> TorusGeometry:
        return self.coeffs.geometry

    def q_reality_residual(self) -> float:
        """Sup-norm residual of the q-reality condition for this form."""
        j = self.geometry.j_matrix
        a = self.coeffs.values
        lhs = np.matmul(np.matmul(j.T, np.conj(a)), j)
        return float(np.max(np.abs(lhs - a)))


def weighted_mean(f, w=None) -> float:
    """Weighted mean (sum f*w)/(sum w) with deterministic pairwise sums.

    ``f`` and ``w`` may be scalar fields or plain arrays; ``w=None`` means
    the uniform weight. Raises if the total weight is not positive.
    """
    fv = f.values if isinstance(f, ScalarField) else np.asarray(f)
    if w is None:
        total = float(fv.size)
        return pairwise_sum(fv) / total
    wv = w.values if isinstance(w, ScalarField) else np.asarray(w)
    if wv.shape != fv.shape:
        raise FieldShapeError(f"weight shape {wv.shape} does not match field {fv.shape}")
    total = pairwise_sum(wv)
    if not total > 0:
        raise FieldShapeError(f"total weight must be positive, got {total!r}")
    return pairwise_sum(fv * wv) / total
