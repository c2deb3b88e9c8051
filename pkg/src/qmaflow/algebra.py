"""Pointwise matrix kernels shared by the geometry and operator layers.

Conventions, fixed once and used everywhere:

* A (2,0)-form is stored as an antisymmetric matrix ``A`` with the form
  equal to ``sum_{i<s} A[i,s] dz^i ^ dz^s``.
* ``J`` is the constant matrix of the second complex structure acting on
  (0,1)-covectors, ``J dzbar^r = J[r,s] dz^s``.
* The twisted Hessian form of a potential with complex Hessian ``H`` has
  coefficient matrix ``B - B^T`` with ``B = -H J`` (the single-contraction
  coordinate formula, antisymmetrised into the ``i<s`` basis).
* A q-real form induces a hermitian metric; in our normalisation the
  matrix map is ``A -> A conj(J)``, which sends the background symplectic
  matrix to the identity and satisfies ``det(A conj(J)) = Pf(A)^2``
  identically, so wedge-power ratios square to metric determinant ratios
  with no tuning constants.

All kernels broadcast over leading grid axes.
"""
from __future__ import annotations

import numpy as np


def ddj_coeff(hessian: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Antisymmetric coefficient matrix of the twisted Hessian form.

    ``hessian`` has shape (..., 2n, 2n) and is hermitian pointwise;
    the result is exactly antisymmetric by construction.
    """
    b = -np.matmul(hessian, j)
    return b - np.swapaxes(b, -1, -2)


def metric_of_coeff(a: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Hermitian metric matrix induced by a q-real form coefficient matrix."""
    return np.matmul(a, np.conj(j))


def j_project_coeff(h: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Idempotent projection of a hermitian matrix onto its J-compatible part.

    Realises S -> (S - JS)/2 on (1,1)-forms in matrix form:
    ``P(H) = (H + J^T conj(H) conj(J)) / 2``. Fixes the background metric
    and every metric induced by a q-real form.
    """
    return 0.5 * (h + np.matmul(np.matmul(j.T, np.conj(h)), np.conj(j)))


def q_real_residual(a: np.ndarray, j: np.ndarray) -> float:
    """Sup-norm residual of the q-reality condition ``J^T conj(A) J = A``."""
    lhs = np.matmul(np.matmul(j.T, np.conj(a)), j)
    return float(np.max(np.abs(lhs - a)))


def _pfaffian_recursive(a: np.ndarray) -> complex:
    """Pfaffian by Laplace-type expansion along the first row."""
    m = a.shape[0]
    if m == 0:
        return 1.0 + 0.0j
    if m % 2 == 1:
        return 0.0 + 0.0j
    if m == 2:
        return complex(a[0, 1])
    total = 0.0 + 0.0j
    rest = np.arange(1, m)
    for pos, jj in enumerate(rest):
        sign = -1.0 if pos % 2 else 1.0
        keep = np.delete(rest, pos)
        sub = a[np.ix_(keep, keep)]
        total += sign * a[0, jj] * _pfaffian_recursive(sub)
    return total


def pfaffian_field(a: np.ndarray) -> np.ndarray:
    """Pointwise Pfaffian of a (..., 2n, 2n) antisymmetric array.

    Uses closed forms for 2n <= 4 (the sizes evaluated millions of times in
    the flow loop) and the recursive expansion otherwise.
    """
    m = a.shape[-1]
    if m == 2:
        return a[..., 0, 1]
    if m == 4:
        return (
            a[..., 0, 1] * a[..., 2, 3]
            - a[..., 0, 2] * a[..., 1, 3]
            + a[..., 0, 3] * a[..., 1, 2]
        )
    flat = a.reshape(-1, m, m)
    out = np.empty(flat.shape[0], dtype=complex)
    for idx in range(flat.shape[0]):
        out[idx] = _pfaffian_recursive(flat[idx])
    return out.reshape(a.shape[:-2])


def min_eig_hermitian(g: np.ndarray) -> np.ndarray:
    """Pointwise smallest eigenvalue of a (..., 2n, 2n) hermitian array."""
    m = g.shape[-1]
    if m == 2:
        # closed form for 2x2 hermitian matrices
        half_tr = 0.5 * (g[..., 0, 0].real + g[..., 1, 1].real)
        half_gap = 0.5 * (g[..., 0, 0].real - g[..., 1, 1].real)
        disc = np.sqrt(half_gap**2 + np.abs(g[..., 0, 1]) ** 2)
        return half_tr - disc
    return np.linalg.eigvalsh(g)[..., 0]
