"""Flat hypercomplex torus geometry.

Coordinates: the real torus R^{4n} / (L_1 Z x ... x L_{4n} Z) carries the
complex coordinates z^k = x^k + i x^{2n+k}, k = 1..2n (1-based in formulas,
0-based in code). The second complex structure J acts on (0,1)-covectors by
a constant matrix coupling the coordinate pairs (2a-1, 2a); its orientation
sign sigma is not assumed from any index convention but calibrated at
construction: the unique sign for which both the background form and the
twisted Hessian of the model potential |z|^2 induce positive metrics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .algebra import ddj_coeff, metric_of_coeff, min_eig_hermitian
from .errors import GeometryError

TWO_PI = 2.0 * math.pi


def _block_j(n: int, sigma: int) -> np.ndarray:
    j = np.zeros((2 * n, 2 * n), dtype=complex)
    for a in range(n):
        j[2 * a, 2 * a + 1] = sigma
        j[2 * a + 1, 2 * a] = -sigma
    return j


def _omega_matrix(n: int) -> np.ndarray:
    """Coefficient matrix of the background form sum_a dz^{2a-1} ^ dz^{2a}."""
    omega = np.zeros((2 * n, 2 * n), dtype=complex)
    for a in range(n):
        omega[2 * a, 2 * a + 1] = 1.0
        omega[2 * a + 1, 2 * a] = -1.0
    return omega


def _is_positive_definite(h: np.ndarray) -> bool:
    return bool(np.min(min_eig_hermitian(np.asarray(h))) > 0.0)


@dataclass(eq=False)
class TorusGeometry:
    """Flat hypercomplex torus with a periodic sampling grid.

    Attributes
    ----------
    n : quaternionic dimension; real dimension is 4n, complex dimension 2n.
    grid_shape : samples per real coordinate (length 4n); axes with a single
        sample model fields constant along that direction.
    periods : period of each real coordinate (length 4n).
    j_matrix : action of J on (0,1)-covectors, constant over the torus.
    j_sign : calibrated orientation sign sigma of the J blocks.
    conformal_u : optional conformal exponent sampled on the grid; the
        background form is then e^u times the flat one.
    """

    n: int
    grid_shape: tuple[int, ...]
    periods: tuple[float, ...]
    j_matrix: np.ndarray
    j_sign: int
    conformal_u: np.ndarray | None = None
    omega_matrix: np.ndarray = field(init=False, repr=False)
    metric_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.omega_matrix = _omega_matrix(self.n)
        self.metric_matrix = metric_of_coeff(self.omega_matrix, self.j_matrix)

    # -- basic sizes ---------------------------------------------------

    @property
    def real_dim(self) -> int:
        return 4 * self.n

    @property
    def complex_dim(self) -> int:
        return 2 * self.n

    @property
    def num_points(self) -> int:
        return int(np.prod(self.grid_shape))

    @property
    def active_axes(self) -> tuple[int, ...]:
        return tuple(d for d, nd in enumerate(self.grid_shape) if nd > 1)

    def axes_for(self, k: int) -> tuple[int, int]:
        """Real axes (Re, Im) of the complex coordinate z^{k+1} (k 0-based)."""
        if not 0 <= k < self.complex_dim:
            raise IndexError(f"complex index {k} out of range [0, {self.complex_dim})")
        return k, self.complex_dim + k

    # -- cached spectral data -------------------------------------------

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Angular wavenumber grid per axis, shaped for broadcasting.

        For even sample counts the single-sided Nyquist mode is zeroed:
        differentiating it has no consistent sign and would break the
        hermitian symmetry of mixed second derivatives. Fields are expected
        to be resolved well below that mode anyway.
        """
        out = []
        for d, (nd, ld) in enumerate(zip(self.grid_shape, self.periods)):
            k = TWO_PI * np.fft.fftfreq(nd, d=ld / nd)
            if nd % 2 == 0 and nd > 1:
                k[nd // 2] = 0.0
            shape = [1] * self.real_dim
            shape[d] = nd
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def holo_symbols(self) -> tuple[np.ndarray, ...]:
        """Fourier symbols of the holomorphic derivatives d/dz^k."""
        out = []
        for k in range(self.complex_dim):
            a, b = self.axes_for(k)
            out.append(0.5 * (1j * self.wavenumbers[a] + self.wavenumbers[b]))
        return tuple(out)

    @cached_property
    def antiholo_symbols(self) -> tuple[np.ndarray, ...]:
        """Fourier symbols of the antiholomorphic derivatives d/dzbar^k."""
        out = []
        for k in range(self.complex_dim):
            a, b = self.axes_for(k)
            out.append(0.5 * (1j * self.wavenumbers[a] - self.wavenumbers[b]))
        return tuple(out)

    @cached_property
    def flat_laplace_symbol(self) -> np.ndarray:
        """Symbol of the flat Laplacian, exactly the complex-Hessian trace."""
        q = np.zeros(self.grid_shape)
        for zeta, xi in zip(self.holo_symbols, self.antiholo_symbols):
            q = q + (zeta * xi).real
        return q

    def coordinate(self, d: int) -> np.ndarray:
        """Grid values of the real coordinate x^{d+1}, broadcastable."""
        nd = self.grid_shape[d]
        x = np.arange(nd) * (self.periods[d] / nd)
        shape = [1] * self.real_dim
        shape[d] = nd
        return x.reshape(shape)

    @property
    def min_spacing(self) -> float:
        """Smallest grid spacing over the active axes."""
        active = self.active_axes
        if not active:
            return min(self.periods)
        return min(self.periods[d] / self.grid_shape[d] for d in active)


def build_flat_torus(
    n: int,
    grid_shape,
    periods=None,
    conformal_u: np.ndarray | None = None,
) -> TorusGeometry:
    """Construct a flat hypercomplex torus with calibrated orientation.

    Parameters
    ----------
    n : quaternionic dimension (>= 1).
    grid_shape : 4n sample counts, each >= 1.
    periods : 4n positive periods; defaults to 2*pi per axis.
    conformal_u : optional conformal exponent on the grid.

    The orientation sign of J is fixed by the calibration test: among the
    two block orientations, exactly one makes the background form induce a
    positive metric while the twisted Hessian of the model potential (with
    identity complex Hessian) adds a positive perturbation.
    """
    if not isinstance(n, int) or n < 1:
        raise GeometryError(f"quaternionic dimension must be a positive integer, got {n!r}")
    grid_shape = tuple(int(v) for v in grid_shape)
    if len(grid_shape) != 4 * n:
        raise GeometryError(
            f"grid_shape has length {len(grid_shape)}, expected 4n = {4 * n}"
        )
    if any(nd < 1 for nd in grid_shape):
        raise GeometryError(f"all sample counts must be >= 1, got {grid_shape}")
    if periods is None:
        periods = (TWO_PI,) * (4 * n)
    periods = tuple(float(v) for v in periods)
    if len(periods) != 4 * n:
        raise GeometryError(f"periods has length {len(periods)}, expected 4n = {4 * n}")
    if any(ld <= 0 for ld in periods):
        raise GeometryError(f"all periods must be positive, got {periods}")

    omega = _omega_matrix(n)
    identity = np.eye(2 * n, dtype=complex)
    chosen = None
    for sigma in (-1, 1):
        j = _block_j(n, sigma)
        background = metric_of_coeff(omega, j)
        perturbation = metric_of_coeff(ddj_coeff(identity, j), j)
        if _is_positive_definite(background) and _is_positive_definite(perturbation):
            chosen = (sigma, j)
            break
    if chosen is None:
        raise GeometryError("orientation calibration failed for both signs of J")
    sigma, j = chosen

    if conformal_u is not None:
        conformal_u = np.asarray(conformal_u, dtype=float)
        if conformal_u.shape != grid_shape:
            raise GeometryError(
                f"conformal factor shape {conformal_u.shape} does not match grid {grid_shape}"
            )

    return TorusGeometry(
        n=n,
        grid_shape=grid_shape,
        periods=periods,
        j_matrix=j,
        j_sign=sigma,
        conformal_u=conformal_u,
    )
