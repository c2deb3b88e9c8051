import numpy as np
import pytest

from qmaflow import GeometryError, MatrixField, build_flat_torus, ddj, metric_of_form
from qmaflow.algebra import min_eig_hermitian


def test_rejects_bad_dimension():
    with pytest.raises(GeometryError):
        build_flat_torus(0, [])
    with pytest.raises(GeometryError):
        build_flat_torus(-1, [8, 8, 8, 8])


def test_rejects_bad_grid():
    with pytest.raises(GeometryError):
        build_flat_torus(1, [8, 8, 8])
    with pytest.raises(GeometryError):
        build_flat_torus(1, [8, 8, 8, 0])


def test_rejects_bad_periods():
    with pytest.raises(GeometryError):
        build_flat_torus(1, [8, 8, 8, 8], [1.0, 1.0, 1.0])
    with pytest.raises(GeometryError):
        build_flat_torus(1, [8, 8, 8, 8], [1.0, 1.0, 1.0, 0.0])


def test_default_periods_two_pi(g1):
    assert g1.periods == (2 * np.pi,) * 4


def test_j_block_structure(g1):
    sigma = g1.j_sign
    assert sigma in (-1, 1)
    expected = np.array([[0, sigma], [-sigma, 0]], dtype=complex)
    assert np.array_equal(g1.j_matrix, expected)


def test_j_squares_to_minus_identity(g1, g2):
    for geom in (g1, g2):
        m = geom.complex_dim
        assert np.max(np.abs(geom.j_matrix @ np.conj(geom.j_matrix) + np.eye(m))) == 0.0


def test_n2_block_diagonal_of_n1_blocks(g1, g2):
    block = g1.j_matrix
    expected = np.zeros((4, 4), dtype=complex)
    expected[:2, :2] = block
    expected[2:, 2:] = block
    assert np.array_equal(g2.j_matrix, expected)


def test_ij_anticommute_on_covectors(g2):
    # real representation on the basis (dx^1..dx^{2n}, dx^{2n+1}..dx^{4n})
    m = g2.complex_dim
    c = g2.j_matrix.real
    i_real = np.block([[np.zeros((m, m)), np.eye(m)], [-np.eye(m), np.zeros((m, m))]])
    j_real = np.block([[c, np.zeros((m, m))], [np.zeros((m, m)), -c]])
    assert np.max(np.abs(i_real @ j_real + j_real @ i_real)) == 0.0
    k_real = i_real @ j_real
    assert np.max(np.abs(k_real @ k_real + np.eye(2 * m))) == 0.0


def test_background_metric_is_identity(g1, g2):
    for geom in (g1, g2):
        assert np.array_equal(geom.metric_matrix, np.eye(geom.complex_dim))


def test_calibration_identity_hessian(g1):
    """ddJ of the model potential is +2 times the background form slot."""
    h = MatrixField.constant(g1, "hermitian", np.eye(2))
    form = ddj(h)
    a = form.coeffs.values[0, 0, 0, 0]
    assert a[0, 1] == pytest.approx(2.0)
    assert a[1, 0] == pytest.approx(-2.0)
    pert = metric_of_form(form).values[0, 0, 0, 0]
    assert np.min(min_eig_hermitian(pert)) > 0.0


def test_calibration_sign_is_stable_across_n(g1, g2):
    assert g1.j_sign == g2.j_sign


def test_axes_and_spacing(g2):
    assert g2.axes_for(0) == (0, 4)
    assert g2.axes_for(3) == (3, 7)
    with pytest.raises(IndexError):
        g2.axes_for(4)
    assert g2.active_axes == (0, 2)
    assert g2.min_spacing == pytest.approx(2 * np.pi / 16)


def test_degenerate_axes_have_zero_wavenumbers(g1):
    assert np.all(g1.wavenumbers[1] == 0.0)
    assert np.all(g1.wavenumbers[3] == 0.0)


def test_conformal_factor_shape_checked():
    with pytest.raises(GeometryError):
        build_flat_torus(1, [8, 1, 8, 1], conformal_u=np.zeros((4, 1, 8, 1)))
