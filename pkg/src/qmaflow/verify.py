"""Invariant and oracle suites behind the verify and oracle CLI modes.

Each suite exercises one pinned identity or one independent-oracle
comparison on seeded reproducible inputs and returns an OracleReport.
"""
from __future__ import annotations

import numpy as np

from .algebra import ddj_coeff, metric_of_coeff
from .fields import MatrixField, KIND_HERMITIAN, ScalarField, weighted_mean
from .flow import first_variation, qma_rhs
from .geometry import TorusGeometry
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
    OracleReport,
    admissible_band_limited,
    fd_hessian,
    random_antisymmetric,
    random_band_limited,
    report_from_errors,
    wedge_power_oracle,
)
from .spectral import complex_derivative, complex_hessian, laplace_flat, poisson_solve_flat


def _hermitian_random(rng, geom, amp=0.3):
    m = geom.complex_dim
    raw = rng.uniform(-amp, amp, geom.grid_shape + (m, m)) + 1j * rng.uniform(
        -amp, amp, geom.grid_shape + (m, m)
    )
    herm = 0.5 * (raw + np.conj(np.swapaxes(raw, -1, -2)))
    return MatrixField(geom, KIND_HERMITIAN, herm)


def _sample_fields(geom, seed, samples, amp):
    return [random_band_limited(geom, seed + i, amp=amp) for i in range(samples)]


# ---------------------------------------------------------------------------
# invariant suites (verify mode)
# ---------------------------------------------------------------------------


def suite_j_structure(geom: TorusGeometry) -> OracleReport:
    """J^2 = -Id on forms, block coupling, anticommutation with I."""
    j = geom.j_matrix
    m = geom.complex_dim
    errs = [np.max(np.abs(j @ np.conj(j) + np.eye(m)))]
    block = np.zeros_like(j)
    for a in range(geom.n):
        block[2 * a: 2 * a + 2, 2 * a: 2 * a + 2] = j[2 * a: 2 * a + 2, 2 * a: 2 * a + 2]
    errs.append(np.max(np.abs(j - block)))
    # real endomorphisms: I rotates the (x^k, x^{2n+k}) planes, J couples
    # coordinate pairs; IJ + JI must vanish identically
    c = j.real
    i_real = np.block([[np.zeros((m, m)), np.eye(m)], [-np.eye(m), np.zeros((m, m))]])
    j_real = np.block([[c, np.zeros((m, m))], [np.zeros((m, m)), -c]])
    errs.append(np.max(np.abs(i_real @ j_real + j_real @ i_real)))
    errs.append(np.max(np.abs(j_real @ j_real + np.eye(2 * m))))
    return report_from_errors("j_structure", errs, 1e-14)


def suite_background(geom: TorusGeometry) -> OracleReport:
    """Background form is q-real and induces the identity metric."""
    form = background_form(geom)
    errs = [form.q_reality_residual()]
    g = metric_of_form(form)
    eye = np.eye(geom.complex_dim)
    errs.append(float(np.max(np.abs(g.values - eye))))
    return report_from_errors("background_metric", errs, 1e-14)


def suite_derivative_calculus(geom: TorusGeometry, seed: int, samples: int) -> OracleReport:
    """Linearity and product rule of the spectral derivative on trig fields."""
    errs = []
    for i in range(samples):
        a = random_band_limited(geom, seed + 11 * i, amp=0.3)
        b = random_band_limited(geom, seed + 11 * i + 5, amp=0.3)
        for k in range(geom.complex_dim):
            lin = complex_derivative(
                ScalarField(geom, 2.0 * a.values - 3.0 * b.values), k
            )
            errs.append(
                np.max(np.abs(lin - 2.0 * complex_derivative(a, k) + 3.0 * complex_derivative(b, k)))
            )
        # product rule on a doubled grid margin: band-limits add, so stay low
        prod = ScalarField(geom, a.values * b.values)
        k = 0
        lhs = complex_derivative(prod, k)
        rhs = a.values * complex_derivative(b, k) + b.values * complex_derivative(a, k)
        errs.append(np.max(np.abs(lhs - rhs)))
    return report_from_errors("derivative_calculus", errs, 1e-10)


def suite_hessian_hermitian(geom: TorusGeometry, seed: int, samples: int) -> OracleReport:
    errs = []
    for i in range(samples):
        phi = random_band_limited(geom, seed + i)
        h = complex_hessian(phi).values
        errs.append(np.max(np.abs(h - np.conj(np.swapaxes(h, -1, -2)))))
    return report_from_errors("hessian_hermitian", errs, 1e-12)


def suite_derivative_mean_zero(geom: TorusGeometry, seed: int, samples: int) -> OracleReport:
    errs = []
    for i in range(samples):
        phi = random_band_limited(geom, seed + i)
        for k in range(geom.complex_dim):
            d = complex_derivative(phi, k)
            errs.append(abs(weighted_mean(d.real)))
    return report_from_errors("derivative_mean_zero", errs, 1e-12)


def suite_q_reality(geom: TorusGeometry, seed: int, samples: int) -> OracleReport:
    errs = []
    for i in range(samples):
        phi = random_band_limited(geom, seed + i)
        form = ddj(complex_hessian(phi))
        errs.append(form.q_reality_residual())
    return report_from_errors("ddj_q_reality", errs, 1e-10)


def suite_ratio_squared(geom: TorusGeometry, seed: int, samples: int,
                        amp: float = 0.1) -> OracleReport:
    """Wedge-power ratio squared equals the metric determinant ratio."""
    errs = []
    for i in range(samples):
        phi = random_band_limited(geom, seed + i, amp=amp)
        ratio = ma_ratio(phi).values
        g = metric_from_potential(phi).values
        det_ratio = np.linalg.det(g).real  # background determinant is 1
        errs.append(np.max(np.abs(ratio**2 - det_ratio) / np.maximum(1.0, np.abs(det_ratio))))
    return report_from_errors("ratio_squared_vs_det", errs, 1e-9)


def suite_stokes(geom: TorusGeometry, seed: int, samples: int) -> OracleReport:
    errs = []
    for i in range(samples):
        phi = random_band_limited(geom, seed + i)
        errs.append(abs(weighted_mean(ma_ratio(phi)) - 1.0))
    return report_from_errors("stokes_mean_ratio", errs, 1e-10)


def suite_trace_identity(geom: TorusGeometry, seed: int, samples: int,
                         amp: float = 0.1) -> OracleReport:
    """tr_{g_phi} g = 2n - (laplacian of phi in the perturbed metric).

    The right side is assembled from the projection route (twice the
    projected Hessian traced against g_phi), the left from the metric
    route; agreement pins the relative normalisation of the two.
    """
    errs = []
    eye = np.eye(geom.complex_dim)
    for i in range(samples):
        phi = admissible_band_limited(geom, seed + i, amp=amp)
        g_phi = metric_from_potential(phi).values
        lhs = np.einsum("...ii->...", np.linalg.solve(g_phi, np.broadcast_to(
            eye, g_phi.shape).copy())).real
        proj = j_projection(complex_hessian(phi)).values
        lap = 2.0 * np.einsum("...ii->...", np.linalg.solve(g_phi, proj)).real
        rhs = 2.0 * geom.n - lap
        errs.append(np.max(np.abs(lhs - rhs)))
    return report_from_errors("trace_identity", errs, 1e-9)


def suite_volume_identity(geom: TorusGeometry, seed: int, samples: int,
                          amp: float = 0.1) -> OracleReport:
    """The two volume densities agree: Pf(A)^2 = det(metric of A)."""
    errs = []
    form0 = background_form(geom)
    pf0 = pfaffian(geom.omega_matrix)
    det0 = np.linalg.det(metric_of_form(form0).values[(0,) * geom.real_dim]).real
    errs.append(abs(abs(pf0) ** 2 - det0))
    for i in range(samples):
        phi = random_band_limited(geom, seed + i, amp=amp)
        ratio = ma_ratio(phi).values
        det_ratio = np.linalg.det(metric_from_potential(phi).values).real
        errs.append(np.max(np.abs(ratio**2 - det_ratio)))
    return report_from_errors("volume_identity", errs, 1e-12)


def suite_projection(geom: TorusGeometry, seed: int, samples: int) -> OracleReport:
    """Idempotency, fixing of the background, trace compatibility."""
    rng = np.random.Generator(np.random.PCG64(seed))
    errs = []
    g_bg = MatrixField.constant(geom, KIND_HERMITIAN, np.eye(geom.complex_dim))
    errs.append(float(np.max(np.abs(j_projection(g_bg).values - g_bg.values))))
    for i in range(samples):
        h = _hermitian_random(rng, geom)
        p = j_projection(h)
        pp = j_projection(p)
        errs.append(float(np.max(np.abs(pp.values - p.values))))
        phi = admissible_band_limited(geom, seed + 100 + i, amp=0.1)
        g_phi = metric_from_potential(phi).values
        tr_p = np.einsum("...ii->...", np.linalg.solve(g_phi, p.values)).real
        tr_h = np.einsum("...ii->...", np.linalg.solve(g_phi, h.values)).real
        errs.append(float(np.max(np.abs(tr_p - tr_h))))
    return report_from_errors("j_projection", errs, 1e-10)


def suite_poisson_roundtrip(geom: TorusGeometry, seed: int, samples: int) -> OracleReport:
    errs = []
    for i in range(samples):
        f = random_band_limited(geom, seed + i)
        rhs = ScalarField(geom, f.values - weighted_mean(f))
        phi = poisson_solve_flat(rhs)
        back = laplace_flat(phi)
        errs.append(np.max(np.abs(back.values - rhs.values)))
    return report_from_errors("poisson_roundtrip", errs, 1e-10)


def run_invariant_suites(geom: TorusGeometry, seed: int = 0,
                         samples: int = 20) -> list[OracleReport]:
    return [
        suite_j_structure(geom),
        suite_background(geom),
        suite_derivative_calculus(geom, seed, max(2, samples // 5)),
        suite_hessian_hermitian(geom, seed + 1000, samples),
        suite_derivative_mean_zero(geom, seed + 2000, max(2, samples // 5)),
        suite_q_reality(geom, seed + 3000, samples),
        suite_ratio_squared(geom, seed + 4000, samples),
        suite_stokes(geom, seed + 5000, samples),
        suite_trace_identity(geom, seed + 6000, samples),
        suite_volume_identity(geom, seed + 7000, samples),
        suite_projection(geom, seed + 8000, max(2, samples // 4)),
        suite_poisson_roundtrip(geom, seed + 9000, max(2, samples // 4)),
    ]


# ---------------------------------------------------------------------------
# oracle suites (oracle mode)
# ---------------------------------------------------------------------------


def suite_pfaffian_vs_wedge(n: int, seed: int, samples: int) -> OracleReport:
    rng = np.random.Generator(np.random.PCG64(seed))
    errs = []
    for _ in range(samples):
        a = random_antisymmetric(rng, 2 * n)
        errs.append(abs(pfaffian(a) - wedge_power_oracle(a, n)))
    return report_from_errors(f"pfaffian_vs_wedge_n{n}", errs, 1e-12)


def suite_hessian_vs_fd(geom: TorusGeometry, seed: int, samples: int) -> OracleReport:
    # second-order stencil truncation scales with amplitude; amp 0.1 keeps
    # mode-3 fields inside the 1e-3 budget at 64 samples per axis
    errs = []
    for i in range(samples):
        phi = random_band_limited(geom, seed + i, amp=0.1)
        spec = complex_hessian(phi).values
        fd = fd_hessian(phi).values
        errs.append(np.max(np.abs(spec - fd)))
    return report_from_errors("hessian_vs_fd", errs, 1e-3)


def suite_ratio_closed_form_reduced(seed: int, samples: int) -> OracleReport:
    """n=2 ratio against the hand-expanded form for fields of z^1, z^3."""
    from .geometry import build_flat_torus

    geom = build_flat_torus(2, [24, 1, 24, 1, 1, 1, 1, 1])
    errs = []
    for i in range(samples):
        phi = random_band_limited(geom, seed + i, amp=0.15)
        h = complex_hessian(phi).values
        ratio = ma_ratio(phi).values
        closed = (1.0 + h[..., 0, 0].real) * (1.0 + h[..., 2, 2].real) - np.abs(
            h[..., 0, 2]
        ) ** 2
        errs.append(np.max(np.abs(ratio - closed)))
    return report_from_errors("ratio_closed_form_reduced_n2", errs, 1e-10)


def suite_elliptic_roundtrip(geom: TorusGeometry, seed: int, samples: int) -> OracleReport:
    from .geometry import build_flat_torus
    from .oracles import elliptic_exact_n1

    # e^f is not band-limited; 32 samples per active axis keeps its
    # spectral tail below the round-trip tolerance
    shape = [1, 1, 1, 1]
    shape[0] = shape[2] = 32
    geom32 = build_flat_torus(1, shape)
    errs = []
    for i in range(samples):
        f = random_band_limited(geom32, seed + i, amp=0.2)
        sol = elliptic_exact_n1(f)
        ratio = ma_ratio(sol.phi_star).values
        errs.append(np.max(np.abs(ratio - np.exp(f.values + sol.b_star))))
    return report_from_errors("elliptic_exact_roundtrip", errs, 1e-10)


def suite_ricci_conformal_vs_logdet(geom: TorusGeometry, seed: int,
                                    samples: int) -> OracleReport:
    errs = []
    eye = np.eye(geom.complex_dim, dtype=complex)
    for i in range(samples):
        u = random_band_limited(geom, seed + i, amp=0.2)
        direct = chern_ricci_conformal(u).values
        metric = MatrixField(
            geom, KIND_HERMITIAN, np.exp(u.values)[..., None, None] * eye
        )
        generic = ricci_log_det(metric).values
        errs.append(np.max(np.abs(direct - generic)))
    return report_from_errors("ricci_conformal_vs_logdet", errs, 1e-8)


def suite_first_variation(geom: TorusGeometry, seed: int) -> OracleReport:
    """Central finite differences of the flow RHS decay quadratically."""
    phi = admissible_band_limited(geom, seed, amp=0.15)
    psi = admissible_band_limited(geom, seed + 1, amp=0.3)
    f = ScalarField.zeros(geom)
    tangent = first_variation(phi, psi).values
    eps_errors = []
    for eps in (1e-2, 1e-3, 1e-4):
        plus = qma_rhs(ScalarField(geom, phi.values + eps * psi.values), f).values
        minus = qma_rhs(ScalarField(geom, phi.values - eps * psi.values), f).values
        fd = (plus - minus) / (2.0 * eps)
        eps_errors.append(float(np.max(np.abs(fd - tangent))))
    # second-order decay: fit slope of log error vs log eps
    slope = np.polyfit(np.log([1e-2, 1e-3, 1e-4]), np.log(eps_errors), 1)[0]
    passed = slope > 1.7 and eps_errors[-1] < 1e-6
    return OracleReport(
        name="first_variation_second_order",
        max_abs_error=eps_errors[-1],
        max_rel_error=abs(2.0 - slope),
        sample_count=3,
        passed=bool(passed),
        tolerance=1e-6,
    )


def run_oracle_suites(geom: TorusGeometry, seed: int = 0,
                      samples: int = 100) -> list[OracleReport]:
    reports = [
        suite_pfaffian_vs_wedge(1, seed, samples),
        suite_pfaffian_vs_wedge(2, seed + 1, samples),
        suite_hessian_vs_fd(_fd_geometry(geom), seed + 2, max(3, samples // 10)),
        suite_ratio_closed_form_reduced(seed + 3, max(5, samples // 10)),
        suite_ricci_conformal_vs_logdet(geom, seed + 5, max(3, samples // 10)),
        suite_first_variation(geom, seed + 6),
    ]
    if geom.n == 1:
        reports.append(suite_elliptic_roundtrip(geom, seed + 4, max(5, samples // 10)))
    return reports


def _fd_geometry(geom: TorusGeometry) -> TorusGeometry:
    """Small companion geometry with z^1 fully active at 64 samples.

    Keeps the stencil comparison cheap regardless of the run geometry.
    """
    from .geometry import build_flat_torus

    shape = [1] * (4 * geom.n)
    shape[0] = 64
    shape[2 * geom.n] = 64
    return build_flat_torus(geom.n, shape)
