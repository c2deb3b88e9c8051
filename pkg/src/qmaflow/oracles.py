"""Independent slow implementations used to validate the nonlinear kernels.

Nothing here shares a nonlinear kernel with the main path: the wedge power
is summed over perfect matchings with inversion-counted signs, Hessians are
centered finite-difference stencils, and the n=1 elliptic solution comes
from the linearity of the degree-one wedge power. These run in the verify
and oracle CLI modes and in the test suite, never in the flow loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FieldShapeError, GeometryError
from .fields import (
    KIND_HERMITIAN,
    MatrixField,
    ScalarField,
    weighted_mean,
)
from .flow import DiagnosticsRecord, sup_phidot_centered
from .geometry import TorusGeometry
from .serialize import dumps17
from .spectral import poisson_solve_flat


@dataclass
class OracleReport:
    """Outcome of one oracle comparison suite."""

    name: str
    max_abs_error: float
    max_rel_error: float
    sample_count: int
    passed: bool
    tolerance: float

    def to_json(self) -> str:
        return dumps17(
            {
                "name": self.name,
                "max_abs_error": float(self.max_abs_error),
                "max_rel_error": float(self.max_rel_error),
                "sample_count": int(self.sample_count),
                "pass": bool(self.passed),
                "tolerance": float(self.tolerance),
            }
        )


def report_from_errors(name, errors, tolerance, scale=None) -> OracleReport:
    errors = np.atleast_1d(np.asarray(errors, dtype=float))
    max_abs = float(np.max(errors)) if errors.size else 0.0
    if scale is None or scale == 0.0:
        max_rel = max_abs
    else:
        max_rel = max_abs / float(scale)
    return OracleReport(
        name=name,
        max_abs_error=max_abs,
        max_rel_error=max_rel,
        sample_count=int(errors.size),
        passed=bool(max_abs <= tolerance),
        tolerance=float(tolerance),
    )


def write_reports_jsonl(reports, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(rep.to_json() + "\n")


# ---------------------------------------------------------------------------
# Seeded test fields
# ---------------------------------------------------------------------------


def random_band_limited(geometry: TorusGeometry, seed: int, amp: float = 0.2,
                        max_mode: int = 3) -> ScalarField:
    """Truncated trigonometric polynomial with reproducible coefficients.

    Modes are bounded by ``max_mode`` per active axis; each kept mode m
    contributes a*cos + b*sin with a, b uniform in [-1, 1] scaled by
    amp/(1+|m|)^2, |m| the Euclidean mode norm. Coefficients are drawn in a
    fixed mode order, so the field is a pure function of the seed. Small
    amplitudes keep the potentials admissible.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    active = geometry.active_axes
    if not active:
        return ScalarField(geometry, np.zeros(geometry.grid_shape))
    for d in active:
        if geometry.grid_shape[d] < 2 * max_mode + 2:
            raise GeometryError(
                f"axis {d} has {geometry.grid_shape[d]} samples; the generator "
                f"needs >= {2 * max_mode + 2} to place modes up to {max_mode}"
            )
    total = geometry.num_points
    hat = np.zeros(geometry.grid_shape, dtype=complex)
    seen = set()
    for mode in np.ndindex(*(2 * max_mode + 1 for _ in active)):
        m = tuple(mi - max_mode for mi in mode)
        if all(v == 0 for v in m):
            continue
        neg = tuple(-v for v in m)
        if neg in seen:
            continue
        seen.add(m)
        norm = math.sqrt(sum(v * v for v in m))
        scale = amp / (1.0 + norm) ** 2
        a = rng.uniform(-1.0, 1.0) * scale
        b = rng.uniform(-1.0, 1.0) * scale
        idx_pos = [0] * geometry.real_dim
        idx_neg = [0] * geometry.real_dim
        for v, d in zip(m, active):
            idx_pos[d] = v % geometry.grid_shape[d]
            idx_neg[d] = (-v) % geometry.grid_shape[d]
        coeff = 0.5 * (a - 1j * b) * total
        hat[tuple(idx_pos)] += coeff
        hat[tuple(idx_neg)] += np.conj(coeff)
    values = np.fft.ifftn(hat).real
    return ScalarField(geometry, values)


def admissible_band_limited(geometry: TorusGeometry, seed: int, amp: float = 0.2,
                            max_mode: int = 3, floor: float = 0.3) -> ScalarField:
    """Band-limited field rescaled until its perturbed metric stays positive.

    On grids with many active axes the default amplitude can leave the
    admissible cone; the deterministic rescaling keeps the margin above
    ``floor`` (the perturbation is linear in the field, so one or two
    corrections suffice).
    """
    from .operator import metric_from_potential, positivity_margin

    phi = random_band_limited(geometry, seed, amp=amp, max_mode=max_mode)
    for _ in range(8):
        margin = float(np.min(positivity_margin(metric_from_potential(phi)).values))
        if margin >= floor:
            return phi
        scale = (1.0 - floor) / max(1.0 - margin, 1e-12)
        phi = ScalarField(geometry, phi.values * scale)
    return phi


def random_antisymmetric(rng: np.random.Generator, size: int) -> np.ndarray:
    m = rng.uniform(-1.0, 1.0, (size, size)) + 1j * rng.uniform(-1.0, 1.0, (size, size))
    return m - m.T


# ---------------------------------------------------------------------------
# Wedge power by perfect matchings
# ---------------------------------------------------------------------------


def _perfect_matchings(indices):
    if not indices:
        yield ()
        return
    first = indices[0]
    for pos in range(1, len(indices)):
        partner = indices[pos]
        rest = indices[1:pos] + indices[pos + 1:]
        for tail in _perfect_matchings(rest):
            yield ((first, partner),) + tail


def _permutation_sign(seq) -> int:
    inversions = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inversions += 1
    return -1 if inversions % 2 else 1


def wedge_power_oracle(a: np.ndarray, n: int) -> complex:
    """Coefficient of dz^1^...^dz^{2n} in the n-th wedge power, over n!.

    Explicit sum over perfect matchings with inversion-counted signs;
    definitionally equal to the Pfaffian. Capped at 2n <= 8.
    """
    a = np.asarray(a, dtype=complex)
    if a.shape != (2 * n, 2 * n):
        raise FieldShapeError(f"expected a {2 * n}x{2 * n} matrix, got {a.shape}")
    if 2 * n > 8:
        raise FieldShapeError("wedge power oracle is capped at 2n <= 8")
    total = 0.0 + 0.0j
    for matching in _perfect_matchings(tuple(range(2 * n))):
        flat = tuple(idx for pair in matching for idx in pair)
        term = _permutation_sign(flat)
        for i, j in matching:
            term = term * a[i, j]
        total += term
    return complex(total)


# ---------------------------------------------------------------------------
# Finite-difference Hessian
# ---------------------------------------------------------------------------


def _fd_second(values: np.ndarray, d: int, h: float) -> np.ndarray:
    return (np.roll(values, -1, axis=d) - 2.0 * values + np.roll(values, 1, axis=d)) / (h * h)


def _fd_mixed(values: np.ndarray, d1: int, h1: float, d2: int, h2: float) -> np.ndarray:
    pp = np.roll(np.roll(values, -1, axis=d1), -1, axis=d2)
    pm = np.roll(np.roll(values, -1, axis=d1), 1, axis=d2)
    mp = np.roll(np.roll(values, 1, axis=d1), -1, axis=d2)
    mm = np.roll(np.roll(values, 1, axis=d1), 1, axis=d2)
    return (pp - pm - mp + mm) / (4.0 * h1 * h2)


def fd_hessian(phi: ScalarField) -> MatrixField:
    """Complex Hessian from second-order centered stencils, O(h^2).

    Active axes need at least three samples; derivatives along degenerate
    axes are zero, as in the spectral path.
    """
    geom = phi.geometry
    for d in geom.active_axes:
        if geom.grid_shape[d] < 3:
            raise GeometryError(
                f"axis {d} has {geom.grid_shape[d]} samples; centered stencils need >= 3"
            )
    m = geom.complex_dim
    spacing = [geom.periods[d] / geom.grid_shape[d] for d in range(geom.real_dim)]

    def d2(d1, d2_):
        if geom.grid_shape[d1] == 1 or geom.grid_shape[d2_] == 1:
            return np.zeros(geom.grid_shape)
        if d1 == d2_:
            return _fd_second(phi.values, d1, spacing[d1])
        return _fd_mixed(phi.values, d1, spacing[d1], d2_, spacing[d2_])

    out = np.empty(geom.grid_shape + (m, m), dtype=complex)
    for i in range(m):
        a, b = geom.axes_for(i)
        for j in range(m):
            c, d = geom.axes_for(j)
            real = d2(a, c) + d2(b, d)
            imag = d2(a, d) - d2(b, c)
            out[..., i, j] = 0.25 * (real + 1j * imag)
    return MatrixField(geom, KIND_HERMITIAN, out)


# ---------------------------------------------------------------------------
# Exact elliptic solution at n = 1
# ---------------------------------------------------------------------------


@dataclass
class EllipticSolution:
    phi_star: ScalarField
    b_star: float


def elliptic_exact_n1(f: ScalarField) -> EllipticSolution:
    """Exact solution of the n=1 elliptic problem (degree-one wedge power).

    At n=1 the wedge-power ratio is affine in the potential's flat
    Laplacian, so the problem reduces to a Poisson solve of the
    calibrated-sign multiple of (e^{f+b} - 1) with b = -log mean(e^f).
    """
    geom = f.geometry
    if geom.n != 1:
        raise GeometryError(f"exact elliptic solution requires n=1, got n={geom.n}")
    b_star = -math.log(weighted_mean(ScalarField(geom, np.exp(f.values))))
    rhs = ScalarField(geom, np.exp(f.values + b_star) - 1.0)
    phi_star = poisson_solve_flat(rhs)
    return EllipticSolution(phi_star=phi_star, b_star=b_star)


# ---------------------------------------------------------------------------
# Trajectory monitors
# ---------------------------------------------------------------------------


def monitor_suite(trajectory, f_sup: float | None = None, slack: float = 1e-8,
                  cr_bound: tuple[float, float] | None = None) -> list[OracleReport]:
    """Evaluate the a-priori-bound monitors on a recorded trajectory.

    Checks: (i) monotone extremes of phidot, (ii) sup|phidot| bounded by
    twice the sup of the datum, (iii) finiteness and terminal plateau of
    the background-trace monitor, (iv) terminal plateau of b(t), and, when
    ``cr_bound=(A, slack)`` is given, (v) the linear-in-time upper bound
    phi <= t*A.
    """
    records = list(trajectory)
    if not records:
        raise FieldShapeError("monitor suite requires a non-empty trajectory")
    reports = []

    sups = np.array([r.sup_phidot for r in records])
    infs = np.array([r.inf_phidot for r in records])
    up_viol = np.diff(sups)
    down_viol = -np.diff(infs)
    worst = 0.0
    if up_viol.size:
        worst = max(float(np.max(up_viol, initial=0.0)), float(np.max(down_viol, initial=0.0)))
    reports.append(report_from_errors("max_principle_monotone", [max(worst, 0.0)], slack))

    if f_sup is not None:
        bound = 2.0 * f_sup + slack
        excess = np.maximum(np.abs(sups), np.abs(infs)) - bound
        reports.append(
            report_from_errors("phidot_bounded_by_datum", [max(float(np.max(excess)), 0.0)], slack)
        )

    traces = np.array([r.max_tr_ghat_gphi for r in records])
    finite = bool(np.all(np.isfinite(traces)))
    tail = traces[3 * len(traces) // 4:]
    drift = float(np.max(tail) - np.min(tail)) if tail.size else 0.0
    rel_drift = drift / max(1.0, float(np.max(np.abs(traces))))
    plateau_tol = 1e-3
    reports.append(
        OracleReport(
            name="trace_monitor_plateau",
            max_abs_error=rel_drift if finite else math.inf,
            max_rel_error=rel_drift if finite else math.inf,
            sample_count=len(records),
            passed=finite and rel_drift <= plateau_tol,
            tolerance=plateau_tol,
        )
    )

    bs = np.array([r.b_t for r in records])
    b_tail = bs[3 * len(bs) // 4:]
    b_drift = float(np.max(b_tail) - np.min(b_tail)) if b_tail.size else 0.0
    b_tol = 1e-6
    reports.append(report_from_errors("b_plateau", [b_drift], b_tol))

    if cr_bound is not None:
        # the flow measures min over steps of (t*A + slack - sup phi); a
        # negative value is the bound violation
        _bound_a, measured_min_slack = cr_bound
        reports.append(
            report_from_errors(
                "cr_linear_upper_bound", [max(-measured_min_slack, 0.0)], slack
            )
        )

    return reports


def decay_fit(trajectory) -> tuple[float, float]:
    """Slope and R^2 of log sup|centred phidot| vs t over the final decade."""
    records = [r for r in trajectory if sup_phidot_centered(r) > 0.0]
    if len(records) < 3:
        return 0.0, 0.0
    sups = np.array([sup_phidot_centered(r) for r in records])
    ts = np.array([r.t for r in records])
    final = sups[-1]
    mask = (sups <= 10.0 * final) & (sups >= final)
    if int(np.count_nonzero(mask)) < 3:
        mask = np.zeros_like(mask)
        mask[-max(3, len(records) // 10):] = True
    y = np.log(sups[mask])
    x = ts[mask]
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)
