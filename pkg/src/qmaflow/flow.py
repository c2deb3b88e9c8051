"""Time integration of the parabolic quaternionic Monge-Ampere flow and of
the adapted Chern-Ricci flow on flat tori.

The MA flow evolves phi by twice the log of the wedge-power ratio minus
twice the datum; its time derivative tends to the constant 2b, so the
stopping test is on the centred quantity sup|phidot - mean(phidot)|, which
the convergence mechanism drives to zero exponentially. The mean drift is
logged every step through b(t), whose plateau is an independent signal.

The Chern-Ricci flow is integrated in scalar form against the pencil
(background) - t * ric_minus + (projected Hessian), with the tensor-level
flow evolved in lockstep as a reconstruction cross-check. Only the explicit
scheme is supported there: matching the two discretisations exactly is what
isolates formula errors from time-discretisation error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import ddj_coeff, metric_of_coeff, min_eig_hermitian, pfaffian_field, _pfaffian_recursive
from .errors import ConfigError, ConventionError, FlowBlowupError
from .fields import KIND_HERMITIAN, MatrixField, ScalarField, pairwise_sum, weighted_mean
from .geometry import TorusGeometry
from .operator import chern_ricci_conformal, j_projection, log_det_ratio, ricci_log_det
from .serialize import fmt17
from .spectral import complex_hessian

EXPLICIT_EULER = "explicit_euler"
IMEX = "imex"
SCHEMES = (EXPLICIT_EULER, IMEX)

CSV_HEADER = (
    "step,t,dt,sup_phidot,inf_phidot,osc_phi,b_t,min_pos_margin,"
    "max_tr_ghat_gphi,elliptic_residual"
)

_IMEX_DT_FACTOR = 10.0


@dataclass
class FlowConfig:
    """Configuration for a flow run.

    ``datum`` is the prescribed density exponent f for the MA flow, or the
    conformal exponent u of the background for the Chern-Ricci flow.
    ``dt_initial=None`` selects the stability-based step size (explicit) or
    ten times it (imex).
    """

    geometry: TorusGeometry
    datum: ScalarField
    scheme: str = EXPLICIT_EULER
    dt_initial: float | None = None
    dt_safety: float = 0.5
    tol_converge: float = 1e-9
    t_max: float = 500.0
    max_steps: int = 500_000
    snapshot_every: int = 1
    reconstruct_every: int = 25

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError("/solver/scheme", f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.dt_safety <= 1.0:
            raise ConfigError("/solver/dt_safety", f"must be in (0, 1], got {self.dt_safety}")
        if self.tol_converge <= 0:
            raise ConfigError("/solver/tol", f"must be positive, got {self.tol_converge}")
        if self.dt_initial is not None and self.dt_initial <= 0:
            raise ConfigError("/solver/dt", f"must be positive, got {self.dt_initial}")


@dataclass
class DiagnosticsRecord:
    """Per-step monitors; one CSV row per record."""

    step: int
    t: float
    dt: float
    sup_phidot: float
    inf_phidot: float
    osc_phi: float
    b_t: float
    min_pos_margin: float
    max_tr_ghat_gphi: float
    elliptic_residual: float

    def csv_row(self) -> str:
        return ",".join(
            [str(self.step)]
            + [
                fmt17(v)
                for v in (
                    self.t,
                    self.dt,
                    self.sup_phidot,
                    self.inf_phidot,
                    self.osc_phi,
                    self.b_t,
                    self.min_pos_margin,
                    self.max_tr_ghat_gphi,
                    self.elliptic_residual,
                )
            ]
        )


def sup_phidot_centered(record: DiagnosticsRecord) -> float:
    """Sup-norm of the centred time derivative, reconstructed from a record.

    The mean of phidot equals 2 b(t) exactly (same quadrature), so the
    centred sup is derivable from the logged extremes.
    """
    mean = 2.0 * record.b_t
    return max(record.sup_phidot - mean, mean - record.inf_phidot)


@dataclass
class _Eval:
    """One full evaluation of the MA flow right-hand side."""

    rhs: np.ndarray
    ratio: np.ndarray
    margin: np.ndarray
    margin_min: float
    trace_max: float
    b_t: float
    sup_rhs: float
    inf_rhs: float
    sup_centered: float
    stiffness: float
    elliptic_residual: float


@dataclass
class FlowState:
    """Flow time, potential, cached time derivative and step metadata."""

    t: float
    phi: ScalarField
    phi_dot: ScalarField
    step_index: int
    dt_last: float
    _eval: _Eval | None = field(default=None, repr=False, compare=False)


@dataclass
class FlowResult:
    phi_tilde: ScalarField
    b: float
    trajectory: list[DiagnosticsRecord]
    converged: bool
    state: FlowState
    elliptic_residual: float


@dataclass
class CRFlowResult:
    trajectory: list[DiagnosticsRecord]
    t_hat: float
    reconstruction_error: float
    t_star_pencil: float
    bound_constant: float
    bound_ok: bool
    bound_slack_min: float
    state: FlowState
    completed: bool


# ---------------------------------------------------------------------------
# MA flow right-hand side
# ---------------------------------------------------------------------------


def _check_positive(margin: np.ndarray, t=None, step=None):
    idx = np.unravel_index(int(np.argmin(margin)), margin.shape)
    worst = float(margin[idx])
    if worst <= 0.0:
        raise FlowBlowupError(point=idx, margin=worst, t=t, step=step)
    return idx, worst


def _evaluate_qma(phi: ScalarField, f: ScalarField, mean_f: float,
                  t=None, step=None) -> _Eval:
    geom = phi.geometry
    hess = complex_hessian(phi)
    total = geom.omega_matrix + ddj_coeff(hess.values, geom.j_matrix)
    g_phi = metric_of_coeff(total, geom.j_matrix)
    margin = min_eig_hermitian(g_phi)
    _, margin_min = _check_positive(margin, t=t, step=step)

    pf0 = complex(_pfaffian_recursive(geom.omega_matrix))
    ratio = pfaffian_field(total) / pf0
    imag_max = float(np.max(np.abs(ratio.imag)))
    if imag_max > 1e-9 * max(1.0, float(np.max(np.abs(ratio.real)))):
        raise ConventionError(
            f"wedge-power ratio has imaginary residue {imag_max:.3e} during the flow"
        )
    ratio = ratio.real
    if np.min(ratio) <= 0.0:
        idx = np.unravel_index(int(np.argmin(ratio)), ratio.shape)
        raise FlowBlowupError(point=idx, margin=float(ratio[idx]), t=t, step=step,
                              message="wedge-power ratio lost positivity")

    log_ratio = np.log(ratio)
    rhs = 2.0 * log_ratio - 2.0 * f.values
    b_t = float(weighted_mean(log_ratio)) - mean_f
    sup_rhs = float(np.max(rhs))
    inf_rhs = float(np.min(rhs))
    mean_rhs = 2.0 * b_t
    trace = np.einsum("...ii->...", g_phi).real
    residual = float(np.max(np.abs(ratio - np.exp(f.values + b_t))))
    return _Eval(
        rhs=rhs,
        ratio=ratio,
        margin=margin,
        margin_min=margin_min,
        trace_max=float(np.max(trace)),
        b_t=b_t,
        sup_rhs=sup_rhs,
        inf_rhs=inf_rhs,
        sup_centered=max(sup_rhs - mean_rhs, mean_rhs - inf_rhs),
        stiffness=1.0 / margin_min,
        elliptic_residual=residual,
    )


def qma_rhs(phi: ScalarField, f: ScalarField,
            geometry: TorusGeometry | None = None) -> ScalarField:
    """Right-hand side of the MA flow: 2 log(ratio) - 2 f.

    Requires the perturbed form to be positive; violation raises a
    flow-blowup error carrying the offending point and margin.
    """
    ev = _evaluate_qma(phi, f, float(weighted_mean(f)))
    return ScalarField(phi.geometry, ev.rhs)


def extract_b(phi: ScalarField, f: ScalarField,
              geometry: TorusGeometry | None = None) -> float:
    """Mean of (log ratio - f) with the background volume weight.

    On the flat torus the background volume density is uniform over the
    grid. At a converged flow limit this is the constant of the elliptic
    problem; along the flow its plateau signals convergence.
    """
    ev = _evaluate_qma(phi, f, float(weighted_mean(f)))
    return ev.b_t


def first_variation(phi: ScalarField, psi: ScalarField) -> ScalarField:
    """Analytic tangent of the MA flow right-hand side at phi applied to psi.

    Equals the trace, against the perturbed metric, of the metric
    perturbation induced by psi (the flow's linearisation, an elliptic
    second-order operator).
    """
    geom = phi.geometry
    hess_phi = complex_hessian(phi)
    g_phi = metric_of_coeff(
        geom.omega_matrix + ddj_coeff(hess_phi.values, geom.j_matrix), geom.j_matrix
    )
    hess_psi = complex_hessian(psi)
    pert = metric_of_coeff(ddj_coeff(hess_psi.values, geom.j_matrix), geom.j_matrix)
    x = np.linalg.solve(g_phi, pert)
    tangent = np.einsum("...ii->...", x).real
    return ScalarField(geom, tangent)


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


def _cfl_dt(cfg: FlowConfig, stiffness: float) -> float:
    h = cfg.geometry.min_spacing
    return cfg.dt_safety * h * h / (4.0 * stiffness)


def _choose_dt(cfg: FlowConfig, stiffness: float) -> float:
    if cfg.dt_initial is not None:
        return cfg.dt_initial
    dt = _cfl_dt(cfg, stiffness)
    if cfg.scheme == IMEX:
        dt *= _IMEX_DT_FACTOR
    return dt


def _advance(phi: ScalarField, rhs: np.ndarray, dt: float, cfg: FlowConfig,
             stiffness: float) -> ScalarField:
    geom = cfg.geometry
    if cfg.scheme == EXPLICIT_EULER:
        return ScalarField(geom, phi.values + dt * rhs)
    # imex: (Id - dt c Delta) phi_new = phi + dt (rhs - c Delta phi), i.e.
    # the update is damped mode-wise by 1/(1 - dt c symbol).
    denom = 1.0 - dt * stiffness * geom.flat_laplace_symbol
    update = np.fft.ifftn(np.fft.fftn(rhs) / denom).real
    return ScalarField(geom, phi.values + dt * update)


def initial_state(cfg: FlowConfig) -> FlowState:
    """State at t=0 with phi identically zero and cached derivative."""
    phi = ScalarField.zeros(cfg.geometry)
    mean_f = float(weighted_mean(cfg.datum))
    ev = _evaluate_qma(phi, cfg.datum, mean_f, t=0.0, step=0)
    return FlowState(
        t=0.0,
        phi=phi,
        phi_dot=ScalarField(cfg.geometry, ev.rhs),
        step_index=0,
        dt_last=0.0,
        _eval=ev,
    )


def step(state: FlowState, cfg: FlowConfig) -> FlowState:
    """Advance one step; retry once with dt/2 on positivity loss, then abort."""
    mean_f = float(weighted_mean(cfg.datum))
    ev = state._eval
    if ev is None:
        ev = _evaluate_qma(state.phi, cfg.datum, mean_f, t=state.t, step=state.step_index)
    dt = _choose_dt(cfg, ev.stiffness)
    last_error = None
    for attempt in (dt, 0.5 * dt):
        phi_new = _advance(state.phi, ev.rhs, attempt, cfg, ev.stiffness)
        try:
            ev_new = _evaluate_qma(
                phi_new, cfg.datum, mean_f, t=state.t + attempt, step=state.step_index + 1
            )
        except FlowBlowupError as err:
            last_error = err
            continue
        return FlowState(
            t=state.t + attempt,
            phi=phi_new,
            phi_dot=ScalarField(cfg.geometry, ev_new.rhs),
            step_index=state.step_index + 1,
            dt_last=attempt,
            _eval=ev_new,
        )
    raise last_error


def _record_from_eval(state: FlowState, ev: _Eval) -> DiagnosticsRecord:
    return DiagnosticsRecord(
        step=state.step_index,
        t=state.t,
        dt=state.dt_last,
        sup_phidot=ev.sup_rhs,
        inf_phidot=ev.inf_rhs,
        osc_phi=state.phi.oscillation,
        b_t=ev.b_t,
        min_pos_margin=ev.margin_min,
        max_tr_ghat_gphi=ev.trace_max,
        elliptic_residual=ev.elliptic_residual,
    )


def run_qma_flow(cfg: FlowConfig, progress=None) -> FlowResult:
    """Integrate the MA flow until the centred derivative drops below tol.

    Returns the normalised potential (mean removed with the background
    volume weight), the constant b, the recorded trajectory and the final
    elliptic residual sup|ratio - e^{f+b}|. Non-convergence within the
    budget is reported through the ``converged`` flag with diagnostics
    intact; positivity loss raises a flow-blowup error.
    """
    mean_f = float(weighted_mean(cfg.datum))
    state = initial_state(cfg)
    records: list[DiagnosticsRecord] = []
    converged = False
    recorded = False
    while True:
        ev = state._eval
        if ev is None:
            ev = _evaluate_qma(state.phi, cfg.datum, mean_f, t=state.t, step=state.step_index)
        if ev.margin_min <= 1e-12:
            # there is no true blowup for this flow; a collapsing margin is a
            # resolution problem and must surface loudly
            idx = np.unravel_index(int(np.argmin(ev.margin)), ev.margin.shape)
            raise FlowBlowupError(point=idx, margin=ev.margin_min, t=state.t,
                                  step=state.step_index,
                                  message="positivity margin collapsed during the flow")
        recorded = state.step_index % cfg.snapshot_every == 0
        if recorded:
            records.append(_record_from_eval(state, ev))
            if progress is not None:
                progress(records[-1])
        if ev.sup_centered < cfg.tol_converge:
            converged = True
            break
        if state.t >= cfg.t_max or state.step_index >= cfg.max_steps:
            break
        state = step(state, cfg)
    if not recorded:
        records.append(_record_from_eval(state, state._eval))
    ev = state._eval
    phi_tilde = ScalarField(
        cfg.geometry, state.phi.values - weighted_mean(state.phi)
    )
    return FlowResult(
        phi_tilde=phi_tilde,
        b=ev.b_t,
        trajectory=records,
        converged=converged,
        state=state,
        elliptic_residual=ev.elliptic_residual,
    )


# ---------------------------------------------------------------------------
# Adapted Chern-Ricci flow
# ---------------------------------------------------------------------------


def _conformal_background(geometry: TorusGeometry, u: ScalarField) -> MatrixField:
    m = geometry.complex_dim
    eye = np.eye(m, dtype=complex)
    values = np.exp(u.values)[..., None, None] * eye
    return MatrixField(geometry, KIND_HERMITIAN, values)


def cr_rhs(phi: ScalarField, t: float, ric_minus: MatrixField,
           geometry: TorusGeometry) -> ScalarField:
    """Scalar Chern-Ricci flow right-hand side.

    log of the determinant ratio of the pencil metric
    ``g_u - t ric_minus + (projected Hessian of phi)`` against the
    background ``g_u``. Positivity loss raises a flow-blowup error, which
    callers interpret as a candidate maximal time.
    """
    u_vals = geometry.conformal_u
    u = ScalarField(geometry, u_vals) if u_vals is not None else ScalarField.zeros(geometry)
    g_bg = _conformal_background(geometry, u)
    pencil_vals = (
        g_bg.values
        - t * ric_minus.values
        + _projected_hessian(phi)
    )
    margin = min_eig_hermitian(pencil_vals)
    _check_positive(margin, t=t)
    pencil = MatrixField(geometry, KIND_HERMITIAN, pencil_vals)
    return ScalarField(geometry, log_det_ratio(pencil, g_bg))


def _projected_hessian(phi: ScalarField) -> np.ndarray:
    geom = phi.geometry
    hess = complex_hessian(phi)
    j = geom.j_matrix
    return 0.5 * (hess.values + np.matmul(np.matmul(j.T, np.conj(hess.values)), np.conj(j)))


@dataclass
class _CREval:
    rhs: np.ndarray
    pencil: np.ndarray
    margin_min: float
    stiffness: float


def _evaluate_cr(phi: ScalarField, t: float, g_bg: MatrixField,
                 ric_minus: MatrixField, logdet_bg: np.ndarray):
    geom = phi.geometry
    pencil = g_bg.values - t * ric_minus.values + _projected_hessian(phi)
    margin = min_eig_hermitian(pencil)
    margin_min = float(np.min(margin))
    if margin_min <= 0.0:
        return None
    sign, logabs = np.linalg.slogdet(pencil)
    rhs = logabs - logdet_bg
    return _CREval(rhs=rhs, pencil=pencil, margin_min=margin_min,
                   stiffness=1.0 / margin_min)


def run_cr_flow(cfg: FlowConfig, progress=None,
                ric_minus_override: MatrixField | None = None) -> CRFlowResult:
    """Integrate the scalar Chern-Ricci flow on a conformal background.

    The datum of ``cfg`` is the conformal exponent u. Along the run the
    tensor-level flow (metric field evolved by minus the projected
    Chern-Ricci form, same explicit steps) is advanced in lockstep and
    compared at checkpoints; the sup difference is the reconstruction
    error. The first positivity failure is refined by bisection on the
    step size and reported as the candidate maximal time; reaching t_max
    reports infinity.

    ``ric_minus_override`` replaces the projected Chern-Ricci form of the
    background with an arbitrary hermitian field and freezes the tensor
    law to it; an experiment knob for probing non-conformal pencils,
    including ones whose maximal time is finite by construction.
    """
    if cfg.scheme != EXPLICIT_EULER:
        raise ConfigError(
            "/solver/scheme",
            "the Chern-Ricci flow supports only explicit_euler (the tensor "
            "comparison requires matched discretisations)",
        )
    base = cfg.geometry
    geom = TorusGeometry(
        n=base.n, grid_shape=base.grid_shape, periods=base.periods,
        j_matrix=base.j_matrix, j_sign=base.j_sign, conformal_u=cfg.datum.values,
    )
    u = ScalarField(geom, cfg.datum.values)
    g_bg = _conformal_background(geom, u)
    _, logdet_bg = np.linalg.slogdet(g_bg.values)
    if ric_minus_override is not None:
        ric_minus = MatrixField(geom, KIND_HERMITIAN, ric_minus_override.values)
    else:
        ric = chern_ricci_conformal(u)
        ric_minus = j_projection(ric)

    # smallest positive time at which the phi-free pencil degenerates
    lam = np.linalg.eigvalsh(ric_minus.values)[..., -1] * np.exp(-u.values)
    lam_max = float(np.max(lam))
    t_star = 1.0 / lam_max if lam_max > 0 else math.inf

    phi = ScalarField.zeros(geom)
    omega = g_bg.values.copy()
    t = 0.0
    step_index = 0
    dt_last = 0.0
    records: list[DiagnosticsRecord] = []
    recon_err = 0.0
    bound_lambda = -math.inf
    bound_ok = True
    bound_slack_min = math.inf
    t_hat = math.inf
    completed = False

    ev = _evaluate_cr(phi, t, g_bg, ric_minus, logdet_bg)
    if ev is None:
        raise FlowBlowupError(point=(0,) * geom.real_dim, margin=0.0, t=0.0, step=0,
                              message="background pencil is not positive at t=0")
    # with the stability-based step the margin is approached, never crossed;
    # a collapse below this floor is the arrival signal at the maximal time
    margin_floor = 1e-9 * ev.margin_min

    def tensor_step(dt: float):
        nonlocal omega
        if ric_minus_override is not None:
            update = ric_minus.values
        else:
            ric_omega = ricci_log_det(MatrixField(geom, KIND_HERMITIAN, omega))
            update = j_projection(ric_omega).values
        omega = omega - dt * update

    while True:
        # linear-in-time upper-bound monitor
        pencil0 = g_bg.values - t * ric_minus.values
        margin0 = float(np.min(min_eig_hermitian(pencil0)))
        if margin0 > 0.0:
            _, logdet0 = np.linalg.slogdet(pencil0)
            bound_lambda = max(bound_lambda, float(np.max(logdet0 - logdet_bg)))
        bound_constant = bound_lambda + 1e-6
        slack = t * bound_constant + 1e-8 - float(np.max(phi.values))
        bound_slack_min = min(bound_slack_min, slack)
        if slack < 0.0:
            bound_ok = False

        if step_index % cfg.reconstruct_every == 0:
            recon_err = max(recon_err, float(np.max(np.abs(ev.pencil - omega))))

        if step_index % cfg.snapshot_every == 0:
            rec = DiagnosticsRecord(
                step=step_index,
                t=t,
                dt=dt_last,
                sup_phidot=float(np.max(ev.rhs)),
                inf_phidot=float(np.min(ev.rhs)),
                osc_phi=phi.oscillation,
                b_t=0.5 * float(weighted_mean(ev.rhs)),
                min_pos_margin=ev.margin_min,
                max_tr_ghat_gphi=float(np.max(np.einsum("...ii->...", ev.pencil).real)),
                elliptic_residual=recon_err,
            )
            records.append(rec)
            if progress is not None:
                progress(rec)

        if t >= cfg.t_max:
            completed = True
            break
        if step_index >= cfg.max_steps:
            break
        if ev.margin_min <= margin_floor:
            t_hat = t
            break

        dt = cfg.dt_initial if cfg.dt_initial is not None else _cfl_dt(cfg, ev.stiffness)
        dt = min(dt, cfg.t_max - t)
        if dt <= 1e-15 * max(1.0, t):
            # t_max reached up to roundoff; avoid a stalled zero-length step
            completed = True
            break
        phi_try = ScalarField(geom, phi.values + dt * ev.rhs)
        ev_try = _evaluate_cr(phi_try, t + dt, g_bg, ric_minus, logdet_bg)
        if ev_try is not None:
            tensor_step(dt)
            phi, t, ev = phi_try, t + dt, ev_try
            step_index += 1
            dt_last = dt
            continue

        # positivity failed within (t, t+dt]: bisection-refine the first time
        h = dt
        h_min = dt * 1e-3
        while h > h_min:
            h *= 0.5
            phi_try = ScalarField(geom, phi.values + h * ev.rhs)
            ev_try = _evaluate_cr(phi_try, t + h, g_bg, ric_minus, logdet_bg)
            if ev_try is not None:
                tensor_step(h)
                phi, t, ev = phi_try, t + h, ev_try
        t_hat = t + h
        break

    recon_err = max(recon_err, float(np.max(np.abs(ev.pencil - omega))))
    state = FlowState(t=t, phi=phi, phi_dot=ScalarField(geom, ev.rhs),
                      step_index=step_index, dt_last=dt_last)
    return CRFlowResult(
        trajectory=records,
        t_hat=t_hat,
        reconstruction_error=recon_err,
        t_star_pencil=t_star,
        bound_constant=bound_lambda + 1e-6,
        bound_ok=bound_ok,
        bound_slack_min=bound_slack_min,
        state=state,
        completed=completed,
    )


# ---------------------------------------------------------------------------
# Diagnostics CSV
# ---------------------------------------------------------------------------


def write_diagnostics_csv(records, path, preamble: str | None = None) -> None:
    """Write the diagnostics stream; one row per record, 17-digit floats."""
    lines = []
    if preamble:
        lines.append("# " + preamble)
    lines.append(CSV_HEADER)
    lines.extend(rec.csv_row() for rec in records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_diagnostics_csv(path) -> list[DiagnosticsRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#") or line.startswith("step,"):
            continue
        parts = line.split(",")
        records.append(
            DiagnosticsRecord(
                step=int(parts[0]),
                t=float(parts[1]),
                dt=float(parts[2]),
                sup_phidot=float(parts[3]),
                inf_phidot=float(parts[4]),
                osc_phi=float(parts[5]),
                b_t=float(parts[6]),
                min_pos_margin=float(parts[7]),
                max_tr_ghat_gphi=float(parts[8]),
                elliptic_residual=float(parts[9]),
            )
        )
    return records
