"""Configuration, experiment orchestration and result emission.

Runs are driven by a JSON config; the small flag set only overrides it.
Artifacts (diagnostics CSV, field snapshots, summary JSON, oracle report
JSON lines) are bit-identical across repeated runs with the same config
and seed, and every file is self-describing.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FlowBlowupError, QmaflowError, SnapshotError
from .fields import ScalarField
from .flow import (
    EXPLICIT_EULER,
    SCHEMES,
    FlowConfig,
    run_cr_flow,
    run_qma_flow,
    write_diagnostics_csv,
)
from .geometry import TorusGeometry, build_flat_torus
from .oracles import write_reports_jsonl, random_band_limited
from .serialize import dumps17
from .snapshot import read_header, read_scalar_field, write_scalar_field
from .verify import run_invariant_suites, run_oracle_suites

MODES = ("solve", "cr-flow", "verify", "oracle")
PRESETS = ("cos1", "cos13", "sum-modes")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_NO_CONVERGENCE = 4
EXIT_VERIFY_FAILED = 5

_DEFAULTS = {
    "dt_safety": 0.5,
    "tol": 1e-9,
    "t_max": 500.0,
    "max_steps": 500_000,
    "snapshot_every": 1,
    "scheme": EXPLICIT_EULER,
    "amp": 0.2,
    "seed": 0,
    "samples": 100,
    "csv": "diagnostics.csv",
    "directory": "out",
}


@dataclass
class RunConfig:
    """Validated run configuration with defaults filled in."""

    mode: str
    geometry: TorusGeometry
    datum: ScalarField
    scheme: str
    dt: float | None
    dt_safety: float
    tol: float
    t_max: float
    max_steps: int
    snapshot_every: int
    out_dir: str
    csv_name: str
    seed: int
    samples: int
    config_hash: str
    raw: dict


def _require(cfg: dict, key: str, pointer: str):
    if key not in cfg:
        raise ConfigError(f"{pointer}/{key}", "missing required field")
    return cfg[key]


def _as_int(value, pointer: str, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(pointer, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(pointer, f"must be >= {minimum}, got {value}")
    return value


def _as_number(value, pointer: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(pointer, f"expected a number, got {value!r}")
    return float(value)


def config_hash(raw: dict) -> str:
    return hashlib.sha256(dumps17(raw).encode("utf-8")).hexdigest()[:16]


def _build_geometry(raw: dict) -> TorusGeometry:
    geo = _require(raw, "geometry", "")
    if not isinstance(geo, dict):
        raise ConfigError("/geometry", "expected an object")
    n = _as_int(_require(geo, "n", "/geometry"), "/geometry/n", minimum=1)
    grid = _require(geo, "grid", "/geometry")
    if not isinstance(grid, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in grid):
        raise ConfigError("/geometry/grid", "expected a list of integers")
    if len(grid) != 4 * n:
        raise ConfigError(
            "/geometry/grid",
            f"grid has length {len(grid)} but 4n = {4 * n} entries are required",
        )
    if any(v < 1 for v in grid):
        raise ConfigError("/geometry/grid", f"sample counts must be >= 1, got {grid}")
    periods = geo.get("periods")
    if periods is not None:
        if not isinstance(periods, list) or len(periods) != 4 * n:
            raise ConfigError(
                "/geometry/periods", f"expected a list of {4 * n} positive numbers"
            )
        periods = [
            _as_number(v, f"/geometry/periods/{i}") for i, v in enumerate(periods)
        ]
        if any(v <= 0 for v in periods):
            raise ConfigError("/geometry/periods", "periods must be positive")
    return build_flat_torus(n, grid, periods)


def _build_datum(raw: dict, geometry: TorusGeometry, seed_override: int | None,
                 mode: str) -> tuple[ScalarField, int]:
    datum = raw.get("datum", {})
    if not isinstance(datum, dict):
        raise ConfigError("/datum", "expected an object")
    seed = datum.get("seed", _DEFAULTS["seed"])
    seed = _as_int(seed, "/datum/seed")
    if seed_override is not None:
        seed = seed_override
    if mode in ("verify", "oracle"):
        return ScalarField.zeros(geometry), seed

    preset = datum.get("preset")
    snapshot = datum.get("snapshot")
    if (preset is None) == (snapshot is None):
        raise ConfigError("/datum", "exactly one of 'preset' or 'snapshot' is required")
    if snapshot is not None:
        path = Path(snapshot)
        if not path.exists():
            raise ConfigError("/datum/snapshot", f"file not found: {snapshot}")
        header = read_header(path)
        if int(header.get("n", -1)) != geometry.n:
            raise ConfigError(
                "/datum/snapshot",
                f"snapshot has n = {header.get('n')} but the configured geometry "
                f"has n = {geometry.n}",
            )
        try:
            return read_scalar_field(path, geometry), seed
        except SnapshotError as err:
            raise ConfigError("/datum/snapshot", str(err)) from err

    amp = _as_number(datum.get("amp", _DEFAULTS["amp"]), "/datum/amp")
    if preset == "cos1":
        values = amp * np.cos(geometry.coordinate(0)) + np.zeros(geometry.grid_shape)
    elif preset == "cos13":
        values = (
            amp * np.cos(geometry.coordinate(0))
            + amp * np.cos(geometry.coordinate(2))
            + np.zeros(geometry.grid_shape)
        )
    elif preset == "sum-modes":
        return random_band_limited(geometry, seed, amp=amp), seed
    else:
        raise ConfigError(
            "/datum/preset", f"unknown preset {preset!r}; expected one of {PRESETS}"
        )
    return ScalarField(geometry, values), seed


def parse_config(path, seed_override: int | None = None,
                 mode_override: str | None = None) -> RunConfig:
    """Load and validate a JSON run configuration.

    Defaults: dt_safety 0.5, tol 1e-9, t_max 500, periods 2*pi. Validation
    failures carry JSON-pointer paths to the offending field.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError("", f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError("", f"invalid JSON: {err}") from None
    return parse_config_dict(raw, seed_override=seed_override, mode_override=mode_override)


def parse_config_dict(raw: dict, seed_override: int | None = None,
                      mode_override: str | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("", "top-level config must be a JSON object")
    mode = raw.get("mode", mode_override)
    if mode is None:
        raise ConfigError("/mode", "missing required field")
    if mode_override is not None and mode != mode_override:
        raise ConfigError(
            "/mode", f"config mode {mode!r} conflicts with CLI mode {mode_override!r}"
        )
    if mode not in MODES:
        raise ConfigError("/mode", f"unknown mode {mode!r}; expected one of {MODES}")

    geometry = _build_geometry(raw)
    datum, seed = _build_datum(raw, geometry, seed_override, mode)

    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("/solver", "expected an object")
    scheme = solver.get("scheme", _DEFAULTS["scheme"])
    if scheme not in SCHEMES:
        raise ConfigError("/solver/scheme", f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    dt = solver.get("dt")
    if dt is not None:
        dt = _as_number(dt, "/solver/dt")
        if dt <= 0:
            raise ConfigError("/solver/dt", f"must be positive, got {dt}")
    dt_safety = _as_number(solver.get("dt_safety", _DEFAULTS["dt_safety"]), "/solver/dt_safety")
    if not 0.0 < dt_safety <= 1.0:
        raise ConfigError("/solver/dt_safety", f"must be in (0, 1], got {dt_safety}")
    tol = _as_number(solver.get("tol", _DEFAULTS["tol"]), "/solver/tol")
    if tol <= 0:
        raise ConfigError("/solver/tol", f"must be positive, got {tol}")
    t_max = _as_number(solver.get("t_max", _DEFAULTS["t_max"]), "/solver/t_max")
    max_steps = _as_int(solver.get("max_steps", _DEFAULTS["max_steps"]), "/solver/max_steps", 1)

    output = raw.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("/output", "expected an object")
    snapshot_every = _as_int(
        output.get("snapshot_every", _DEFAULTS["snapshot_every"]), "/output/snapshot_every", 1
    )
    out_dir = output.get("directory", _DEFAULTS["directory"])
    csv_name = output.get("csv", _DEFAULTS["csv"])

    samples = _as_int(raw.get("datum", {}).get("samples", _DEFAULTS["samples"]),
                      "/datum/samples", 1)

    return RunConfig(
        mode=mode,
        geometry=geometry,
        datum=datum,
        scheme=scheme,
        dt=dt,
        dt_safety=dt_safety,
        tol=tol,
        t_max=t_max,
        max_steps=max_steps,
        snapshot_every=snapshot_every,
        out_dir=out_dir,
        csv_name=csv_name,
        seed=seed,
        samples=samples,
        config_hash=config_hash(raw),
        raw=raw,
    )


# ---------------------------------------------------------------------------
# mode runners
# ---------------------------------------------------------------------------


def _flow_config(cfg: RunConfig) -> FlowConfig:
    return FlowConfig(
        geometry=cfg.geometry,
        datum=cfg.datum,
        scheme=cfg.scheme,
        dt_initial=cfg.dt,
        dt_safety=cfg.dt_safety,
        tol_converge=cfg.tol,
        t_max=cfg.t_max,
        max_steps=cfg.max_steps,
        snapshot_every=cfg.snapshot_every,
    )


def _preamble(cfg: RunConfig) -> str:
    return dumps17(
        {
            "config_hash": cfg.config_hash,
            "mode": cfg.mode,
            "n": cfg.geometry.n,
            "grid": list(cfg.geometry.grid_shape),
            "periods": list(cfg.geometry.periods),
        }
    )


def _write_error(out: Path, payload: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").write_text(dumps17(payload) + "\n", encoding="utf-8")


def _run_solve(cfg: RunConfig, out: Path, quiet: bool) -> int:
    flow_cfg = _flow_config(cfg)

    def progress(rec):
        if not quiet and rec.step % 2000 == 0:
            print(
                f"  step {rec.step:7d}  t={rec.t:10.4f}  sup|phidot|={rec.sup_phidot:.3e}  "
                f"b={rec.b_t:.6e}",
                flush=True,
            )

    try:
        result = run_qma_flow(flow_cfg, progress=progress)
    except FlowBlowupError as err:
        _write_error(
            out,
            {
                "error": "blowup",
                "message": str(err),
                "point": list(err.point),
                "margin": err.margin,
                "t": err.t if err.t is not None else "nan",
                "step": err.step,
                "config_hash": cfg.config_hash,
            },
        )
        if not quiet:
            print(f"BLOWUP: {err}", file=sys.stderr)
        return EXIT_BLOWUP

    out.mkdir(parents=True, exist_ok=True)
    write_diagnostics_csv(result.trajectory, out / cfg.csv_name, preamble=_preamble(cfg))
    extra = {"config_hash": cfg.config_hash}
    write_scalar_field(out / "phi_tilde.qmafld", result.phi_tilde, "phi_tilde", extra=extra)
    write_scalar_field(out / "datum.qmafld", cfg.datum, "f", extra=extra)
    summary = {
        "b": result.b,
        "steps": result.state.step_index,
        "t_final": result.state.t,
        "converged": bool(result.converged),
        "residual": result.elliptic_residual,
        "config_hash": cfg.config_hash,
    }
    (out / "summary.json").write_text(dumps17(summary) + "\n", encoding="utf-8")
    if not quiet:
        print(
            f"solve: converged={result.converged} steps={result.state.step_index} "
            f"b={result.b:.12e} residual={result.elliptic_residual:.3e}"
        )
    if not result.converged:
        _write_error(
            out,
            {
                "error": "non-convergence",
                "message": "flow did not reach tolerance within budget",
                "steps": result.state.step_index,
                "t_final": result.state.t,
                "config_hash": cfg.config_hash,
            },
        )
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _run_cr(cfg: RunConfig, out: Path, quiet: bool) -> int:
    flow_cfg = _flow_config(cfg)
    try:
        result = run_cr_flow(flow_cfg)
    except FlowBlowupError as err:
        _write_error(
            out,
            {
                "error": "blowup",
                "message": str(err),
                "point": list(err.point),
                "margin": err.margin,
                "config_hash": cfg.config_hash,
            },
        )
        return EXIT_BLOWUP

    out.mkdir(parents=True, exist_ok=True)
    write_diagnostics_csv(result.trajectory, out / cfg.csv_name, preamble=_preamble(cfg))
    extra = {"config_hash": cfg.config_hash}
    write_scalar_field(out / "phi_final.qmafld", result.state.phi, "phi", extra=extra)
    summary = {
        "T_hat": result.t_hat if math.isfinite(result.t_hat) else "inf",
        "t_star_pencil": result.t_star_pencil if math.isfinite(result.t_star_pencil) else "inf",
        "reconstruction_error": result.reconstruction_error,
        "bound_ok": bool(result.bound_ok),
        "bound_constant": result.bound_constant,
        "steps": result.state.step_index,
        "t_final": result.state.t,
        "config_hash": cfg.config_hash,
    }
    (out / "summary.json").write_text(dumps17(summary) + "\n", encoding="utf-8")
    if not quiet:
        t_hat = "inf" if not math.isfinite(result.t_hat) else f"{result.t_hat:.6f}"
        print(
            f"cr-flow: T_hat={t_hat} reconstruction_error="
            f"{result.reconstruction_error:.3e} bound_ok={result.bound_ok}"
        )
    return EXIT_OK


def _run_reports(cfg: RunConfig, out: Path, quiet: bool, which: str) -> int:
    if which == "verify":
        reports = run_invariant_suites(cfg.geometry, seed=cfg.seed,
                                       samples=max(5, cfg.samples // 5))
    else:
        reports = run_oracle_suites(cfg.geometry, seed=cfg.seed, samples=cfg.samples)
    out.mkdir(parents=True, exist_ok=True)
    write_reports_jsonl(reports, out / "oracle_reports.jsonl")
    all_pass = all(r.passed for r in reports)
    if not quiet:
        for r in reports:
            status = "PASS" if r.passed else "FAIL"
            print(f"  [{status}] {r.name}: max_abs_error={r.max_abs_error:.3e} "
                  f"(tol {r.tolerance:.0e}, {r.sample_count} samples)")
        print(f"{which}: {'all suites pass' if all_pass else 'FAILURES present'}")
    if not all_pass:
        _write_error(
            out,
            {
                "error": "verification-failure",
                "failed": [r.name for r in reports if not r.passed],
                "config_hash": cfg.config_hash,
            },
        )
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def run(cfg: RunConfig, out_dir=None, quiet: bool = False) -> int:
    """Execute a validated configuration; returns the process exit code."""
    out = Path(out_dir) if out_dir is not None else Path(cfg.out_dir)
    if cfg.mode == "solve":
        return _run_solve(cfg, out, quiet)
    if cfg.mode == "cr-flow":
        return _run_cr(cfg, out, quiet)
    return _run_reports(cfg, out, quiet, cfg.mode)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qmaflow",
        description="Quaternionic Monge-Ampere and adapted Chern-Ricci flows "
        "on flat hyperkahler tori",
    )
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="datum seed override")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config, seed_override=args.seed, mode_override=args.mode)
    except ConfigError as err:
        print(f"config error at {err.pointer or '/'}: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return run(cfg, out_dir=args.out, quiet=args.quiet)
    except QmaflowError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
