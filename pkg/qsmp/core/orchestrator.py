from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Any, Literal

import numpy as np
import scipy

from .. import __version__
from .cache import RunIndex
from .classical_smp import pauli_evolve, simulate_trajectories, solve_gme
from .config import config_echo, config_hash, load_kernel_config, quantum_spec
from .errors import ConfigError, QsmpError, exit_code
from .models import ClassicalConfig, CommandOutcome, KernelConfig, MarkovConfig, QuantumConfig, RunManifest
from .outputs import write_csv, write_json
from .quantum_map import apply_superoperator, build_propagator, check_cp, density_matrix, dyson_series
from .settings import (
    cache_config,
    grid_config,
    load_settings,
    output_config,
    quantum_config,
    scan_config,
    simulation_config,
    tolerance_config,
)
from .twolevel import (
    boundary_ratio_estimate,
    cp_boundary_ratio,
    scan_ratio_slice,
    scan_region,
    sufficiency_scan,
)

logger = logging.getLogger(__name__)

ScanMode = Literal["region", "slice", "sufficiency"]


def _versions() -> dict[str, str]:
    return {"qsmp": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _fail(outcome: CommandOutcome, exc: QsmpError) -> CommandOutcome:
    outcome.exit_code = exit_code(exc)
    outcome.errors.append({"code": exc.code, "message": exc.message})
    logger.error("%s failed: %s %s", outcome.command, exc.code, exc.message)
    return outcome


def _load(config_path: str | Path, overrides: dict[str, Any] | None, settings: dict[str, Any]) -> KernelConfig:
    return load_kernel_config(config_path, overrides, grid_config(settings))


def _out_dir(out: str | Path | None, settings: dict[str, Any], command: str, digest: str | None) -> Path:
    if out is not None:
        return Path(out)
    root, _ = output_config(settings)
    suffix = digest[:12] if digest else "default"
    return Path(root) / f"{command}-{suffix}"


def _finish(
    outcome: CommandOutcome,
    out_dir: Path,
    started: float,
    settings: dict[str, Any],
    config: KernelConfig | None = None,
    index: RunIndex | None = None,
) -> CommandOutcome:
    manifest = RunManifest(
        command=outcome.command,
        config_hash=config_hash(config) if config is not None else None,
        versions=_versions(),
        grid=config.grid if config is not None else None,
        seed=config.seed if config is not None else None,
        wall_clock_sec=round(time.perf_counter() - started, 6),
        outputs=list(outcome.outputs),
        config_echo=config_echo(config) if config is not None else None,
    )
    write_json(out_dir / "manifest.json", manifest)
    outcome.manifest = manifest
    if manifest.config_hash is None:
        return outcome
    if index is not None:
        index.put_run(manifest)
        return outcome
    local = RunIndex(cache_config(settings))
    try:
        local.put_run(manifest)
    finally:
        local.close()
    return outcome


def _labels(labels: list[str] | None, count: int) -> list[str]:
    return labels or [str(n) for n in range(count)]


def _rows(times: np.ndarray, columns: list[np.ndarray], stride: int) -> np.ndarray:
    table = np.column_stack([times] + [np.asarray(c, dtype=float) for c in columns])
    return table[::stride]


def _classical_table(result, labels: list[str]) -> tuple[list[str], list[np.ndarray]]:
    header, columns = [], []
    for m, lm in enumerate(labels):
        for n, ln in enumerate(labels):
            header.append(f"T_{lm}_{ln}")
            columns.append(result.T[:, m, n])
    if result.P is not None:
        for n, ln in enumerate(labels):
            header.append(f"P_{ln}")
            columns.append(result.P[:, n])
    return header, columns


def _density_table(rho: np.ndarray, labels: list[str]) -> tuple[list[str], list[np.ndarray]]:
    header, columns = [], []
    for a, la in enumerate(labels):
        for b, lb in enumerate(labels):
            if a == b:
                header.append(f"rho_{la}{la}")
                columns.append(rho[:, a, a].real)
            else:
                header += [f"rho_{la}{lb}_re", f"rho_{la}{lb}_im"]
                columns += [rho[:, a, b].real, rho[:, a, b].imag]
    return header, columns


def cmd_evolve(
    config_path: str | Path,
    out: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
    settings: dict[str, Any] | None = None,
    index: RunIndex | None = None,
    dyson: bool = False,
) -> CommandOutcome:
    """Time series of T_mn(t) (classical) or ρ(t) (quantum) as CSV plus manifest.

    With dyson=True a quantum run also sums the Dyson series and reports its
    deviation from the direct propagator.
    """
    started = time.perf_counter()
    outcome = CommandOutcome(command="evolve")
    settings = settings if settings is not None else load_settings()
    tol = tolerance_config(settings)
    _, stride = output_config(settings)
    try:
        config = _load(config_path, overrides, settings)
        grid = config.grid.to_grid()
        times = grid.times()
        match config:
            case MarkovConfig(process=process):
                initial = config.initial or [1.0] + [0.0] * (process.states - 1)
                result = pauli_evolve(process, initial, grid)
                header, columns = _classical_table(result, _labels(process.labels, process.states))
                outcome.summary = {"conservation_drift": result.conservation_drift, "warnings": result.warnings}
            case ClassicalConfig(process=process):
                result = solve_gme(
                    process, grid, initial=config.initial, drift_tol=tol["drift"], detect=tol["delta_detect"]
                )
                header, columns = _classical_table(result, _labels(process.labels, process.states))
                outcome.summary = {"conservation_drift": result.conservation_drift, "warnings": result.warnings}
            case QuantumConfig():
                spec = quantum_spec(config)
                d = spec.dimension
                rho0 = np.zeros((d, d))
                rho0[0, 0] = 1.0
                if config.initial_state is not None:
                    rho0 = density_matrix(config.initial_density())
                quantum = quantum_config(settings)
                prop = build_propagator(spec, grid, quantum["max_dimension"], tol["drift"], tol["delta_detect"])
                rho = apply_superoperator(prop.values, rho0)
                header, columns = _density_table(np.asarray(rho, dtype=complex), spec.level_labels())
                outcome.summary = {
                    "trace_drift": prop.trace_drift,
                    "hermiticity_drift": prop.hermiticity_drift,
                    "warnings": prop.warnings,
                }
                if dyson:
                    series = dyson_series(
                        spec,
                        grid,
                        quantum["dyson_max_order"],
                        quantum["dyson_tolerance"],
                        quantum["max_dimension"],
                        tol["drift"],
                        tol["delta_detect"],
                    )
                    outcome.summary["dyson"] = {
                        "order": series.order,
                        "deviation": float(np.max(np.abs(series.values - prop.values))),
                        "warnings": series.warnings,
                    }
    except QsmpError as exc:
        return _fail(outcome, exc)

    out_dir = _out_dir(out, settings, "evolve", config_hash(config))
    path = write_csv(out_dir / "evolve.csv", ["t"] + header, _rows(times, columns, stride))
    outcome.outputs.append(str(path))
    return _finish(outcome, out_dir, started, settings, config, index)


def cmd_check_cp(
    config_path: str | Path,
    out: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
    settings: dict[str, Any] | None = None,
    index: RunIndex | None = None,
) -> CommandOutcome:
    started = time.perf_counter()
    outcome = CommandOutcome(command="check-cp")
    settings = settings if settings is not None else load_settings()
    tol = tolerance_config(settings)
    _, stride = output_config(settings)
    try:
        config = _load(config_path, overrides, settings)
        if not isinstance(config, QuantumConfig):
            raise ConfigError("CONFIG_NOT_QUANTUM", f"check-cp needs a quantum config, got model={config.model}")
        spec = quantum_spec(config)
        report = check_cp(
            spec, config.grid.to_grid(), tol["psd_relative"], stride, tol["drift"], tol["delta_detect"]
        )
    except QsmpError as exc:
        return _fail(outcome, exc)

    conditions = [report.cond1] + report.cond2 + ([report.cond3] if report.cond3 else [])
    outcome.summary = {
        "verdicts": {c.condition: c.verdict for c in conditions},
        "first_violation": {c.condition: c.first_violation for c in conditions},
        "semigroup": report.semigroup,
        "sufficient": report.sufficient,
        "warnings": report.warnings,
    }
    out_dir = _out_dir(out, settings, "check-cp", config_hash(config))
    outcome.outputs.append(str(write_json(out_dir / "cp_report.json", report)))
    return _finish(outcome, out_dir, started, settings, config, index)


def cmd_scan(
    tau: float | None = None,
    resolution: int | None = None,
    out: str | Path | None = None,
    mode: ScanMode = "region",
    threads: int | None = None,
    settings: dict[str, Any] | None = None,
) -> CommandOutcome:
    """Δ sign map (region), ratio × τ slice (slice) or the dense sufficiency report."""
    started = time.perf_counter()
    outcome = CommandOutcome(command=f"scan-{mode}")
    settings = settings if settings is not None else load_settings()
    scan = scan_config(settings)
    tau = scan["tau"] if tau is None else tau
    resolution = scan["resolution"] if resolution is None else resolution
    threads = simulation_config(settings)[1] if threads is None else threads
    try:
        if tau <= 0:
            raise ConfigError("CONFIG_SCAN_TAU", f"tau must be positive, got {tau}")
        if resolution < 2:
            raise ConfigError("CONFIG_SCAN_RESOLUTION", f"resolution must be at least 2, got {resolution}")
    except QsmpError as exc:
        return _fail(outcome, exc)

    out_dir = _out_dir(out, settings, f"scan-{mode}", None)
    if mode == "region":
        region = scan_region(tau, resolution, threads)
        r_minus, r_plus = np.meshgrid(region.r_values, region.r_values, indexing="ij")
        rows = np.column_stack(
            [r_minus.ravel(), r_plus.ravel(), np.full(r_minus.size, tau), region.delta.ravel(), region.sign.ravel()]
        )
        path = write_csv(out_dir / "region.csv", ["r_minus", "r_plus", "tau", "delta", "sign"], rows)
        estimate = boundary_ratio_estimate(region)
        expected = cp_boundary_ratio()
        outcome.summary = {
            "tau": tau,
            "resolution": resolution,
            "cell": 1.0 / (resolution - 1),
            "boundary_ratio_estimate": estimate,
            "expected_ratio": expected,
            "deviation": estimate - expected,
            "negative_cells": int(np.sum(region.sign < 0)),
            "degenerate_cells": int(np.sum(region.degenerate)),
        }
    elif mode == "slice":
        cut = scan_ratio_slice(scan["slice_r_minus"], resolution, scan["slice_tau_max"])
        ratio, taus = np.meshgrid(cut.ratios, cut.taus, indexing="ij")
        rows = np.column_stack([ratio.ravel(), ratio.ravel() * cut.r_minus, taus.ravel(), cut.delta.ravel()])
        path = write_csv(out_dir / "slice.csv", ["ratio", "r_plus", "tau", "delta"], rows)
        outcome.summary = {"r_minus": cut.r_minus, "min_delta": float(cut.delta.min()), "nonnegative": bool(cut.delta.min() >= -1e-14)}
    else:
        finding = sufficiency_scan(resolution, scan["sufficiency_tau_max"], scan["sufficiency_tau_points"])
        path = write_json(out_dir / "sufficiency.json", finding)
        outcome.summary = {"cells_checked": finding.cells_checked, "counterexamples": len(finding.counterexamples)}
    outcome.outputs.append(str(path))
    write_json(out_dir / "summary.json", outcome.summary)
    outcome.outputs.append(str(out_dir / "summary.json"))
    return _finish(outcome, out_dir, started, settings)


def cmd_simulate(
    config_path: str | Path,
    out: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
    threads: int | None = None,
    settings: dict[str, Any] | None = None,
    index: RunIndex | None = None,
) -> CommandOutcome:
    started = time.perf_counter()
    outcome = CommandOutcome(command="simulate")
    settings = settings if settings is not None else load_settings()
    block_size, default_threads = simulation_config(settings)
    try:
        config = _load(config_path, overrides, settings)
        if not isinstance(config, ClassicalConfig):
            raise ConfigError("CONFIG_NOT_CLASSICAL", f"simulate needs a classical config, got model={config.model}")
        t_max = config.grid.horizon
        sample_times = config.sample_times or np.linspace(t_max / 10, t_max, 10)
        estimate = simulate_trajectories(
            config.process,
            config.initial_state,
            t_max,
            config.n_traj,
            config.seed,
            sample_times=sample_times,
            block_size=block_size,
            threads=threads or default_threads,
        )
    except QsmpError as exc:
        return _fail(outcome, exc)

    labels = _labels(config.process.labels, config.process.states)
    header = ["t"] + [f"P_{ln}" for ln in labels] + [f"stderr_{ln}" for ln in labels]
    rows = np.column_stack([estimate.times, estimate.occupation, estimate.stderr])
    out_dir = _out_dir(out, settings, "simulate", config_hash(config))
    outcome.outputs.append(str(write_csv(out_dir / "simulate.csv", header, rows)))
    outcome.summary = {
        "n_traj": estimate.n_traj,
        "seed": estimate.seed,
        "rng_algorithm": estimate.rng_algorithm,
        "block_size": estimate.block_size,
        "blocks": estimate.blocks,
    }
    return _finish(outcome, out_dir, started, settings, config, index)


def cmd_validate(
    out: str | Path | None = None,
    tolerance_scale: float = 1.0,
    only: list[str] | None = None,
    settings: dict[str, Any] | None = None,
) -> CommandOutcome:
    from .validation import run_validation

    started = time.perf_counter()
    outcome = CommandOutcome(command="validate")
    settings = settings if settings is not None else load_settings()
    try:
        report = run_validation(settings, tolerance_scale=tolerance_scale, only=only)
    except QsmpError as exc:
        return _fail(outcome, exc)
    outcome.summary = report.model_dump(mode="json")
    if not report.passed:
        outcome.exit_code = 4
        outcome.errors.extend({"code": "VALIDATION_FAILED", "message": name} for name in report.failed)
    if out is not None:
        out_dir = Path(out)
        outcome.outputs.append(str(write_json(out_dir / "validation.json", report)))
        _finish(outcome, out_dir, started, settings)
    return outcome


def run_status(config_path: str | Path, settings: dict[str, Any] | None = None, index: RunIndex | None = None) -> dict[str, Any]:
    settings = settings if settings is not None else load_settings()
    digest = config_hash(_load(config_path, None, settings))
    index = index or RunIndex(cache_config(settings))
    return index.run_status(digest)
