from __future__ import annotations

import os
from pathlib import Path
from typing import Any

import yaml


def load_settings(path: str | None = None) -> dict[str, Any]:
    config_path = Path(path or os.getenv("QSMP_SETTINGS_PATH", "config/settings.example.yaml"))
    if not config_path.exists():
        return {}
    return yaml.safe_load(config_path.read_text()) or {}


def _section(settings: dict[str, Any], name: str) -> dict[str, Any]:
    return settings.get(name) or {}


def grid_config(settings: dict[str, Any]) -> tuple[float, float]:
    grid = _section(settings, "grid")
    return float(grid.get("step", 1e-3)), float(grid.get("horizon", 20.0))


def tolerance_config(settings: dict[str, Any]) -> dict[str, float]:
    tol = _section(settings, "tolerances")
    return {
        "psd_relative": float(tol.get("psd_relative", 1e-8)),
        "drift": float(tol.get("drift", 1e-6)),
        "delta_detect": float(tol.get("delta_detect", 1e-8)),
    }


def quantum_config(settings: dict[str, Any]) -> dict[str, Any]:
    q = _section(settings, "quantum")
    return {
        "max_dimension": int(q.get("max_dimension", 32)),
        "dyson_max_order": int(q.get("dyson_max_order", 12)),
        "dyson_tolerance": float(q.get("dyson_tolerance", 1e-8)),
    }


def simulation_config(settings: dict[str, Any]) -> tuple[int, int]:
    sim = _section(settings, "simulation")
    return int(sim.get("block_size", 10000)), int(sim.get("threads", 1))


def scan_config(settings: dict[str, Any]) -> dict[str, Any]:
    scan = _section(settings, "scan")
    return {
        "tau": float(scan.get("tau", 0.01)),
        "resolution": int(scan.get("resolution", 200)),
        "slice_r_minus": float(scan.get("slice_r_minus", 0.2)),
        "slice_tau_max": float(scan.get("slice_tau_max", 30.0)),
        "sufficiency_tau_max": float(scan.get("sufficiency_tau_max", 50.0)),
        "sufficiency_tau_points": int(scan.get("sufficiency_tau_points", 500)),
    }


def output_config(settings: dict[str, Any]) -> tuple[str, int]:
    out = _section(settings, "outputs")
    return out.get("root_dir", "./runs"), int(out.get("report_stride", 1))


def cache_config(settings: dict[str, Any]) -> str:
    return _section(settings, "cache").get("sqlite_path", "./runs/index.sqlite")


def logging_level(settings: dict[str, Any]) -> str:
    return str(_section(settings, "logging").get("level", "WARNING")).upper()


def validation_config(settings: dict[str, Any]) -> dict[str, Any]:
    val = _section(settings, "validation")
    return {
        "step": float(val.get("step", 1e-3)),
        "horizon": float(val.get("horizon", 20.0)),
        "seed": int(val.get("seed", 20240607)),
        "n_traj": int(val.get("n_traj", 100000)),
    }
