"""Closed forms for two levels with exponential memory k_±(τ) = κ_± e^{−γτ}.

Square roots such as d_± = √(γ² − 4κ_±) may be imaginary; every expression is
written through cosh_even/sinhc_even of d², so results stay real.
Rescaled quantities use τ = γt and r_± = 4κ_±/γ².
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Literal

import numpy as np

from .errors import WaitingTimeError
from .models import (
    ExponentialMemory,
    GeneralizedErlang,
    QuantumKernelSpec,
    RatioSlice,
    RegionScan,
    SpecialErlang,
    SufficiencyFinding,
    TemperatureThreshold,
    TwoLevelParams,
)
from .special import cosh_even, sinhc_even

logger = logging.getLogger(__name__)

Sign = Literal["+", "-"]

SQRT3 = math.sqrt(3.0)


def _kappa(p: TwoLevelParams, sign: Sign) -> float:
    return p.kappa_plus if sign == "+" else p.kappa_minus


def _d2(p: TwoLevelParams, sign: Sign) -> float:
    return p.d2_plus if sign == "+" else p.d2_minus


def _telegraph(gamma: float, d2: float, t: np.ndarray) -> np.ndarray:
    # solution of y'' + γy' + (γ² − d²)/4·y = 0 with y(0) = 1, y'(0) = 0
    x2 = d2 * t**2 / 4
    return np.exp(-gamma * t / 2) * (cosh_even(x2) + gamma * t / 2 * sinhc_even(x2))


def _shaped(t, out: np.ndarray):
    return float(out) if np.ndim(t) == 0 else out


def _nonnegative_times(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise WaitingTimeError("WAITING_TIME_NEGATIVE_TIME", f"evaluated at negative time {np.min(t)}")
    return t


def two_level_spec(p: TwoLevelParams) -> QuantumKernelSpec:
    """Lattice kernel: level 0 (+) decays into level 1 (−) with k_+, and back with k_−."""
    return QuantumKernelSpec(
        dimension=2,
        memories=[
            ExponentialMemory(amplitude=p.kappa_plus, decay=p.gamma),
            ExponentialMemory(amplitude=p.kappa_minus, decay=p.gamma),
        ],
        pi=[[0.0, 1.0], [1.0, 0.0]],
        labels=["p", "m"],
    )


def f_pm(p: TwoLevelParams, sign: Sign, tau):
    """f_± = κ_±τ e^{−γτ/2} sinhc(d_±τ/2)."""
    t = _nonnegative_times(tau)
    if not p.is_classical:
        logger.warning("gamma^2/4 < max(kappa): f_%s is not a waiting-time density", sign)
    out = _kappa(p, sign) * t * np.exp(-p.gamma * t / 2) * sinhc_even(_d2(p, sign) * t**2 / 4)
    return _shaped(tau, out)


def erlang_rates(p: TwoLevelParams, sign: Sign) -> tuple[float, float]:
    """λ₁,₂ = (γ ± d_±)/2, the stage rates of the generalized-Erlang reading."""
    d2 = _d2(p, sign)
    if d2 < 0:
        raise WaitingTimeError("WAITING_TIME_NOT_CLASSICAL", f"d_{sign}^2 = {d2} < 0: rates are complex")
    d = math.sqrt(d2)
    return (p.gamma + d) / 2, (p.gamma - d) / 2


def as_waiting_time(p: TwoLevelParams, sign: Sign) -> GeneralizedErlang | SpecialErlang:
    if _kappa(p, sign) == 0:
        raise WaitingTimeError("WAITING_TIME_NOT_CLASSICAL", f"kappa_{sign} = 0: level {sign} is never left")
    fast, slow = erlang_rates(p, sign)
    if fast - slow <= 1e-12 * fast:
        return SpecialErlang(rate=p.gamma / 2, order=2)
    return GeneralizedErlang(rates=[fast, slow])


def T_diag(p: TwoLevelParams, sign: Sign, t):
    """T_±±(t) = κ_∓/K + (κ_±/K)·y(t), K = κ₊ + κ₋, from the telegraph equation."""
    times = _nonnegative_times(t)
    total = p.kappa_plus + p.kappa_minus
    if total == 0:
        return _shaped(t, np.ones_like(times))
    own = _kappa(p, sign)
    out = (total - own) / total + own / total * _telegraph(p.gamma, p.d2, times)
    out = np.where((out < 0) & (out > -1e-12), 0.0, out)
    return _shaped(t, out)


def g_entries(p: TwoLevelParams, pair: Literal["++", "--", "+-", "-+"], t):
    times = _nonnegative_times(t)
    d2 = {"++": p.d2_plus, "--": p.d2_minus}.get(pair, p.d2_bar)
    return _shaped(t, _telegraph(p.gamma, d2, times))


def telegraph_residual(p: TwoLevelParams, t) -> float:
    """max |T̈₊₊ + γṪ₊₊ + (κ₊+κ₋)T₊₊ − κ₋| by finite differences on the sample times."""
    times = np.asarray(t, dtype=float)
    rho = T_diag(p, "+", times)
    first = np.gradient(rho, times, edge_order=2)
    second = np.gradient(first, times, edge_order=2)
    residual = second + p.gamma * first + (p.kappa_plus + p.kappa_minus) * rho - p.kappa_minus
    return float(np.max(np.abs(residual)))


# --- Δ = T₊₊T₋₋ − g₊₋² ---------------------------------------------------------


def delta_rescaled(r_plus, r_minus, tau) -> np.ndarray:
    """Δ in rescaled time; broadcasts over its arguments.

    At r₊ = r₋ = 0 the population weights are undefined; both T's are taken as 1,
    which gives 1 − e^{−τ}h₂² = 0.
    """
    rp, rm, tau = np.broadcast_arrays(
        np.asarray(r_plus, dtype=float), np.asarray(r_minus, dtype=float), np.asarray(tau, dtype=float)
    )
    s = rp + rm
    safe = np.where(s == 0, 1.0, s)
    decay = np.exp(-tau / 2)
    x1 = tau**2 * (1 - s) / 4
    x2 = tau**2 * (1 - s / 2) / 4
    h1 = cosh_even(x1) + tau / 2 * sinhc_even(x1)
    h2 = cosh_even(x2) + tau / 2 * sinhc_even(x2)
    t_pp = rm / safe + rp / safe * decay * h1
    t_mm = rp / safe + rm / safe * decay * h1
    populations = np.where(s == 0, 1.0, t_pp * t_mm)
    return populations - decay**2 * h2**2


def delta(p: TwoLevelParams, tau):
    """Δ at rescaled time τ = γt for the given parameters."""
    return _shaped(tau, delta_rescaled(p.r_plus, p.r_minus, _nonnegative_times(tau)))


def taylor_coefficients(r_plus: float, r_minus: float) -> dict[int, float]:
    """Leading small-τ coefficients of Δ; the τ² and τ³ terms cancel."""
    s = r_plus + r_minus
    return {
        2: 0.0,
        3: 0.0,
        4: -(r_plus**2 + r_minus**2 - 4 * r_plus * r_minus) / 384,
        5: (s**2 - 5 * r_plus * r_minus) / 480,
    }


def fit_leading_coefficients(
    r_plus: float, r_minus: float, tau_min: float = 0.02, tau_max: float = 0.2, points: int = 60, powers=(3, 4, 5, 6, 7)
) -> dict[int, float]:
    """Least-squares fit of Δ(τ) on [tau_min, tau_max] with monomials τ^k."""
    taus = np.linspace(tau_min, tau_max, points)
    values = delta_rescaled(r_plus, r_minus, taus)
    scaled = taus / tau_max
    basis = np.stack([scaled**k for k in powers], axis=1)
    coef, *_ = np.linalg.lstsq(basis, values, rcond=None)
    return {k: float(c / tau_max**k) for k, c in zip(powers, coef)}


def cp_boundary_ratio(conjugate: bool = False) -> float:
    """Roots of x² − 4x + 1: short-time CP needs (2−√3) ≤ r₊/r₋ ≤ (2+√3)."""
    return 2 - SQRT3 if conjugate else 2 + SQRT3


def temperature_threshold() -> TemperatureThreshold:
    beta = math.log(cp_boundary_ratio())
    return TemperatureThreshold(beta_hbar_omega=beta, kt_over_hbar_omega=1 / beta)


# --- scans ---------------------------------------------------------------------


def _sign(values: np.ndarray, scale: np.ndarray | float) -> np.ndarray:
    band = 1e-15 * np.maximum(scale, 1.0)
    return np.where(values > band, 1, np.where(values < -band, -1, 0)).astype(int)


def scan_region(tau: float, resolution: int = 200, threads: int = 1) -> RegionScan:
    """Sign map of Δ(τ) over (r₋, r₊) ∈ [0, 1]², rows indexed by r₋."""
    r = np.linspace(0.0, 1.0, resolution)

    def row(i: int) -> np.ndarray:
        return delta_rescaled(r, r[i], tau)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(resolution)))
    else:
        rows = [row(i) for i in range(resolution)]
    values = np.stack(rows)
    degenerate = (r[:, None] == 0) & (r[None, :] == 0)
    sign = np.where(degenerate, 0, _sign(values, 1.0))
    logger.info("scanned %dx%d region at tau=%g", resolution, resolution, tau)
    return RegionScan(tau=tau, r_values=r, delta=values, sign=sign, degenerate=degenerate)


def boundary_ratio_estimate(scan: RegionScan, r_minus_range: tuple[float, float] = (0.1, 0.268)) -> float:
    """Median of r₊/r₋ at the upper +→− crossing along r₊, interpolated linearly in Δ."""
    r = scan.r_values
    ratios = []
    for i, r_minus in enumerate(r):
        if not r_minus_range[0] <= r_minus <= r_minus_range[1]:
            continue
        row = scan.delta[i]
        crossings = np.flatnonzero((row[:-1] >= 0) & (row[1:] < 0))
        if crossings.size == 0:
            continue
        j = crossings[-1]
        frac = row[j] / (row[j] - row[j + 1])
        ratios.append((r[j] + frac * (r[j + 1] - r[j])) / r_minus)
    return float(np.median(ratios)) if ratios else float("nan")


def scan_ratio_slice(
    r_minus: float = 0.2, ratio_points: int = 50, tau_max: float = 30.0, tau_points: int = 301
) -> RatioSlice:
    ratios = np.linspace(1.0, cp_boundary_ratio(), ratio_points)
    taus = np.linspace(0.0, tau_max, tau_points)
    values = delta_rescaled(ratios[:, None] * r_minus, r_minus, taus[None, :])
    return RatioSlice(r_minus=r_minus, ratios=ratios, taus=taus, delta=values)


def sufficiency_scan(
    resolution: int = 200, tau_max: float = 50.0, tau_points: int = 500, tol: float = 1e-14, limit: int = 1000
) -> SufficiencyFinding:
    """Look for Δ < 0 inside the short-time constraint (2−√3)r₋ ≤ r₊ ≤ (2+√3)r₋.

    A report, not an assertion: counterexamples are listed (at most `limit`).
    """
    r = np.linspace(0.0, 1.0, resolution)
    taus = np.linspace(0.0, tau_max, tau_points)[1:]
    low, high = cp_boundary_ratio(conjugate=True), cp_boundary_ratio()
    checked = 0
    found: list[dict[str, float]] = []
    for r_minus in r:
        inside = r[(r >= low * r_minus) & (r <= high * r_minus) & (r + r_minus > 0)]
        if inside.size == 0:
            continue
        checked += inside.size
        values = delta_rescaled(inside[:, None], r_minus, taus[None, :])
        for k, j in zip(*np.nonzero(values < -tol)):
            if len(found) >= limit:
                break
            found.append({"r_plus": float(inside[k]), "r_minus": float(r_minus), "tau": float(taus[j]), "delta": float(values[k, j])})
    if found:
        logger.warning("sufficiency scan found %d negative samples inside the constraint", len(found))
    return SufficiencyFinding(resolution=resolution, tau_max=tau_max, cells_checked=checked, counterexamples=found)
