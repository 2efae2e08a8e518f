from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError, SimulationError
from .models import MarkovSpec, PropagationResult, SampledFunction, SemiMarkovSpec, TimeGrid, TrajectoryEstimate
from .volterra import laplace_probe, solve_volterra_ide
from .waiting_time import eval_f, eval_g, sample_sojourns, sampled_memory, truncation_horizon

logger = logging.getLogger(__name__)


def gme_kernel(pi: np.ndarray, memories: list[SampledFunction], grid: TimeGrid) -> SampledFunction:
    """K_mn(τ) = π_mn k_n(τ) − δ_mn k_n(τ); absorbing (zero) columns lose nothing."""
    pi = np.asarray(pi, dtype=float)
    balance = pi - np.diag(pi.sum(axis=0))
    k = np.stack([np.asarray(m.values) for m in memories], axis=1)
    k_delta = np.array([complex(m.delta_weight).real for m in memories])
    return SampledFunction(
        grid=grid,
        values=balance[None, :, :] * k[:, None, :],
        delta_weight=balance * k_delta[None, :],
    )


def _check_initial(P0, states: int) -> np.ndarray:
    p = np.asarray(P0, dtype=float)
    if p.shape != (states,) or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-12:
        raise ConfigError("CONFIG_INITIAL_DISTRIBUTION", f"initial occupation must be a probability vector over {states} states")
    return p


def _conservation(T: np.ndarray, columns: list[int] | None = None) -> float:
    sums = T.sum(axis=1)
    if columns is not None:
        sums = sums[:, columns]
    return float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0


def solve_gme_memory(
    pi: np.ndarray,
    memories: list[SampledFunction],
    grid: TimeGrid,
    initial=None,
    drift_tol: float = 1e-6,
) -> PropagationResult:
    """Generalized master equation for T_mn(t) driven by W_mn = π_mn k_n."""
    states = len(memories)
    kernel = gme_kernel(pi, memories, grid)
    T = solve_volterra_ide(kernel, np.eye(states)).values
    if np.iscomplexobj(T):
        T = T.real
    drift = _conservation(T)
    warnings: list[str] = []
    if drift > drift_tol:
        warnings.append("PROBABILITY_DRIFT")
        logger.warning("probability conservation drift %.3g exceeds %.3g", drift, drift_tol)
    P = None
    if initial is not None:
        P = np.einsum("imn,n->im", T, _check_initial(initial, states))
    return PropagationResult(grid=grid, T=T, P=P, conservation_drift=drift, warnings=warnings)


def solve_gme(
    spec: SemiMarkovSpec, grid: TimeGrid, initial=None, drift_tol: float = 1e-6, detect: float = 1e-8
) -> PropagationResult:
    memories = [sampled_memory(w, grid, detect) for w in spec.waiting_times]
    logger.info("solving GME for %d states on %d points", spec.states, grid.count + 1)
    return solve_gme_memory(spec.pi_matrix, memories, grid, initial=initial, drift_tol=drift_tol)


def pauli_generator(spec: MarkovSpec) -> np.ndarray:
    return spec.rate_matrix - np.diag(spec.exit_rates)


def pauli_evolve(spec: MarkovSpec, P0, grid: TimeGrid) -> PropagationResult:
    p0 = _check_initial(P0, spec.states)
    zeros = np.zeros((grid.count + 1, spec.states, spec.states))
    kernel = SampledFunction(grid=grid, values=zeros, delta_weight=pauli_generator(spec))
    T = solve_volterra_ide(kernel, np.eye(spec.states)).values
    return PropagationResult(
        grid=grid,
        T=T,
        P=np.einsum("imn,n->im", T, p0),
        conservation_drift=_conservation(T),
    )


def _simulate_block(
    spec: SemiMarkovSpec, n0: int, t_max: float, times: np.ndarray, size: int, rng: np.random.Generator
) -> np.ndarray:
    states = spec.states
    absorbing = set(spec.absorbing)
    cumulative = np.cumsum(spec.pi_matrix, axis=0)
    state = np.full(size, n0)
    clock = np.zeros(size)
    occupied = np.full((size, times.size), -1)
    active = np.ones(size, dtype=bool)

    while active.any():
        idx = np.flatnonzero(active)
        current = state[idx]
        sojourn = np.full(idx.size, np.inf)
        for n in range(states):
            sel = current == n
            if sel.any() and n not in absorbing:
                sojourn[sel] = sample_sojourns(spec.waiting_times[n], rng, int(sel.sum()))
        leave = clock[idx] + sojourn

        hit = (times[None, :] >= clock[idx, None]) & (times[None, :] < leave[:, None])
        rows, cols = np.nonzero(hit)
        occupied[idx[rows], cols] = current[rows]

        draws = rng.random(idx.size)
        following = current.copy()
        for n in range(states):
            sel = current == n
            if sel.any() and n not in absorbing:
                following[sel] = np.minimum(np.searchsorted(cumulative[:, n], draws[sel], side="right"), states - 1)
        clock[idx] = leave
        state[idx] = following
        active[idx] = leave <= t_max

    return np.stack([(occupied == n).sum(axis=0) for n in range(states)], axis=1)


def simulate_trajectories(
    spec: SemiMarkovSpec,
    n0: int,
    t_max: float,
    n_traj: int,
    seed: int,
    sample_times=None,
    block_size: int = 10000,
    threads: int = 1,
) -> TrajectoryEstimate:
    """Monte Carlo occupations P̂_n(t) of the renewal chain started in n0.

    Trajectories are split into fixed-size blocks; block b draws from the b-th
    child of SeedSequence(seed), so results do not depend on `threads`.
    """
    if n_traj <= 0:
        raise SimulationError("SIMULATION_EMPTY", "n_traj must be positive")
    if not 0 <= n0 < spec.states:
        raise SimulationError("SIMULATION_BAD_STATE", f"initial state {n0} out of range")
    times = np.linspace(0.0, t_max, 11) if sample_times is None else np.asarray(sample_times, dtype=float)
    if times.size == 0 or np.any(times < 0) or np.any(times > t_max):
        raise SimulationError("SIMULATION_BAD_TIMES", f"sample times must lie in [0, {t_max}]")

    blocks = math.ceil(n_traj / block_size)
    sizes = [min(block_size, n_traj - b * block_size) for b in range(blocks)]
    children = np.random.SeedSequence(seed).spawn(blocks)

    def run(b: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(children[b]))
        return _simulate_block(spec, n0, t_max, times, sizes[b], rng)

    logger.info("simulating %d trajectories in %d blocks on %d threads", n_traj, blocks, threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(run, range(blocks)))
    else:
        counts = [run(b) for b in range(blocks)]

    occupation = np.sum(counts, axis=0) / n_traj
    return TrajectoryEstimate(
        times=times,
        occupation=occupation,
        stderr=np.sqrt(occupation * (1 - occupation) / n_traj),
        n_traj=n_traj,
        seed=seed,
        initial_state=n0,
        block_size=block_size,
        blocks=blocks,
    )


def laplace_consistency(spec: SemiMarkovSpec, u: float, step: float = 1e-3) -> np.ndarray:
    """|Ŵ_mn(u) ĝ_n(u) − q̂_mn(u)| from sampled transforms."""
    horizon = max([-math.log(1e-10) / u] + [truncation_horizon(w) for w in spec.waiting_times])
    grid = TimeGrid.from_horizon(step, horizon)
    times = grid.times()
    pi = spec.pi_matrix
    states = spec.states
    k_hat = np.empty(states, dtype=complex)
    g_hat = np.empty(states, dtype=complex)
    f_hat = np.empty(states, dtype=complex)
    for n, w in enumerate(spec.waiting_times):
        k_hat[n] = laplace_probe(sampled_memory(w, grid), u).value
        g_hat[n] = laplace_probe(SampledFunction(grid=grid, values=eval_g(w, times)), u).value
        f_hat[n] = laplace_probe(SampledFunction(grid=grid, values=eval_f(w, times)), u).value
    W_hat = pi * k_hat[None, :]
    q_hat = pi * f_hat[None, :]
    return np.abs(W_hat * g_hat[None, :] - q_hat)
