"""Memory-kernel quantum master equations in a fixed diagonal basis.

Superoperators act on row-major vectorized density matrices: |n⟩⟨m| sits at
index n·d + m, so vec(AρB) = (A ⊗ Bᵀ) vec(ρ).
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.sparse.csgraph import connected_components

from .classical_smp import solve_gme_memory
from .errors import ConfigError, CPCheckError, SolverError, WaitingTimeError
from .models import (
    ConditionReport,
    CPReport,
    DeltaMemory,
    ExponentialMemory,
    MemoryFunction,
    PropagatorGrid,
    QuantumKernelSpec,
    SampledFunction,
    TimeGrid,
    WaitingTimeMemory,
)
from .volterra import convolve, solve_volterra_ide
from .waiting_time import NO_CLOSED_FORM, eval_f, memory_function, sampled_memory

logger = logging.getLogger(__name__)


# --- kernel functions ----------------------------------------------------------


def sample_kernel_function(fn, grid: TimeGrid, detect: float = 1e-8) -> SampledFunction:
    match fn:
        case WaitingTimeMemory(waiting_time=w):
            return sampled_memory(w, grid, detect)
        case ExponentialMemory(amplitude=a, decay=b):
            return MemoryFunction(regular=lambda t: a * np.exp(-b * t), label="exponential").sample(grid)
        case DeltaMemory(weight=weight):
            return MemoryFunction(delta_weight=weight, label="delta").sample(grid)
    raise ConfigError("CONFIG_KERNEL_FUNCTION", f"unknown kernel function {fn!r}")


def _local_weight(fn) -> tuple[float, bool]:
    """(δ weight, whether the regular part vanishes) without sampling."""
    match fn:
        case DeltaMemory(weight=weight):
            return weight, True
        case ExponentialMemory(amplitude=a):
            return 0.0, a == 0
        case WaitingTimeMemory(waiting_time=w):
            try:
                k = memory_function(w)
            except WaitingTimeError as exc:
                if exc.code != NO_CLOSED_FORM:
                    raise
                return float(eval_f(w, 0.0)), False
            return k.delta_weight, k.is_markovian
    raise ConfigError("CONFIG_KERNEL_FUNCTION", f"unknown kernel function {fn!r}")


def _energies(spec: QuantumKernelSpec) -> list:
    return spec.energies or [DeltaMemory(weight=0.0)] * spec.dimension


def _sampled(
    spec: QuantumKernelSpec, grid: TimeGrid, detect: float = 1e-8
) -> tuple[list[SampledFunction], list[SampledFunction]]:
    memories = [sample_kernel_function(fn, grid, detect) for fn in spec.memories]
    energies = [sample_kernel_function(fn, grid, detect) for fn in _energies(spec)]
    return memories, energies


def _stack(functions: list[SampledFunction]) -> tuple[np.ndarray, np.ndarray]:
    values = np.stack([np.asarray(f.values, dtype=float) for f in functions], axis=1)
    delta = np.array([float(np.real(f.delta_weight)) for f in functions])
    return values, delta


def is_semigroup(spec: QuantumKernelSpec) -> bool:
    return all(_local_weight(fn)[1] for fn in list(spec.memories) + _energies(spec))


# --- superoperators ------------------------------------------------------------


def jump_superoperators(spec: QuantumKernelSpec) -> np.ndarray:
    """B_n as d²×d² matrices, shape (d, d², d²)."""
    d = spec.dimension
    jumps = np.zeros((d, d * d, d * d), dtype=complex if spec.kraus else float)
    if spec.is_lattice:
        pi = spec.pi_matrix
        for n in range(d):
            for m in range(d):
                jumps[n, m * d + m, n * d + n] = pi[m, n]
        return jumps
    for n, ops in enumerate(spec.kraus):
        for op in ops:
            K = op.matrix
            jumps[n] += np.kron(K, K.conj())
    if not np.any(jumps.imag):
        jumps = jumps.real
    return jumps


def superoperator_terms(spec: QuantumKernelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-level parts of 𝒦(τ) = Σ_n k_n(τ)S_n + ε_n(τ)H_n.

    S_n = B_n − ½{P_n, ·} and H_n = −i[P_n, ·] with P_n = |n⟩⟨n|.
    """
    d = spec.dimension
    eye = np.eye(d)
    jumps = jump_superoperators(spec)
    loss = np.empty((d, d * d, d * d))
    ham = np.empty((d, d * d, d * d), dtype=complex)
    for n in range(d):
        proj = np.zeros((d, d))
        proj[n, n] = 1.0
        left, right = np.kron(proj, eye), np.kron(eye, proj)
        loss[n] = 0.5 * (left + right)
        ham[n] = -1j * (left - right)
    return jumps - loss, ham


def lindblad_generator(spec: QuantumKernelSpec) -> np.ndarray:
    """Generator ℒ = Σ_n w_n S_n + e_n H_n from the δ weights of memories and energies."""
    jumps, ham = superoperator_terms(spec)
    k_local = np.array([_local_weight(fn)[0] for fn in spec.memories])
    e_local = np.array([_local_weight(fn)[0] for fn in _energies(spec)])
    generator = np.einsum("n,nab->ab", k_local, jumps) + np.einsum("n,nab->ab", e_local, ham)
    if not is_semigroup(spec):
        logger.warning("kernel has regular memory parts; generator keeps only the local terms")
    return generator if np.any(generator.imag) else generator.real


def apply_superoperator(V: np.ndarray, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    d = rho.shape[-1]
    out = np.einsum("...ab,b->...a", V, rho.reshape(d * d))
    return out.reshape(out.shape[:-1] + (d, d))


def density_matrix(rho, tol: float = 1e-12) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ConfigError("CONFIG_DENSITY_MATRIX", "density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ConfigError("CONFIG_DENSITY_MATRIX", "density matrix must be Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ConfigError("CONFIG_DENSITY_MATRIX", "density matrix must have unit trace")
    if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
        raise ConfigError("CONFIG_DENSITY_MATRIX", "density matrix must be positive semidefinite")
    return rho


def choi_matrix(V: np.ndarray) -> np.ndarray:
    """J[(i,a),(j,b)] = ⟨a|V(|i⟩⟨j|)|b⟩; batches over leading axes."""
    V = np.asarray(V)
    D = V.shape[-1]
    d = int(round(np.sqrt(D)))
    lead = V.shape[:-2]
    blocks = V.reshape(lead + (d, d, d, d))
    k = len(lead)
    order = tuple(range(k)) + (k + 2, k, k + 3, k + 1)
    return blocks.transpose(order).reshape(lead + (D, D))


def lattice_map_superoperator(T: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Exact map of a lattice kernel: populations move with T, coherences scale by g_nm."""
    T = np.asarray(T)
    g = np.asarray(g)
    d = T.shape[-1]
    lead = T.shape[:-2]
    V = np.zeros(lead + (d * d, d * d), dtype=np.result_type(T, g))
    for i in range(d):
        for j in range(d):
            if i != j:
                V[..., i * d + j, i * d + j] = g[..., i, j]
        for n in range(d):
            V[..., n * d + n, i * d + i] = T[..., n, i]
    return V


# --- coherence functions -------------------------------------------------------


def solve_gnm(spec: QuantumKernelSpec, grid: TimeGrid, detect: float = 1e-8) -> SampledFunction:
    """g_nm(t) from ġ_nm = −∫[z_n(τ) + z_m*(τ)] g_nm(t−τ)dτ, g_nm(0) = 1, z = ½k + iε."""
    memories, energies = _sampled(spec, grid, detect)
    k, kd = _stack(memories)
    e, ed = _stack(energies)
    kernel_values = -(0.5 * (k[:, :, None] + k[:, None, :]))
    kernel_delta = -(0.5 * (kd[:, None] + kd[None, :]))
    if np.any(e) or np.any(ed):
        kernel_values = kernel_values - 1j * (e[:, :, None] - e[:, None, :])
        kernel_delta = kernel_delta - 1j * (ed[:, None] - ed[None, :])
    kernel = SampledFunction(grid=grid, values=kernel_values, delta_weight=kernel_delta)
    d = spec.dimension
    return solve_volterra_ide(kernel, np.ones((d, d)), elementwise=True)


# --- propagator ----------------------------------------------------------------


def _superoperator_blocks(pattern: np.ndarray) -> list[np.ndarray]:
    count, labels = connected_components(pattern, directed=True, connection="weak")
    return [np.flatnonzero(labels == c) for c in range(count)]


def _drifts(values: np.ndarray, d: int) -> tuple[float, float]:
    D = d * d
    trace_row = np.eye(d).reshape(D)
    trace = float(np.max(np.abs(np.einsum("a,tab->tb", trace_row, values) - trace_row)))
    swap = np.arange(D).reshape(d, d).T.reshape(D)
    mirrored = values.conj()[:, swap][:, :, swap]
    return trace, float(np.max(np.abs(mirrored - values)))


def _propagator_grid(values: np.ndarray, grid: TimeGrid, d: int, order: int | None, drift_tol: float, warnings: list[str]):
    trace, herm = _drifts(values, d)
    if trace > drift_tol:
        warnings.append("TRACE_DRIFT")
        logger.warning("trace drift %.3g exceeds %.3g", trace, drift_tol)
    if herm > drift_tol:
        warnings.append("HERMITICITY_DRIFT")
        logger.warning("hermiticity drift %.3g exceeds %.3g", herm, drift_tol)
    if not np.any(np.imag(values)):
        values = np.real(values)
    return PropagatorGrid(
        grid=grid,
        dimension=d,
        values=values,
        trace_drift=trace,
        hermiticity_drift=herm,
        order=order,
        warnings=warnings,
    )


def _check_dimension(spec: QuantumKernelSpec, max_dimension: int) -> None:
    if spec.dimension > max_dimension:
        raise SolverError(
            "SOLVER_DIMENSION_LIMIT", f"dimension {spec.dimension} exceeds the limit of {max_dimension}"
        )


def build_propagator(
    spec: QuantumKernelSpec,
    grid: TimeGrid,
    max_dimension: int = 32,
    drift_tol: float = 1e-6,
    detect: float = 1e-8,
) -> PropagatorGrid:
    """Integrate V̇ = ∫₀^t 𝒦(τ)V(t−τ)dτ, V(0) = 1, block by block.

    The d²×d² kernel is split into the connected components of its sparsity
    pattern; 1×1 blocks are solved together as independent scalar equations.
    """
    _check_dimension(spec, max_dimension)
    d = spec.dimension
    D = d * d
    jumps, ham = superoperator_terms(spec)
    memories, energies = _sampled(spec, grid, detect)
    k, kd = _stack(memories)
    e, ed = _stack(energies)
    with_energy = bool(np.any(e) or np.any(ed))

    pattern = np.any(jumps != 0, axis=0) | np.eye(D, dtype=bool)
    blocks = _superoperator_blocks(pattern)
    values = np.zeros((grid.count + 1, D, D), dtype=complex)
    logger.info("propagator of dimension %d split into %d blocks", d, len(blocks))

    def block_kernel(idx: np.ndarray) -> SampledFunction:
        ix = np.ix_(np.arange(d), idx, idx)
        kv = np.einsum("tn,nab->tab", k, jumps[ix])
        kdelta = np.einsum("n,nab->ab", kd, jumps[ix])
        if with_energy:
            kv = kv + np.einsum("tn,nab->tab", e, ham[ix])
            kdelta = kdelta + np.einsum("n,nab->ab", ed, ham[ix])
        return SampledFunction(grid=grid, values=kv, delta_weight=kdelta)

    singles = np.array([b[0] for b in blocks if b.size == 1], dtype=int)
    if singles.size:
        kernel = block_kernel(singles)
        diag = np.arange(singles.size)
        scalar = SampledFunction(
            grid=grid, values=kernel.values[:, diag, diag], delta_weight=kernel.delta[diag, diag]
        )
        x = solve_volterra_ide(scalar, np.ones(singles.size), elementwise=True).values
        values[:, singles, singles] = x
    for idx in blocks:
        if idx.size == 1:
            continue
        x = solve_volterra_ide(block_kernel(idx), np.eye(idx.size)).values
        values[:, idx[:, None], idx[None, :]] = x
    return _propagator_grid(values, grid, d, None, drift_tol, [])


def dyson_series(
    spec: QuantumKernelSpec,
    grid: TimeGrid,
    max_order: int = 12,
    tol: float = 1e-8,
    max_dimension: int = 32,
    drift_tol: float = 1e-6,
    detect: float = 1e-8,
) -> PropagatorGrid:
    """V = V₀ + V₀∗ℬ∗V₀ + ..., with V₀|n⟩⟨m| = g_nm|n⟩⟨m| and ℬ(τ) = Σ_n k_n(τ)B_n.

    Terms are added until the newest one falls below tol in max-norm; `order`
    on the result is the number of ℬ insertions kept.
    """
    _check_dimension(spec, max_dimension)
    d = spec.dimension
    D = d * d
    g = solve_gnm(spec, grid, detect).values
    memories, _ = _sampled(spec, grid, detect)
    k, kd = _stack(memories)
    jumps = jump_superoperators(spec)

    v0_values = np.zeros((grid.count + 1, D, D), dtype=np.result_type(g, jumps))
    v0_values[:, np.arange(D), np.arange(D)] = g.reshape(grid.count + 1, D)
    v0 = SampledFunction(grid=grid, values=v0_values)
    gain = SampledFunction(
        grid=grid,
        values=np.einsum("tn,nab->tab", k, jumps),
        delta_weight=np.einsum("n,nab->ab", kd, jumps),
    )

    total = v0_values.copy()
    term = v0
    order = 0
    warnings: list[str] = []
    while True:
        if order == max_order:
            warnings.append("DYSON_TRUNCATED")
            logger.warning("Dyson series stopped at order %d above tolerance %.1g", order, tol)
            break
        term = convolve(v0, convolve(gain, term))
        total = total + term.values
        order += 1
        size = float(np.max(np.abs(term.values)))
        logger.debug("Dyson order %d term norm %.3g", order, size)
        if size < tol:
            break
    return _propagator_grid(total, grid, d, order, drift_tol, warnings)


def semigroup_defect(prop: PropagatorGrid, i: int, j: int) -> float:
    """max |V(t_{i+j}) − V(t_i)V(t_j)|."""
    if min(i, j) < 0 or i + j > prop.grid.count:
        raise SolverError("SOLVER_GRID_RANGE", f"indices {i}+{j} exceed grid count {prop.grid.count}")
    V = prop.values
    return float(np.max(np.abs(V[i + j] - V[i] @ V[j])))


# --- complete positivity -------------------------------------------------------


def _psd_report(name: str, matrices: np.ndarray, grid: TimeGrid, psd_relative: float, stride: int) -> ConditionReport:
    herm = 0.5 * (matrices + np.conj(np.swapaxes(matrices, -1, -2)))
    eig = np.linalg.eigvalsh(herm)[:, 0]
    scale = np.max(np.abs(matrices), axis=(-2, -1))
    bad = np.flatnonzero(eig < -psd_relative * scale)
    times = grid.times()
    first = float(times[bad[0]]) if bad.size else None
    return ConditionReport(
        condition=name,
        times=times[::stride].tolist(),
        min_eigenvalues=eig[::stride].tolist(),
        first_violation=first,
        verdict="violated" if bad.size else "holds",
    )


def kernel_nonnegative(memories: list[SampledFunction]) -> bool:
    return all(np.all(np.asarray(m.values).real >= 0) and np.all(np.real(m.delta_weight) >= 0) for m in memories)


def check_cond1(
    spec: QuantumKernelSpec,
    grid: TimeGrid,
    gnm: SampledFunction | None = None,
    psd_relative: float = 1e-8,
    stride: int = 1,
    detect: float = 1e-8,
) -> ConditionReport:
    """G(t) = (g_nm(t)) ≥ 0; a sufficient CP test when every k_n ≥ 0."""
    if gnm is None:
        gnm = solve_gnm(spec, grid, detect)
    report = _psd_report("cond1", gnm.values, grid, psd_relative, stride)
    memories, _ = _sampled(spec, grid, detect)
    if kernel_nonnegative(memories):
        return report
    logger.warning("memory functions take negative values; G(t) >= 0 alone does not imply CP")
    return report.model_copy(update={"warnings": ["KERNEL_NEGATIVE"]})


def check_cond2(
    spec: QuantumKernelSpec,
    grid: TimeGrid,
    gnm: SampledFunction | None = None,
    psd_relative: float = 1e-8,
    stride: int = 1,
    detect: float = 1e-8,
) -> list[ConditionReport]:
    """Fˡ(t) = (∫₀^t k_l(τ)g_nm(t−τ)dτ) ≥ 0 for every level l."""
    if gnm is None:
        gnm = solve_gnm(spec, grid, detect)
    memories, _ = _sampled(spec, grid, detect)
    reports = []
    for level, memory in enumerate(memories):
        F = convolve(memory, gnm).values
        reports.append(_psd_report(f"cond2[{level}]", F, grid, psd_relative, stride))
    return reports


def check_cond3_lattice(
    spec: QuantumKernelSpec,
    grid: TimeGrid,
    gnm: SampledFunction | None = None,
    psd_relative: float = 1e-8,
    stride: int = 1,
    drift_tol: float = 1e-6,
    detect: float = 1e-8,
) -> ConditionReport:
    """G̃(t) ≥ 0 and T_nm(t) ≥ 0: necessary and sufficient for lattice kernels."""
    if not spec.is_lattice:
        raise CPCheckError("CP_NOT_LATTICE", "the exact CP test needs a lattice (pi) kernel")
    if gnm is None:
        gnm = solve_gnm(spec, grid, detect)
    memories, _ = _sampled(spec, grid, detect)
    T = solve_gme_memory(spec.pi_matrix, memories, grid, drift_tol=drift_tol).T
    d = spec.dimension
    diag = np.arange(d)
    g_tilde = np.array(gnm.values, dtype=np.result_type(gnm.values, float), copy=True)
    g_tilde[:, diag, diag] = T[:, diag, diag]
    report = _psd_report("cond3", g_tilde, grid, psd_relative, stride)

    off = T.copy()
    off[:, diag, diag] = np.inf
    negative = np.flatnonzero(off.min(axis=(1, 2)) < -psd_relative) if d > 1 else np.array([], dtype=int)
    if negative.size == 0:
        return report
    logger.warning("transition probabilities turn negative at t=%g", grid.times()[negative[0]])
    first = float(grid.times()[negative[0]])
    if report.first_violation is not None:
        first = min(first, report.first_violation)
    return report.model_copy(
        update={"first_violation": first, "verdict": "violated", "warnings": ["TRANSITION_NEGATIVE"]}
    )


def check_cp(
    spec: QuantumKernelSpec,
    grid: TimeGrid,
    psd_relative: float = 1e-8,
    stride: int = 1,
    drift_tol: float = 1e-6,
    detect: float = 1e-8,
) -> CPReport:
    gnm = solve_gnm(spec, grid, detect)
    memories, _ = _sampled(spec, grid, detect)
    cond1 = check_cond1(spec, grid, gnm, psd_relative, stride, detect)
    cond2 = check_cond2(spec, grid, gnm, psd_relative, stride, detect)
    cond3 = check_cond3_lattice(spec, grid, gnm, psd_relative, stride, drift_tol, detect) if spec.is_lattice else None
    nonnegative = kernel_nonnegative(memories)
    sufficient = cond1.verdict == "holds" and (nonnegative or all(r.verdict == "holds" for r in cond2))

    warnings = list(cond1.warnings)
    for report in cond2 + ([cond3] if cond3 else []):
        warnings.extend(w for w in report.warnings if w not in warnings)
    return CPReport(
        cond1=cond1,
        cond2=cond2,
        cond3=cond3,
        kernel_nonnegative=nonnegative,
        semigroup=is_semigroup(spec),
        sufficient="holds" if sufficient else "inconclusive",
        warnings=warnings,
    )
