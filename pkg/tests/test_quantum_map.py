from __future__ import annotations

import numpy as np
import pytest
from scipy import linalg

from qsmp.core.classical_smp import solve_gme_memory
from qsmp.core.errors import ConfigError, CPCheckError, SolverError
from qsmp.core.models import (
    DeltaMemory,
    ExponentialMemory,
    KrausOperator,
    MultiExponential,
    QuantumKernelSpec,
    TimeGrid,
    TwoLevelParams,
    WaitingTimeMemory,
)
from qsmp.core.quantum_map import (
    apply_superoperator,
    build_propagator,
    check_cond1,
    check_cond2,
    check_cond3_lattice,
    check_cp,
    choi_matrix,
    density_matrix,
    dyson_series,
    is_semigroup,
    jump_superoperators,
    lattice_map_superoperator,
    lindblad_generator,
    sample_kernel_function,
    semigroup_defect,
    solve_gnm,
    superoperator_terms,
)
from qsmp.core.twolevel import T_diag, f_pm, g_entries, two_level_spec
from qsmp.core.volterra import convolve

FLIP = [[0.0, 1.0], [1.0, 0.0]]
PARAMS = TwoLevelParams(gamma=1.0, kappa_plus=0.1875, kappa_minus=0.12)


def _markov_spec() -> QuantumKernelSpec:
    return QuantumKernelSpec(
        dimension=2,
        memories=[DeltaMemory(weight=0.5), DeltaMemory(weight=0.3)],
        energies=[DeltaMemory(weight=0.7), DeltaMemory(weight=-0.2)],
        pi=FLIP,
    )


def _kraus_two_level(params: TwoLevelParams) -> QuantumKernelSpec:
    return QuantumKernelSpec(
        dimension=2,
        memories=[
            ExponentialMemory(amplitude=params.kappa_plus, decay=params.gamma),
            ExponentialMemory(amplitude=params.kappa_minus, decay=params.gamma),
        ],
        kraus=[
            [KrausOperator(real=[[0.0, 0.0], [1.0, 0.0]])],
            [KrausOperator(real=[[0.0, 1.0], [0.0, 0.0]])],
        ],
    )


def test_superoperators_preserve_trace() -> None:
    trace_row = np.eye(2).reshape(4)
    for spec in (_markov_spec(), _kraus_two_level(PARAMS)):
        jumps, ham = superoperator_terms(spec)
        np.testing.assert_allclose(np.einsum("a,nab->nb", trace_row, jumps), 0.0, atol=1e-15)
        np.testing.assert_allclose(np.einsum("a,nab->nb", trace_row, ham), 0.0, atol=1e-15)


def test_kraus_and_lattice_jumps_agree() -> None:
    np.testing.assert_allclose(
        jump_superoperators(_kraus_two_level(PARAMS)), jump_superoperators(two_level_spec(PARAMS))
    )


def test_coherence_functions_match_closed_forms() -> None:
    grid = TimeGrid.from_horizon(1e-3, 10.0)
    t = grid.times()
    g = solve_gnm(two_level_spec(PARAMS), grid).values
    np.testing.assert_allclose(g[:, 0, 0].real, g_entries(PARAMS, "++", t), atol=1e-6)
    np.testing.assert_allclose(g[:, 1, 1].real, g_entries(PARAMS, "--", t), atol=1e-6)
    np.testing.assert_allclose(g[:, 0, 1].real, g_entries(PARAMS, "+-", t), atol=1e-6)


def test_vanishing_memory_leaves_coherences_untouched() -> None:
    spec = QuantumKernelSpec(
        dimension=2,
        memories=[ExponentialMemory(amplitude=0.0, decay=1.0), ExponentialMemory(amplitude=0.0, decay=1.0)],
        pi=FLIP,
    )
    grid = TimeGrid(step=0.1, count=20)
    np.testing.assert_allclose(solve_gnm(spec, grid).values, 1.0)
    for report in check_cond2(spec, grid):
        assert report.verdict == "holds"


def test_markov_limit_is_lindblad_exponential() -> None:
    spec = _markov_spec()
    assert is_semigroup(spec)
    grid = TimeGrid.from_horizon(1e-2, 5.0)
    prop = build_propagator(spec, grid)
    generator = lindblad_generator(spec)
    for i in (0, 137, 500):
        np.testing.assert_allclose(prop.values[i], linalg.expm(generator * grid.times()[i]), atol=1e-8)
    assert semigroup_defect(prop, 100, 200) <= 1e-10


def test_propagator_follows_two_level_closed_forms() -> None:
    grid = TimeGrid.from_horizon(1e-3, 10.0)
    t = grid.times()
    prop = build_propagator(two_level_spec(PARAMS), grid)
    V = prop.values
    np.testing.assert_allclose(V[:, 0, 0], T_diag(PARAMS, "+", t), atol=1e-6)
    np.testing.assert_allclose(V[:, 3, 3], T_diag(PARAMS, "-", t), atol=1e-6)
    np.testing.assert_allclose(V[:, 1, 1], g_entries(PARAMS, "+-", t), atol=1e-6)
    np.testing.assert_allclose(V[:, 1, 2], 0.0)
    assert prop.trace_drift <= 1e-6
    assert prop.hermiticity_drift <= 1e-6
    assert not prop.warnings


def test_propagator_applied_to_state_keeps_trace() -> None:
    grid = TimeGrid.from_horizon(1e-2, 5.0)
    prop = build_propagator(two_level_spec(PARAMS), grid)
    rho0 = density_matrix([[0.6, 0.3], [0.3, 0.4]])
    rho = apply_superoperator(prop.values, rho0)
    np.testing.assert_allclose(np.trace(rho, axis1=1, axis2=2), 1.0, atol=1e-8)
    np.testing.assert_allclose(rho[:, 0, 1], rho[:, 1, 0].conj(), atol=1e-12)


def test_lattice_map_reproduces_propagator() -> None:
    grid = TimeGrid.from_horizon(1e-2, 5.0)
    spec = two_level_spec(PARAMS)
    memories = [sample_kernel_function(fn, grid) for fn in spec.memories]
    T = solve_gme_memory(spec.pi_matrix, memories, grid).T
    g = solve_gnm(spec, grid).values
    np.testing.assert_allclose(lattice_map_superoperator(T, g), build_propagator(spec, grid).values, atol=1e-9)


def test_kraus_propagator_equals_lattice_propagator() -> None:
    grid = TimeGrid.from_horizon(1e-2, 5.0)
    np.testing.assert_allclose(
        build_propagator(_kraus_two_level(PARAMS), grid).values,
        build_propagator(two_level_spec(PARAMS), grid).values,
        atol=1e-12,
    )


def test_dyson_series_matches_direct_integration() -> None:
    grid = TimeGrid.from_horizon(1e-3, 5.0)
    spec = two_level_spec(PARAMS)
    direct = build_propagator(spec, grid).values
    series = dyson_series(spec, grid)
    assert series.order is not None and series.order >= 1
    np.testing.assert_allclose(series.values, direct, atol=1e-5)


def test_memory_breaks_semigroup_property() -> None:
    grid = TimeGrid.from_horizon(1e-3, 2.0)
    spec = two_level_spec(PARAMS)
    assert not is_semigroup(spec)
    assert semigroup_defect(build_propagator(spec, grid), 1000, 1000) > 1e-4
    with pytest.raises(SolverError) as err:
        semigroup_defect(build_propagator(spec, TimeGrid(step=0.1, count=10)), 6, 6)
    assert err.value.code == "SOLVER_GRID_RANGE"


def test_dimension_limit_is_enforced() -> None:
    with pytest.raises(SolverError) as err:
        build_propagator(_markov_spec(), TimeGrid(step=0.1, count=10), max_dimension=1)
    assert err.value.code == "SOLVER_DIMENSION_LIMIT"


def test_energy_shifts_only_rotate_coherences() -> None:
    grid = TimeGrid.from_horizon(1e-2, 5.0)
    memories = [DeltaMemory(weight=0.2), DeltaMemory(weight=0.4)]
    still = QuantumKernelSpec(dimension=2, memories=memories, pi=[[1.0, 0.0], [0.0, 1.0]])
    rotating = QuantumKernelSpec(
        dimension=2,
        memories=memories,
        energies=[DeltaMemory(weight=0.1), DeltaMemory(weight=-0.3)],
        pi=[[1.0, 0.0], [0.0, 1.0]],
    )
    g_still = solve_gnm(still, grid).values[:, 0, 1]
    g_rot = solve_gnm(rotating, grid).values[:, 0, 1]
    np.testing.assert_allclose(np.abs(g_rot), np.abs(g_still), atol=1e-12)
    np.testing.assert_allclose(np.abs(g_rot), np.exp(-0.3 * grid.times()), atol=1e-12)
    assert np.max(np.abs(g_rot.imag)) > 1e-3

    V = build_propagator(rotating, grid).values
    np.testing.assert_allclose(V[:, 0, 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(V[:, 3, 3], 1.0, atol=1e-12)


def test_choi_matrix_of_identity_and_transpose() -> None:
    identity = np.eye(4)
    np.testing.assert_allclose(np.linalg.eigvalsh(choi_matrix(identity)), [0.0, 0.0, 0.0, 2.0], atol=1e-12)
    transpose = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            transpose[j * 2 + i, i * 2 + j] = 1.0
    assert np.min(np.linalg.eigvalsh(choi_matrix(transpose))) == pytest.approx(-1.0)


def test_choi_spectrum_of_lattice_map_splits_into_blocks() -> None:
    T = np.array([[0.7, 0.2], [0.3, 0.8]])
    g = np.array([[1.0, 0.4 + 0.1j], [0.4 - 0.1j, 1.0]])
    J = choi_matrix(lattice_map_superoperator(T, g))
    g_tilde = np.array([[0.7, 0.4 + 0.1j], [0.4 - 0.1j, 0.8]])
    expected = np.sort(np.concatenate([np.linalg.eigvalsh(g_tilde), [0.3, 0.2]]))
    np.testing.assert_allclose(np.linalg.eigvalsh(J), expected, atol=1e-12)


@pytest.mark.parametrize("kappa_plus", [0.05, 0.15, 0.25])
@pytest.mark.parametrize("kappa_minus", [0.05, 0.15, 0.25])
def test_choi_spectrum_matches_lattice_criterion(kappa_plus: float, kappa_minus: float) -> None:
    grid = TimeGrid.from_horizon(1e-2, 5.0)
    spec = two_level_spec(TwoLevelParams(gamma=1.0, kappa_plus=kappa_plus, kappa_minus=kappa_minus))
    g = solve_gnm(spec, grid).values[::10]
    memories = [sample_kernel_function(fn, grid) for fn in spec.memories]
    T = solve_gme_memory(spec.pi_matrix, memories, grid).T[::10]
    g_tilde = np.array(g, copy=True)
    g_tilde[:, [0, 1], [0, 1]] = T[:, [0, 1], [0, 1]]
    criterion = np.minimum(np.linalg.eigvalsh(g_tilde)[:, 0], np.minimum(T[:, 0, 1], T[:, 1, 0]))
    choi = np.linalg.eigvalsh(choi_matrix(lattice_map_superoperator(T, g)))[:, 0]
    np.testing.assert_allclose(choi, criterion, atol=1e-8)
    np.testing.assert_array_equal(choi < -1e-8, criterion < -1e-8)


def test_markov_kernel_is_completely_positive() -> None:
    report = check_cp(_markov_spec(), TimeGrid.from_horizon(1e-2, 5.0))
    assert report.semigroup
    assert report.kernel_nonnegative
    assert report.cond1.verdict == "holds"
    assert report.cond3 is not None and report.cond3.verdict == "holds"
    assert report.sufficient == "holds"


def test_equal_memories_satisfy_cond1() -> None:
    params = TwoLevelParams(gamma=1.0, kappa_plus=0.2, kappa_minus=0.2)
    report = check_cond1(two_level_spec(params), TimeGrid.from_horizon(1e-2, 20.0))
    assert report.verdict == "holds"
    assert not report.warnings


def test_cond2_diagonal_is_waiting_time_density() -> None:
    grid = TimeGrid.from_horizon(1e-3, 10.0)
    spec = two_level_spec(PARAMS)
    memory = sample_kernel_function(spec.memories[0], grid)
    F = convolve(memory, solve_gnm(spec, grid)).values
    np.testing.assert_allclose(F[:, 0, 0].real, f_pm(PARAMS, "+", grid.times()), atol=1e-6)


def test_asymmetric_rates_violate_exact_condition_early() -> None:
    params = TwoLevelParams(gamma=1.0, kappa_plus=0.25, kappa_minus=0.025)
    report = check_cond3_lattice(two_level_spec(params), TimeGrid.from_horizon(1e-3, 1.0))
    assert report.verdict == "violated"
    assert report.first_violation is not None
    assert 0 < report.first_violation < 0.5


def test_survival_condition_fails_wherever_exact_condition_fails() -> None:
    params = TwoLevelParams(gamma=1.0, kappa_plus=0.25, kappa_minus=0.025)
    report = check_cp(two_level_spec(params), TimeGrid.from_horizon(1e-3, 1.0))
    assert report.cond3 is not None and report.cond3.verdict == "violated"
    assert report.cond1.verdict == "violated"
    assert report.cond1.first_violation <= report.cond3.first_violation
    assert report.sufficient == "inconclusive"


def test_exact_condition_needs_lattice_kernel() -> None:
    with pytest.raises(CPCheckError) as err:
        check_cond3_lattice(_kraus_two_level(PARAMS), TimeGrid(step=0.1, count=10))
    assert err.value.code == "CP_NOT_LATTICE"
    report = check_cp(_kraus_two_level(PARAMS), TimeGrid(step=0.1, count=10))
    assert report.cond3 is None


def test_negative_memory_is_flagged() -> None:
    mixture = WaitingTimeMemory(waiting_time=MultiExponential(weights=[0.5, 0.5], rates=[1.0, 3.0]))
    spec = QuantumKernelSpec(dimension=2, memories=[mixture, mixture], pi=FLIP)
    report = check_cp(spec, TimeGrid.from_horizon(1e-2, 5.0))
    assert not report.kernel_nonnegative
    assert "KERNEL_NEGATIVE" in report.cond1.warnings
    assert "KERNEL_NEGATIVE" in report.warnings


def test_density_matrix_validation() -> None:
    with pytest.raises(ConfigError) as err:
        density_matrix([[1.0, 0.0], [0.0, 1.0]])
    assert err.value.code == "CONFIG_DENSITY_MATRIX"
    with pytest.raises(ConfigError):
        density_matrix([[0.5, 0.6], [0.6, 0.5]])
