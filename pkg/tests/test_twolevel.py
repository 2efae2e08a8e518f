from __future__ import annotations

import math

import numpy as np
import pytest

from qsmp.core.errors import WaitingTimeError
from qsmp.core.models import GeneralizedErlang, SpecialErlang, TwoLevelParams
from qsmp.core.special import cosh_even, sinhc_even
from qsmp.core.twolevel import (
    T_diag,
    as_waiting_time,
    boundary_ratio_estimate,
    cp_boundary_ratio,
    delta,
    delta_rescaled,
    erlang_rates,
    f_pm,
    fit_leading_coefficients,
    g_entries,
    scan_ratio_slice,
    scan_region,
    sufficiency_scan,
    taylor_coefficients,
    telegraph_residual,
    temperature_threshold,
    two_level_spec,
)
from qsmp.core.waiting_time import eval_f

PARAMS = TwoLevelParams(gamma=1.0, kappa_plus=0.1875, kappa_minus=0.12)


def test_even_forms_cross_series_cutoff_smoothly() -> None:
    x2 = np.array([0.99e-4, 1.01e-4, 0.5, 4.0])
    np.testing.assert_allclose(cosh_even(x2), np.cosh(np.sqrt(x2)), rtol=1e-15)
    np.testing.assert_allclose(sinhc_even(x2), np.sinh(np.sqrt(x2)) / np.sqrt(x2), rtol=1e-15)
    assert cosh_even(-math.pi**2) == pytest.approx(-1.0)
    assert sinhc_even(-math.pi**2) == pytest.approx(0.0, abs=1e-15)
    assert sinhc_even(0.0) == 1.0


def test_density_example_value() -> None:
    assert f_pm(PARAMS, "+", 1.0) == pytest.approx(0.75 * math.exp(-0.5) * math.sinh(0.25), rel=1e-12)
    assert f_pm(PARAMS, "+", 1.0) == pytest.approx(0.1149, abs=1e-4)
    assert f_pm(PARAMS, "-", 0.0) == 0.0


def test_density_is_generalized_erlang() -> None:
    assert erlang_rates(PARAMS, "+") == pytest.approx((0.75, 0.25))
    w = as_waiting_time(PARAMS, "+")
    assert isinstance(w, GeneralizedErlang)
    tau = np.linspace(0.0, 20.0, 41)
    np.testing.assert_allclose(eval_f(w, tau), f_pm(PARAMS, "+", tau), atol=1e-12)


def test_confluent_density_is_special_erlang() -> None:
    params = TwoLevelParams(gamma=1.0, kappa_plus=0.25, kappa_minus=0.0)
    w = as_waiting_time(params, "+")
    assert w == SpecialErlang(rate=0.5, order=2)
    tau = np.linspace(0.0, 20.0, 41)
    np.testing.assert_allclose(f_pm(params, "+", tau), 0.25 * tau * np.exp(-tau / 2), atol=1e-15)
    np.testing.assert_allclose(eval_f(w, tau), f_pm(params, "+", tau), atol=1e-12)


def test_non_classical_parameters_stay_real() -> None:
    params = TwoLevelParams(gamma=1.0, kappa_plus=0.3, kappa_minus=0.05)
    assert not params.is_classical
    tau = np.linspace(0.0, 30.0, 301)
    assert np.all(np.isfinite(f_pm(params, "+", tau)))
    assert np.all(np.isfinite(T_diag(params, "+", tau)))
    with pytest.raises(WaitingTimeError) as err:
        as_waiting_time(params, "+")
    assert err.value.code == "WAITING_TIME_NOT_CLASSICAL"


def test_populations_limits() -> None:
    assert T_diag(PARAMS, "+", 0.0) == pytest.approx(1.0)
    assert T_diag(PARAMS, "-", 0.0) == pytest.approx(1.0)
    total = PARAMS.kappa_plus + PARAMS.kappa_minus
    assert T_diag(PARAMS, "+", 200.0) == pytest.approx(PARAMS.kappa_minus / total, abs=1e-12)
    assert T_diag(PARAMS, "-", 200.0) == pytest.approx(PARAMS.kappa_plus / total, abs=1e-12)


def test_populations_one_way_and_frozen() -> None:
    t = np.linspace(0.0, 10.0, 101)
    one_way = TwoLevelParams(gamma=1.0, kappa_plus=0.2, kappa_minus=0.0)
    np.testing.assert_allclose(T_diag(one_way, "+", t), g_entries(one_way, "++", t))
    np.testing.assert_allclose(T_diag(one_way, "-", t), 1.0)
    frozen = TwoLevelParams(gamma=1.0, kappa_plus=0.0, kappa_minus=0.0)
    np.testing.assert_allclose(T_diag(frozen, "+", t), 1.0)


def test_survival_derivative_is_density() -> None:
    t = np.linspace(0.5, 10.0, 20)
    h = 1e-4
    derivative = (g_entries(PARAMS, "++", t + h) - g_entries(PARAMS, "++", t - h)) / (2 * h)
    np.testing.assert_allclose(-derivative, f_pm(PARAMS, "+", t), atol=1e-7)


def test_confluent_coherence() -> None:
    params = TwoLevelParams(gamma=1.0, kappa_plus=0.25, kappa_minus=0.25)
    t = np.linspace(0.0, 10.0, 51)
    np.testing.assert_allclose(g_entries(params, "+-", t), np.exp(-t / 2) * (1 + t / 2), atol=1e-14)
    assert g_entries(params, "-+", 0.0) == pytest.approx(1.0)


def test_populations_solve_telegraph_equation() -> None:
    t = np.linspace(0.0, 20.0, 20001)
    assert telegraph_residual(PARAMS, t) <= 1e-3


def test_two_level_spec_layout() -> None:
    spec = two_level_spec(PARAMS)
    assert spec.is_lattice
    assert spec.level_labels() == ["p", "m"]
    assert spec.memories[0].amplitude == PARAMS.kappa_plus


def test_delta_vanishes_at_start_and_degenerate_point() -> None:
    assert delta(PARAMS, 0.0) == pytest.approx(0.0, abs=1e-15)
    taus = np.linspace(0.0, 10.0, 11)
    np.testing.assert_allclose(delta_rescaled(0.0, 0.0, taus), 0.0, atol=1e-13)


def test_quartic_law_coefficients() -> None:
    exact = taylor_coefficients(1.0, 0.0)
    assert exact[2] == exact[3] == 0.0
    assert exact[4] == pytest.approx(-1 / 384)
    fitted = fit_leading_coefficients(1.0, 0.0)
    assert fitted[4] == pytest.approx(-1 / 384, rel=1e-3)
    assert fitted[5] == pytest.approx(exact[5], rel=1e-2)
    assert abs(fitted[3]) < 1e-6


def test_quartic_law_on_random_points() -> None:
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 10:
        rp, rm = rng.uniform(0.0, 1.0, 2)
        exact = taylor_coefficients(rp, rm)[4]
        if abs(exact) < 0.05 / 384:
            continue
        checked += 1
        assert fit_leading_coefficients(rp, rm)[4] == pytest.approx(exact, rel=1e-2)


def test_boundary_ratio_and_temperature() -> None:
    upper, lower = cp_boundary_ratio(), cp_boundary_ratio(conjugate=True)
    assert upper == pytest.approx(3.7320508, abs=1e-7)
    assert upper * lower == pytest.approx(1.0)
    assert upper**2 - 4 * upper + 1 == pytest.approx(0.0, abs=1e-12)
    threshold = temperature_threshold()
    assert threshold.beta_hbar_omega == pytest.approx(1.3169579, abs=1e-7)
    assert threshold.kt_over_hbar_omega == pytest.approx(0.7593, abs=1e-4)


def test_region_scan_signs() -> None:
    scan = scan_region(0.01, resolution=201)
    r = scan.r_values
    assert r[20] == pytest.approx(0.1)
    assert scan.sign[20, 200] == -1
    assert scan.sign[100, 100] == 1
    assert np.all(np.diag(scan.sign) >= 0)
    assert scan.degenerate[0, 0] and scan.sign[0, 0] == 0


def test_region_scan_locates_boundary_ratio() -> None:
    scan = scan_region(0.01, resolution=200, threads=2)
    assert boundary_ratio_estimate(scan) == pytest.approx(cp_boundary_ratio(), abs=0.05)


def test_minimal_region_scan() -> None:
    scan = scan_region(0.01, resolution=2)
    assert scan.delta.shape == (2, 2)
    assert scan.degenerate.sum() == 1


def test_ratio_slice_shape() -> None:
    ratio_slice = scan_ratio_slice(r_minus=0.2, ratio_points=10, tau_max=30.0, tau_points=31)
    assert ratio_slice.delta.shape == (10, 31)
    assert ratio_slice.ratios[-1] == pytest.approx(cp_boundary_ratio())
    np.testing.assert_allclose(ratio_slice.delta[:, 0], 0.0, atol=1e-14)


def test_sufficiency_scan_reports() -> None:
    finding = sufficiency_scan(resolution=21, tau_max=10.0, tau_points=50, limit=5)
    assert finding.cells_checked > 0
    assert len(finding.counterexamples) <= 5
    for sample in finding.counterexamples:
        assert sample["delta"] < 0
