from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from qsmp.core.errors import WaitingTimeError
from qsmp.core.models import (
    Exponential,
    GeneralizedErlang,
    MultiExponential,
    SampledFunction,
    SpecialErlang,
    TimeGrid,
)
from qsmp.core.volterra import convolve, invert_memory
from qsmp.core.waiting_time import (
    NO_CLOSED_FORM,
    eval_f,
    eval_g,
    laplace_f,
    laplace_memory,
    mean_waiting_time,
    memory_function,
    memoryless_defect,
    sample_sojourns,
    sampled_memory,
    truncation_horizon,
)

KINDS = [
    Exponential(rate=2.0),
    SpecialErlang(rate=1.0, order=2),
    SpecialErlang(rate=1.5, order=3),
    GeneralizedErlang(rates=[1.0, 2.0]),
    GeneralizedErlang(rates=[0.5, 1.0, 2.5]),
    MultiExponential(weights=[0.5, 0.5], rates=[1.0, 3.0]),
]


def test_eval_f_closed_forms() -> None:
    assert eval_f(Exponential(rate=2.0), 1.0) == pytest.approx(2 * math.exp(-2))
    assert eval_f(SpecialErlang(rate=1.0, order=2), 1.0) == pytest.approx(math.exp(-1))
    assert eval_f(GeneralizedErlang(rates=[1.0, 2.0]), 0.0) == pytest.approx(0.0, abs=1e-15)


def test_eval_g_closed_forms() -> None:
    assert eval_g(Exponential(rate=2.0), 1.0) == pytest.approx(math.exp(-2))
    assert eval_g(SpecialErlang(rate=1.0, order=2), 1.0) == pytest.approx(2 * math.exp(-1))
    for w in KINDS:
        assert eval_g(w, 0.0) == pytest.approx(1.0)


def test_negative_time_is_rejected() -> None:
    with pytest.raises(WaitingTimeError) as err:
        eval_f(Exponential(rate=1.0), -0.1)
    assert err.value.code == "WAITING_TIME_NEGATIVE_TIME"


def test_survival_is_one_minus_integrated_density() -> None:
    t = np.linspace(0.0, 10.0, 10001)
    for w in KINDS:
        f = eval_f(w, t)
        cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])
        np.testing.assert_allclose(eval_g(w, t), 1 - cumulative, atol=1e-6)
        assert np.all(np.diff(eval_g(w, t)) <= 1e-12)


def test_normalization_remainder_bounded_by_survival() -> None:
    for w in KINDS:
        horizon = truncation_horizon(w)
        assert eval_g(w, horizon) == pytest.approx(1e-8, rel=1e-6)
        t = np.linspace(0.0, horizon, 200001)
        mass = integrate.trapezoid(eval_f(w, t), t)
        assert abs(1 - mass) <= eval_g(w, horizon) + 1e-6


def test_memory_function_examples() -> None:
    exponential = memory_function(Exponential(rate=2.0))
    assert exponential.delta_weight == 2.0
    assert exponential.is_markovian

    erlang3 = memory_function(SpecialErlang(rate=1.0, order=3))
    first_zero = 2 * math.pi / math.sqrt(3)
    assert first_zero == pytest.approx(3.6276, abs=1e-4)
    assert erlang3(3.6) > 0
    assert erlang3(3.65) < 0

    mixture = memory_function(MultiExponential(weights=[0.5, 0.5], rates=[1.0, 3.0]))
    assert mixture.delta_weight == pytest.approx(2.0)
    assert mixture(0.0) == pytest.approx(-1.0)

    pair = memory_function(GeneralizedErlang(rates=[1.0, 2.0]))
    t = np.linspace(0.0, 5.0, 11)
    np.testing.assert_allclose(pair(t), 2 * np.exp(-3 * t))


def test_memory_function_without_closed_form() -> None:
    with pytest.raises(WaitingTimeError) as err:
        memory_function(SpecialErlang(rate=1.0, order=4))
    assert err.value.code == NO_CLOSED_FORM
    with pytest.raises(WaitingTimeError):
        memory_function(MultiExponential(weights=[0.2, 0.3, 0.5], rates=[1.0, 2.0, 3.0]))


def test_closed_form_memory_reproduces_density() -> None:
    grid = TimeGrid.from_horizon(1e-3, 10.0)
    t = grid.times()
    for w in KINDS:
        k = memory_function(w).sample(grid)
        g = SampledFunction(grid=grid, values=eval_g(w, t))
        np.testing.assert_allclose(convolve(k, g).values, eval_f(w, t), atol=1e-6)


def test_erlang_three_memory_at_other_rate_matches_inversion() -> None:
    grid = TimeGrid.from_horizon(1e-3, 10.0)
    t = grid.times()
    w = SpecialErlang(rate=2.0, order=3)
    k = invert_memory(SampledFunction(grid=grid, values=eval_f(w, t)), SampledFunction(grid=grid, values=eval_g(w, t)))
    np.testing.assert_allclose(k.values, memory_function(w)(t), atol=1e-4)


def test_sign_witnesses() -> None:
    t = np.linspace(0.0, 20.0, 20001)
    for w in [SpecialErlang(rate=1.0, order=1), SpecialErlang(rate=1.0, order=2), GeneralizedErlang(rates=[1.0, 2.0])]:
        assert np.all(memory_function(w)(t) >= 0)
    for w in [SpecialErlang(rate=1.0, order=3), MultiExponential(weights=[0.3, 0.7], rates=[1.0, 4.0])]:
        assert np.any(memory_function(w)(t) < 0)


def test_memoryless_only_for_exponential() -> None:
    t = np.linspace(0.0, 5.0, 51)
    assert memoryless_defect(Exponential(rate=1.3), t) < 1e-12
    for w in KINDS[1:]:
        assert memoryless_defect(w, t) > 1e-6


def test_laplace_closed_forms() -> None:
    assert laplace_f(SpecialErlang(rate=1.0, order=3), 2.0) == pytest.approx(1 / 27)
    assert laplace_memory(Exponential(rate=1.7), 3.0) == pytest.approx(1.7)
    assert mean_waiting_time(GeneralizedErlang(rates=[1.0, 2.0])) == pytest.approx(1.5)


def test_sampled_memory_falls_back_to_inversion() -> None:
    grid = TimeGrid.from_horizon(1e-2, 20.0)
    t = grid.times()
    w = SpecialErlang(rate=1.0, order=4)
    k = sampled_memory(w, grid)
    g = SampledFunction(grid=grid, values=eval_g(w, t))
    np.testing.assert_allclose(convolve(k, g).values, eval_f(w, t), atol=1e-10)


def test_sampled_memory_detect_threshold_controls_delta() -> None:
    grid = TimeGrid.from_horizon(1e-2, 5.0)
    w = MultiExponential(weights=[0.2, 0.3, 0.5], rates=[1.0, 2.0, 4.0])
    assert float(sampled_memory(w, grid).delta_weight) == pytest.approx(2.8)
    assert float(sampled_memory(w, grid, detect=5.0).delta_weight) == 0.0


def test_sample_sojourns_mean() -> None:
    rng = np.random.default_rng(7)
    for w in KINDS:
        draws = sample_sojourns(w, rng, 100000)
        assert draws.shape == (100000,)
        assert np.all(draws >= 0)
        assert draws.mean() == pytest.approx(mean_waiting_time(w), rel=0.02)
