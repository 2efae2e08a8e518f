from __future__ import annotations

import logging
import math

import numpy as np
from scipy import optimize, special, stats

from .errors import WaitingTimeError
from .models import (
    Exponential,
    GeneralizedErlang,
    MemoryFunction,
    MultiExponential,
    SampledFunction,
    SpecialErlang,
    TimeGrid,
)
from .special import sinhc_even
from .volterra import invert_memory

logger = logging.getLogger(__name__)

NO_CLOSED_FORM = "WAITING_TIME_NO_CLOSED_FORM"


def _times(tau) -> np.ndarray:
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0):
        raise WaitingTimeError("WAITING_TIME_NEGATIVE_TIME", f"waiting time evaluated at negative time {np.min(t)}")
    return t


def _shaped(tau, out: np.ndarray):
    return float(out) if np.ndim(tau) == 0 else out


def _erlang_coefficients(rates: list[float]) -> np.ndarray:
    # c_i = prod_{j != i} λ_j / (λ_j - λ_i)
    lam = np.asarray(rates, dtype=float)
    gaps = lam[None, :] - lam[:, None]
    np.fill_diagonal(gaps, 1.0)
    ratios = lam[None, :] / gaps
    np.fill_diagonal(ratios, 1.0)
    return ratios.prod(axis=1)


def eval_f(w, tau):
    t = _times(tau)
    match w:
        case Exponential(rate=rate):
            out = stats.expon.pdf(t, scale=1 / rate)
        case SpecialErlang(rate=rate, order=order):
            out = stats.gamma.pdf(t, order, scale=1 / rate)
        case GeneralizedErlang(rates=rates):
            lam = np.asarray(rates)
            out = np.tensordot(_erlang_coefficients(rates) * lam, np.exp(-np.multiply.outer(lam, t)), axes=1)
        case MultiExponential(weights=weights, rates=rates):
            lam = np.asarray(rates)
            out = np.tensordot(np.asarray(weights) * lam, np.exp(-np.multiply.outer(lam, t)), axes=1)
        case _:
            raise WaitingTimeError("WAITING_TIME_UNKNOWN_KIND", f"unknown waiting time {w!r}")
    return _shaped(tau, np.asarray(out, dtype=float))


def eval_g(w, tau):
    t = _times(tau)
    match w:
        case Exponential(rate=rate):
            out = np.exp(-rate * t)
        case SpecialErlang(rate=rate, order=order):
            out = special.gammaincc(order, rate * t)
        case GeneralizedErlang(rates=rates):
            lam = np.asarray(rates)
            out = np.tensordot(_erlang_coefficients(rates), np.exp(-np.multiply.outer(lam, t)), axes=1)
        case MultiExponential(weights=weights, rates=rates):
            lam = np.asarray(rates)
            out = np.tensordot(np.asarray(weights), np.exp(-np.multiply.outer(lam, t)), axes=1)
        case _:
            raise WaitingTimeError("WAITING_TIME_UNKNOWN_KIND", f"unknown waiting time {w!r}")
    return _shaped(tau, np.clip(np.asarray(out, dtype=float), 0.0, 1.0))


def memory_function(w) -> MemoryFunction:
    """Closed-form memory function k with (k ∗ g) = f.

    Available for exponential, Erlang chains of up to three stages and two-term
    mixtures; other kinds raise WAITING_TIME_NO_CLOSED_FORM.
    """
    match w:
        case Exponential(rate=rate):
            return MemoryFunction(delta_weight=rate, label="exponential")
        case SpecialErlang(rate=rate, order=1):
            return MemoryFunction(delta_weight=rate, label="special_erlang")
        case SpecialErlang(rate=lam, order=2):
            return MemoryFunction(regular=lambda t: lam**2 * np.exp(-2 * lam * t), label="special_erlang")
        case SpecialErlang(rate=lam, order=3):
            amp = 2 * lam**2 / math.sqrt(3)
            return MemoryFunction(
                regular=lambda t: amp * np.sin(math.sqrt(3) * lam * t / 2) * np.exp(-1.5 * lam * t),
                label="special_erlang",
            )
        case GeneralizedErlang(rates=[lam]):
            return MemoryFunction(delta_weight=lam, label="generalized_erlang")
        case GeneralizedErlang(rates=[l1, l2]):
            return MemoryFunction(regular=lambda t: l1 * l2 * np.exp(-(l1 + l2) * t), label="generalized_erlang")
        case GeneralizedErlang(rates=[l1, l2, l3]):
            prod = l1 * l2 * l3
            s1 = l1 + l2 + l3
            disc = s1**2 - 4 * (l1 * l2 + l1 * l3 + l2 * l3)
            return MemoryFunction(
                regular=lambda t: prod * t * np.exp(-s1 * t / 2) * sinhc_even(disc * t**2 / 4),
                label="generalized_erlang",
            )
        case MultiExponential(weights=[p], rates=[lam]):
            return MemoryFunction(delta_weight=lam, label="multi_exponential")
        case MultiExponential(weights=[p, q], rates=[l1, l2]):
            mean_rate = p * l1 + q * l2
            spread = p * q * (l1 - l2) ** 2
            decay = q * l1 + p * l2
            regular = None if spread == 0 else (lambda t: -spread * np.exp(-decay * t))
            return MemoryFunction(delta_weight=mean_rate, regular=regular, label="multi_exponential")
    raise WaitingTimeError(NO_CLOSED_FORM, f"no closed form for {w.kind}; use volterra.invert_memory")


def sampled_memory(w, grid: TimeGrid, detect: float = 1e-8) -> SampledFunction:
    try:
        return memory_function(w).sample(grid)
    except WaitingTimeError as exc:
        if exc.code != NO_CLOSED_FORM:
            raise
    logger.info("inverting memory function of %s numerically on %d points", w.kind, grid.count + 1)
    times = grid.times()
    f = SampledFunction(grid=grid, values=eval_f(w, times))
    g = SampledFunction(grid=grid, values=eval_g(w, times))
    return invert_memory(f, g, detect)


def laplace_f(w, u: float) -> float:
    match w:
        case Exponential(rate=rate):
            return rate / (u + rate)
        case SpecialErlang(rate=rate, order=order):
            return (rate / (u + rate)) ** order
        case GeneralizedErlang(rates=rates):
            return float(np.prod([lam / (u + lam) for lam in rates]))
        case MultiExponential(weights=weights, rates=rates):
            return float(sum(p * lam / (u + lam) for p, lam in zip(weights, rates)))
    raise WaitingTimeError("WAITING_TIME_UNKNOWN_KIND", f"unknown waiting time {w!r}")


def laplace_memory(w, u: float) -> float:
    fhat = laplace_f(w, u)
    return u * fhat / (1 - fhat)


def mean_waiting_time(w) -> float:
    match w:
        case Exponential(rate=rate):
            return 1 / rate
        case SpecialErlang(rate=rate, order=order):
            return order / rate
        case GeneralizedErlang(rates=rates):
            return float(sum(1 / lam for lam in rates))
        case MultiExponential(weights=weights, rates=rates):
            return float(sum(p / lam for p, lam in zip(weights, rates)))
    raise WaitingTimeError("WAITING_TIME_UNKNOWN_KIND", f"unknown waiting time {w!r}")


def truncation_horizon(w, eps: float = 1e-8) -> float:
    """Smallest T (to root-finding precision) with g(T) = eps."""
    hi = mean_waiting_time(w)
    while eval_g(w, hi) >= eps:
        hi *= 2
    return float(optimize.brentq(lambda t: eval_g(w, t) - eps, 0.0, hi, xtol=1e-12))


def memoryless_defect(w, times) -> float:
    t = _times(times)
    joint = eval_g(w, np.add.outer(t, t))
    product = np.multiply.outer(eval_g(w, t), eval_g(w, t))
    return float(np.max(np.abs(joint - product)))


def sample_sojourns(w, rng: np.random.Generator, size: int) -> np.ndarray:
    match w:
        case Exponential(rate=rate):
            return rng.exponential(1 / rate, size)
        case SpecialErlang(rate=rate, order=order):
            return rng.exponential(1 / rate, (order, size)).sum(axis=0)
        case GeneralizedErlang(rates=rates):
            return sum(rng.exponential(1 / lam, size) for lam in rates)
        case MultiExponential(weights=weights, rates=rates):
            branch = rng.choice(len(weights), size=size, p=weights)
            return rng.exponential(1 / np.asarray(rates)[branch])
    raise WaitingTimeError("WAITING_TIME_UNSAMPLABLE", f"cannot sample waiting time {w!r}")
