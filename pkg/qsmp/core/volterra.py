"""Convolution-type Volterra machinery on a uniform grid.

Every kernel is k(t) = delta_weight·2δ(t) + regular(t); the δ part acts locally,
∫₀^t 2δ(s)x(t−s)ds = x(t).
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import fft, integrate, linalg

from .errors import SolverError
from .models import LaplaceEstimate, SampledFunction, TimeGrid

logger = logging.getLogger(__name__)


def _same_grid(a: SampledFunction, b: SampledFunction) -> TimeGrid:
    if a.grid != b.grid:
        raise SolverError("SOLVER_GRID_MISMATCH", f"grids differ: {a.grid} vs {b.grid}")
    return a.grid


def _times_product(a: np.ndarray, b: np.ndarray, matrix: bool) -> np.ndarray:
    if matrix:
        if b.ndim == a.ndim - 1:
            return np.matmul(a, b[..., None])[..., 0]
        return np.matmul(a, b)
    pad_a = b.ndim - a.ndim
    if pad_a > 0:
        a = a.reshape(a.shape + (1,) * pad_a)
    elif pad_a < 0:
        b = b.reshape(b.shape + (1,) * -pad_a)
    return a * b


def convolve(a: SampledFunction, b: SampledFunction) -> SampledFunction:
    """Trapezoidal (a ∗ b)(t_i) = h Σ' a(t_j) b(t_{i−j}) plus the δ contributions.

    Matrix-valued a multiplies b from the left; scalar a scales b entrywise.
    """
    grid = _same_grid(a, b)
    h, n = grid.step, grid.count + 1
    matrix = len(a.shape) == 2 and len(b.shape) >= 1
    av, bv = a.values, b.values
    real = not (np.iscomplexobj(av) or np.iscomplexobj(bv))

    size = fft.next_fast_len(2 * n - 1)
    if real:
        spectrum = _times_product(fft.rfft(av, n=size, axis=0), fft.rfft(bv, n=size, axis=0), matrix)
        full = fft.irfft(spectrum, n=size, axis=0)[:n]
    else:
        spectrum = _times_product(fft.fft(av, n=size, axis=0), fft.fft(bv, n=size, axis=0), matrix)
        full = fft.ifft(spectrum, axis=0)[:n]

    ends = _times_product(av[:1], bv, matrix) + _times_product(av, bv[:1], matrix)
    values = h * (full - 0.5 * ends)
    values[0] = 0.0

    if a.has_delta:
        values = values + _times_product(np.broadcast_to(a.delta, (n,) + a.shape), bv, matrix)
    if b.has_delta:
        values = values + _times_product(av, np.broadcast_to(b.delta, (n,) + b.shape), matrix)
    delta = _times_product(a.delta[None], b.delta[None], matrix)[0]
    return SampledFunction(grid=grid, values=values, delta_weight=delta)


def _solve_matrix(k: np.ndarray, kd: np.ndarray, x0: np.ndarray, h: float) -> np.ndarray:
    n = k.shape[0] - 1
    dim, cols = x0.shape
    x = np.empty((n + 1, dim, cols), dtype=x0.dtype)
    x[0] = x0
    prop = linalg.expm(h * kd) if np.any(kd) else np.eye(dim, dtype=x0.dtype)
    if not np.any(k):
        for i in range(n):
            x[i + 1] = prop @ x[i]
        return x

    # krev[:, n - m, :] = K(t_m), so a contiguous slice pairs with x[0..i]
    krev = np.ascontiguousarray(k[::-1].transpose(1, 0, 2))
    half_k0 = 0.5 * h * k[0]
    mem = np.zeros((dim, cols), dtype=x0.dtype)
    for i in range(n):
        hist = krev[:, n - i - 1 : n, :].reshape(dim, (i + 1) * dim) @ x[: i + 1].reshape((i + 1) * dim, cols)
        base = h * (hist - 0.5 * (k[i + 1] @ x0))
        pred = prop @ (x[i] + h * mem)
        x[i + 1] = prop @ (x[i] + 0.5 * h * mem) + 0.5 * h * (base + half_k0 @ pred)
        mem = base + half_k0 @ x[i + 1]
    return x


def _solve_elementwise(k: np.ndarray, kd: np.ndarray, x0: np.ndarray, h: float) -> np.ndarray:
    n = k.shape[0] - 1
    x = np.empty((n + 1,) + x0.shape, dtype=x0.dtype)
    x[0] = x0
    prop = np.exp(h * kd)
    if not np.any(k):
        for i in range(n):
            x[i + 1] = prop * x[i]
        return x

    krev = np.ascontiguousarray(k[::-1])
    half_k0 = 0.5 * h * k[0]
    mem = np.zeros_like(x0)
    for i in range(n):
        hist = np.einsum("mp,mp->p", krev[n - i - 1 : n], x[: i + 1])
        base = h * (hist - 0.5 * k[i + 1] * x0)
        pred = prop * (x[i] + h * mem)
        x[i + 1] = prop * (x[i] + 0.5 * h * mem) + 0.5 * h * (base + half_k0 * pred)
        mem = base + half_k0 * x[i + 1]
    return x


def solve_volterra_ide(kernel: SampledFunction, x0, elementwise: bool = False) -> SampledFunction:
    """Solve ẋ(t) = ∫₀^t K(τ)x(t−τ)dτ with x(0) = x0.

    Matrix mode needs a square kernel (D×D samples) and x0 of shape (D,) or (D, C).
    Elementwise mode treats each component of x0 as an independent scalar equation
    with its own kernel entry.

    Heun scheme in integrating-factor form: the δ part is propagated exactly by
    exp(h·K_δ), the memory integral by the trapezoid, one Euler predictor and one
    trapezoidal corrector per step.
    """
    grid = kernel.grid
    h, n = grid.step, grid.count
    x0 = np.asarray(x0)
    values = kernel.values
    dtype = np.result_type(values.dtype, kernel.delta_weight.dtype, x0.dtype, np.float64)

    if elementwise:
        if kernel.shape not in ((), x0.shape):
            raise SolverError("SOLVER_SHAPE_MISMATCH", f"kernel entries {kernel.shape} do not match x0 {x0.shape}")
        shape = x0.shape
        k = np.broadcast_to(values.reshape((n + 1,) + kernel.shape + (1,) * (x0.ndim - len(kernel.shape))), (n + 1,) + shape)
        kd = np.broadcast_to(kernel.delta_weight, shape)
        logger.info("elementwise Volterra solve: %d steps, %d components", n, max(1, x0.size))
        x = _solve_elementwise(
            k.reshape(n + 1, -1).astype(dtype), kd.reshape(-1).astype(dtype), x0.reshape(-1).astype(dtype), h
        )
        return SampledFunction(grid=grid, values=x.reshape((n + 1,) + shape))

    if values.ndim != 3 or values.shape[1] != values.shape[2]:
        raise SolverError("SOLVER_NON_SQUARE_KERNEL", f"kernel samples must be square matrices, got {values.shape[1:]}")
    dim = values.shape[1]
    if x0.ndim not in (1, 2) or x0.shape[0] != dim:
        raise SolverError("SOLVER_SHAPE_MISMATCH", f"x0 of shape {x0.shape} does not fit a {dim}x{dim} kernel")
    logger.info("matrix Volterra solve: %d steps, dimension %d", n, dim)
    x = _solve_matrix(
        values.astype(dtype), kernel.delta.astype(dtype), x0.reshape(dim, -1).astype(dtype), h
    )
    return SampledFunction(grid=grid, values=x.reshape((n + 1,) + x0.shape))


def invert_memory(f: SampledFunction, g: SampledFunction, detect: float = 1e-8) -> SampledFunction:
    """Solve f = k ∗ g for k by forward substitution on the trapezoidal system."""
    grid = _same_grid(f, g)
    h, n = grid.step, grid.count
    fv = np.asarray(f.values, dtype=float)
    gv = np.asarray(g.values, dtype=float)
    if gv[0] == 0:
        raise SolverError("SOLVER_SURVIVAL_ZERO", "g(0) = 0: memory function is undefined")

    warnings: list[str] = []
    pivot = 0.5 * h * gv[0]
    if abs(pivot) < np.finfo(float).eps:
        warnings.append("INVERSION_ILL_CONDITIONED")
        logger.warning("memory inversion pivot h*g(0)/2 = %g underflows", pivot)

    weight = fv[0] / gv[0] if fv[0] > detect else 0.0
    r = fv - weight * gv
    k = np.zeros(n + 1)
    # r'(0) = k(0) g(0)
    if n >= 3:
        slope = (-11 * r[0] + 18 * r[1] - 9 * r[2] + 2 * r[3]) / (6 * h)
    else:
        slope = (r[1] - r[0]) / h
    k[0] = slope / gv[0]

    grev = gv[::-1].copy()
    for i in range(1, n + 1):
        inner = np.dot(k[1:i], grev[n - i + 1 : n])
        k[i] = (r[i] / h - 0.5 * k[0] * gv[i] - inner) / (0.5 * gv[0])
    return SampledFunction(grid=grid, values=k, delta_weight=weight, warnings=warnings)


def laplace_probe(x: SampledFunction, u: float, tail: float = 1e-10) -> LaplaceEstimate:
    if u <= 0:
        raise SolverError("SOLVER_LAPLACE_ARGUMENT", f"Laplace argument must be positive, got {u}")
    if x.shape:
        raise SolverError("SOLVER_SHAPE_MISMATCH", "laplace_probe takes a scalar sampled function")
    times = x.grid.times()
    value = integrate.trapezoid(x.values * np.exp(-u * times), dx=x.grid.step) + complex(x.delta_weight)
    truncated = bool(np.exp(-u * x.grid.horizon) >= tail)
    warnings = []
    if truncated:
        warnings.append("LAPLACE_TRUNCATED")
        logger.warning("Laplace probe at u=%g truncated: horizon %g too short", u, x.grid.horizon)
    value = complex(value)
    return LaplaceEstimate(real=value.real, imag=value.imag, truncated=truncated, warnings=warnings)
