from __future__ import annotations

from typing import Annotated, Any, Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class _Arrays(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# --- grids and sampled functions -------------------------------------------------


class TimeGrid(_Document):
    step: float = Field(gt=0)
    count: int = Field(ge=1)

    @classmethod
    def from_horizon(cls, step: float, horizon: float) -> TimeGrid:
        return cls(step=step, count=max(1, int(round(horizon / step))))

    @property
    def horizon(self) -> float:
        return self.step * self.count

    def times(self) -> np.ndarray:
        return np.arange(self.count + 1) * self.step


class SampledFunction(_Arrays):
    """Samples x(t_i) on a grid, optionally with a 2δ(t) component of weight delta_weight.

    values has shape (N+1, *shape); delta_weight broadcasts to shape.
    """

    grid: TimeGrid
    values: np.ndarray
    delta_weight: np.ndarray = Field(default_factory=lambda: np.zeros(()))
    warnings: list[str] = Field(default_factory=list)

    @field_validator("values", "delta_weight", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return np.asarray(value)

    @model_validator(mode="after")
    def _check_length(self) -> SampledFunction:
        if self.values.ndim == 0 or self.values.shape[0] != self.grid.count + 1:
            raise ValueError(f"values length {self.values.shape[:1]} does not match grid count {self.grid.count + 1}")
        np.broadcast_to(self.delta_weight, self.shape)
        return self

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    @property
    def delta(self) -> np.ndarray:
        return np.broadcast_to(self.delta_weight, self.shape)

    @property
    def has_delta(self) -> bool:
        return bool(np.any(self.delta_weight != 0))


class MemoryFunction(_Arrays):
    """k(t) = delta_weight·2δ(t) + regular(t); regular=None means the regular part vanishes."""

    delta_weight: float = 0.0
    regular: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = ""

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.regular is None:
            return np.zeros_like(t)
        return np.asarray(self.regular(t), dtype=float)

    @property
    def is_markovian(self) -> bool:
        return self.regular is None

    def sample(self, grid: TimeGrid) -> SampledFunction:
        return SampledFunction(grid=grid, values=self(grid.times()), delta_weight=self.delta_weight)


class LaplaceEstimate(_Document):
    real: float
    imag: float = 0.0
    truncated: bool = False
    warnings: list[str] = Field(default_factory=list)

    @property
    def value(self) -> complex:
        return complex(self.real, self.imag)


# --- waiting times -------------------------------------------------------------


class Exponential(_Document):
    kind: Literal["exponential"] = "exponential"
    rate: float = Field(gt=0)


class SpecialErlang(_Document):
    kind: Literal["special_erlang"] = "special_erlang"
    rate: float = Field(gt=0)
    order: int = Field(ge=1)


class GeneralizedErlang(_Document):
    kind: Literal["generalized_erlang"] = "generalized_erlang"
    rates: list[float] = Field(min_length=1)

    @field_validator("rates")
    @classmethod
    def _distinct_positive(cls, rates: list[float]) -> list[float]:
        if any(rate <= 0 for rate in rates):
            raise ValueError("rates must be positive")
        ordered = sorted(rates)
        for low, high in zip(ordered, ordered[1:]):
            if high - low <= 1e-12 * high:
                raise ValueError(f"rates must be distinct, got {low} twice")
        return rates


class MultiExponential(_Document):
    kind: Literal["multi_exponential"] = "multi_exponential"
    weights: list[float] = Field(min_length=1)
    rates: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_mixture(self) -> MultiExponential:
        if len(self.weights) != len(self.rates):
            raise ValueError("weights and rates must have the same length")
        if any(p < 0 for p in self.weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)}")
        if any(rate <= 0 for rate in self.rates):
            raise ValueError("rates must be positive")
        return self


WaitingTime = Annotated[
    Exponential | SpecialErlang | GeneralizedErlang | MultiExponential,
    Field(discriminator="kind"),
]


# --- kernel function declarations ----------------------------------------------


class WaitingTimeMemory(_Document):
    kind: Literal["waiting_time"] = "waiting_time"
    waiting_time: WaitingTime


class ExponentialMemory(_Document):
    kind: Literal["exponential"] = "exponential"
    amplitude: float
    decay: float = Field(ge=0)


class DeltaMemory(_Document):
    kind: Literal["delta"] = "delta"
    weight: float


KernelFunctionSpec = Annotated[
    WaitingTimeMemory | ExponentialMemory | DeltaMemory,
    Field(discriminator="kind"),
]


# --- classical processes -------------------------------------------------------


def _square(matrix: list[list[float]], name: str) -> np.ndarray:
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty square matrix")
    return arr


class SemiMarkovSpec(_Document):
    """Factorized semi-Markov process q_mn(τ) = π_mn f_n(τ).

    A column of π that is entirely zero marks an absorbing state.
    """

    pi: list[list[float]]
    waiting_times: list[WaitingTime]
    labels: list[str] | None = None

    @model_validator(mode="after")
    def _check(self) -> SemiMarkovSpec:
        pi = _square(self.pi, "pi")
        if len(self.waiting_times) != pi.shape[0]:
            raise ValueError(f"expected {pi.shape[0]} waiting_times, got {len(self.waiting_times)}")
        if np.any(pi < 0):
            raise ValueError("pi entries must be non-negative")
        sums = pi.sum(axis=0)
        bad = [n for n, s in enumerate(sums) if abs(s - 1.0) > 1e-12 and s != 0.0]
        if bad:
            raise ValueError(f"pi columns {bad} must sum to 1")
        if self.labels is not None and len(self.labels) != pi.shape[0]:
            raise ValueError("labels must name every state")
        return self

    @property
    def states(self) -> int:
        return len(self.pi)

    @property
    def pi_matrix(self) -> np.ndarray:
        return np.asarray(self.pi, dtype=float)

    @property
    def absorbing(self) -> list[int]:
        return [n for n, s in enumerate(self.pi_matrix.sum(axis=0)) if s == 0.0]


class MarkovSpec(_Document):
    rates: list[list[float]]
    labels: list[str] | None = None

    @field_validator("rates")
    @classmethod
    def _non_negative(cls, rates: list[list[float]]) -> list[list[float]]:
        if np.any(_square(rates, "rates") < 0):
            raise ValueError("rates must be non-negative")
        return rates

    @property
    def states(self) -> int:
        return len(self.rates)

    @property
    def rate_matrix(self) -> np.ndarray:
        gamma = np.asarray(self.rates, dtype=float).copy()
        np.fill_diagonal(gamma, 0.0)
        return gamma

    @property
    def exit_rates(self) -> np.ndarray:
        return self.rate_matrix.sum(axis=0)


class PropagationResult(_Arrays):
    grid: TimeGrid
    T: np.ndarray
    P: np.ndarray | None = None
    conservation_drift: float = 0.0
    warnings: list[str] = Field(default_factory=list)


class TrajectoryEstimate(_Arrays):
    times: np.ndarray
    occupation: np.ndarray
    stderr: np.ndarray
    n_traj: int
    seed: int
    initial_state: int
    rng_algorithm: str = "PCG64"
    block_size: int
    blocks: int


# --- quantum kernels -----------------------------------------------------------


class ComplexMatrix(_Document):
    real: list[list[float]]
    imag: list[list[float]] | None = None

    @property
    def matrix(self) -> np.ndarray:
        op = np.asarray(self.real, dtype=complex)
        if self.imag is not None:
            op = op + 1j * np.asarray(self.imag, dtype=float)
        return op


class KrausOperator(ComplexMatrix):
    pass


class QuantumKernelSpec(_Document):
    """Kernel diagonal in a fixed basis: energies ε_n(τ), memory functions k_n(τ) and jumps.

    Jumps are given either as lattice probabilities pi (column-stochastic) or as
    Kraus operators per level with Σ_α K_α†K_α = |n⟩⟨n|.
    """

    dimension: int = Field(ge=1)
    memories: list[KernelFunctionSpec]
    energies: list[KernelFunctionSpec] | None = None
    pi: list[list[float]] | None = None
    kraus: list[list[KrausOperator]] | None = None
    labels: list[str] | None = None

    @model_validator(mode="after")
    def _check(self) -> QuantumKernelSpec:
        d = self.dimension
        if len(self.memories) != d:
            raise ValueError(f"expected {d} memories, got {len(self.memories)}")
        if self.energies is not None and len(self.energies) != d:
            raise ValueError(f"expected {d} energies, got {len(self.energies)}")
        for n, memory in enumerate(self.memories):
            if isinstance(memory, DeltaMemory) and memory.weight < 0:
                raise ValueError(f"memories[{n}] delta weight must be non-negative")
        if (self.pi is None) == (self.kraus is None):
            raise ValueError("exactly one of pi or kraus is required")
        if self.pi is not None:
            pi = _square(self.pi, "pi")
            if pi.shape[0] != d:
                raise ValueError(f"pi must be {d}x{d}")
            if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=0) - 1.0) > 1e-12):
                raise ValueError("pi must be column-stochastic")
        if self.kraus is not None:
            if len(self.kraus) != d:
                raise ValueError(f"expected Kraus operators for {d} levels")
            for n, ops in enumerate(self.kraus):
                total = np.zeros((d, d), dtype=complex)
                for op in ops:
                    mat = op.matrix
                    if mat.shape != (d, d):
                        raise ValueError(f"kraus[{n}] operators must be {d}x{d}")
                    total += mat.conj().T @ mat
                target = np.zeros((d, d))
                target[n, n] = 1.0
                if not np.allclose(total, target, atol=1e-10):
                    raise ValueError(f"kraus[{n}] must satisfy sum K^dag K = |{n}><{n}|")
        if self.labels is not None and len(self.labels) != d:
            raise ValueError("labels must name every level")
        return self

    @property
    def is_lattice(self) -> bool:
        return self.pi is not None

    @property
    def pi_matrix(self) -> np.ndarray:
        if self.pi is None:
            raise ValueError("kernel is not in lattice form")
        return np.asarray(self.pi, dtype=float)

    def level_labels(self) -> list[str]:
        return self.labels or [str(n) for n in range(self.dimension)]


class PropagatorGrid(_Arrays):
    """V(t_i) as d²×d² matrices in the row-major matrix-unit basis |n⟩⟨m| → n·d + m."""

    grid: TimeGrid
    dimension: int
    values: np.ndarray
    trace_drift: float = 0.0
    hermiticity_drift: float = 0.0
    order: int | None = None
    warnings: list[str] = Field(default_factory=list)


class ConditionReport(_Document):
    condition: str
    times: list[float] = Field(default_factory=list)
    min_eigenvalues: list[float] = Field(default_factory=list)
    first_violation: float | None = None
    verdict: Literal["holds", "violated"] = "holds"
    warnings: list[str] = Field(default_factory=list)


class CPReport(_Document):
    cond1: ConditionReport
    cond2: list[ConditionReport] = Field(default_factory=list)
    cond3: ConditionReport | None = None
    kernel_nonnegative: bool = True
    semigroup: bool = False
    sufficient: Literal["holds", "inconclusive"] = "inconclusive"
    warnings: list[str] = Field(default_factory=list)


# --- two-level analytics -------------------------------------------------------


class TwoLevelParams(_Document):
    gamma: float = Field(gt=0)
    kappa_plus: float = Field(ge=0)
    kappa_minus: float = Field(ge=0)

    @property
    def r_plus(self) -> float:
        return 4 * self.kappa_plus / self.gamma**2

    @property
    def r_minus(self) -> float:
        return 4 * self.kappa_minus / self.gamma**2

    @property
    def d2_plus(self) -> float:
        return self.gamma**2 - 4 * self.kappa_plus

    @property
    def d2_minus(self) -> float:
        return self.gamma**2 - 4 * self.kappa_minus

    @property
    def d2(self) -> float:
        return self.gamma**2 - 4 * (self.kappa_plus + self.kappa_minus)

    @property
    def d2_bar(self) -> float:
        return self.gamma**2 - 2 * (self.kappa_plus + self.kappa_minus)

    @property
    def is_classical(self) -> bool:
        return self.gamma**2 / 4 >= max(self.kappa_plus, self.kappa_minus)


class TemperatureThreshold(_Document):
    beta_hbar_omega: float
    kt_over_hbar_omega: float


class RegionScan(_Arrays):
    """Δ(τ) on an (r₋, r₊) grid; axis 0 runs over r₋, axis 1 over r₊."""

    tau: float
    r_values: np.ndarray
    delta: np.ndarray
    sign: np.ndarray
    degenerate: np.ndarray


class RatioSlice(_Arrays):
    r_minus: float
    ratios: np.ndarray
    taus: np.ndarray
    delta: np.ndarray


class SufficiencyFinding(_Document):
    resolution: int
    tau_max: float
    cells_checked: int
    counterexamples: list[dict[str, float]] = Field(default_factory=list)


# --- validation, configs and runs ----------------------------------------------


class ValidationCheck(_Document):
    name: str
    tolerance: float
    measured: float
    passed: bool
    detail: str = ""


class ValidationReport(_Document):
    checks: list[ValidationCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> list[str]:
        return [check.name for check in self.checks if not check.passed]


class GridSpec(_Document):
    step: float = Field(default=1e-3, gt=0)
    horizon: float = Field(default=20.0, gt=0)

    def to_grid(self) -> TimeGrid:
        return TimeGrid.from_horizon(self.step, self.horizon)


class MarkovConfig(_Document):
    model: Literal["markov"] = "markov"
    grid: GridSpec = Field(default_factory=GridSpec)
    seed: int = 0
    process: MarkovSpec
    initial: list[float] | None = None


class ClassicalConfig(_Document):
    model: Literal["classical"] = "classical"
    grid: GridSpec = Field(default_factory=GridSpec)
    seed: int = 0
    process: SemiMarkovSpec
    initial: list[float] | None = None
    initial_state: int = Field(default=0, ge=0)
    n_traj: int = Field(default=100000, ge=0)
    sample_times: list[float] | None = None


class QuantumConfig(_Document):
    model: Literal["quantum"] = "quantum"
    grid: GridSpec = Field(default_factory=GridSpec)
    seed: int = 0
    kernel: QuantumKernelSpec | None = None
    two_level: TwoLevelParams | None = None
    initial_state: list[list[float]] | ComplexMatrix | None = None

    @model_validator(mode="after")
    def _one_kernel(self) -> QuantumConfig:
        if (self.kernel is None) == (self.two_level is None):
            raise ValueError("exactly one of kernel or two_level is required")
        return self

    def initial_density(self) -> np.ndarray | None:
        if isinstance(self.initial_state, ComplexMatrix):
            return self.initial_state.matrix
        return None if self.initial_state is None else np.asarray(self.initial_state, dtype=float)


KernelConfig = Annotated[MarkovConfig | ClassicalConfig | QuantumConfig, Field(discriminator="model")]


class RunManifest(_Document):
    command: str
    config_hash: str | None = None
    versions: dict[str, str] = Field(default_factory=dict)
    grid: GridSpec | None = None
    seed: int | None = None
    wall_clock_sec: float = 0.0
    outputs: list[str] = Field(default_factory=list)
    config_echo: dict[str, Any] | None = None


class CommandOutcome(BaseModel):
    command: str
    exit_code: int = 0
    outputs: list[str] = Field(default_factory=list)
    summary: dict[str, Any] = Field(default_factory=dict)
    manifest: RunManifest | None = None
    errors: list[dict[str, str]] = Field(default_factory=list)
