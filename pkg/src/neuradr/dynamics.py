"""Relaxation-form forward integrator.

One step of ``z <- (1 - omega) z + omega f(W z - b)`` is one network layer
when ``omega == 1``; smaller ``omega`` gives a forward-Euler march of
``dz/dt = -gamma (z - f(W z - b))`` with ``omega = gamma * dt``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .field import Activation, Field, Grid1D, GridMismatchError, check_same_grid, norm
from .kernels import Kernel


class DivergenceError(FloatingPointError):
    """An iterate became non-finite."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state produced at step {step}")


@dataclass(frozen=True)
class RelaxConfig:
    omega: float = 1.0
    steps: int = 1
    norm_coupling: float = 0.0
    norm_kind: str = "integral"

    def __post_init__(self):
        if not (0.0 < self.omega <= 1.0):
            raise ValueError(f"omega must lie in (0, 1], got {self.omega}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be an integer >= 1, got {self.steps}")
        if not self.norm_coupling >= 0.0:
            raise ValueError(f"norm_coupling must be >= 0, got {self.norm_coupling}")
        if self.norm_kind not in ("integral", "discrete"):
            raise ValueError(f"unknown norm kind {self.norm_kind!r}")


@dataclass(frozen=True)
class Trajectory:
    grid: Grid1D
    values: np.ndarray = field(repr=False)  # shape (steps + 1, n)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    @property
    def states(self) -> list[Field]:
        return [Field(self.grid, row) for row in self.values]

    @property
    def final(self) -> Field:
        return Field(self.grid, self.values[-1])


@dataclass(frozen=True)
class AttractorResult:
    z_star: Field
    residual: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "z_star": self.z_star.values.tolist(),
        }


def _check_kernel(W: Kernel, grid: Grid1D):
    if W.grid != grid:
        raise GridMismatchError(f"kernel grid {W.grid} does not match field grid {grid}")


def weight_transform(W: Kernel, z: Field, b: Field) -> Field:
    grid = check_same_grid(z, b)
    _check_kernel(W, grid)
    return Field(grid, W.apply(z.values) - b.values)


def local_equilibrium(f: Activation, Z: Field) -> Field:
    return Z.with_values(Activation(f)(Z.values))


def liouvillean_residual(z: Field, W: Kernel, b: Field, f: Activation) -> Field:
    eq = local_equilibrium(f, weight_transform(W, z, b))
    return z.with_values(z.values - eq.values)


def _step(z, W, b, f, omega, norm_coupling, delta, norm_kind):
    zeq = f(W.apply(z) - b)
    # z + omega (zeq - z) keeps z fixed exactly when zeq == z
    out = zeq if omega == 1.0 else z + omega * (zeq - z)
    if norm_coupling != 0.0:
        s = float(np.dot(z, z))
        if norm_kind == "integral":
            s *= delta
        out = out + omega * norm_coupling * (1.0 - np.sqrt(s)) * z
    return out


def relaxation_step(
    z: Field,
    W: Kernel,
    b: Field,
    f: Activation,
    omega: float,
    norm_coupling: float = 0.0,
    norm_kind: str = "integral",
    step: int = 0,
) -> Field:
    """Advance one layer. ``step`` only labels a :class:`DivergenceError`."""
    RelaxConfig(omega, 1, norm_coupling, norm_kind)
    grid = check_same_grid(z, b)
    _check_kernel(W, grid)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _step(z.values, W, b.values, Activation(f), omega, norm_coupling, grid.delta, norm_kind)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(step)
    return Field(grid, out)


def evolve(
    x: Field,
    W: Union[Kernel, Sequence[Kernel]],
    b: Field,
    f: Activation,
    config: RelaxConfig,
) -> Trajectory:
    """March ``config.steps`` relaxation steps from ``x``.

    ``W`` is either one kernel or one kernel per step (time-varying weights).
    """
    grid = check_same_grid(x, b)
    if isinstance(W, (list, tuple)):
        if len(W) != config.steps:
            raise ValueError(f"got {len(W)} kernels for {config.steps} steps")
        kernels = list(W)
    else:
        kernels = [W] * config.steps
    for k in kernels:
        _check_kernel(k, grid)
    f = Activation(f)
    out = np.empty((config.steps + 1, grid.n))
    out[0] = x.values
    with np.errstate(over="ignore", invalid="ignore"):
        for t, k in enumerate(kernels):
            z = _step(out[t], k, b.values, f, config.omega, config.norm_coupling, grid.delta, config.norm_kind)
            if not np.all(np.isfinite(z)):
                raise DivergenceError(t + 1)
            out[t + 1] = z
    return Trajectory(grid, out)


def find_attractor(
    x: Field,
    W: Kernel,
    b: Field,
    f: Activation,
    omega: float = 1.0,
    tol: float = 1e-10,
    max_iters: int = 10_000,
) -> AttractorResult:
    """Relax until ``max|z - f(W z - b)| <= tol``.

    Raises :class:`DivergenceError` on a non-finite iterate; running out of
    iterations returns ``converged=False`` instead.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    RelaxConfig(omega, 1)
    grid = check_same_grid(x, b)
    _check_kernel(W, grid)
    f = Activation(f)
    z = x.values.copy()
    bv = b.values
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(max_iters + 1):
            zeq = f(W.apply(z) - bv)
            res = float(np.max(np.abs(z - zeq)))
            if not np.isfinite(res):
                raise DivergenceError(it)
            if res <= tol:
                return AttractorResult(Field(grid, z), res, it, True)
            if it == max_iters:
                break
            z = zeq if omega == 1.0 else z + omega * (zeq - z)
            if not np.all(np.isfinite(z)):
                raise DivergenceError(it + 1)
    return AttractorResult(Field(grid, z), res, max_iters, False)


def normalized_deviation(z: Field, kind: str = "integral") -> float:
    return abs(norm(z, kind) - 1.0)
