"""Fitting advection-diffusion-reaction parameters by steepest descent.

The trainable model is the relaxation recurrence driven by a three-point
ADR stencil.  Parameters live in (U, D, R) coordinates and come in three
flavours: one global triple, one triple per node, or one triple per node
and per layer.  Gradients are obtained by reverse accumulation through the
recurrence.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import DivergenceError
from .field import Activation, Field, Grid1D, check_same_grid
from .kernels import TridiagonalKernel, adr_coefficients, shift_down, shift_up

log = logging.getLogger(__name__)


class ParamMode(str, enum.Enum):
    HOMOGENEOUS = "homogeneous"
    HETEROGENEOUS = "heterogeneous"
    ONTHEFLY = "onthefly"


class GradientMode(str, enum.Enum):
    CHAIN_RULE = "chain_rule"
    FINITE_DIFFERENCE = "finite_difference"


@dataclass(frozen=True)
class ADRParams:
    """U, D, R with shape ``()``, ``(N,)`` or ``(L, N)`` depending on ``mode``."""

    mode: ParamMode
    U: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)

    def __post_init__(self):
        mode = ParamMode(self.mode)
        object.__setattr__(self, "mode", mode)
        arrs = [np.array(a, dtype=float) for a in (self.U, self.D, self.R)]
        if not (arrs[0].shape == arrs[1].shape == arrs[2].shape):
            raise ValueError("U, D and R must share a shape")
        ndim = {ParamMode.HOMOGENEOUS: 0, ParamMode.HETEROGENEOUS: 1, ParamMode.ONTHEFLY: 2}[mode]
        if arrs[0].ndim != ndim:
            raise ValueError(f"{mode.value} parameters need {ndim}-d arrays, got shape {arrs[0].shape}")
        for name, a in zip("UDR", arrs):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def zeros(cls, mode, N: int = 1, L: int = 1) -> "ADRParams":
        mode = ParamMode(mode)
        shape = {ParamMode.HOMOGENEOUS: (), ParamMode.HETEROGENEOUS: (N,), ParamMode.ONTHEFLY: (L, N)}[mode]
        return cls(mode, np.zeros(shape), np.zeros(shape), np.zeros(shape))

    @property
    def shape(self) -> tuple:
        return self.U.shape

    @property
    def size(self) -> int:
        return 3 * self.U.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.U.ravel(), self.D.ravel(), self.R.ravel()])

    def from_vector(self, v) -> "ADRParams":
        v = np.asarray(v, dtype=float)
        m = self.U.size
        s = self.shape
        return ADRParams(self.mode, v[:m].reshape(s), v[m : 2 * m].reshape(s), v[2 * m :].reshape(s))

    def embed(self, mode, N: int, L: int = 1) -> "ADRParams":
        """Broadcast to a richer mode (homogeneous -> heterogeneous -> on-the-fly)."""
        mode = ParamMode(mode)
        shape = {ParamMode.HOMOGENEOUS: (), ParamMode.HETEROGENEOUS: (N,), ParamMode.ONTHEFLY: (L, N)}[mode]
        out = [np.broadcast_to(a, shape).copy() for a in (self.U, self.D, self.R)]
        return ADRParams(mode, *out)

    def kernels(self, grid: Grid1D, steps: int) -> list[TridiagonalKernel]:
        """One stencil per step."""
        A, C, B = _coefficients(self, grid, steps)
        return [TridiagonalKernel(A[t], C[t], B[t], grid) for t in range(steps)]

    def to_dict(self) -> dict:
        return {"U": self.U.tolist(), "D": self.D.tolist(), "R": self.R.tolist()}


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    tolerance: float = 1e-6
    max_iters: int = 1000
    omega: float = 1.0
    steps: int = 1
    gradient_mode: GradientMode = GradientMode.CHAIN_RULE
    activation: Activation = Activation.TANH
    max_halvings: int = 30
    fd_step: float = 1e-6
    step_rule: str = "bb"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (0.0 < self.omega <= 1.0):
            raise ValueError(f"omega must lie in (0, 1], got {self.omega}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.step_rule not in ("bb", "fixed"):
            raise ValueError(f"step_rule must be 'bb' or 'fixed', got {self.step_rule!r}")
        object.__setattr__(self, "gradient_mode", GradientMode(self.gradient_mode))
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass(frozen=True)
class TrainResult:
    params: ADRParams
    loss_history: list
    converged: bool
    iterations: int

    @property
    def loss(self) -> float:
        return self.loss_history[-1]

    def to_dict(self) -> dict:
        return {
            "mode": self.params.mode.value,
            "params": self.params.to_dict(),
            "loss_history": list(self.loss_history),
            "converged": self.converged,
            "iterations": self.iterations,
        }


def _check(x, y_T, b):
    check_same_grid(x, y_T)
    if b is not None:
        check_same_grid(x, b)
        return b.values
    return np.zeros(x.grid.n)


def _coefficients(params, grid, steps):
    """Stencil weights (A, C, B), each of shape (steps, n)."""
    A, C, B = adr_coefficients(params.U, params.D, params.R, grid.delta)
    shape = (steps, grid.n)
    if params.mode is ParamMode.ONTHEFLY and A.shape != shape:
        raise ValueError(f"on-the-fly parameters have shape {A.shape}, expected {shape}")
    if params.mode is ParamMode.HETEROGENEOUS and A.shape != (grid.n,):
        raise ValueError(f"heterogeneous parameters have shape {A.shape}, expected ({grid.n},)")
    return tuple(np.broadcast_to(a, shape) for a in (A, C, B))


def _forward(params, x, bv, config):
    """States (steps+1, n), pre-activations (steps, n) and stencil weights."""
    grid = x.grid
    A, C, B = _coefficients(params, grid, config.steps)
    bnd = grid.boundary
    f, w = config.activation, config.omega
    zs = np.empty((config.steps + 1, grid.n))
    Zs = np.empty((config.steps, grid.n))
    zs[0] = x.values
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(config.steps):
            z = zs[t]
            Zs[t] = A[t] * shift_down(z, bnd) + C[t] * z + B[t] * shift_up(z, bnd) - bv
            zeq = f(Zs[t])
            zs[t + 1] = zeq if w == 1.0 else z + w * (zeq - z)
            if not np.all(np.isfinite(zs[t + 1])):
                raise DivergenceError(t + 1)
    return zs, Zs, (A, C, B)


def terminal_loss(params: ADRParams, x: Field, y_T: Field, config: TrainConfig, b: Field | None = None) -> float:
    zs, _, _ = _forward(params, x, _check(x, y_T, b), config)
    d = zs[-1] - y_T.values
    return float(np.dot(d, d))


def running_loss(
    params: ADRParams, x: Field, y_T: Field, config: TrainConfig, t: int, b: Field | None = None
) -> float:
    if not 0 <= t <= config.steps:
        raise ValueError(f"t={t} outside [0, {config.steps}]")
    zs, _, _ = _forward(params, x, _check(x, y_T, b), config)
    d = zs[t] - y_T.values
    return float(np.dot(d, d))


def running_losses(params: ADRParams, x: Field, y_T: Field, config: TrainConfig, b: Field | None = None) -> np.ndarray:
    """Loss of every state, t = 0 .. steps."""
    zs, _, _ = _forward(params, x, _check(x, y_T, b), config)
    d = zs - y_T.values[None, :]
    return np.einsum("ti,ti->t", d, d)


def _stencil_grads(g, z, boundary):
    """Gradients of sum_i g_i Z_i with respect to (A_i, C_i, B_i); rows are steps."""
    return g * shift_down(z, boundary), g * z, g * shift_up(z, boundary)


def _to_udr(dA, dC, dB, delta):
    # A = -U/2h + D/h^2, B = U/2h + D/h^2, C = 1 - 2D/h^2 + R
    dU = (dB - dA) / (2.0 * delta)
    dD = (dA + dB - 2.0 * dC) / delta**2
    return dU, dD, dC


def _reduce(mode, arr):
    if mode is ParamMode.HOMOGENEOUS:
        return arr.sum()
    if mode is ParamMode.HETEROGENEOUS:
        return arr.sum(axis=0)
    return arr


def _chain_rule_terminal(params, x, y_T, bv, config):
    grid = x.grid
    zs, Zs, (A, C, B) = _forward(params, x, bv, config)
    f, w = config.activation, config.omega
    bnd = grid.boundary
    gs = np.empty_like(Zs)
    lam = 2.0 * (zs[-1] - y_T.values)
    for t in range(config.steps - 1, -1, -1):
        g = gs[t] = w * lam * f.derivative(Zs[t])
        # adjoint of the stencil: (W^T g)_j = A_{j+1} g_{j+1} + C_j g_j + B_{j-1} g_{j-1}
        lam = (1.0 - w) * lam + shift_up(A[t] * g, bnd) + C[t] * g + shift_down(B[t] * g, bnd)
    dU, dD, dR = _to_udr(*_stencil_grads(gs, zs[:-1], grid.boundary), grid.delta)
    return [_reduce(params.mode, a) for a in (dU, dD, dR)]


def _chain_rule_layerwise(params, x, y_T, bv, config):
    # loss at layer t+1 depends on layer-t parameters only through one step
    grid = x.grid
    zs, Zs, _ = _forward(params, x, bv, config)
    f, w = config.activation, config.omega
    gs = w * 2.0 * (zs[1:] - y_T.values[None, :]) * f.derivative(Zs)
    return list(_to_udr(*_stencil_grads(gs, zs[:-1], grid.boundary), grid.delta))


def _finite_difference(params, x, y_T, bv, config, objective):
    h = config.fd_step
    v0 = params.as_vector()
    g = np.empty_like(v0)
    if objective == "terminal":

        def loss(v):
            zs, _, _ = _forward(params.from_vector(v), x, bv, config)
            d = zs[-1] - y_T.values
            return float(np.dot(d, d))

        for k in range(v0.size):
            vp, vm = v0.copy(), v0.copy()
            vp[k] += h
            vm[k] -= h
            g[k] = (loss(vp) - loss(vm)) / (2 * h)
    else:
        # component (l, i) only feeds the loss at layer l + 1
        L = config.steps
        layer_of = np.tile(np.repeat(np.arange(L), x.grid.n), 3)

        def loss(v, l):
            zs, _, _ = _forward(params.from_vector(v), x, bv, config)
            d = zs[l + 1] - y_T.values
            return float(np.dot(d, d))

        for k in range(v0.size):
            vp, vm = v0.copy(), v0.copy()
            vp[k] += h
            vm[k] -= h
            g[k] = (loss(vp, layer_of[k]) - loss(vm, layer_of[k])) / (2 * h)
    return g


def gradient(
    params: ADRParams,
    x: Field,
    y_T: Field,
    config: TrainConfig,
    b: Field | None = None,
    objective: str | None = None,
) -> ADRParams:
    """Loss gradient shaped like ``params``.

    ``objective="terminal"`` differentiates the loss of the final state.
    ``objective="layerwise"`` (the default for on-the-fly parameters) gives,
    for every layer l, the derivative of the loss at layer l + 1 with respect
    to the layer-l parameters.
    """
    bv = _check(x, y_T, b)
    if objective is None:
        objective = "layerwise" if params.mode is ParamMode.ONTHEFLY else "terminal"
    if objective not in ("terminal", "layerwise"):
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "layerwise" and params.mode is not ParamMode.ONTHEFLY:
        raise ValueError("layerwise gradients need on-the-fly parameters")
    if config.gradient_mode is GradientMode.FINITE_DIFFERENCE:
        g = params.from_vector(_finite_difference(params, x, y_T, bv, config, objective))
    else:
        parts = (_chain_rule_terminal if objective == "terminal" else _chain_rule_layerwise)(
            params, x, y_T, bv, config
        )
        g = ADRParams(params.mode, *parts)
    if not np.all(np.isfinite(g.as_vector())):
        raise FloatingPointError("non-finite gradient")
    return g


def _descend(loss_fn, v, g, loss0, lr0, max_halvings):
    """Backtracking step along -g. Returns (new_v, new_loss) or None when stalled."""
    lr = lr0
    for _ in range(max_halvings + 1):
        trial = v - lr * g
        try:
            tl = loss_fn(trial)
        except DivergenceError:
            tl = np.inf
        if tl < loss0:
            return trial, tl
        lr *= 0.5
    return None


def fit(
    params0: ADRParams, x: Field, y_T: Field, config: TrainConfig, b: Field | None = None
) -> TrainResult:
    """Steepest descent until the terminal loss drops below ``config.tolerance``.

    Each iteration moves along the negative gradient.  The trial step is
    ``config.lr`` (``step_rule="fixed"``) or the Barzilai-Borwein length
    ``s.s / s.y`` from the previous iteration (``step_rule="bb"``); it is
    halved up to ``config.max_halvings`` times until the loss decreases, so
    ``loss_history`` never increases.

    On-the-fly parameters are updated one layer at a time in forward order,
    each against the loss at its own output layer.
    """
    bv = _check(x, y_T, b)
    if params0.mode is ParamMode.ONTHEFLY:
        return _fit_onthefly(params0, x, y_T, bv, config)

    def loss_of(v):
        zs, _, _ = _forward(params0.from_vector(v), x, bv, config)
        d = zs[-1] - y_T.values
        return float(np.dot(d, d))

    v = params0.as_vector()
    loss = loss_of(v)
    history = [loss]
    it = 0
    v_prev = g_prev = None
    while loss > config.tolerance and it < config.max_iters:
        g = gradient(params0.from_vector(v), x, y_T, config, b=b).as_vector()
        lr = config.lr
        if config.step_rule == "bb" and g_prev is not None:
            # Barzilai-Borwein trial step; the halving below keeps descent monotone
            s, dg = v - v_prev, g - g_prev
            sy = float(np.dot(s, dg))
            if sy > 0:
                lr = float(np.dot(s, s)) / sy
        step = _descend(loss_of, v, g, loss, lr, config.max_halvings)
        if step is None:
            log.info("steepest descent stalled at iteration %d, loss %.3e", it, loss)
            break
        v_prev, g_prev = v, g
        v, loss = step
        history.append(loss)
        it += 1
    return TrainResult(params0.from_vector(v), history, loss <= config.tolerance, it)


def _fit_onthefly(params0, x, y_T, bv, config):
    grid = x.grid
    f, w = config.activation, config.omega
    U, D, R = (np.array(a) for a in (params0.U, params0.D, params0.R))
    y = y_T.values

    def layer_out(z, u, d, r, l):
        A, C, B = adr_coefficients(u, d, r, grid.delta)
        with np.errstate(over="ignore", invalid="ignore"):
            zeq = f(TridiagonalKernel(A, C, B, grid).apply(z) - bv)
            out = zeq if w == 1.0 else z + w * (zeq - z)
        if not np.all(np.isfinite(out)):
            raise DivergenceError(l + 1)
        return out

    def terminal():
        zs, _, _ = _forward(ADRParams(ParamMode.ONTHEFLY, U, D, R), x, bv, config)
        d = zs[-1] - y
        return float(np.dot(d, d))

    n = grid.n
    loss = terminal()
    history = [loss]
    it = 0
    while loss > config.tolerance and it < config.max_iters:
        z = x.values.copy()
        moved = False
        for l in range(config.steps):

            def local_loss(v, z=z, l=l):
                out = layer_out(z, v[:n], v[n : 2 * n], v[2 * n :], l)
                d = out - y
                return float(np.dot(d, d))

            v = np.concatenate([U[l], D[l], R[l]])
            A, C, B = adr_coefficients(U[l], D[l], R[l], grid.delta)
            k = TridiagonalKernel(A, C, B, grid)
            Z = k.apply(z) - bv
            zeq = f(Z)
            out = zeq if w == 1.0 else z + w * (zeq - z)
            g = w * 2.0 * (out - y) * f.derivative(Z)
            parts = _to_udr(*_stencil_grads(g[None, :], z[None, :], grid.boundary), grid.delta)
            gv = np.concatenate([p[0] for p in parts])
            step = _descend(local_loss, v, gv, local_loss(v), config.lr, config.max_halvings)
            if step is not None:
                moved = True
                U[l], D[l], R[l] = step[0][:n], step[0][n : 2 * n], step[0][2 * n :]
            z = layer_out(z, U[l], D[l], R[l], l)
        loss = terminal()
        history.append(loss)
        it += 1
        if not moved:
            break
    return TrainResult(ADRParams(ParamMode.ONTHEFLY, U, D, R), history, loss <= config.tolerance, it)


def parameter_count(mode, N: int, L: int = 1, d: int = 1) -> int:
    """Trainable parameter count: 1 + d + d(d+1)/2 per node, times N and L as the mode requires."""
    if N < 1 or L < 1 or d < 1:
        raise ValueError("N, L and d must be >= 1")
    per_node = 1 + d + d * (d + 1) // 2
    mode = ParamMode(mode)
    if mode is ParamMode.HOMOGENEOUS:
        return per_node
    if mode is ParamMode.HETEROGENEOUS:
        return N * per_node
    return N * L * per_node
