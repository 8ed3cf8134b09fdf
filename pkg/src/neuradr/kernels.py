"""Weight kernels as generators of advection-diffusion-reaction operators.

A kernel acts on a field as ``Z = W z``.  Three parameterizations are
supported: a dense matrix, a three-point (tridiagonal) stencil, and a
continuum profile ``W(r)`` that is sampled onto a grid.  The displacement
moments ``W_k(q_i) = sum_j r_ij**k W_ij`` translate any of them into local
amplitude rescaling, propagation speed and diffusivity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .field import Boundary, Grid1D

MOMENT_TAGS = (
    "amplitude-rescaling",
    "propagation",
    "diffusion",
    "dispersion",
    "hyper-diffusion",
    "anti-diffusive",
)


def _frozen(a, n, name):
    a = np.array(a, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"{name} has shape {a.shape}, expected ({n},)")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TridiagonalKernel:
    """Three-point stencil ``Z_i = sub_i z_{i-1} + diag_i z_i + sup_i z_{i+1}``."""

    sub: np.ndarray = field(repr=False)
    diag: np.ndarray = field(repr=False)
    sup: np.ndarray = field(repr=False)
    grid: Grid1D

    def __post_init__(self):
        n = self.grid.n
        for name in ("sub", "diag", "sup"):
            object.__setattr__(self, name, _frozen(getattr(self, name), n, name))

    @property
    def is_homogeneous(self) -> bool:
        return all(np.all(a == a[0]) for a in (self.sub, self.diag, self.sup))

    def apply(self, z: np.ndarray) -> np.ndarray:
        lo, hi = shift_down(z, self.grid.boundary), shift_up(z, self.grid.boundary)
        return self.sub * lo + self.diag * z + self.sup * hi

    def apply_transpose(self, g: np.ndarray) -> np.ndarray:
        # (W^T g)_j = sub_{j+1} g_{j+1} + diag_j g_j + sup_{j-1} g_{j-1}
        b = self.grid.boundary
        return shift_up(self.sub * g, b) + self.diag * g + shift_down(self.sup * g, b)

    def to_dense(self) -> "DenseKernel":
        n = self.grid.n
        m = np.zeros((n, n))
        i = np.arange(n)
        np.add.at(m, (i, i), self.diag)
        if self.grid.boundary is Boundary.PERIODIC:
            np.add.at(m, (i, (i - 1) % n), self.sub)
            np.add.at(m, (i, (i + 1) % n), self.sup)
        else:
            m[i[1:], i[:-1]] += self.sub[1:]
            m[i[:-1], i[1:]] += self.sup[:-1]
        return DenseKernel(m, self.grid)


def shift_down(z, boundary):
    """out[..., i] = z[..., i-1] along the last axis."""
    head = z[..., -1:] if boundary is Boundary.PERIODIC else np.zeros_like(z[..., :1])
    return np.concatenate((head, z[..., :-1]), axis=-1)


def shift_up(z, boundary):
    """out[..., i] = z[..., i+1] along the last axis."""
    tail = z[..., :1] if boundary is Boundary.PERIODIC else np.zeros_like(z[..., :1])
    return np.concatenate((z[..., 1:], tail), axis=-1)


@dataclass(frozen=True)
class DenseKernel:
    """Full matrix kernel; ``matrix[i, j]`` is the weight from node j to node i."""

    matrix: np.ndarray = field(repr=False)
    grid: Grid1D

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        n = self.grid.n
        if m.shape != (n, n):
            raise ValueError(f"dense kernel has shape {m.shape}, expected ({n}, {n})")
        if not np.all(np.isfinite(m)):
            raise ValueError("dense kernel entries must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def apply(self, z: np.ndarray) -> np.ndarray:
        return self.matrix @ z

    def apply_transpose(self, g: np.ndarray) -> np.ndarray:
        return self.matrix.T @ g

    def to_dense(self) -> "DenseKernel":
        return self


Kernel = Union[TridiagonalKernel, DenseKernel]


def identity_kernel(grid: Grid1D) -> TridiagonalKernel:
    n = grid.n
    return TridiagonalKernel(np.zeros(n), np.ones(n), np.zeros(n), grid)


@dataclass(frozen=True)
class ContinuumKernel:
    """Homogeneous kernel profile ``W(q, q') = W(r)``, ``r = q' - q``.

    ``kind`` is ``"gaussian"`` (uses ``sigma``) or ``"powerlaw"`` (uses
    ``exponent`` and the inner ``cutoff`` below which the profile is held
    constant at ``amplitude * cutoff**-exponent``).
    """

    kind: str
    amplitude: float = 1.0
    sigma: float = 1.0
    exponent: float = 2.0
    cutoff: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "powerlaw"):
            raise ValueError(f"unknown continuum kernel kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian sigma must be > 0")
        if self.kind == "powerlaw" and not (self.exponent > 0 and self.cutoff > 0):
            raise ValueError("power-law exponent and cutoff must be > 0")

    @classmethod
    def gaussian(cls, sigma: float, amplitude: float | None = None) -> "ContinuumKernel":
        """Gaussian; by default the amplitude normalizes the integral to 1."""
        if amplitude is None:
            amplitude = 1.0 / (sigma * math.sqrt(2.0 * math.pi))
        return cls("gaussian", amplitude=amplitude, sigma=sigma)

    @classmethod
    def power_law(cls, exponent: float, cutoff: float = 1.0, amplitude: float = 1.0) -> "ContinuumKernel":
        return cls("powerlaw", amplitude=amplitude, exponent=exponent, cutoff=cutoff)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-(r * r) / (2.0 * self.sigma**2))
        a = np.maximum(np.abs(r), self.cutoff)
        return self.amplitude * a ** (-self.exponent)


@dataclass(frozen=True)
class MomentProfile:
    max_order: int
    moments: np.ndarray = field(repr=False)  # shape (max_order + 1, n)

    def __post_init__(self):
        m = np.array(self.moments, dtype=float)
        if m.ndim != 2 or m.shape[0] != self.max_order + 1:
            raise ValueError(f"moments shape {m.shape} inconsistent with max_order={self.max_order}")
        if not np.all(np.isfinite(m)):
            raise ValueError("moments must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "moments", m)

    def to_dict(self) -> dict:
        return {"max_order": self.max_order, "moments": self.moments.tolist()}


@dataclass(frozen=True)
class ExplainReport:
    R_hat: np.ndarray = field(repr=False)
    U_hat: np.ndarray = field(repr=False)
    D_hat: np.ndarray = field(repr=False)
    higher_moment_notes: dict = field(repr=False)  # order -> per-node tag list

    def to_dict(self) -> dict:
        return {
            "R_hat": self.R_hat.tolist(),
            "U_hat": self.U_hat.tolist(),
            "D_hat": self.D_hat.tolist(),
            "higher_moment_notes": {str(k): v for k, v in self.higher_moment_notes.items()},
        }


def adr_coefficients(U, D, R, delta):
    """Stencil weights (A, C, B) generated by advection U, diffusion D and reaction R."""
    U, D, R = (np.asarray(a, dtype=float) for a in (U, D, R))
    A = -U / (2 * delta) + D / delta**2
    B = U / (2 * delta) + D / delta**2
    C = 1.0 - 2.0 * D / delta**2 + R
    return A, C, B


def assemble_adr_stencil(U: float, D: float, R: float, grid: Grid1D) -> TridiagonalKernel:
    A, C, B = adr_coefficients(U, D, R, grid.delta)
    n = grid.n
    return TridiagonalKernel(np.full(n, A), np.full(n, C), np.full(n, B), grid)


def assemble_heterogeneous_adr(U, D, R, grid: Grid1D) -> TridiagonalKernel:
    n = grid.n
    arrays = [np.asarray(a, dtype=float) for a in (U, D, R)]
    for name, a in zip("UDR", arrays):
        if a.shape != (n,):
            raise ValueError(f"{name} has shape {a.shape}, expected ({n},)")
    A, C, B = adr_coefficients(*arrays, grid.delta)
    return TridiagonalKernel(A, C, B, grid)


def kernel_moments(kernel: Kernel, K: int) -> MomentProfile:
    """Displacement moments ``W_k(q_i) = sum_j (delta*(j-i))**k W_ij`` for k <= K.

    Tridiagonal kernels use the closed form of their own three-point
    stencil. Dense kernels use minimal-image displacements on periodic
    grids; the antipodal entry of an even grid is split evenly between
    ``+r`` and ``-r`` so that even kernels keep exactly zero odd moments.
    """
    if K < 0:
        raise ValueError("max order must be >= 0")
    h = kernel.grid.delta
    if isinstance(kernel, TridiagonalKernel):
        out = np.empty((K + 1, kernel.grid.n))
        out[0] = kernel.sub + kernel.diag + kernel.sup
        for k in range(1, K + 1):
            out[k] = h**k * (kernel.sup + (-1) ** k * kernel.sub)
        return MomentProfile(K, out)

    grid = kernel.grid
    off = grid.offsets()
    r = h * off.astype(float)
    W = kernel.matrix
    antipode = None
    if grid.boundary is Boundary.PERIODIC and grid.n % 2 == 0:
        antipode = off == grid.n // 2
    out = np.empty((K + 1, grid.n))
    for k in range(K + 1):
        rk = r**k
        if antipode is not None:
            rk = np.where(antipode, 0.5 * (rk + (-r) ** k), rk)
        out[k] = np.sum(rk * W, axis=1)
    return MomentProfile(K, out)


def explain_kernel(profile: MomentProfile) -> ExplainReport:
    """Read moments as local reaction, advection and diffusion coefficients.

    Inverts the stencil convention ``W z ~ (1 + R) z + U z_q + D z_qq``:
    ``R = W_0 - 1``, ``U = W_1``, ``D = W_2 / 2``.
    """
    if profile.max_order < 2:
        raise ValueError("explaining a kernel needs moments up to order 2")
    m = profile.moments
    notes = {}
    for k in range(profile.max_order + 1):
        notes[k] = [_tag(k, v) for v in m[k]]
    return ExplainReport(m[0] - 1.0, m[1].copy(), m[2] / 2.0, notes)


def _tag(k: int, value: float) -> str:
    if k == 0:
        return "amplitude-rescaling"
    if k == 1:
        return "propagation"
    if k % 2 == 1:
        return "dispersion"
    # smoothing sign alternates: positive at order 2, negative at 4, ...
    smoothing = value > 0 if (k // 2) % 2 == 1 else value < 0
    if not smoothing:
        return "anti-diffusive"
    return "diffusion" if k == 2 else "hyper-diffusion"


def sample_continuum_kernel(kernel: ContinuumKernel, grid: Grid1D) -> DenseKernel:
    """``matrix[i, j] = W(r_ij) * delta`` so that ``W @ z`` is a Riemann sum."""
    r = grid.delta * grid.offsets().astype(float)
    return DenseKernel(kernel(r) * grid.delta, grid)


def moment_convergence_scan(
    kernel: ContinuumKernel, k: int, domain_sizes: Sequence[float], nodes: int = 40001
) -> np.ndarray:
    """|W_k| of a homogeneous kernel on growing symmetric domains.

    Each entry of ``domain_sizes`` is a half-width; every domain uses the
    same odd node count, so the spacing-to-size ratio stays fixed.  The
    row through the center node of the sampled kernel is summed.
    """
    sizes = [float(s) for s in domain_sizes]
    if not sizes:
        raise ValueError("domain_sizes is empty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("domain_sizes must be increasing")
    if nodes % 2 == 0:
        nodes += 1
    half = nodes // 2
    out = []
    for s in sizes:
        h = s / half
        r = h * np.arange(-half, half + 1, dtype=float)
        out.append(abs(float(np.sum(r**k * kernel(r) * h))))
    return np.array(out)


@dataclass(frozen=True)
class CapacityReport:
    n_weights: int
    n_paths: int
    log10_paths: float

    def to_dict(self) -> dict:
        return {"N_W": self.n_weights, "log10_N_P": self.log10_paths}


def capacity_report(N: int, L: int) -> CapacityReport:
    """Weight count ``N**2 * L`` and input-output path count ``N**L`` of a dense net."""
    if N < 1 or L < 1:
        raise ValueError("N and L must be >= 1")
    return CapacityReport(N * N * L, N**L, L * math.log10(N))
