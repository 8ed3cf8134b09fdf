"""Space discretization: delta-basis sampling, quadrature updates, clusters."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.spatial.distance import pdist

from .field import Activation, Field, Grid1D
from .kernels import ContinuumKernel, DenseKernel, sample_continuum_kernel


class BasisKind(str, enum.Enum):
    DELTA = "delta"
    HAT = "hat"

    def evaluate(self, d, delta: float):
        """Basis function centered at 0, evaluated at displacement ``d``."""
        d = np.asarray(d, dtype=float)
        if self is BasisKind.DELTA:
            return (d == 0).astype(float)
        return np.maximum(0.0, 1.0 - np.abs(d) / delta)


@dataclass(frozen=True)
class QuadratureRule:
    offsets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.array(self.offsets, dtype=float))
        p = np.atleast_1d(np.array(self.weights, dtype=float))
        if d.shape != p.shape or d.ndim != 1:
            raise ValueError("offsets and weights must be 1-D of equal length")
        if not 1 <= d.size <= 3:
            raise ValueError(f"quadrature supports 1 to 3 nodes per cell, got {d.size}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(p))):
            raise ValueError("quadrature rule must be finite")
        object.__setattr__(self, "offsets", d)
        object.__setattr__(self, "weights", p)

    @property
    def Q(self) -> int:
        return self.offsets.size


def gauss_legendre_rule(Q: int, delta: float) -> QuadratureRule:
    """Gauss-Legendre nodes on the cell ``[-delta/2, delta/2]`` around a node.

    Weights sum to ``delta``.  For odd Q the center node comes first, so the
    leading offset is 0.
    """
    if Q not in (1, 2, 3):
        raise ValueError(f"Q must be 1, 2 or 3, got {Q}")
    x, w = np.polynomial.legendre.leggauss(Q)
    order = np.argsort(np.abs(x), kind="stable")
    x, w = x[order], w[order]
    if Q % 2 == 1:
        x[0] = 0.0
    return QuadratureRule(0.5 * delta * x, 0.5 * delta * w)


def delta_basis_sample(
    W: Union[ContinuumKernel, Callable],
    b: Callable,
    grid: Grid1D,
) -> tuple[DenseKernel, Field]:
    """Sample a kernel and a bias at the grid nodes.

    ``W`` is either a :class:`ContinuumKernel` or a callable ``W(q, q')``
    accepting broadcast arrays.  The matrix carries the factor ``delta``.
    """
    if isinstance(W, ContinuumKernel):
        kernel = sample_continuum_kernel(W, grid)
    else:
        q = grid.nodes
        m = np.broadcast_to(np.asarray(W(q[:, None], q[None, :]), dtype=float), (grid.n, grid.n))
        kernel = DenseKernel(m * grid.delta, grid)
    bias = np.broadcast_to(np.asarray(b(grid.nodes), dtype=float), (grid.n,))
    return kernel, Field(grid, bias)


def sample_quadrature_tensors(W: Callable, b: Callable, grid: Grid1D, rule: QuadratureRule):
    """Evaluate ``W(q_i + d_k, q_j + d_l)`` and ``b(q_i + d_k)``.

    Returns arrays of shape ``(n, n, Q, Q)`` and ``(n, Q)``.
    """
    q = grid.nodes
    d = rule.offsets
    qi = (q[:, None] + d[None, :])  # (n, Q)
    Ws = np.asarray(W(qi[:, None, :, None], qi[None, :, None, :]), dtype=float)
    Ws = np.broadcast_to(Ws, (grid.n, grid.n, rule.Q, rule.Q))
    bs = np.broadcast_to(np.asarray(b(qi), dtype=float), (grid.n, rule.Q))
    return np.array(Ws), np.array(bs)


def quadrature_update(
    z: Field,
    W_samples: np.ndarray,
    b_samples: np.ndarray,
    basis: BasisKind,
    rule: QuadratureRule,
    f: Activation,
) -> Field:
    """Generalized equilibrium with an inner quadrature structure.

    ``out_i = sum_k P_ik f(sum_l sum_j W[i, j, k, l] P_jl z_j - p_k b[i, k])``
    with ``P_ik = p_k phi(d_k)``.
    """
    n = z.grid.n
    Q = rule.Q
    W_samples = np.asarray(W_samples, dtype=float)
    b_samples = np.asarray(b_samples, dtype=float)
    if W_samples.shape != (n, n, Q, Q):
        raise ValueError(f"W_samples has shape {W_samples.shape}, expected {(n, n, Q, Q)}")
    if b_samples.shape != (n, Q):
        raise ValueError(f"b_samples has shape {b_samples.shape}, expected {(n, Q)}")
    basis = BasisKind(basis)
    f = Activation(f)
    # node-independent on a uniform grid: phi_i(q_i + d_k) = phi(d_k)
    Phi = rule.weights * basis.evaluate(rule.offsets, z.grid.delta)  # (Q,)
    if Q == 1:
        inner = W_samples[:, :, 0, 0] @ (Phi[0] * z.values)
        pre = inner - rule.weights[0] * b_samples[:, 0]
        return Field(z.grid, Phi[0] * f(pre))
    inner = np.einsum("ijkl,l,j->ik", W_samples, Phi, z.values)
    pre = inner - rule.weights[None, :] * b_samples
    return Field(z.grid, f(pre) @ Phi)


@dataclass(frozen=True)
class ClusterSet:
    points: np.ndarray = field(repr=False)  # (N_c, d)
    assignments: np.ndarray = field(repr=False)  # (N_c,)
    volumes: dict = field(repr=False)  # cluster id -> V_c
    point_weights: np.ndarray = field(repr=False)  # (N_c,)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def build_cluster_set(points, assignments, floor: float | None = None) -> ClusterSet:
    """Give every point of cluster c the weight ``V_c / N_c``.

    ``V_c`` is the volume of the axis-aligned bounding box.  Zero-extent
    axes are replaced by ``floor``; when ``floor`` is None it defaults to the
    smallest nonzero pairwise distance within the cluster, or 1.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError("points must be a (N, d) array")
    ids = np.asarray(assignments)
    if ids.shape != (pts.shape[0],):
        raise ValueError(f"got {ids.shape[0] if ids.ndim else 0} assignments for {pts.shape[0]} points")
    if pts.shape[0] == 0:
        raise ValueError("no points given")
    if floor is not None and not floor > 0:
        raise ValueError("floor must be > 0")
    volumes = {}
    weights = np.empty(pts.shape[0])
    for c in np.unique(ids):
        mask = ids == c
        cp = pts[mask]
        extent = cp.max(axis=0) - cp.min(axis=0)
        if np.any(extent == 0):
            fl = floor
            if fl is None:
                dist = pdist(cp) if cp.shape[0] > 1 else np.array([])
                dist = dist[dist > 0]
                fl = float(dist.min()) if dist.size else 1.0
            extent = np.where(extent == 0, fl, extent)
        vol = float(np.prod(extent))
        key = c.item() if hasattr(c, "item") else c
        volumes[key] = vol
        weights[mask] = vol / cp.shape[0]
    return ClusterSet(pts, ids, volumes, weights)


def cluster_equilibrium(z, W, b, weights, f: Activation) -> np.ndarray:
    """``f(sum_j W_ij p_j z_j - b_i)`` over scattered points."""
    z = np.asarray(z, dtype=float)
    W = np.asarray(W.matrix if isinstance(W, DenseKernel) else W, dtype=float)
    b = np.asarray(b, dtype=float)
    p = np.asarray(weights, dtype=float)
    n = z.shape[0]
    if W.shape != (n, n) or b.shape != (n,) or p.shape != (n,):
        raise ValueError(f"inconsistent sizes: z {z.shape}, W {W.shape}, b {b.shape}, weights {p.shape}")
    return Activation(f)((W * p[None, :]) @ z - b)
