"""Grids, fields, activations, norms and loss distances."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class GridMismatchError(ValueError):
    """Two fields or operators live on incompatible grids."""


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    ZEROPAD = "zeropad"


@dataclass(frozen=True)
class Grid1D:
    n: int
    delta: float
    origin: float = 0.0
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs n >= 2 nodes, got {self.n}")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"grid spacing must be positive, got {self.delta}")
        if not np.isfinite(self.origin):
            raise ValueError("grid origin must be finite")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "origin", float(self.origin))
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def nodes(self) -> np.ndarray:
        return self.origin + self.delta * np.arange(self.n)

    @property
    def length(self) -> float:
        return self.n * self.delta

    def offsets(self) -> np.ndarray:
        """Signed index offsets j - i for every node pair, shape (n, n).

        Periodic grids use the minimal image; the antipodal offset of an even
        grid is returned as +n/2 (see :func:`neuradr.kernels.kernel_moments`
        for how it is symmetrised).
        """
        idx = np.arange(self.n)
        d = idx[None, :] - idx[:, None]
        if self.boundary is Boundary.PERIODIC:
            d = (d + self.n // 2) % self.n - self.n // 2
            if self.n % 2 == 0:
                d[d == -(self.n // 2)] = self.n // 2
        return d

    def to_dict(self) -> dict:
        return {"n": self.n, "delta": self.delta, "origin": self.origin, "boundary": self.boundary.value}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid1D":
        return cls(int(d["n"]), float(d["delta"]), float(d.get("origin", 0.0)), d.get("boundary", "periodic"))


def make_uniform_grid(n: int, delta: float, origin: float = 0.0, boundary="periodic") -> Grid1D:
    return Grid1D(n, delta, origin, Boundary(boundary))


@dataclass(frozen=True)
class Field:
    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"field has shape {v.shape}, grid expects ({self.grid.n},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.grid.n

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __eq__(self, other):
        if not isinstance(other, Field):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None


def check_same_grid(*fields: Field) -> Grid1D:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid} vs {f.grid}")
    return grid


class Activation(str, enum.Enum):
    IDENTITY = "identity"
    TANH = "tanh"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SQUARE = "square"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self is Activation.IDENTITY:
            return z.copy()
        if self is Activation.TANH:
            return np.tanh(z)
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        if self is Activation.SIGMOID:
            # split by sign so exp never overflows
            out = np.empty_like(z)
            pos = z >= 0
            out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
            e = np.exp(z[~pos])
            out[~pos] = e / (1.0 + e)
            return out
        return z * z

    def derivative(self, z):
        """Elementwise f'(z). ReLU uses subgradient 0 at the kink."""
        z = np.asarray(z, dtype=float)
        if self is Activation.IDENTITY:
            return np.ones_like(z)
        if self is Activation.TANH:
            t = np.tanh(z)
            return 1.0 - t * t
        if self is Activation.RELU:
            return (z > 0).astype(float)
        if self is Activation.SIGMOID:
            s = self(z)
            return s * (1.0 - s)
        return 2.0 * z


def apply_activation(f: Activation, Z: Field) -> Field:
    return Z.with_values(Activation(f)(Z.values))


def norm_sq(z: Field, kind: str = "integral") -> float:
    """Squared norm of a field.

    ``kind="integral"`` is the Riemann sum ``sum(z**2) * delta`` of the
    continuum norm; ``kind="discrete"`` drops the spacing.
    """
    s = float(np.dot(z.values, z.values))
    if kind == "integral":
        return s * z.grid.delta
    if kind == "discrete":
        return s
    raise ValueError(f"unknown norm kind {kind!r}")


def norm(z: Field, kind: str = "integral") -> float:
    return float(np.sqrt(norm_sq(z, kind)))


def loss_distance(z: Field, y_T: Field) -> float:
    """Bare Euclidean distance sum_i (z_i - y_i)^2, no spacing weight."""
    check_same_grid(z, y_T)
    d = z.values - y_T.values
    return float(np.dot(d, d))
