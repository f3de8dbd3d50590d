"""Rectangle domain, interior grid, finite-difference operators and fields.

Fields live on interior nodes only; the homogeneous Dirichlet value on the
wall is implicit and never stored. ``values[i, j]`` sits at
``(x[i], y[j]) = ((i + 1) * hx, (j + 1) * hy)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True)
class Domain:
    Lx: float
    Ly: float

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise InvalidArgument(f"domain extents must be positive, got Lx={self.Lx}, Ly={self.Ly}")

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.Lx, self.Ly))


@dataclass(frozen=True)
class Grid:
    domain: Domain
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise InvalidArgument(f"need at least 3 interior nodes per axis, got {self.nx}x{self.ny}")

    @property
    def Lx(self) -> float:
        return self.domain.Lx

    @property
    def Ly(self) -> float:
        return self.domain.Ly

    @property
    def hx(self) -> float:
        return self.domain.Lx / (self.nx + 1)

    @property
    def hy(self) -> float:
        return self.domain.Ly / (self.ny + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def x(self) -> np.ndarray:
        return self.hx * np.arange(1, self.nx + 1)

    @property
    def y(self) -> np.ndarray:
        return self.hy * np.arange(1, self.ny + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def sample(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ScalarField":
        X, Y = self.mesh()
        return ScalarField(self, np.asarray(fn(X, Y), dtype=float) * np.ones(self.shape))

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))


def build_grid(Lx: float, Ly: float, nx: int, ny: int) -> Grid:
    """Uniform grid with ``nx x ny`` interior nodes on ``[0, Lx] x [0, Ly]``."""
    if int(nx) != nx or int(ny) != ny:
        raise InvalidArgument("node counts must be integers")
    return Grid(Domain(float(Lx), float(Ly)), int(nx), int(ny))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    bc: str = "dirichlet-zero"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise InvalidArgument(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other))

    def __mul__(self, a):
        return ScalarField(self.grid, self.values * _vals(a))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        for name in ("ux", "uy"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != self.grid.shape:
                raise InvalidArgument(f"{name} shape {v.shape} does not match grid {self.grid.shape}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))


def _vals(f):
    return f.values if isinstance(f, ScalarField) else f


# -- array kernels (zero Dirichlet padding) ---------------------------------

def laplacian_array(a: np.ndarray, hx: float, hy: float) -> np.ndarray:
    p = np.pad(a, 1)
    return ((p[2:, 1:-1] - 2.0 * a + p[:-2, 1:-1]) / hx**2
            + (p[1:-1, 2:] - 2.0 * a + p[1:-1, :-2]) / hy**2)


def grad_x_array(a: np.ndarray, hx: float) -> np.ndarray:
    p = np.pad(a, ((1, 1), (0, 0)))
    return (p[2:, :] - p[:-2, :]) / (2.0 * hx)


def grad_y_array(a: np.ndarray, hy: float) -> np.ndarray:
    p = np.pad(a, ((0, 0), (1, 1)))
    return (p[:, 2:] - p[:, :-2]) / (2.0 * hy)


def divergence_array(ux: np.ndarray, uy: np.ndarray, hx: float, hy: float) -> np.ndarray:
    return grad_x_array(ux, hx) + grad_y_array(uy, hy)


def face_gradient_sq(a: np.ndarray, hx: float, hy: float) -> float:
    """``||grad a||^2`` from one-sided face differences, including wall faces.

    Equals ``hx*hy * sum(a * (-laplacian(a)))`` by summation by parts.
    """
    p = np.pad(a, 1)
    dx = np.diff(p[:, 1:-1], axis=0) / hx
    dy = np.diff(p[1:-1, :], axis=1) / hy
    return float(hx * hy * (np.sum(dx * dx) + np.sum(dy * dy)))


# -- field-level operations -------------------------------------------------

def apply_operator(f: ScalarField, op: str):
    """Second-order centered stencils: ``laplacian``, ``grad_x``, ``grad_y`` or ``grad``."""
    g = f.grid
    if op == "laplacian":
        return ScalarField(g, laplacian_array(f.values, g.hx, g.hy))
    if op == "grad_x":
        return ScalarField(g, grad_x_array(f.values, g.hx))
    if op == "grad_y":
        return ScalarField(g, grad_y_array(f.values, g.hy))
    if op == "grad":
        return VectorField(g, grad_x_array(f.values, g.hx), grad_y_array(f.values, g.hy))
    raise InvalidArgument(f"unknown operator {op!r}")


def integrate(f) -> float:
    """``hx*hy * sum(values)``; the zero wall values drop out of the trapezoid rule."""
    if isinstance(f, ScalarField):
        return float(f.grid.cell_area * np.sum(f.values))
    raise InvalidArgument("integrate expects a ScalarField")


def inner(f: ScalarField, g: ScalarField) -> float:
    return float(f.grid.cell_area * np.sum(f.values * g.values))


def l2_norm(f: ScalarField) -> float:
    return float(np.sqrt(inner(f, f)))


def vector_inner(u: VectorField, w: VectorField) -> float:
    return float(u.grid.cell_area * np.sum(u.ux * w.ux + u.uy * w.uy))


def boundary_flux_array(a: np.ndarray, grid: Grid,
                        weight: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None) -> float:
    """Wall integral of the outward normal derivative (optionally weighted).

    One-sided second-order difference with the wall value 0:
    ``d/dn ~ -(4 a_1 - a_2) / (2h)``; trapezoid along each wall (corners are 0).
    """
    hx, hy = grid.hx, grid.hy
    x, y = grid.x, grid.y
    left = -(4.0 * a[0, :] - a[1, :]) / (2.0 * hx)
    right = -(4.0 * a[-1, :] - a[-2, :]) / (2.0 * hx)
    bottom = -(4.0 * a[:, 0] - a[:, 1]) / (2.0 * hy)
    top = -(4.0 * a[:, -1] - a[:, -2]) / (2.0 * hy)
    if weight is not None:
        left = left * weight(np.zeros_like(y), y)
        right = right * weight(np.full_like(y, grid.Lx), y)
        bottom = bottom * weight(x, np.zeros_like(x))
        top = top * weight(x, np.full_like(x, grid.Ly))
    return float(hy * (left.sum() + right.sum()) + hx * (bottom.sum() + top.sum()))


def boundary_flux_error_array(a: np.ndarray, grid: Grid) -> float:
    """Wall integral of the one-sided stencil's truncation error ``h^2/3 |d^3 a/dn^3|``.

    The third derivative comes from the third difference of ``(0, a_1, a_2, a_3)``.
    """
    hx, hy = grid.hx, grid.hy

    def est(a1, a2, a3, h):
        return np.abs(a3 - 3.0 * a2 + 3.0 * a1) / (3.0 * h)

    walls_x = est(a[0, :], a[1, :], a[2, :], hx) + est(a[-1, :], a[-2, :], a[-3, :], hx)
    walls_y = est(a[:, 0], a[:, 1], a[:, 2], hy) + est(a[:, -1], a[:, -2], a[:, -3], hy)
    return float(hy * walls_x.sum() + hx * walls_y.sum())


def boundary_flux(f: ScalarField, weight=None) -> float:
    """``\\oint df/dn dS`` for a Dirichlet-zero field (outward normal)."""
    if f.bc != "dirichlet-zero":
        raise InvalidArgument("boundary_flux needs a dirichlet-zero field")
    return boundary_flux_array(f.values, f.grid, weight)


# -- persistence --------------------------------------------------------------

def write_field(path, f: ScalarField, t: float = 0.0, name: str = "field") -> None:
    """``FIELD nx ny Lx Ly t name`` header, then the values in C order, one per line."""
    g = f.grid
    lines = [f"FIELD {g.nx} {g.ny} {g.Lx:.17g} {g.Ly:.17g} {t:.17g} {name}"]
    lines.extend(f"{v:.17g}" for v in f.values.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path) -> tuple[ScalarField, float, str]:
    tokens = Path(path).read_text().split()
    if len(tokens) < 7 or tokens[0] != "FIELD":
        raise InvalidArgument(f"{path}: missing FIELD header")
    nx, ny = int(tokens[1]), int(tokens[2])
    Lx, Ly, t = float(tokens[3]), float(tokens[4]), float(tokens[5])
    name = tokens[6]
    data = np.array([float(s) for s in tokens[7:]])
    if data.size != nx * ny:
        raise InvalidArgument(f"{path}: expected {nx * ny} values, found {data.size}")
    return ScalarField(build_grid(Lx, Ly, nx, ny), data.reshape(nx, ny)), t, name
