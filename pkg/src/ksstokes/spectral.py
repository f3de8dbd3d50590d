"""Sine-transform solvers and the Dirichlet Laplacian eigenbasis of a rectangle.

The type-I DST on interior nodes diagonalizes the 5-point Laplacian with
zero walls, so Poisson and Helmholtz solves are a forward transform, one
division by the symbol and an inverse transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dstn, idstn

from .errors import InvalidArgument
from .geometry import Grid, ScalarField


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Sine coefficients scaled so that ``sum(coeffs**2) == ||f||_{L2}^2``.

    ``coeffs[k1 - 1, k2 - 1]`` multiplies the L2-normalized mode ``v_(k1,k2)``.
    """
    grid: Grid
    coeffs: np.ndarray


@dataclass(frozen=True, eq=False)
class LaplaceEigenpair:
    k1: int
    k2: int
    lam_continuous: float
    lam_discrete: float
    v: ScalarField


def _forward(a: np.ndarray, grid: Grid) -> np.ndarray:
    return np.sqrt(grid.cell_area) * dstn(a, type=1, norm="ortho")


def _inverse(c: np.ndarray, grid: Grid) -> np.ndarray:
    return idstn(c, type=1, norm="ortho") / np.sqrt(grid.cell_area)


def dst_forward(f: ScalarField) -> SpectralCoeffs:
    return SpectralCoeffs(f.grid, _forward(f.values, f.grid))


def dst_inverse(c: SpectralCoeffs) -> ScalarField:
    return ScalarField(c.grid, _inverse(c.coeffs, c.grid))


@lru_cache(maxsize=32)
def _symbols(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    k1 = np.arange(1, grid.nx + 1)[:, None]
    k2 = np.arange(1, grid.ny + 1)[None, :]
    disc = ((2.0 - 2.0 * np.cos(k1 * np.pi / (grid.nx + 1))) / grid.hx**2
            + (2.0 - 2.0 * np.cos(k2 * np.pi / (grid.ny + 1))) / grid.hy**2)
    cont = np.pi**2 * (k1**2 / grid.Lx**2 + k2**2 / grid.Ly**2)
    disc.setflags(write=False)
    cont.setflags(write=False)
    return disc, cont


def laplace_symbol(grid: Grid, kind: str = "discrete") -> np.ndarray:
    """Eigenvalues of ``-Delta`` indexed like the sine coefficients."""
    disc, cont = _symbols(grid)
    if kind == "discrete":
        return disc
    if kind == "continuous":
        return cont
    raise InvalidArgument(f"unknown symbol kind {kind!r}")


def lambda_discrete(grid: Grid, k1: int, k2: int) -> float:
    return float(_symbols(grid)[0][k1 - 1, k2 - 1])


def lambda_continuous(Lx: float, Ly: float, k1: int = 1, k2: int = 1) -> float:
    return float(np.pi**2 * (k1**2 / Lx**2 + k2**2 / Ly**2))


def poincare_constant(Lx: float, Ly: float) -> float:
    """``C_p = 1 / lambda_1`` for the rectangle."""
    return 1.0 / lambda_continuous(Lx, Ly)


# array-level solves used inside the steppers

def poisson_array(f: np.ndarray, grid: Grid, symbol: str = "discrete") -> np.ndarray:
    lam = laplace_symbol(grid, symbol)
    return idstn(dstn(f, type=1) / lam, type=1)


def helmholtz_array(f: np.ndarray, grid: Grid, a: float) -> np.ndarray:
    lam = laplace_symbol(grid, "discrete")
    return idstn(dstn(f, type=1) / (1.0 + a * lam), type=1)


def solve_poisson(f: ScalarField, symbol: str = "discrete") -> ScalarField:
    """Return ``c`` with ``-Delta_h c = f`` and ``c = 0`` on the wall.

    ``symbol="continuous"`` divides by the exact eigenvalues instead, which
    inverts the continuous Laplacian exactly on the sine span.
    """
    return ScalarField(f.grid, poisson_array(f.values, f.grid, symbol))


def solve_helmholtz(f: ScalarField, a: float) -> ScalarField:
    """Return ``w`` with ``(I - a Delta_h) w = f``."""
    if a < 0:
        raise InvalidArgument(f"Helmholtz coefficient must be >= 0, got {a}")
    if a == 0:
        return ScalarField(f.grid, f.values.copy())
    return ScalarField(f.grid, helmholtz_array(f.values, f.grid, a))


def laplace_mode(grid: Grid, k1: int, k2: int) -> ScalarField:
    norm = 2.0 / np.sqrt(grid.Lx * grid.Ly)
    sx = np.sin(k1 * np.pi * grid.x / grid.Lx)
    sy = np.sin(k2 * np.pi * grid.y / grid.Ly)
    return ScalarField(grid, norm * np.outer(sx, sy))


def mode_indices(grid: Grid, n: int) -> list[tuple[int, int]]:
    """First ``n`` index pairs by ascending continuous eigenvalue, ties by ``(k1, k2)``."""
    if n < 1 or n > grid.nx * grid.ny:
        raise InvalidArgument(f"cannot take {n} modes from a {grid.nx}x{grid.ny} grid")
    # a mode with k1 > n sits above the n modes (1..n, 1), same for k2
    cands = [(k1, k2) for k1 in range(1, min(grid.nx, n) + 1)
             for k2 in range(1, min(grid.ny, n) + 1)]
    # rounding keeps exact ties (e.g. (1,7) and (5,5) on a square) from being split by roundoff
    cands.sort(key=lambda k: (float(f"{lambda_continuous(grid.Lx, grid.Ly, *k):.12g}"), k[0], k[1]))
    return cands[:n]


def laplace_eigenbasis(grid: Grid, n: int) -> list[LaplaceEigenpair]:
    return [LaplaceEigenpair(k1, k2,
                             lambda_continuous(grid.Lx, grid.Ly, k1, k2),
                             lambda_discrete(grid, k1, k2),
                             laplace_mode(grid, k1, k2))
            for k1, k2 in mode_indices(grid, n)]
