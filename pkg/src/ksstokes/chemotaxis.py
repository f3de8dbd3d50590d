"""Density equation (advection, diffusion, chemotactic drift) and the coupled stepper.

The drift ``a = grad c + u`` lives on cell faces between neighbouring nodes
(and between the first/last node and the wall). The density on a face is
upwinded along ``a`` with the wall value 0, so the explicit transport part
only moves mass between nodes or out through the wall. Diffusion is one
backward-Euler Helmholtz solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowupSuspected, CFLViolation, InvalidArgument
from .geometry import Grid, ScalarField, VectorField
from .spectral import helmholtz_array, laplace_mode, poisson_array
from .stokes import FlowState, step_flow

DEFAULT_CFL = 0.4
DEFAULT_CEILING = 1e8
_SPEED_FLOOR = 1e-30
_MAX_SHRINK = 30


@dataclass(frozen=True, eq=False)
class DensityState:
    rho: ScalarField
    c: ScalarField
    t: float = 0.0

    @classmethod
    def from_density(cls, rho: ScalarField, t: float = 0.0) -> "DensityState":
        g = rho.grid
        return cls(rho, ScalarField(g, poisson_array(rho.values, g)), t)


@dataclass(frozen=True, eq=False)
class CoupledState:
    density: DensityState
    flow: FlowState
    t: float = 0.0
    dt: float = 0.0  # step that produced this state (0 for initial data)

    def __post_init__(self):
        if not (self.density.t == self.flow.t == self.t):
            raise InvalidArgument("density, flow and coupled times differ")

    @property
    def grid(self) -> Grid:
        return self.density.rho.grid


@dataclass(frozen=True, eq=False)
class FaceFlux:
    """Fluxes on cell faces: ``fx`` is ``(nx+1, ny)``, ``fy`` is ``(nx, ny+1)``.

    ``fx[i, j]`` sits between nodes ``i-1`` and ``i`` (index ``-1`` and ``nx``
    are the walls); same for ``fy`` along y.
    """
    grid: Grid
    fx: np.ndarray
    fy: np.ndarray

    def divergence(self) -> np.ndarray:
        return (np.diff(self.fx, axis=0) / self.grid.hx
                + np.diff(self.fy, axis=1) / self.grid.hy)

    def wall_outflow(self) -> float:
        """Net rate at which the flux carries mass out through the walls."""
        g = self.grid
        return float(g.hy * (self.fx[-1, :].sum() - self.fx[0, :].sum())
                     + g.hx * (self.fy[:, -1].sum() - self.fy[:, 0].sum()))


# -- face quantities ----------------------------------------------------------

def face_gradient(c: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(c, 1)
    return (np.diff(p[:, 1:-1], axis=0) / grid.hx,
            np.diff(p[1:-1, :], axis=1) / grid.hy)


def face_velocity(ux: np.ndarray, uy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average the node velocities onto faces; wall faces get the no-slip 0."""
    px = np.pad(ux, ((1, 1), (0, 0)))
    py = np.pad(uy, ((0, 0), (1, 1)))
    return 0.5 * (px[1:, :] + px[:-1, :]), 0.5 * (py[:, 1:] + py[:, :-1])


def face_drift(c: np.ndarray | None, u: VectorField | None,
               grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    ax = np.zeros((grid.nx + 1, grid.ny))
    ay = np.zeros((grid.nx, grid.ny + 1))
    if c is not None:
        gx, gy = face_gradient(c, grid)
        ax += gx
        ay += gy
    if u is not None:
        vx, vy = face_velocity(u.ux, u.uy)
        ax += vx
        ay += vy
    return ax, ay


def _upwind_flux(rho: np.ndarray, ax: np.ndarray, ay: np.ndarray, grid: Grid) -> FaceFlux:
    px = np.pad(rho, ((1, 1), (0, 0)))
    py = np.pad(rho, ((0, 0), (1, 1)))
    rx = np.where(ax > 0, px[:-1, :], px[1:, :])
    ry = np.where(ay > 0, py[:, :-1], py[:, 1:])
    return FaceFlux(grid, rx * ax, ry * ay)


def chemo_flux(rho: ScalarField, c: ScalarField | None, u: VectorField | None) -> FaceFlux:
    """Total transport flux ``rho (grad c + u)`` on faces, ``rho`` upwinded.

    Pass ``c=None`` to switch chemotaxis off and ``u=None`` for no flow.
    """
    grid = rho.grid
    ax, ay = face_drift(None if c is None else c.values, u, grid)
    return _upwind_flux(rho.values, ax, ay, grid)


def drift_speed(ax: np.ndarray, ay: np.ndarray) -> float:
    return float(np.max(np.abs(ax)) + np.max(np.abs(ay)))


def cfl_dt(ax: np.ndarray, ay: np.ndarray, grid: Grid, cfl: float = DEFAULT_CFL) -> float:
    """Largest step keeping the upwind update positive with margin ``cfl``.

    Each node loses at most ``2 dt (max|a_x|/hx + max|a_y|/hy)`` of its mass
    per step, which stays below ``2 cfl`` when ``dt <= cfl min(h) / speed``.
    """
    return cfl * min(grid.hx, grid.hy) / max(drift_speed(ax, ay), _SPEED_FLOOR)


# -- steppers -----------------------------------------------------------------

def step_density(s: DensityState, u: VectorField | None, dt: float, *,
                 chemotaxis: bool = True, cfl: float = DEFAULT_CFL,
                 ceiling: float = DEFAULT_CEILING) -> DensityState:
    """Upwind transport, then implicit diffusion, then ``c = (-Delta_h)^{-1} rho``.

    Raises ``CFLViolation`` if ``dt`` is above the transport bound and
    ``BlowupSuspected`` (carrying ``s``) on non-finite values or when
    ``max rho`` crosses ``ceiling``.
    """
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt}")
    grid = s.rho.grid
    ax, ay = face_drift(s.c.values if chemotaxis else None, u, grid)
    dt_max = cfl_dt(ax, ay, grid, cfl)
    if dt > dt_max:
        raise CFLViolation(f"dt={dt:.3e} exceeds the transport bound {dt_max:.3e}", dt_max)
    flux = _upwind_flux(s.rho.values, ax, ay, grid)
    rho_star = s.rho.values - dt * flux.divergence()
    rho = helmholtz_array(rho_star, grid, dt)
    if not np.all(np.isfinite(rho)):
        raise BlowupSuspected("density step produced non-finite values", state=s)
    peak = float(np.max(rho))
    if peak > ceiling:
        raise BlowupSuspected(f"max rho {peak:.3e} crossed the ceiling {ceiling:.1e}", state=s)
    c = poisson_array(rho, grid)
    return DensityState(ScalarField(grid, rho), ScalarField(grid, c), s.t + dt)


def coupled_dt(s: CoupledState, dt_target: float, *, chemotaxis: bool = True,
               advection: bool = True, cfl: float = DEFAULT_CFL) -> float:
    ax, ay = face_drift(s.density.c.values if chemotaxis else None,
                        s.flow.u if advection else None, s.grid)
    return min(dt_target, cfl_dt(ax, ay, s.grid, cfl))


def step_coupled(s: CoupledState, g: float, dt_target: float, *, chemotaxis: bool = True,
                 advection: bool = True, freeze_density: bool = False,
                 cfl: float = DEFAULT_CFL, ceiling: float = DEFAULT_CEILING) -> CoupledState:
    """One Lie-split macro step: flow with the current density, then density.

    The step is the largest ``dt <= dt_target`` that satisfies the transport
    bound both before and after the flow update; the dt used is stored on the
    returned state. ``freeze_density`` keeps ``rho`` fixed (forced-Stokes control).
    """
    if not dt_target > 0:
        raise InvalidArgument(f"dt_target must be positive, got {dt_target}")
    dt = coupled_dt(s, dt_target, chemotaxis=chemotaxis, advection=advection and not freeze_density, cfl=cfl)
    for _ in range(_MAX_SHRINK):
        flow = step_flow(s.flow, s.density.rho, g, dt)
        if freeze_density:
            density = DensityState(s.density.rho, s.density.c, s.t + dt)
            return CoupledState(density, flow, s.t + dt, dt)
        try:
            density = step_density(s.density, flow.u if advection else None, dt,
                                   chemotaxis=chemotaxis, cfl=cfl, ceiling=ceiling)
        except CFLViolation as exc:
            dt = exc.dt_max
            continue
        except BlowupSuspected as exc:
            raise BlowupSuspected(str(exc), state=s) from exc
        return CoupledState(density, flow, s.t + dt, dt)
    raise BlowupSuspected(f"could not find a stable step below dt={dt:.3e}", state=s)


# -- initial data ---------------------------------------------------------------

def gaussian_density(grid: Grid, mass: float, x0: float | None = None, y0: float | None = None,
                     sigma: float = 0.3) -> ScalarField:
    """``A exp(-|x - x0|^2 / sigma^2) sin(pi x/Lx) sin(pi y/Ly)`` with ``integrate = mass``."""
    if mass < 0 or sigma <= 0:
        raise InvalidArgument(f"need mass >= 0 and sigma > 0, got mass={mass}, sigma={sigma}")
    x0 = 0.5 * grid.Lx if x0 is None else x0
    y0 = 0.5 * grid.Ly if y0 is None else y0
    X, Y = grid.mesh()
    shape = (np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / sigma**2)
             * np.sin(np.pi * X / grid.Lx) * np.sin(np.pi * Y / grid.Ly))
    total = grid.cell_area * np.sum(shape)
    if total <= 0:
        raise InvalidArgument("Gaussian profile has no mass on this grid")
    return ScalarField(grid, shape * (mass / total))


def initial_density(grid: Grid, family: str, mass: float = 1.0, x0: float | None = None,
                    y0: float | None = None, sigma: float = 0.3, k1: int = 1, k2: int = 1,
                    amplitude: float = 1.0) -> ScalarField:
    """Families: ``gaussian`` (mass-normalized), ``laplace_mode`` (``amplitude * v_k``), ``zero``."""
    if family == "gaussian":
        return gaussian_density(grid, mass, x0, y0, sigma)
    if family == "laplace_mode":
        return laplace_mode(grid, k1, k2) * amplitude
    if family == "zero":
        return grid.zeros()
    raise InvalidArgument(f"unknown initial density family {family!r}")


def initial_streamfunction(grid: Grid, kind: str = "zero", amplitude: float = 0.0,
                           mode: int = 1) -> ScalarField:
    """``zero``, ``bump`` (``a sin^2 sin^2``, clamped) or ``stokes`` (``a psi_mode``)."""
    if kind == "zero" or amplitude == 0.0:
        return grid.zeros()
    if kind == "bump":
        X, Y = grid.mesh()
        return ScalarField(grid, amplitude * (np.sin(np.pi * X / grid.Lx) * np.sin(np.pi * Y / grid.Ly)) ** 2)
    if kind == "stokes":
        from .stokes import stokes_eigenbasis
        return stokes_eigenbasis(grid, mode)[mode - 1].psi * amplitude
    raise InvalidArgument(f"unknown stream-function kind {kind!r}")


def initial_state(rho0: ScalarField, psi0: ScalarField | None = None) -> CoupledState:
    grid = rho0.grid
    flow = FlowState.rest(grid) if psi0 is None else FlowState.from_streamfunction(psi0)
    return CoupledState(DensityState.from_density(rho0), flow, 0.0, 0.0)
