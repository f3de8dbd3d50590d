"""Time loops for both backends, producing diagnostics on a uniform record grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chemotaxis import (CoupledState, DensityState, initial_density, initial_state,
                         initial_streamfunction, step_coupled)
from .config import RunConfig
from .diagnostics import (MIN_FIT_SAMPLES, DiagnosticsRecord, detect_blowup, fit_quench_rate,
                          snapshot)
from .errors import BlowupSuspected
from .galerkin import (CoefficientTensors, GalerkinBasis, GalerkinState, assemble_tensors,
                       build_basis, integrate_galerkin, project_initial_data, reconstruct_streamfunction,
                       stable_dt)
from .geometry import Grid, ScalarField, boundary_flux_array, boundary_flux_error_array, build_grid
from .stokes import FlowState, energy_balance_defect, kinetic_energy, enstrophy

_TIME_TOL = 1e-12


@dataclass
class RunStats:
    steps: int = 0
    max_mass_increase: float = -math.inf   # largest per-step change of integrate(rho)
    min_rho: float = math.inf
    max_flux: float = -math.inf
    max_flux_excess: float = -math.inf     # max of flux minus its truncation-error estimate
    u_l2_time_integral: float = 0.0        # int ||u||^2 dt
    u_h1_time_integral: float = 0.0        # int ||grad u||^2 dt
    dudt_l2_time_integral: float = 0.0     # int ||d_t u||^2 dt
    energy_residual: float = 0.0           # sum of |per-step energy defect|

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Trajectory:
    records: list[DiagnosticsRecord]
    states: list[CoupledState] | None
    final: CoupledState
    verdict: str
    message: str = ""
    stats: RunStats = field(default_factory=RunStats)
    tensors: CoefficientTensors | None = None


def config_grid(cfg: RunConfig) -> Grid:
    return build_grid(cfg.Lx, cfg.Ly, cfg.nx, cfg.ny)


def initial_fields(cfg: RunConfig, grid: Grid) -> tuple[ScalarField, ScalarField]:
    rho0 = initial_density(grid, cfg.density, mass=cfg.mass, x0=cfg.x0, y0=cfg.y0, sigma=cfg.sigma,
                           k1=cfg.k1, k2=cfg.k2, amplitude=cfg.amplitude)
    psi0 = initial_streamfunction(grid, cfg.psi, cfg.psi_amplitude, cfg.psi_mode)
    return rho0, psi0


def record_times(cfg: RunConfig) -> list[float]:
    k = int(math.floor(cfg.t_end / cfg.snapshot_dt * (1 + 1e-12)))
    times = [i * cfg.snapshot_dt for i in range(1, k + 1)]
    if not times or cfg.t_end - times[-1] > _TIME_TOL * max(1.0, cfg.t_end):
        times.append(cfg.t_end)
    else:
        times[-1] = cfg.t_end
    return times


def _quenched_early(cfg: RunConfig, records: list[DiagnosticsRecord]) -> bool:
    if not cfg.stop_when_quenched or records[-1].l2_rho ** 2 >= cfg.eps:
        return False
    fit = fit_quench_rate(records, cfg.eps)
    return fit.ok and fit.samples >= 2 * MIN_FIT_SAMPLES


def simulate(cfg: RunConfig, keep_states: bool = False) -> Trajectory:
    if cfg.backend == "galerkin":
        return simulate_galerkin(cfg, keep_states=keep_states)
    return simulate_fd(cfg, keep_states=keep_states)


def _track_flux(stats: RunStats, rho: np.ndarray, grid: Grid) -> None:
    flux = boundary_flux_array(rho, grid)
    stats.max_flux = max(stats.max_flux, flux)
    stats.max_flux_excess = max(stats.max_flux_excess, flux - boundary_flux_error_array(rho, grid))


def simulate_fd(cfg: RunConfig, keep_states: bool = False) -> Trajectory:
    grid = config_grid(cfg)
    rho0, psi0 = initial_fields(cfg, grid)
    state = initial_state(rho0, psi0)
    stats = RunStats(min_rho=float(rho0.values.min()))
    _track_flux(stats, rho0.values, grid)
    records = [snapshot(state)]
    states = [state] if keep_states else None
    h2 = grid.cell_area
    opts = dict(chemotaxis=cfg.chemotaxis, advection=cfg.advection, freeze_density=cfg.freeze_density,
                cfl=cfg.cfl, ceiling=cfg.ceiling)
    ke0, en0 = kinetic_energy(state.flow.psi.values, grid), enstrophy(state.flow.psi.values, grid)
    mass0 = h2 * float(np.sum(state.density.rho.values))
    verdict, message = "alive", ""
    for t_rec in record_times(cfg):
        while t_rec - state.t > _TIME_TOL * max(1.0, t_rec):
            try:
                new = step_coupled(state, cfg.g, min(cfg.dt_target, t_rec - state.t), **opts)
            except BlowupSuspected as exc:
                verdict, message = "blowup-suspected", str(exc)
                break
            if t_rec - new.t <= _TIME_TOL * max(1.0, t_rec):
                # land exactly on the record time
                new = CoupledState(DensityState(new.density.rho, new.density.c, t_rec),
                                   FlowState(new.flow.psi, new.flow.omega, new.flow.u, t_rec), t_rec, new.dt)
            dt = new.dt
            psi_old, psi_new = state.flow.psi.values, new.flow.psi.values
            stats.energy_residual += abs(energy_balance_defect(psi_old, psi_new, state.density.rho.values,
                                                               cfg.g, dt, grid))
            ke1, en1 = kinetic_energy(psi_new, grid), enstrophy(psi_new, grid)
            stats.u_l2_time_integral += 0.5 * dt * (ke0 + ke1)
            stats.u_h1_time_integral += 0.5 * dt * (en0 + en1)
            stats.dudt_l2_time_integral += kinetic_energy(psi_new - psi_old, grid) / dt
            ke0, en0 = ke1, en1
            rho = new.density.rho.values
            mass1 = h2 * float(np.sum(rho))
            stats.max_mass_increase = max(stats.max_mass_increase, mass1 - mass0)
            mass0 = mass1
            stats.min_rho = min(stats.min_rho, float(rho.min()))
            _track_flux(stats, rho, grid)
            stats.steps += 1
            state = new
        if verdict != "alive":
            break
        records.append(snapshot(state, records[-1], stats.energy_residual))
        if keep_states:
            states.append(state)
        if detect_blowup(records, cfg.ceiling, cfg.blowup_window, cfg.blowup_factor) != "alive":
            verdict, message = "blowup-suspected", f"blow-up trigger fired at t={state.t:.6g}"
            break
        if _quenched_early(cfg, records):
            break
    return Trajectory(records, states, state, verdict, message, stats)


def galerkin_state_fields(s: GalerkinState, basis: GalerkinBasis) -> CoupledState:
    grid = basis.grid
    rho = sum((a * e.v.values for a, e in zip(s.rho_modes, basis.laplace)), np.zeros(grid.shape))
    flow = FlowState.from_streamfunction(reconstruct_streamfunction(s, basis), s.t)
    return CoupledState(DensityState.from_density(ScalarField(grid, rho), s.t), flow, s.t)


def simulate_galerkin(cfg: RunConfig, keep_states: bool = False, basis: GalerkinBasis | None = None,
                      tensors: CoefficientTensors | None = None) -> Trajectory:
    """RK4 on the modal system; diagnostics from the reconstructed fields at record times."""
    grid = config_grid(cfg)
    basis = basis or build_basis(grid, cfg.n_modes, cfg.m_modes)
    T = tensors or assemble_tensors(basis)
    rho0, psi0 = initial_fields(cfg, grid)
    s = project_initial_data(rho0, psi0, basis)
    if cfg.freeze_density:
        s = GalerkinState(s.rho_modes, s.u_modes, 0.0)
    dt_max = stable_dt(T, cfg.dt_target)
    state = galerkin_state_fields(s, basis)
    records = [snapshot(state)]
    states = [state] if keep_states else None
    stats = RunStats(min_rho=records[0].min_rho)
    _track_flux(stats, state.density.rho.values, grid)
    verdict, message = "alive", ""

    def modal_energy(v):
        return float(np.dot(v.u_modes, v.u_modes)), float(np.dot(T.eta, v.u_modes ** 2)), \
            float(np.dot(v.rho_modes, T.B @ v.u_modes))

    e0, d0, p0 = modal_energy(s)
    for t_rec in record_times(cfg):
        span = t_rec - s.t
        nsub = max(1, int(math.ceil(span / dt_max - 1e-9)))
        try:
            traj = integrate_galerkin(s, T, cfg.g, t_rec, span / nsub, stride=nsub,
                                      chemotaxis=cfg.chemotaxis, advection=cfg.advection,
                                      freeze_density=cfg.freeze_density)
        except BlowupSuspected as exc:
            verdict, message = "blowup-suspected", str(exc)
            break
        new = traj[-1]
        e1, d1, p1 = modal_energy(new)
        stats.energy_residual += abs(0.5 * (e1 - e0) + 0.5 * span * (d0 + d1) - 0.5 * span * cfg.g * (p0 + p1))
        stats.u_l2_time_integral += 0.5 * span * (e0 + e1)
        stats.u_h1_time_integral += 0.5 * span * (d0 + d1)
        du = new.u_modes - s.u_modes
        stats.dudt_l2_time_integral += float(np.dot(du, du)) / span
        e0, d0, p0 = e1, d1, p1
        stats.steps += nsub
        s = new
        state = galerkin_state_fields(s, basis)
        rec = snapshot(state, records[-1], stats.energy_residual)
        stats.max_mass_increase = max(stats.max_mass_increase, rec.mass - records[-1].mass)
        stats.min_rho = min(stats.min_rho, rec.min_rho)
        _track_flux(stats, state.density.rho.values, grid)
        records.append(rec)
        if keep_states:
            states.append(state)
        if detect_blowup(records, cfg.ceiling, cfg.blowup_window, cfg.blowup_factor) != "alive":
            verdict, message = "blowup-suspected", f"blow-up trigger fired at t={state.t:.6g}"
            break
        if _quenched_early(cfg, records):
            break
    return Trajectory(records, states, state, verdict, message, stats, T)
