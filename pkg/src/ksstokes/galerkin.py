"""Two-basis Galerkin truncation: Laplace modes for rho, Stokes modes for u.

Modal system (summation over repeated indices)::

    d rho_l/dt = -C[l,j,k] u_j rho_k - lam_l rho_l - D[l,j,k] rho_k rho_j
    d u_l/dt   = -eta_l u_l + g B[k,l] rho_k

with ``C[l,j,k] = (w_j . grad v_k, v_l)``, ``D[l,j,k] = (div(v_k grad (-Delta)^{-1} v_j), v_l)``
and ``B[k,l] = (v_k e_y, w_l)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BlowupSuspected, InvalidArgument
from .geometry import Grid, ScalarField, VectorField
from .spectral import LaplaceEigenpair, laplace_eigenbasis
from .stokes import (StokesEigenpair, kinetic_energy, spectral_perp_grad, spectral_velocity_inner,
                     stokes_eigenbasis)

OVERFLOW_LIMIT = 1e10
_HEADER = "GALTEN"


@dataclass(frozen=True, eq=False)
class GalerkinBasis:
    grid: Grid
    laplace: list[LaplaceEigenpair]
    stokes: list[StokesEigenpair]

    @property
    def n(self) -> int:
        return len(self.laplace)

    @property
    def m(self) -> int:
        return len(self.stokes)


@dataclass(frozen=True, eq=False)
class CoefficientTensors:
    C: np.ndarray    # (n, m, n)
    D: np.ndarray    # (n, n, n)
    B: np.ndarray    # (n, m)
    lam: np.ndarray  # (n,)
    eta: np.ndarray  # (m,)

    @property
    def n(self) -> int:
        return self.lam.size

    @property
    def m(self) -> int:
        return self.eta.size


@dataclass(frozen=True, eq=False)
class GalerkinState:
    rho_modes: np.ndarray
    u_modes: np.ndarray
    t: float = 0.0


def build_basis(grid: Grid, n: int, m: int) -> GalerkinBasis:
    return GalerkinBasis(grid, laplace_eigenbasis(grid, n), stokes_eigenbasis(grid, m))


# -- tensor assembly ------------------------------------------------------------

def _sine_integral(k: np.ndarray, L: float) -> np.ndarray:
    """``int_0^L sin(k pi x / L) dx`` for integer ``k`` (any sign)."""
    k = np.asarray(k)
    out = np.zeros(k.shape)
    nz = k != 0
    out[nz] = L * (1.0 - np.where(k[nz] % 2 == 0, 1.0, -1.0)) / (np.pi * k[nz])
    return out


def _triple_sss(p, q, r, L):
    """``int_0^L sin(p) sin(q) sin(r)``, arguments broadcast."""
    return 0.25 * (_sine_integral(p + q - r, L) + _sine_integral(q + r - p, L)
                   + _sine_integral(r + p - q, L) - _sine_integral(p + q + r, L))


def _triple_ccs(p, q, r, L):
    """``int_0^L cos(p) cos(q) sin(r)``, arguments broadcast."""
    return 0.25 * (_sine_integral(r + p + q, L) + _sine_integral(r - p - q, L)
                   + _sine_integral(r + p - q, L) + _sine_integral(r - p + q, L))


def chemotaxis_tensor(laplace: list[LaplaceEigenpair], Lx: float, Ly: float) -> np.ndarray:
    """``D[l,j,k]`` in closed form.

    With ``c_j = v_j / lam_j`` the integrand is
    ``div(v_k grad c_j) = grad v_k . grad v_j / lam_j - v_k v_j``, and every
    term separates into products of 1D sine/cosine triple integrals.
    """
    k1 = np.array([e.k1 for e in laplace])
    k2 = np.array([e.k2 for e in laplace])
    lam = np.array([e.lam_continuous for e in laplace])
    ax, ay = np.pi * k1 / Lx, np.pi * k2 / Ly
    norm3 = (2.0 / np.sqrt(Lx * Ly)) ** 3
    L_, J_, K_ = np.ix_(range(len(laplace)), range(len(laplace)), range(len(laplace)))
    sx = _triple_sss(k1[L_], k1[J_], k1[K_], Lx)
    sy = _triple_sss(k2[L_], k2[J_], k2[K_], Ly)
    cx = _triple_ccs(k1[J_], k1[K_], k1[L_], Lx)
    cy = _triple_ccs(k2[J_], k2[K_], k2[L_], Ly)
    grad = (ax[J_] * ax[K_] * cx * sy + ay[J_] * ay[K_] * sx * cy) / lam[J_]
    return norm3 * (grad - sx * sy)


def _mode_gradients(e: LaplaceEigenpair, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    norm = 2.0 / np.sqrt(grid.Lx * grid.Ly)
    ax, ay = np.pi * e.k1 / grid.Lx, np.pi * e.k2 / grid.Ly
    return (norm * ax * np.outer(np.cos(ax * grid.x), np.sin(ay * grid.y)),
            norm * ay * np.outer(np.sin(ax * grid.x), np.cos(ay * grid.y)))


def assemble_tensors(basis: GalerkinBasis) -> CoefficientTensors:
    """``C`` and ``B`` by nodal quadrature with analytic ``grad v_k``; ``D`` in closed form."""
    grid = basis.grid
    h2 = grid.cell_area
    V = np.stack([e.v.values.ravel() for e in basis.laplace], axis=1)
    grads = [_mode_gradients(e, grid) for e in basis.laplace]
    Vx = np.stack([gx.ravel() for gx, _ in grads], axis=1)
    Vy = np.stack([gy.ravel() for _, gy in grads], axis=1)
    n, m = basis.n, basis.m
    C = np.empty((n, m, n))
    B = np.empty((n, m))
    for j, sp_ in enumerate(basis.stokes):
        wx, wy = sp_.w.ux.ravel(), sp_.w.uy.ravel()
        C[:, j, :] = h2 * (V.T @ (wx[:, None] * Vx + wy[:, None] * Vy))
        B[:, j] = h2 * (V.T @ wy)
    D = chemotaxis_tensor(basis.laplace, grid.Lx, grid.Ly)
    lam = np.array([e.lam_continuous for e in basis.laplace])
    eta = np.array([p.eta for p in basis.stokes])
    return CoefficientTensors(C, D, B, lam, eta)


# -- modal dynamics ---------------------------------------------------------------

def galerkin_rhs(s: GalerkinState, T: CoefficientTensors, g: float, *, chemotaxis: bool = True,
                 advection: bool = True) -> tuple[np.ndarray, np.ndarray]:
    r, u = s.rho_modes, s.u_modes
    if r.shape != (T.n,) or u.shape != (T.m,):
        raise InvalidArgument(f"state shapes {r.shape}, {u.shape} do not match n={T.n}, m={T.m}")
    dr = -T.lam * r
    if advection:
        dr -= np.einsum("ljk,j,k->l", T.C, u, r)
    if chemotaxis:
        dr -= np.einsum("ljk,k,j->l", T.D, r, r)
    du = -T.eta * u + g * (T.B.T @ r)
    return dr, du


def integrate_galerkin(s0: GalerkinState, T: CoefficientTensors, g: float, t_end: float, dt: float,
                       stride: int = 1, *, chemotaxis: bool = True, advection: bool = True,
                       freeze_density: bool = False) -> list[GalerkinState]:
    """Classical RK4 to ``t_end`` (the last step is shortened to land on it).

    Returns every ``stride``-th state plus the final one. Raises
    ``BlowupSuspected`` (with the last valid state) if any mode exceeds 1e10.
    """
    if not dt > 0 or stride < 1:
        raise InvalidArgument(f"need dt > 0 and stride >= 1, got dt={dt}, stride={stride}")
    y = np.concatenate([s0.rho_modes, s0.u_modes]).astype(float)
    n = T.n
    kw = dict(chemotaxis=chemotaxis, advection=advection)

    def f(v):
        dr, du = galerkin_rhs(GalerkinState(v[:n], v[n:]), T, g, **kw)
        if freeze_density:
            dr = np.zeros_like(dr)
        return np.concatenate([dr, du])

    t = s0.t
    out = [GalerkinState(y[:n].copy(), y[n:].copy(), t)]
    nsteps = int(np.ceil((t_end - s0.t) / dt - 1e-9))
    for k in range(1, nsteps + 1):
        t_next = min(s0.t + k * dt, t_end) if k < nsteps else t_end
        h = t_next - t
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y_new)) or np.max(np.abs(y_new)) > OVERFLOW_LIMIT:
            raise BlowupSuspected(f"Galerkin modes overflowed at t={t_next:.4g}",
                                  state=GalerkinState(y[:n].copy(), y[n:].copy(), t))
        y, t = y_new, t_next
        if k % stride == 0 or k == nsteps:
            out.append(GalerkinState(y[:n].copy(), y[n:].copy(), t))
    return out


def stable_dt(T: CoefficientTensors, dt: float) -> float:
    """Cap ``dt`` at ``1 / (2 max(lam, eta))`` for the stiff linear part."""
    return min(dt, 0.5 / max(float(T.lam.max()), float(T.eta.max())))


# -- projection and reconstruction ------------------------------------------------

def project_initial_data(rho0: ScalarField, psi0: ScalarField | None,
                         basis: GalerkinBasis) -> GalerkinState:
    """``rho_l = (rho0, v_l)`` by quadrature and ``u_j = (grad_perp psi0, w_j)``.

    Velocity inner products are the exact L2 products of the sine interpolants.
    """
    grid = basis.grid
    if rho0.grid != grid or (psi0 is not None and psi0.grid != grid):
        raise InvalidArgument("initial fields must live on the basis grid")
    r = np.array([grid.cell_area * np.sum(rho0.values * e.v.values) for e in basis.laplace])
    if psi0 is None:
        u = np.zeros(basis.m)
    else:
        u = np.array([spectral_velocity_inner(psi0.values, p.psi.values, grid) for p in basis.stokes])
    return GalerkinState(r, u, 0.0)


def reconstruct(s: GalerkinState, basis: GalerkinBasis) -> tuple[ScalarField, VectorField]:
    grid = basis.grid
    rho = sum((a * e.v.values for a, e in zip(s.rho_modes, basis.laplace)), np.zeros(grid.shape))
    psi = reconstruct_streamfunction(s, basis).values
    ux, uy = spectral_perp_grad(psi, grid)
    return ScalarField(grid, rho), VectorField(grid, ux, uy)


def reconstruct_streamfunction(s: GalerkinState, basis: GalerkinBasis) -> ScalarField:
    grid = basis.grid
    psi = sum((a * p.psi.values for a, p in zip(s.u_modes, basis.stokes)), np.zeros(grid.shape))
    return ScalarField(grid, psi)


# -- persistence ---------------------------------------------------------------------

def write_tensors(path, T: CoefficientTensors, grid: Grid) -> None:
    """Text header line ``GALTEN n m nx ny Lx Ly``, then C, D, B, lam, eta as little-endian float64."""
    head = f"{_HEADER} {T.n} {T.m} {grid.nx} {grid.ny} {grid.Lx:.17g} {grid.Ly:.17g}\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        for a in (T.C, T.D, T.B, T.lam, T.eta):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_tensors(path) -> tuple[CoefficientTensors, tuple[int, int, float, float]]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    parts = raw[:nl].decode("ascii").split() if nl > 0 else []
    if len(parts) != 7 or parts[0] != _HEADER:
        raise InvalidArgument(f"{path}: missing {_HEADER} header")
    n, m, nx, ny = (int(v) for v in parts[1:5])
    Lx, Ly = float(parts[5]), float(parts[6])
    shapes = [(n, m, n), (n, n, n), (n, m), (n,), (m,)]
    sizes = [int(np.prod(s)) for s in shapes]
    body = raw[nl + 1:]
    if len(body) != 8 * sum(sizes):
        raise InvalidArgument(f"{path}: expected {8 * sum(sizes)} data bytes, found {len(body)}")
    flat = np.frombuffer(body, dtype="<f8").astype(float)
    arrays, pos = [], 0
    for shp, size in zip(shapes, sizes):
        arrays.append(flat[pos:pos + size].reshape(shp))
        pos += size
    return CoefficientTensors(*arrays), (nx, ny, Lx, Ly)


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    nb = float(np.sqrt(np.sum(b * b)))
    diff = float(np.sqrt(np.sum((a - b) ** 2)))
    return 0.0 if diff == 0.0 else diff / nb if nb > 0 else float("inf")


def relative_velocity_l2(psi_a: np.ndarray, psi_b: np.ndarray, grid: Grid) -> float:
    nb = kinetic_energy(psi_b, grid)
    diff = kinetic_energy(psi_a - psi_b, grid)
    return 0.0 if diff == 0.0 else float(np.sqrt(diff / nb)) if nb > 0 else float("inf")


def compare_backends(config, truncations=None) -> list[dict]:
    """Run the grid and modal backends from identical data to ``config.t_end``.

    One report per truncation ``n = m`` in ``truncations`` (default
    ``config.n_modes``), with relative L2 differences of rho and u measured
    against the grid backend. The finite-difference run is shared.
    """
    from .simulate import config_grid, simulate_fd, simulate_galerkin

    fd_cfg = config.replace(backend="fd")
    fd = simulate_fd(fd_cfg)
    grid = config_grid(config)
    rho_fd = fd.final.density.rho.values
    psi_fd = fd.final.flow.psi.values
    levels = list(truncations) if truncations else [config.n_modes]
    reports = []
    for n in levels:
        cfg = config.replace(backend="galerkin", n_modes=n, m_modes=n)
        gal = simulate_galerkin(cfg)
        rho_g = gal.final.density.rho.values
        psi_g = gal.final.flow.psi.values
        reports.append({
            "n": n, "m": n, "t": gal.final.t, "t_fd": fd.final.t,
            "rel_l2_rho": relative_l2(rho_g, rho_fd),
            "rel_l2_u": relative_velocity_l2(psi_g, psi_fd, grid),
            "fd_verdict": fd.verdict, "galerkin_verdict": gal.verdict,
        })
    return reports
