"""Stokes-Boussinesq flow in vorticity / stream-function form.

Conventions: ``u = (-d_y psi, d_x psi)`` and ``omega = Delta psi``; the curl of
the buoyancy force ``g rho e_y`` is ``g d_x rho``. No-slip is closed with
Thom's wall vorticity ``omega_wall = 2 psi_1 / h^2`` (``psi_wall = 0``),
treated implicitly.

The same closure written as a ghost-node reflection gives the discrete
clamped biharmonic ``K = L^2 + T`` used for the Stokes eigenproblem, so the
stepper and the eigenbasis share one spatial operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dstn, idstn

from .errors import InvalidArgument, NumericalError
from .geometry import (Grid, ScalarField, VectorField, face_gradient_sq, grad_x_array,
                       grad_y_array, laplacian_array)
from .spectral import laplace_symbol

DENSE_EIG_MAX_NODES = 1600
MAX_STOKES_MODES = 256
FLOW_SOLVER_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class FlowState:
    psi: ScalarField
    omega: ScalarField
    u: VectorField
    t: float = 0.0

    @classmethod
    def rest(cls, grid: Grid, t: float = 0.0) -> "FlowState":
        z = grid.zeros()
        return cls(z, z, VectorField.zeros(grid), t)

    @classmethod
    def from_streamfunction(cls, psi: ScalarField, t: float = 0.0) -> "FlowState":
        g = psi.grid
        omega = ScalarField(g, laplacian_array(psi.values, g.hx, g.hy))
        return cls(psi, omega, velocity_from_streamfunction(psi), t)


@dataclass(frozen=True, eq=False)
class StokesEigenpair:
    eta: float
    psi: ScalarField
    w: VectorField


def buoyancy_curl(rho: ScalarField, g: float) -> ScalarField:
    """``curl(g rho e_y) = g d_x rho`` (centered)."""
    grid = rho.grid
    return ScalarField(grid, g * grad_x_array(rho.values, grid.hx))


def velocity_from_streamfunction(psi: ScalarField) -> VectorField:
    g = psi.grid
    return VectorField(g, -grad_y_array(psi.values, g.hy), grad_x_array(psi.values, g.hx))


def wall_vorticity(psi: np.ndarray, grid: Grid) -> tuple[np.ndarray, ...]:
    """Thom values on the (left, right, bottom, top) walls."""
    hx2, hy2 = grid.hx**2, grid.hy**2
    return (2.0 * psi[0, :] / hx2, 2.0 * psi[-1, :] / hx2,
            2.0 * psi[:, 0] / hy2, 2.0 * psi[:, -1] / hy2)


def kinetic_energy(psi: np.ndarray, grid: Grid) -> float:
    """``||u||^2`` with velocities on cell faces (one-sided differences of psi)."""
    return face_gradient_sq(psi, grid.hx, grid.hy)


def enstrophy(psi: np.ndarray, grid: Grid) -> float:
    """``||grad u||^2 = ||omega||^2`` by the trapezoid rule, Thom values on the walls.

    Equals ``hx*hy * psi . K psi`` for the clamped operator ``K``.
    """
    hx, hy = grid.hx, grid.hy
    om = laplacian_array(psi, hx, hy)
    left, right, bottom, top = wall_vorticity(psi, grid)
    wall = 0.5 * hx * hy * (np.sum(left**2) + np.sum(right**2) + np.sum(bottom**2) + np.sum(top**2))
    return float(hx * hy * np.sum(om * om) + wall)


def buoyancy_power(rho: np.ndarray, psi: np.ndarray, grid: Grid) -> float:
    """``int rho u_y`` with the centered ``u_y = d_x psi``."""
    return float(grid.cell_area * np.sum(rho * grad_x_array(psi, grid.hx)))


def energy_balance_defect(psi_old: np.ndarray, psi_new: np.ndarray, rho: np.ndarray | None,
                          g: float, dt: float, grid: Grid) -> float:
    """One-step residual of ``1/2 d/dt ||u||^2 + ||grad u||^2 = g int rho u_y``.

    Uses the stepper's own functionals, so the value is exactly
    ``-1/2 ||u_new - u_old||^2`` (up to the solver tolerance): first order in dt.
    """
    power = 0.0 if rho is None or g == 0.0 else buoyancy_power(rho, psi_new, grid)
    return (0.5 * (kinetic_energy(psi_new, grid) - kinetic_energy(psi_old, grid))
            + dt * enstrophy(psi_new, grid) - dt * g * power)


@lru_cache(maxsize=8)
def _flow_operators(grid: Grid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    Dx = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(nx, nx)) / hx**2
    Dy = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(ny, ny)) / hy**2
    L = (sp.kron(Dx, sp.identity(ny)) + sp.kron(sp.identity(nx), Dy)).tocsr()
    return L, clamped_biharmonic(grid)


def flow_step_arrays(psi: np.ndarray, rho: np.ndarray | None, g: float, dt: float,
                     grid: Grid, rtol: float = FLOW_SOLVER_RTOL) -> np.ndarray:
    """Solve ``(-L + dt K) psi_new = -L psi - dt g D_x rho`` for ``psi_new``.

    PCG preconditioned by the DST-diagonal ``-L + dt L^2``; ``K - L^2`` only
    lives on the near-wall nodes, so few iterations are needed.
    """
    L, K = _flow_operators(grid)
    A = -L + dt * K
    rhs = -(L @ psi.ravel())
    if rho is not None and g != 0.0:
        rhs -= dt * g * grad_x_array(rho, grid.hx).ravel()
    lam = laplace_symbol(grid, "discrete")
    sym = lam + dt * lam**2
    shape = grid.shape
    prec = spla.LinearOperator(A.shape, dtype=float,
                               matvec=lambda r: idstn(dstn(r.reshape(shape), type=1) / sym, type=1).ravel())
    x, info = spla.cg(A, rhs, x0=psi.ravel(), M=prec, rtol=rtol, atol=0.0, maxiter=2000)
    if info != 0:
        raise NumericalError(f"flow solve did not converge (info={info}, dt={dt:.3e})")
    return x.reshape(shape)


def step_flow(s: FlowState, rho: ScalarField | None, g: float, dt: float) -> FlowState:
    """One backward-Euler step of ``d_t omega = Delta omega + g d_x rho`` with no-slip walls.

    The Thom wall closure is implicit, which makes the step unconditionally
    stable: at ``g = 0`` the discrete kinetic energy never increases.
    """
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt}")
    grid = s.psi.grid
    psi = flow_step_arrays(s.psi.values, None if rho is None else rho.values, g, dt, grid)
    if not np.all(np.isfinite(psi)):
        raise NumericalError("flow step produced non-finite values", state=s)
    return FlowState.from_streamfunction(ScalarField(grid, psi), s.t + dt)


# -- Stokes eigenbasis --------------------------------------------------------

@lru_cache(maxsize=8)
def _sine_matrices(n: int, L: float) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal DST-I matrix and the matching cosine-derivative evaluation matrix."""
    idx = np.arange(1, n + 1)
    arg = np.pi * np.outer(idx, idx) / (n + 1)
    S = np.sqrt(2.0 / (n + 1)) * np.sin(arg)
    dS = np.sqrt(2.0 / (n + 1)) * np.cos(arg) * (np.pi * idx / L)[None, :]
    return S, dS


def spectral_perp_grad(psi: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """``(-d_y psi, d_x psi)`` from the sine interpolant of the nodal values."""
    Sx, dSx = _sine_matrices(grid.nx, grid.Lx)
    Sy, dSy = _sine_matrices(grid.ny, grid.Ly)
    c = Sx.T @ psi @ Sy
    return -(Sx @ c @ dSy.T), dSx @ c @ Sy.T


def clamped_biharmonic(grid: Grid) -> sp.csr_matrix:
    """Sparse ``K = L^2 + T`` on interior nodes, flattened in C order."""
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    Dx = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(nx, nx)) / hx**2
    Dy = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(ny, ny)) / hy**2
    L = sp.kron(Dx, sp.identity(ny)) + sp.kron(sp.identity(nx), Dy)
    t = np.zeros((nx, ny))
    t[0, :] += 2.0 / hx**4
    t[-1, :] += 2.0 / hx**4
    t[:, 0] += 2.0 / hy**4
    t[:, -1] += 2.0 / hy**4
    return (L @ L + sp.diags(t.ravel())).tocsr()


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec) > 0.5 * np.max(np.abs(vec))))
    return vec if vec[k] > 0 else -vec


def _canonical_clusters(etas: np.ndarray, coeffs: np.ndarray, rtol: float = 1e-7) -> np.ndarray:
    """Deterministic basis inside each cluster of (numerically) equal eigenvalues.

    The cluster columns are reduced so that the leading pivot rows form an
    identity block, then re-orthonormalized in pivot order.
    """
    out = coeffs.copy()
    start = 0
    m = len(etas)
    while start < m:
        stop = start + 1
        while stop < m and etas[stop] - etas[start] <= rtol * etas[start]:
            stop += 1
        if stop - start > 1:
            block = coeffs[:, start:stop]
            _, _, piv = scipy.linalg.qr(block.T, pivoting=True)
            rows = np.sort(piv[: stop - start])
            reduced = block @ np.linalg.inv(block[rows, :])
            q, _ = np.linalg.qr(reduced)
            out[:, start:stop] = q
        for j in range(start, stop):
            out[:, j] = _canonical_sign(out[:, j])
        start = stop
    return out


def velocity_coefficients(psi: np.ndarray, grid: Grid) -> np.ndarray:
    """Orthonormal sine coefficients of ``psi`` weighted so that their dot
    products are the exact L2 inner products of the spectral velocities."""
    lam = laplace_symbol(grid, "continuous")
    return np.sqrt(lam * grid.cell_area) * dstn(psi, type=1, norm="ortho")


def spectral_velocity_inner(psi_a: np.ndarray, psi_b: np.ndarray, grid: Grid) -> float:
    """``(grad_perp psi_a, grad_perp psi_b)_{L2}`` for the sine interpolants."""
    return float(np.sum(velocity_coefficients(psi_a, grid) * velocity_coefficients(psi_b, grid)))


def closed_grid_velocity(psi: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Spectral velocity sampled on all ``(nx+2) x (ny+2)`` nodes, walls included."""
    def mats(n, L):
        idx = np.arange(1, n + 1)
        pts = np.arange(0, n + 2)
        arg = np.pi * np.outer(pts, idx) / (n + 1)
        c = np.sqrt(2.0 / (n + 1))
        return c * np.sin(arg), c * np.cos(arg) * (np.pi * idx / L)[None, :]
    Sx, _ = _sine_matrices(grid.nx, grid.Lx)
    Sy, _ = _sine_matrices(grid.ny, grid.Ly)
    coef = Sx.T @ psi @ Sy
    Ex, dEx = mats(grid.nx, grid.Lx)
    Ey, dEy = mats(grid.ny, grid.Ly)
    return -(Ex @ coef @ dEy.T), dEx @ coef @ Ey.T


def stokes_eigenbasis(grid: Grid, m: int, method: str = "auto") -> list[StokesEigenpair]:
    """First ``m`` Stokes eigenpairs from ``K psi = eta M psi`` with clamped walls.

    ``M`` is the exact L2 Gram of the spectral velocities
    ``w = (-d_y psi, d_x psi)`` built from the sine interpolant of ``psi``
    (diagonal in sine space), so the ``w_j`` are orthonormal and exactly
    divergence-free. Small grids use a dense symmetric solve, larger ones
    ARPACK in shift-invert form.
    """
    N = grid.nx * grid.ny
    if m < 1 or m > min(N, MAX_STOKES_MODES):
        raise InvalidArgument(f"m must lie in [1, {min(N, MAX_STOKES_MODES)}], got {m}")
    if method == "auto":
        method = "dense" if N <= DENSE_EIG_MAX_NODES else "arpack"
    Sx, _ = _sine_matrices(grid.nx, grid.Lx)
    Sy, _ = _sine_matrices(grid.ny, grid.Ly)
    lam = laplace_symbol(grid, "continuous").ravel()
    K = clamped_biharmonic(grid)

    def to_coeff(v):
        return (Sx.T @ v.reshape(grid.shape) @ Sy).ravel()

    def to_nodal(c):
        return (Sx @ c.reshape(grid.shape) @ Sy.T).ravel()

    try:
        if method == "dense":
            S = np.kron(Sx, Sy)
            H = (S.T @ K.toarray() @ S) / np.sqrt(np.outer(lam, lam))
            etas, phi = scipy.linalg.eigh(H, subset_by_index=[0, m - 1])
        elif method == "arpack":
            solve = spla.factorized(K.tocsc())
            root = np.sqrt(lam)

            def apply_inv(x):
                x = np.asarray(x).ravel()
                return root * to_coeff(solve(to_nodal(root * x)))

            op = spla.LinearOperator((N, N), matvec=apply_inv, dtype=float)
            v0 = np.ones(N) / np.sqrt(N)
            vals, phi = spla.eigsh(op, k=m, which="LA", v0=v0, tol=1e-14,
                                   ncv=min(N, max(2 * m + 1, m + 32)))
            order = np.argsort(-vals)
            etas, phi = 1.0 / vals[order], phi[:, order]
        else:
            raise InvalidArgument(f"unknown eigen method {method!r}")
    except (np.linalg.LinAlgError, spla.ArpackError, spla.ArpackNoConvergence) as exc:
        raise NumericalError(f"Stokes eigen-solve failed on {grid.nx}x{grid.ny}, m={m}: {exc}") from exc

    if not np.all(etas > 0):
        raise NumericalError(f"non-positive Stokes eigenvalue {etas.min():.3e}; K is ill-conditioned")
    # columns of phi are sqrt(lam * cell_area)-weighted sine coefficients of psi
    phi = _canonical_clusters(etas, phi)
    pairs = []
    for j in range(m):
        psi = to_nodal(phi[:, j] / np.sqrt(lam * grid.cell_area)).reshape(grid.shape)
        ux, uy = spectral_perp_grad(psi, grid)
        pairs.append(StokesEigenpair(float(etas[j]), ScalarField(grid, psi), VectorField(grid, ux, uy)))
    return pairs
