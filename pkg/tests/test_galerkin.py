import math

import numpy as np
import pytest
from scipy.integrate import dblquad

from ksstokes.config import RunConfig
from ksstokes.errors import BlowupSuspected, InvalidArgument
from ksstokes.galerkin import (GalerkinState, assemble_tensors, build_basis, compare_backends,
                               galerkin_rhs, integrate_galerkin, project_initial_data, read_tensors,
                               reconstruct, reconstruct_streamfunction, stable_dt, write_tensors)
from ksstokes.geometry import build_grid
from ksstokes.simulate import simulate
from ksstokes.spectral import laplace_mode


@pytest.fixture(scope="module")
def small():
    basis = build_basis(build_grid(math.pi, math.pi, 31, 31), 12, 10)
    return basis, assemble_tensors(basis)


def random_state(T, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return GalerkinState(scale * rng.standard_normal(T.n), scale * rng.standard_normal(T.m))


def test_advection_tensor_antisymmetry(small):
    _, T = small
    assert np.abs(T.C + T.C.transpose(2, 1, 0)).max() <= 1e-8
    assert np.abs(np.einsum("ljl->lj", T.C)).max() <= 1e-8


def test_d111_matches_quadrature(small):
    _, T = small
    # (-Delta)^{-1} v1 = v1 / 2, so div(v1 grad c1) = (|grad v1|^2 - 2 v1^2) / 2
    def f(y, x):
        a = 2 / math.pi
        v = a * math.sin(x) * math.sin(y)
        gx, gy = a * math.cos(x) * math.sin(y), a * math.sin(x) * math.cos(y)
        return 0.5 * (gx * gx + gy * gy - 2 * v * v) * v
    ref, _ = dblquad(f, 0, math.pi, 0, math.pi, epsabs=1e-13, epsrel=1e-13)
    assert T.D[0, 0, 0] == pytest.approx(ref, rel=1e-6)
    assert ref == pytest.approx(-64 / (9 * math.pi**3), rel=1e-10)


def test_rhs_zero_and_single_mode(small):
    _, T = small
    dr, du = galerkin_rhs(GalerkinState(np.zeros(T.n), np.zeros(T.m)), T, 3.0)
    assert not dr.any() and not du.any()
    r = np.zeros(T.n)
    r[2] = 0.7
    dr, du = galerkin_rhs(GalerkinState(r, np.zeros(T.m)), T, 0.0)
    # projection of -div(rho grad c) onto v_l
    assert dr[2] == pytest.approx(-T.lam[2] * 0.7 - T.D[2, 2, 2] * 0.49, rel=1e-14)
    with pytest.raises(InvalidArgument):
        galerkin_rhs(GalerkinState(np.zeros(T.n + 1), np.zeros(T.m)), T, 0.0)


def test_modal_energy_identities(small):
    _, T = small
    for seed in range(20):
        s = random_state(T, seed)
        dr, du = galerkin_rhs(s, T, 5.0, chemotaxis=False)
        # advection conserves sum rho_l^2 up to the diffusion term
        assert np.dot(s.rho_modes, dr) == pytest.approx(-np.dot(T.lam, s.rho_modes**2), rel=1e-12)
        expect = -np.dot(T.eta, s.u_modes**2) + 5.0 * s.rho_modes @ T.B @ s.u_modes
        assert np.dot(s.u_modes, du) == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_rk4_order_on_linear_system(small):
    _, T = small
    s0 = random_state(T, 1)
    t_end = 0.2
    exact = np.exp(-T.lam * t_end) * s0.rho_modes
    errs = []
    for dt in (0.02, 0.01, 0.005):
        s = integrate_galerkin(s0, T, 0.0, t_end, dt, chemotaxis=False, advection=False)[-1]
        errs.append(np.abs(s.rho_modes - exact).max())
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 3.8


def test_frozen_density_steady_state(small):
    _, T = small
    s0 = random_state(T, 2)
    t_end = 50 / T.eta[0]
    dt = stable_dt(T, 1.0)
    s = integrate_galerkin(s0, T, 4.0, t_end, dt, stride=10**6, freeze_density=True)[-1]
    steady = 4.0 * (T.B.T @ s0.rho_modes) / T.eta
    assert np.abs(s.u_modes - steady).max() <= 1e-8
    assert np.array_equal(s.rho_modes, s0.rho_modes)


def test_small_data_decays(small):
    _, T = small
    s0 = random_state(T, 3, scale=0.05)
    traj = integrate_galerkin(s0, T, 0.0, 0.5, stable_dt(T, 0.01), stride=5)
    norms = [np.linalg.norm(s.rho_modes) for s in traj]
    assert norms[-1] < norms[0]


def test_integrate_trajectory_sampling(small):
    _, T = small
    traj = integrate_galerkin(random_state(T, 4, 0.1), T, 1.0, 0.1, 0.003, stride=5)
    assert traj[0].t == 0.0 and traj[-1].t == 0.1
    with pytest.raises(InvalidArgument):
        integrate_galerkin(traj[0], T, 1.0, 0.1, 0.0)


def test_overflow_raises_with_last_state(small):
    _, T = small
    s0 = GalerkinState(np.full(T.n, 1e4), np.zeros(T.m))
    with pytest.raises(BlowupSuspected) as info:
        integrate_galerkin(s0, T, 0.0, 1.0, 1e-3)
    last = info.value.state
    assert isinstance(last, GalerkinState) and np.all(np.isfinite(last.rho_modes))


def test_projection_examples(small):
    basis, _ = small
    grid = basis.grid
    v2 = basis.laplace[1].v
    s = project_initial_data(v2, None, basis)
    e2 = np.zeros(basis.n)
    e2[1] = 1.0
    assert np.abs(s.rho_modes - e2).max() <= 1e-10
    s = project_initial_data(grid.zeros(), basis.stokes[0].psi, basis)
    e1 = np.zeros(basis.m)
    e1[0] = 1.0
    assert np.abs(s.u_modes - e1).max() <= 1e-6
    s = project_initial_data(grid.zeros(), grid.zeros(), basis)
    assert not s.rho_modes.any() and not s.u_modes.any()
    with pytest.raises(InvalidArgument):
        project_initial_data(build_grid(1, 1, 7, 7).zeros(), None, basis)


def test_projection_round_trip(small):
    basis, T = small
    s = random_state(T, 5)
    rho = reconstruct(s, basis)[0]
    psi = reconstruct_streamfunction(s, basis)
    back = project_initial_data(rho, psi, basis)
    assert np.abs(back.rho_modes - s.rho_modes).max() <= 1e-8
    assert np.abs(back.u_modes - s.u_modes).max() <= 1e-8
    zero_rho, zero_u = reconstruct(GalerkinState(np.zeros(T.n), np.zeros(T.m)), basis)
    assert not zero_rho.values.any() and not zero_u.ux.any()
    one = np.zeros(T.n)
    one[3] = 1.0
    single = reconstruct(GalerkinState(one, np.zeros(T.m)), basis)[0]
    assert np.array_equal(single.values, basis.laplace[3].v.values)


def test_tensor_file_round_trip(small, tmp_path):
    basis, T = small
    write_tensors(tmp_path / "t.galten", T, basis.grid)
    U, meta = read_tensors(tmp_path / "t.galten")
    for a, b in ((T.C, U.C), (T.D, U.D), (T.B, U.B), (T.lam, U.lam), (T.eta, U.eta)):
        assert np.array_equal(a, b)
    assert meta == (31, 31, math.pi, math.pi)
    raw = (tmp_path / "t.galten").read_bytes()
    (tmp_path / "cut.galten").write_bytes(raw[:-8])
    with pytest.raises(InvalidArgument):
        read_tensors(tmp_path / "cut.galten")
    (tmp_path / "bad.galten").write_bytes(b"NOPE\n")
    with pytest.raises(InvalidArgument):
        read_tensors(tmp_path / "bad.galten")


def test_heat_only_backends_match_analytic():
    cfg = RunConfig(nx=63, ny=63, density="laplace_mode", chemotaxis=False, advection=False,
                    t_end=0.1, dt_target=1e-4, snapshot_dt=0.05, n_modes=4, m_modes=4)
    exact = math.exp(-2 * 0.1)
    for backend in ("fd", "galerkin"):
        assert simulate(cfg.replace(backend=backend)).records[-1].l2_rho == pytest.approx(exact, rel=0.01)
    (rep,) = compare_backends(cfg)
    assert rep["rel_l2_rho"] <= 0.005


def test_zero_data_backends_identical():
    cfg = RunConfig(nx=15, ny=15, density="zero", t_end=0.01, snapshot_dt=5e-3, n_modes=4, m_modes=4)
    (rep,) = compare_backends(cfg)
    assert rep["rel_l2_rho"] == 0.0 and rep["rel_l2_u"] == 0.0
