import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksstokes.errors import InvalidArgument
from ksstokes.geometry import ScalarField, build_grid, divergence_array
from ksstokes.spectral import lambda_continuous
from ksstokes.stokes import (FlowState, buoyancy_curl, buoyancy_power, clamped_biharmonic,
                             closed_grid_velocity, energy_balance_defect, enstrophy, kinetic_energy,
                             spectral_velocity_inner, step_flow, stokes_eigenbasis,
                             velocity_from_streamfunction)


def square(n):
    return build_grid(math.pi, math.pi, n, n)


def test_buoyancy_curl():
    g = square(63)
    flat = g.sample(lambda x, y: np.sin(y) * (1 + 0 * x))
    # a y-only profile is not zero on the x-walls, so only the columns away from them are exact
    assert np.all(buoyancy_curl(flat, 3.0).values[1:-1] == 0)
    rho = g.sample(lambda x, y: np.sin(x) * np.sin(y))
    assert np.all(buoyancy_curl(rho, 0.0).values == 0)
    errs = []
    for n in (31, 63):
        g = square(n)
        X, Y = g.mesh()
        rho = g.sample(lambda x, y: np.sin(x) * np.sin(y))
        errs.append(np.abs(buoyancy_curl(rho, 2.0).values - 2 * np.cos(X) * np.sin(Y)).max())
    assert math.log2(errs[0] / errs[1]) > 1.9


def test_velocity_from_streamfunction():
    g = square(127)
    u = velocity_from_streamfunction(g.zeros())
    assert not u.ux.any() and not u.uy.any()
    X, Y = g.mesh()
    u = velocity_from_streamfunction(g.sample(lambda x, y: np.sin(x) * np.sin(y)))
    assert np.abs(u.ux + np.sin(X) * np.cos(Y)).max() < 2e-4
    assert np.abs(u.uy - np.cos(X) * np.sin(Y)).max() < 2e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_discrete_divergence_free(seed):
    g = build_grid(1.0, 2.0, 17, 29)
    psi = ScalarField(g, np.random.default_rng(seed).standard_normal(g.shape))
    u = velocity_from_streamfunction(psi)
    div = divergence_array(u.ux, u.uy, g.hx, g.hy)
    # commuting stencils cancel away from the wall rows, where the zero padding of u differs
    assert np.abs(div[1:-1, 1:-1]).max() < 1e-10 * np.abs(psi.values).max() / (g.hx * g.hy)


def test_zero_force_invariance():
    g = square(31)
    s = FlowState.rest(g)
    for _ in range(5):
        s = step_flow(s, g.zeros(), 5.0, 0.1)
        s = step_flow(s, None, 0.0, 0.1)
    assert not s.psi.values.any() and not s.u.ux.any()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-4, 1e-2, 1.0, 100.0]))
def test_free_decay_energy_nonincreasing(seed, dt):
    g = build_grid(math.pi, 2.0, 23, 15)
    psi = ScalarField(g, np.random.default_rng(seed).standard_normal(g.shape))
    s = FlowState.from_streamfunction(psi)
    e = kinetic_energy(s.psi.values, g)
    for _ in range(3):
        s = step_flow(s, None, 0.0, dt)
        e_new = kinetic_energy(s.psi.values, g)
        assert e_new <= e * (1 + 1e-12)
        e = e_new


def test_step_flow_rejects_bad_dt():
    g = square(7)
    with pytest.raises(InvalidArgument):
        step_flow(FlowState.rest(g), None, 0.0, 0.0)


def test_energy_defect_identity():
    g = square(31)
    rng = np.random.default_rng(5)
    psi0 = rng.standard_normal(g.shape) * 1e-2
    rho = np.abs(rng.standard_normal(g.shape))
    s = step_flow(FlowState.from_streamfunction(ScalarField(g, psi0)), ScalarField(g, rho), 7.0, 1e-3)
    d = energy_balance_defect(psi0, s.psi.values, rho, 7.0, 1e-3, g)
    assert d == pytest.approx(-0.5 * kinetic_energy(s.psi.values - psi0, g), rel=1e-8)


def test_enstrophy_matches_clamped_operator():
    g = build_grid(1.0, 1.5, 11, 13)
    psi = np.random.default_rng(2).standard_normal(g.shape)
    K = clamped_biharmonic(g)
    assert enstrophy(psi, g) == pytest.approx(g.cell_area * psi.ravel() @ (K @ psi.ravel()), rel=1e-12)


def test_free_decay_rate_matches_eta1():
    g = square(47)
    (p,) = stokes_eigenbasis(g, 1)
    s = FlowState.from_streamfunction(p.psi)
    dt, ts, logs = 5e-4, [], []
    for k in range(400):
        s = step_flow(s, None, 0.0, dt)
        if k % 40 == 39:
            ts.append(s.t)
            logs.append(0.5 * math.log(kinetic_energy(s.psi.values, g)))
    rate = -np.polyfit(ts, logs, 1)[0]
    assert rate == pytest.approx(p.eta, rel=0.03)


def test_frozen_density_steady_state_identity():
    g = square(31)
    rho = g.sample(lambda x, y: np.exp(-((x - 1.2) ** 2 + (y - 1.9) ** 2)) * np.sin(x) * np.sin(y))
    s = FlowState.rest(g)
    while s.t < 20.0 - 1e-9:
        prev = s.psi.values
        s = step_flow(s, rho, 50.0, 0.1)
    change = np.abs(s.psi.values - prev).max() / np.abs(s.psi.values).max()
    assert change < 1e-8
    ens = enstrophy(s.psi.values, g)
    power = 50.0 * buoyancy_power(rho.values, s.psi.values, g)
    assert ens > 0 and ens == pytest.approx(power, rel=0.02)


def test_eta1_cauchy_first_order():
    etas = [stokes_eigenbasis(square(n), 1)[0].eta for n in (31, 47, 63)]
    d1, d2 = abs(etas[1] - etas[0]), abs(etas[2] - etas[1])
    # h ratios 48/32 then 64/48: order from d1/d2 = (h1^p - h2^p)/(h2^p - h3^p)
    h = [math.pi / 32, math.pi / 48, math.pi / 64]
    p = 1.0
    assert d1 / d2 >= (h[0] ** p - h[1] ** p) / (h[1] ** p - h[2] ** p)


def test_eigenbasis_properties():
    g = square(31)
    m = 12
    pairs = stokes_eigenbasis(g, m)
    etas = [p.eta for p in pairs]
    assert etas == sorted(etas)
    lam1 = lambda_continuous(g.Lx, g.Ly)
    assert min(etas) > lam1
    gram = np.array([[spectral_velocity_inner(a.psi.values, b.psi.values, g) for b in pairs] for a in pairs])
    assert np.abs(gram - np.eye(m)).max() < 1e-8
    # independent oracle: trapezoid rule on the closed grid, exact for these trig polynomials
    vel = [closed_grid_velocity(p.psi.values, g) for p in pairs]
    wts = np.ones((g.nx + 2, g.ny + 2))
    wts[[0, -1], :] *= 0.5
    wts[:, [0, -1]] *= 0.5
    trap = np.array([[g.cell_area * np.sum(wts * (a[0] * b[0] + a[1] * b[1])) for b in vel] for a in vel])
    assert np.abs(trap - np.eye(m)).max() < 1e-8
    # no penetration: the normal component of the spectral velocity vanishes on the walls
    ux, uy = vel[0]
    assert np.abs(ux[[0, -1], :]).max() < 1e-12 and np.abs(uy[:, [0, -1]]).max() < 1e-12
    # Rayleigh quotient of the stored fields reproduces eta
    K = clamped_biharmonic(g)
    for p in pairs:
        v = p.psi.values.ravel()
        assert g.cell_area * v @ (K @ v) == pytest.approx(p.eta, rel=1e-8)


def test_dense_and_arpack_agree():
    g = square(31)
    a = stokes_eigenbasis(g, 6, method="dense")
    b = stokes_eigenbasis(g, 6, method="arpack")
    assert np.allclose([p.eta for p in a], [p.eta for p in b], rtol=1e-9)
    for p, q in zip(a, b):
        overlap = abs(spectral_velocity_inner(p.psi.values, q.psi.values, g))
        assert overlap == pytest.approx(1.0, abs=1e-6)


def test_eigenbasis_rejects_bad_m():
    g = square(7)
    with pytest.raises(InvalidArgument):
        stokes_eigenbasis(g, 0)
    with pytest.raises(InvalidArgument):
        stokes_eigenbasis(g, 50)
