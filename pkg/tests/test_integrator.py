import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msgas.eos_thermo import specific_volume, temperature
from msgas.errors import (CFLViolation, GridMismatch, NewtonDivergence, ResonantWavenumber,
                          StateLeftDomain, UnknownPreset)
from msgas.integrator import (Grid, NewtonParams, _r_update, acoustic_exact, field_from_arrays,
                              init_preset, jets_from_field, lagrangian_jacobian, max_stable_dt,
                              run_steps, step_box, step_leapfrog)
from msgas.msymp_core import ms_residual

from _support import EOS, MS


def acoustic_error(n, amplitude=1e-6, t_end=0.25, scheme="box", cfl=0.5):
    grid = Grid(n)
    f = init_preset("acoustic_wave", grid, EOS, amplitude=amplitude)
    dt0 = cfl * grid.dm / EOS.lagrangian_sound_speed
    steps = int(math.ceil(t_end / dt0))
    f = run_steps(MS, f, t_end / steps, steps, scheme=scheme).fields[-1]
    u, p = acoustic_exact(grid, EOS, amplitude, 2 * np.pi, f.time)
    return math.sqrt(np.sum((f.u - u) ** 2 + (f.p - p) ** 2) * grid.dm)


@pytest.mark.parametrize("scheme", ["box", "leapfrog"])
def test_second_order_convergence(scheme):
    errs = [acoustic_error(n, scheme=scheme) for n in (32, 64, 128)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.9), orders


def test_box_step_zeroes_the_discrete_residual():
    grid = Grid(33)
    f0 = init_preset("isentropic_pulse", grid, EOS, amplitude=0.05)
    f1, rep = step_box(MS, f0, 0.01)
    res = ms_residual(MS, jets_from_field(f0, f1))
    assert np.max(np.abs(res)) <= 1e-12
    assert rep.newton_iters >= 1 and rep.final_newton_residual <= 1e-12
    np.testing.assert_array_equal(f1.S, f0.S)


def test_uniform_rest_stays_at_rest():
    grid = Grid(16)
    f0 = init_preset("uniform_rest", grid, EOS)
    traj = run_steps(MS, f0, 0.01, 20)
    f = traj.fields[-1]
    np.testing.assert_allclose(f.values[:, :4], f0.values[:, :4], atol=1e-14)
    # r integrates -T at the constant reference temperature
    np.testing.assert_allclose(f.r, -temperature(EOS, 1.0, 0.0) * f.time, rtol=1e-13)


def test_presets_satisfy_discrete_constraint():
    grid = Grid(40)
    for name in ("uniform_rest", "acoustic_wave", "entropy_bump", "isentropic_pulse"):
        f = init_preset(name, grid, EOS, amplitude=0.1)
        p_c = 0.5 * (f.p + np.roll(f.p, -1))
        s_c = 0.5 * (f.S + np.roll(f.S, -1))
        np.testing.assert_allclose(f.cell_x_m(), specific_volume(EOS, p_c, s_c), rtol=1e-13)
        assert np.all(f.r == 0.0)


def test_isentropic_pulse_is_right_running():
    grid = Grid(64)
    f = init_preset("isentropic_pulse", grid, EOS, amplitude=0.05)
    a = np.sqrt(1.4 * f.p * specific_volume(EOS, f.p, f.S))
    riemann_minus = f.u - 2.0 * a / 0.4
    assert np.ptp(riemann_minus) <= 1e-13


def test_entropy_bump_is_stationary():
    grid = Grid(32)
    f0 = init_preset("entropy_bump", grid, EOS, amplitude=0.5)
    f = run_steps(MS, f0, 0.02, 10).fields[-1]
    np.testing.assert_allclose(f.u, 0.0, atol=1e-13)
    np.testing.assert_allclose(f.p, 1.0, rtol=1e-13)
    np.testing.assert_allclose(f.x, f0.x, atol=1e-13)


def test_jacobian_and_stable_dt():
    grid = Grid(16)
    f0 = init_preset("acoustic_wave", grid, EOS, amplitude=1e-2)
    f1, _ = step_box(MS, f0, 0.01)
    assert np.all(lagrangian_jacobian(f1, f0) > 0)
    dt = max_stable_dt(f0, EOS, factor=1.0)
    assert dt == pytest.approx(grid.dm / EOS.lagrangian_sound_speed, rel=2e-2)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(4, 40), seed=st.integers(0, 1000))
def test_r_update_inverts_cell_mean(n, seed):
    rhs = np.random.default_rng(seed).normal(size=n)
    d = _r_update(rhs)
    back = 0.5 * (d + np.roll(d, -1))
    if n % 2:
        np.testing.assert_allclose(back, rhs, atol=1e-12)
    else:
        # the alternating part of rhs is invisible to a two-point mean
        saw = (-1.0) ** np.arange(n)
        expect = rhs - saw * (saw @ rhs) / n
        np.testing.assert_allclose(back, expect, atol=1e-12)
        assert abs(saw @ d) <= 1e-10


def test_errors():
    grid = Grid(16)
    with pytest.raises(UnknownPreset):
        init_preset("shock_tube", grid, EOS)
    with pytest.raises(ResonantWavenumber):
        init_preset("acoustic_wave", grid, EOS, amplitude=1e-3, wavenumber=3.0)
    f0 = init_preset("acoustic_wave", grid, EOS, amplitude=1e-3)
    with pytest.raises(CFLViolation):
        step_leapfrog(MS, f0, 1.0)
    with pytest.raises(ValueError):
        step_box(MS, f0, -0.1)
    with pytest.raises(GridMismatch):
        jets_from_field(f0, init_preset("acoustic_wave", Grid(8), EOS))
    with pytest.raises(GridMismatch):
        jets_from_field(f0, f0)
    with pytest.raises(NewtonDivergence):
        step_box(MS, f0, 0.05, NewtonParams(tol=1e-30, max_iter=2))
    strong = init_preset("acoustic_wave", grid, EOS, amplitude=0.6)
    with pytest.raises((StateLeftDomain, NewtonDivergence)):
        run_steps(MS, strong, 0.5, 20)
    with pytest.raises(ValueError):
        Grid(2)


def test_field_from_arrays_shapes():
    grid = Grid(8)
    f = field_from_arrays(grid, EOS, 0.0, 1.0, 0.0)
    assert f.values.shape == (8, 5)
    assert f.x_period == pytest.approx(1.0)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_uniform_rest_needs_at_most_two_newton_iterations():
    f0 = init_preset("uniform_rest", Grid(12), EOS)
    traj = run_steps(MS, f0, 0.3, 5)
    assert max(r.newton_iters for r in traj.reports) <= 2
    lf = step_leapfrog(MS, f0, 0.01)
    np.testing.assert_allclose(lf.values[:, :4], f0.values[:, :4], atol=1e-14)


def test_jets_of_exact_acoustic_pair_match_derivatives():
    amp, k, c = 1e-6, 2 * np.pi, EOS.lagrangian_sound_speed
    errs = []
    for n in (32, 64):
        grid = Grid(n)
        dt = 0.5 * grid.dm / c
        f0 = init_preset("acoustic_wave", grid, EOS, amplitude=amp)
        u1, p1 = acoustic_exact(grid, EOS, amp, k, dt)
        vals = np.array(f0.values)
        vals[:, 1], vals[:, 2] = u1, p1
        jet = jets_from_field(f0, f0.with_values(vals, time=dt))
        mc, tc = grid.m_cells, 0.5 * dt
        u_t = -amp * k * c * np.cos(k * (mc - c * tc))
        u_m = amp * k * np.cos(k * (mc - c * tc))
        errs.append(max(np.max(np.abs(jet.z_t[:, 1] - u_t)), np.max(np.abs(jet.z_m[:, 1] - u_m))))
    assert errs[0] / errs[1] >= 3.5
