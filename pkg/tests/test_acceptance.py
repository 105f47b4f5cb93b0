"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import time

import numpy as np
import pytest

from msgas import cli_io
from msgas import conservation as cons
from msgas import forms as F
from msgas.eos_thermo import EquationOfState, check_first_law, enthalpy, invert_pressure, temperature
from msgas.integrator import Grid, init_preset, run_steps
from msgas.msymp_core import Jet, ddw_residual, legendre_check, ms_residual

from _support import EOS, MS, history, random_states


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] {label}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return emit


def contraction(values):
    values = np.asarray(values, dtype=float)
    return values[:-1] / values[1:]


def test_c1_first_law(report):
    rng = np.random.default_rng(1)
    rho = np.exp(rng.uniform(np.log(0.05), np.log(20.0), 1000))
    S = rng.uniform(-2.0, 2.0, 1000)
    t0 = time.perf_counter()
    res = check_first_law(EOS, rho, S)
    elapsed = time.perf_counter() - t0
    p = invert_pressure(EOS, rho, S)
    rel = max(np.max(res.temperature / (rho * temperature(EOS, p, S))),
              np.max(res.enthalpy / enthalpy(EOS, p, S)), np.max(res.pressure / p))
    ok = rel <= 1e-12 and elapsed < 1.0
    assert report("1 first-law identities", ok, f"max rel {rel:.2e}, {elapsed:.3f} s")


def test_c2_structure_equivalence(report):
    rng = np.random.default_rng(2)
    jet = Jet(random_states(rng, 100), rng.normal(size=(100, 5)), rng.normal(size=(100, 5)))
    rows = ms_residual(MS, jet)
    div_x, div_s = ddw_residual(MS, jet)
    ddw = max(np.max(np.abs(div_x + rows[:, 0])), np.max(np.abs(div_s + rows[:, 3])))
    leg = max(np.max(legendre_check(MS, jet)), np.max(legendre_check(MS, jet, True)))
    ok = ddw <= 1e-14 and leg <= 1e-12
    assert report("2 structure equivalence", ok, f"ddw {ddw:.2e}, legendre {leg:.2e}")


def test_c3_box_convergence(report):
    t0 = time.perf_counter()
    cfg = cli_io.RunConfig(grid=cli_io.GridSection(n_cells=32),
                           initial=cli_io.InitialSection(amplitude=1e-6),
                           time=cli_io.TimeSection(cfl=0.5, t_end=0.25),
                           diagnostics=cli_io.DiagnosticsSection(()))
    order = cli_io.convergence_study(cfg, 3).report["table"]["order"]
    elapsed = time.perf_counter() - t0
    ok = min(order) >= 1.9 and elapsed < 60.0
    assert report("3 box-scheme order", ok, f"orders {np.round(order, 3)}, {elapsed:.1f} s")


def test_c4_conservation_laws_at_scheme_order(report):
    ns = (32, 64, 128)
    acoustic = [history("acoustic_wave", n, 1e-2) for n in ns]
    bump = [history("entropy_bump", n, 0.5) for n in ns]
    ratios = {
        "energy": contraction([cons.energy_law(h).norms().l2 for h in acoustic]),
        "m_translation": contraction([cons.m_translation_law(h).norms().l2 for h in bump]),
        "symplecticity": contraction([cons.symplecticity_law(h).norms().l2 for h in acoustic]),
        "momentum_eulerian": contraction([cons.momentum_law_eulerian(h).norms().l2
                                          for h in acoustic]),
    }
    ok = all(np.all(r >= 3.5) for r in ratios.values())
    detail = ", ".join(f"{k} {np.round(v, 2)}" for k, v in ratios.items())
    assert report("4 conservation-law contraction", ok, detail)


def test_c5_noether_agreement(report):
    worst = 0.0
    for preset, amp in (("acoustic_wave", 1e-2), ("entropy_bump", 0.5)):
        h = history(preset, 64, amp)
        n_t = -cons.noether_law(cons.NoetherGenerator(v_t=1.0), h)
        n_m = -cons.noether_law(cons.NoetherGenerator(v_m=1.0), h)
        n_x = cons.noether_law(cons.NoetherGenerator(v_x=1.0), h)
        e, m = cons.energy_law(h), cons.m_translation_law(h)
        worst = max(worst, np.max(np.abs(n_t.density - e.density)),
                    np.max(np.abs(n_t.flux - e.flux)), np.max(np.abs(n_m.density - m.density)),
                    np.max(np.abs(n_m.flux - m.flux)),
                    np.max(np.abs(n_x.density - h.component(1))),
                    np.max(np.abs(n_x.flux - h.component(2))))
    assert report("5 Noether agreement", worst <= 1e-15, f"max {worst:.2e}")


def test_c6_symplecticity_identities(report):
    ns = (32, 64, 128)
    dens, flux, comp, pull = [], [], [], 0.0
    for n in ns:
        h = history("acoustic_wave", n, 1e-2)
        chk = cons.symplecticity_vs_hamiltonian(h)
        dens.append(np.max(np.abs(chk.density_defect)))
        flux.append(np.max(np.abs(chk.flux_defect)))
        comp.append(np.max(np.abs(cons.compatibility_identity(h))))
        a, b = F.symplecticity_pullback(h, EOS), cons.symplecticity_law(h)
        pull = max(pull, np.max(np.abs(a.density - b.density)), np.max(np.abs(a.flux - b.flux)))
    ratios = [contraction(v) for v in (dens, flux, comp)]
    ok = all(np.all(r >= 3.5) for r in ratios) and pull <= 1e-14
    detail = (f"(D,F) vs (-H_m,H_t) {np.round(ratios[0], 2)}/{np.round(ratios[1], 2)}, "
              f"compatibility {np.round(ratios[2], 2)}, pullback {pull:.1e}")
    assert report("6 symplecticity identities", ok, detail)


def test_c7_forms_suite(report):
    t0 = time.perf_counter()
    worst = {"beta": 0.0, "closure": 0.0, "pullback": 0.0, "potentials": 0.0}
    for gamma in (1.4, 5.0 / 3.0, -1.0):
        eos = EquationOfState(gamma=gamma)
        rng = np.random.default_rng(2024)
        pts = F.sample_points(rng, 1000)
        jet = Jet(random_states(rng, 1000), rng.normal(size=(1000, 5)),
                  rng.normal(size=(1000, 5)))
        worst["beta"] = max(worst["beta"], np.max(F.beta_check(eos, pts)))
        worst["closure"] = max(worst["closure"], np.max(F.ideal_closure_check(eos, pts)))
        worst["pullback"] = max(worst["pullback"], np.max(F.pullback_theta(jet, eos)))
        worst["potentials"] = max(worst["potentials"], max(F.potential_forms_check(eos, pts)))
    elapsed = time.perf_counter() - t0
    ok = (worst["beta"] <= 1e-12 and worst["closure"] <= 1e-10 and worst["pullback"] <= 1e-12
          and worst["potentials"] == 0.0 and elapsed < 10.0)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.2f} s"
    assert report("7 forms suite", ok, detail)


def test_c8_nonlocal_variable_and_entropy(report):
    r_err = [np.max(np.abs(cons.r_nonlocality(history("entropy_bump", n, 0.5))))
             for n in (32, 64, 128)]
    r_ratio = contraction(r_err)
    grid = Grid(64)
    f0 = init_preset("entropy_bump", grid, EOS, amplitude=0.5)
    traj = run_steps(MS, f0, 0.5 * grid.dm / EOS.lagrangian_sound_speed, 1000, keep_every=100)
    s_drift = max(np.max(np.abs(f.S - f0.S)) for f in traj.fields)
    ok = np.all(r_ratio >= 3.5) and s_drift <= 1e-12
    assert report("8 r history and entropy", ok,
                  f"r contraction {np.round(r_ratio, 2)}, S drift {s_drift:.1e}")


def _energy_drift(scheme):
    grid = Grid(64)
    f0 = init_preset("acoustic_wave", grid, EOS, amplitude=1e-3)
    dt = 0.5 * grid.dm / EOS.lagrangian_sound_speed
    traj = run_steps(MS, f0, dt, 1000, scheme=scheme, keep_every=100)
    e = np.array([cons.global_invariants(f, EOS).energy for f in traj.fields])
    return np.abs(e - e[0]) / abs(e[0])


def test_c9_box_energy_drift_bounded(report):
    drift = _energy_drift("box")
    assert report("9a box energy drift", drift.max() <= 1e-6, f"max rel {drift.max():.2e}")


def test_c9_leapfrog_drift_grows_past_box_bound(report):
    drift = _energy_drift("leapfrog")
    grows = bool(np.all(np.diff(drift[1:]) > 0.0))
    ok = grows and drift[-1] > 1e-6
    assert report("9b leapfrog energy drift", ok,
                  f"final rel {drift[-1]:.2e}, monotone {grows}; samples {np.round(drift, 12)}")
