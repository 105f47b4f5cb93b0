import numpy as np
import pytest

from msgas import conservation as cons
from msgas.errors import GridMismatch, InsufficientHistory, JacobianCollapse
from msgas.integrator import Grid, init_preset, run_steps

from _support import EOS, MS, history


def contraction(make_law, preset, amplitude, ns=(32, 64, 128)):
    norms = [make_law(history(preset, n, amplitude)).norms().l2 for n in ns]
    return np.array(norms[:-1]) / np.array(norms[1:])


@pytest.mark.parametrize("make_law", [cons.energy_law, cons.symplecticity_law,
                                      cons.m_translation_law, cons.momentum_law_eulerian])
def test_acoustic_laws_converge_at_second_order(make_law):
    assert np.all(contraction(make_law, "acoustic_wave", 1e-2) >= 3.5)


def test_m_translation_on_entropy_bump():
    assert np.all(contraction(cons.m_translation_law, "entropy_bump", 0.5) >= 3.5)


def test_lagrangian_momentum_is_exact_for_the_box_scheme():
    h = history("isentropic_pulse", 32, 0.05)
    assert cons.momentum_law(h).norms().max <= 1e-12
    totals = cons.momentum_law(h).global_integral()
    assert np.ptp(totals) <= 1e-14


def test_noether_currents_reproduce_the_laws():
    h = history("entropy_bump", 32, 0.5, t_end=0.1)
    h2 = history("acoustic_wave", 32, 1e-2, t_end=0.1)
    for hist in (h, h2):
        n_t = cons.noether_law(cons.NoetherGenerator(v_t=1.0), hist)
        n_m = cons.noether_law(cons.NoetherGenerator(v_m=1.0), hist)
        n_x = cons.noether_law(cons.NoetherGenerator(v_x=1.0), hist)
        for noether, law in ((n_t, cons.energy_law(hist)), (n_m, cons.m_translation_law(hist))):
            neg = -noether
            assert np.max(np.abs(neg.density - law.density)) <= 1e-15
            assert np.max(np.abs(neg.flux - law.flux)) <= 1e-15
        np.testing.assert_array_equal(n_x.density, hist.component(1))
        np.testing.assert_array_equal(n_x.flux, hist.component(2))


def test_gauge_terms_shift_the_current():
    h = history("acoustic_wave", 16, 1e-2, t_end=0.05)
    base = cons.noether_law(cons.NoetherGenerator(v_x=1.0), h)
    gauged = cons.noether_law(cons.NoetherGenerator(v_x=1.0, lam0=2.0, lam1=-3.0), h)
    np.testing.assert_allclose(gauged.residual(), base.residual(), atol=1e-12)


def test_uniform_rest_residuals_vanish():
    h = history("uniform_rest", 16, 0.0, t_end=0.1)
    for law in (cons.energy_law(h), cons.m_translation_law(h), cons.symplecticity_law(h)):
        assert law.norms().max <= 1e-12
    assert cons.momentum_law_eulerian(h).norms().max <= 1e-12
    assert np.max(np.abs(cons.r_nonlocality(h))) <= 1e-12
    assert np.max(np.abs(cons.compatibility_identity(h))) <= 1e-12


@pytest.mark.parametrize("preset,amp", [("acoustic_wave", 1e-2), ("entropy_bump", 0.5)])
def test_stencil_order_identities(preset, amp):
    rows = []
    for n in (32, 64, 128):
        h = history(preset, n, amp)
        chk = cons.symplecticity_vs_hamiltonian(h)
        rows.append([np.max(np.abs(chk.density_defect)), np.max(np.abs(chk.flux_defect)),
                     np.max(np.abs(cons.r_nonlocality(h)))])
    rows = np.array(rows)
    for col in rows.T:
        if col[0] > 1e-12:
            assert np.all(col[:-1] / col[1:] >= 3.5)
        else:
            assert np.all(col <= 1e-12)


def test_compatibility_identity_converges():
    vals = [np.max(np.abs(cons.compatibility_identity(history("acoustic_wave", n, 1e-2))))
            for n in (32, 64, 128)]
    assert vals[0] / vals[1] >= 3.5 and vals[1] / vals[2] >= 3.5


def test_eulerian_momentum_matches_mapped_noether_current():
    h = history("acoustic_wave", 32, 1e-2, t_end=0.1)
    mapped = cons.to_eulerian(cons.noether_law(cons.NoetherGenerator(v_x=1.0), h), h)
    direct = cons.momentum_law_eulerian(h)
    np.testing.assert_allclose(mapped.density, direct.density, rtol=1e-14)
    np.testing.assert_allclose(mapped.flux, direct.flux, rtol=1e-14)
    with pytest.raises(ValueError):
        cons.to_eulerian(cons.symplecticity_law(h), h)


def test_x0_form_scales_with_reference_density():
    from msgas.eos_thermo import EquationOfState

    eos = EquationOfState(rho_ref=2.0)
    h = history("acoustic_wave", 32, 1e-2, t_end=0.1, eos=eos)
    r_m = cons.energy_law(h).residual()
    r_x0 = cons.energy_law(h, x0_form=True).residual()
    np.testing.assert_allclose(r_x0, 2.0 * r_m, rtol=1e-9, atol=1e-12)


def test_global_invariants_of_box_run():
    h = history("isentropic_pulse", 64, 0.05, t_end=0.5)
    inv = [cons.global_invariants(f, EOS) for f in h.fields]
    assert max(abs(i.entropy - inv[0].entropy) for i in inv) == 0.0
    assert max(abs(i.momentum - inv[0].momentum) for i in inv) <= 1e-14
    assert max(abs(i.energy - inv[0].energy) for i in inv) <= 1e-5


def test_history_errors():
    grid = Grid(16)
    f0 = init_preset("acoustic_wave", grid, EOS, amplitude=1e-3)
    traj = run_steps(MS, f0, 0.01, 3)
    with pytest.raises(InsufficientHistory):
        cons.History(traj.fields[:1], EOS)
    short = cons.History(traj.fields[:2], EOS)
    with pytest.raises(InsufficientHistory):
        cons.symplecticity_law(short)
    with pytest.raises(InsufficientHistory):
        cons.compatibility_identity(short)
    uneven = [traj.fields[0], traj.fields[1], traj.fields[3]]
    with pytest.raises(GridMismatch):
        cons.History(uneven, EOS)
    with pytest.raises(GridMismatch):
        cons.History([f0, init_preset("acoustic_wave", Grid(8), EOS)], EOS)
    vals = np.array(traj.fields[1].values)
    vals[3, 0] = vals[5, 0]
    folded = traj.fields[1].with_values(vals)
    with pytest.raises(JacobianCollapse):
        cons.energy_law(cons.History([traj.fields[0], folded], EOS))


def test_uniform_rest_eulerian_values():
    h = history("uniform_rest", 16, 0.0, t_end=0.05)
    energy = cons.to_eulerian(cons.energy_law(h), h)
    np.testing.assert_allclose(energy.density, 2.5, rtol=1e-13)
    np.testing.assert_allclose(energy.flux, 0.0, atol=1e-15)
    m_law = cons.to_eulerian(cons.m_translation_law(h), h)
    np.testing.assert_allclose(m_law.density, 0.0, atol=1e-15)
    np.testing.assert_allclose(m_law.flux, 3.5, rtol=1e-13)
    mom = cons.momentum_law_eulerian(h)
    np.testing.assert_allclose(mom.flux, 1.0, rtol=1e-15)
    assert mom.norms().max <= 1e-12 and m_law.norms().max <= 1e-12
