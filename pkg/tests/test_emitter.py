import numpy as np
import pytest
from scipy.integrate import quad

from qdteleport.emitter import (BOHR_MAGNETON_UEV_PER_T, QuantumDotParams, cross_dephasing_for_fidelity,
                                detuning_for_resonance, entangled_pair_state, fss_phase_average,
                                fss_vs_strain, solve_resonance_field, zeeman_energies)
from qdteleport.events.physics import resolve_photons
from qdteleport.interference import HBAR_UEV_PS
from qdteleport.quantum import QuantumInputError, check_density_matrix, concurrence, fidelity


def test_params_validation():
    with pytest.raises(QuantumInputError):
        QuantumDotParams(1.5, lifetime_x=0)
    with pytest.raises(QuantumInputError):
        QuantumDotParams(1.5, fss_min=-1)
    with pytest.raises(QuantumInputError):
        QuantumDotParams(1.5, cross_dephasing=1.2)


def test_fss_vs_strain_examples(fiber_cfg):
    qd2 = fiber_cfg.qd2
    assert fss_vs_strain(qd2, qd2.fss_v0) == pytest.approx(0.3)
    assert fss_vs_strain(QuantumDotParams(1.5), 0.0) == 0.0
    qd = QuantumDotParams(1.5, fss_min=3.0, fss_slope=1.0, fss_v0=0.0)
    assert fss_vs_strain(qd, 4.0) == pytest.approx(5.0, abs=1e-12)


def test_fss_vs_strain_symmetric_and_bounded():
    qd = QuantumDotParams(1.5, fss_min=0.7, fss_slope=1.3, fss_v0=4.0)
    dv = np.linspace(0, 20, 101)
    up, down = fss_vs_strain(qd, 4.0 + dv), fss_vs_strain(qd, 4.0 - dv)
    assert np.all(up >= 0.7)
    assert np.max(np.abs(up - down)) <= 1e-12


def test_zeeman_examples():
    qd = QuantumDotParams(1.5, g_factor=1.5, diamagnetic_coeff=10.0)
    ep, em = zeeman_energies(qd, 0.0)
    assert ep == em == 1.5
    ep, em = zeeman_energies(qd, 2.0)
    assert ((ep + em) / 2 - 1.5) * 1e6 == pytest.approx(40.0, abs=1e-6)
    assert (ep - em) * 1e6 == pytest.approx(1.5 * BOHR_MAGNETON_UEV_PER_T * 2.0, abs=1e-6)
    assert (ep - em) * 1e6 == pytest.approx(173.64, abs=1e-6)
    with pytest.raises(QuantumInputError):
        zeeman_energies(qd, -1.0)


def test_solve_resonance_examples(fiber_cfg):
    qd = QuantumDotParams(1.5, g_factor=1.0, diamagnetic_coeff=5.0)
    assert solve_resonance_field(qd, 1.5, "plus") == 0.0
    # the plus branch only rises; a target below the zero-field energy is unreachable
    assert solve_resonance_field(qd, 1.5 - 1e-4, "plus") is None
    assert solve_resonance_field(qd, 1.5 + 1.0, "plus") is None
    b = solve_resonance_field(fiber_cfg.qd1, fiber_cfg.qd2.exciton_energy, "plus")
    assert b == pytest.approx(0.9, abs=1e-3)
    assert (detuning_for_resonance(fiber_cfg.qd1, b) - fiber_cfg.qd2.exciton_energy) * 1e6 == pytest.approx(
        0.0, abs=0.01)
    with pytest.raises(QuantumInputError):
        solve_resonance_field(qd, 1.5, "sideways")


def test_solve_resonance_minus_branch():
    # minus branch: diamagnetic rise beats the Zeeman fall only at large field
    qd = QuantumDotParams(1.5, g_factor=2.0, diamagnetic_coeff=10.0)
    target = zeeman_energies(qd, 3.0)[1]
    b = solve_resonance_field(qd, target, "minus")
    assert abs(zeeman_energies(qd, b)[1] - target) * 1e6 <= 0.01


def test_fss_phase_average_quadrature():
    s, tau = 1.7, 220.0
    w = s / HBAR_UEV_PS
    re = quad(lambda t: np.exp(-t / tau) / tau * np.cos(w * t), 0, np.inf, limit=400)[0]
    im = quad(lambda t: -np.exp(-t / tau) / tau * np.sin(w * t), 0, np.inf, limit=400)[0]
    z = fss_phase_average(s, tau)
    assert z.real == pytest.approx(re, abs=1e-8)
    assert z.imag == pytest.approx(im, abs=1e-8)


def test_pair_state_examples(fiber_cfg):
    qd = QuantumDotParams(1.5)
    rho = entangled_pair_state(qd, 0.0)
    assert fidelity(rho, "phi+") == pytest.approx(1.0, abs=1e-12)
    assert concurrence(rho) == pytest.approx(1.0, abs=1e-9)
    rho = entangled_pair_state(qd, 1e9)
    assert fidelity(rho, "phi+") == pytest.approx(0.5, abs=1e-6)
    assert concurrence(rho) == pytest.approx(0.0, abs=1e-6)
    pair = resolve_photons(fiber_cfg).pair
    assert fidelity(pair, "phi+") == pytest.approx(0.94, abs=1e-9)
    assert concurrence(pair) == pytest.approx(0.89, abs=0.01)
    with pytest.raises(QuantumInputError):
        entangled_pair_state(qd, -1.0)


def test_pair_fidelity_monotone_in_fss():
    qd = QuantumDotParams(1.5, lifetime_x=250.0, cross_dephasing=0.95)
    f = [fidelity(entangled_pair_state(qd, s), "phi+") for s in np.linspace(0, 20, 50)]
    assert np.all(np.diff(f) <= 1e-15)
    for s in np.linspace(0, 20, 50):
        check_density_matrix(entangled_pair_state(qd, s))


@pytest.mark.parametrize("cd", [0.0, 0.3, 0.89, 1.0])
def test_pair_fidelity_zero_fss(cd):
    rho = entangled_pair_state(QuantumDotParams(1.5, cross_dephasing=cd), 0.0)
    assert fidelity(rho, "phi+") == pytest.approx((1 + cd) / 2, abs=1e-10)


def test_cross_dephasing_back_solve():
    cd = cross_dephasing_for_fidelity(0.94, 0.3, 260.0)
    rho = entangled_pair_state(QuantumDotParams(1.5, lifetime_x=260.0, cross_dephasing=cd), 0.3)
    assert fidelity(rho, "phi+") == pytest.approx(0.94, abs=1e-12)
    with pytest.raises(QuantumInputError):
        cross_dephasing_for_fidelity(0.99, 50.0, 260.0)


def test_exciton_wavepacket_detuning():
    qd = QuantumDotParams(1.5, g_factor=1.0)
    wp = qd.exciton_wavepacket(reference_energy=1.5, field=1.0)
    assert wp.detuning == pytest.approx(0.5 * BOHR_MAGNETON_UEV_PER_T, rel=1e-9)
