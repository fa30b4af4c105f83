import numpy as np
import pytest

from qdteleport.events.physics import resolve_photons
from qdteleport.interference import (CoincidenceWindow, DetectorResponse, PhotonWavepacket, bsm_operators,
                                     convolve_jitter, hom_curves, hom_visibility, single_event_visibility,
                                     tpi_coincidence_density)
from qdteleport.oracles import bsm_click_povms, bsm_operators_oracle, tpi_density_oracle
from qdteleport.quantum import QuantumInputError, projector

JITTER = DetectorResponse(19.0)


@pytest.fixture(scope="module")
def photons(fiber_cfg):
    return resolve_photons(fiber_cfg)


@pytest.fixture(scope="module")
def curves(photons):
    return hom_curves(photons.wp1, photons.wp2, JITTER)


def test_validation():
    with pytest.raises(QuantumInputError):
        PhotonWavepacket(decay_rate=0)
    with pytest.raises(QuantumInputError):
        PhotonWavepacket(decay_rate=1, dephasing_rate=-1)
    with pytest.raises(QuantumInputError):
        DetectorResponse(-1.0)
    with pytest.raises(QuantumInputError):
        CoincidenceWindow(0.0)
    with pytest.raises(QuantumInputError):
        CoincidenceWindow(500.0)
    assert CoincidenceWindow(30.0).half_width == 15.0


def test_identical_photons_dip_to_zero():
    wp = PhotonWavepacket.from_lifetime(200.0)
    tau = np.linspace(-500, 500, 401)
    par = tpi_coincidence_density(wp, wp, True, tau)
    perp = tpi_coincidence_density(wp, wp, False, tau)
    assert par[200] == pytest.approx(0.0, abs=1e-15)
    assert np.max(par) < 1e-12
    assert perp[200] > 0


def test_cross_density_normalized():
    wp1, wp2 = PhotonWavepacket.from_lifetime(150.0), PhotonWavepacket.from_lifetime(300.0, arrival_offset=40)
    tau = np.arange(-6000, 6000, 0.25)
    assert np.trapezoid(tpi_coincidence_density(wp1, wp2, False, tau), tau) == pytest.approx(1.0, abs=1e-6)


def test_volcano_shape(curves):
    tau, par = curves.tau, curves.parallel
    i0 = np.argmin(np.abs(tau))
    assert par[i0] <= par[i0 - 1] and par[i0] <= par[i0 + 1]
    near = np.abs(tau) <= 400
    assert np.max(par[near]) > 1.5 * par[i0]
    # the raw density shows it too, for unequal rates and detuning
    wp1 = PhotonWavepacket.from_lifetime(150.0, detuning=2.0)
    wp2 = PhotonWavepacket.from_lifetime(300.0)
    t = np.linspace(-300, 300, 601)
    g = tpi_coincidence_density(wp1, wp2, True, t)
    assert g[300] == pytest.approx(0.0, abs=1e-12)
    assert np.max(g) > 0 and g[300] < g[250] and g[300] < g[350]


def test_par_below_perp_where_visibility_positive(photons):
    tau = np.linspace(-2000, 2000, 4001)
    v = single_event_visibility(photons.wp1, photons.wp2, tau)
    par = tpi_coincidence_density(photons.wp1, photons.wp2, True, tau)
    perp = tpi_coincidence_density(photons.wp1, photons.wp2, False, tau)
    assert np.all(par[v >= 0] <= perp[v >= 0] + 1e-15)


def test_jitter_identity_and_delta():
    dt = 0.25
    x = np.arange(-400, 400 + dt / 2, dt)
    d = np.zeros_like(x)
    d[x.size // 2] = 1 / dt
    assert np.array_equal(convolve_jitter(d, DetectorResponse(0.0), dt), d)
    out = convolve_jitter(d, JITTER, dt)
    assert np.trapezoid(out, x) == pytest.approx(np.trapezoid(d, x), abs=1e-6)
    # FWHM of the result against sqrt(2) * 19 ps
    half = out.max() / 2
    above = x[out >= half]
    fwhm = above[-1] - above[0]
    assert fwhm == pytest.approx(np.sqrt(2) * 19.0, abs=2 * dt)
    assert np.sqrt(2) * 19.0 == pytest.approx(26.87, abs=0.01)


def test_identical_photons_visibility_one():
    wp = PhotonWavepacket.from_lifetime(200.0)
    c = hom_curves(wp, wp, DetectorResponse(0.0))
    assert np.allclose(c.visibility(np.linspace(10, 400, 20)), 1.0, atol=1e-9)


def test_distinguishable_visibility_zero():
    wp1 = PhotonWavepacket.from_lifetime(200.0, detuning=5000.0)
    wp2 = PhotonWavepacket.from_lifetime(200.0)
    assert abs(hom_visibility(wp1, wp2, DetectorResponse(0.0), 200.0)) < 1e-3


def test_visibility_anchors(curves):
    assert float(curves.visibility(20.0)) == pytest.approx(0.598, abs=0.05)
    assert float(curves.visibility(30.0)) == pytest.approx(0.57, abs=0.05)


def test_visibility_monotone(curves):
    v = curves.visibility(np.linspace(10, 400, 20))
    assert np.all(np.diff(v) <= 1e-12)


def test_hom_visibility_accepts_window(photons):
    a = hom_visibility(photons.wp1, photons.wp2, JITTER, CoincidenceWindow(30.0))
    b = hom_visibility(photons.wp1, photons.wp2, JITTER, 30.0)
    assert a == b


def test_visibility_nan_without_coincidences():
    wp = PhotonWavepacket.from_lifetime(10.0)
    far = PhotonWavepacket.from_lifetime(10.0, arrival_offset=5000.0)
    assert np.isnan(hom_visibility(wp, far, DetectorResponse(0.0), 20.0))


@pytest.mark.parametrize("copolarized", [True, False])
def test_density_matches_oracle(photons, copolarized):
    tau, g = tpi_density_oracle(photons.wp1, photons.wp2, copolarized, dt=1.0)
    closed = tpi_coincidence_density(photons.wp1, photons.wp2, copolarized, tau)
    assert np.abs(g - closed).sum() / np.abs(closed).sum() < 0.01


@pytest.mark.parametrize("v", [0.0, 0.5, 1.0])
def test_bsm_operators_match_oracle(v):
    for closed, oracle in zip(bsm_operators(v), bsm_operators_oracle(v)):
        assert np.linalg.norm(closed - oracle, 2) < 1e-6


def test_bsm_operator_examples():
    pm, pp = bsm_operators(1.0)
    assert np.allclose(pm, projector("psi-"))
    pm, _ = bsm_operators(0.0)
    assert np.allclose(pm, 0.5 * (projector("psi-") + projector("psi+")))
    pm, _ = bsm_operators(0.5)
    assert np.trace(pm @ projector("psi-")).real == pytest.approx(0.75)
    assert np.trace(pm @ projector("psi+")).real == pytest.approx(0.25)
    with pytest.raises(QuantumInputError):
        bsm_operators(1.5)


@pytest.mark.parametrize("v", [0.0, 0.3, 1.0])
def test_bsm_operators_psd_and_bounded(v):
    pm, pp = bsm_operators(v)
    for op in (pm, pp, np.eye(4) - pm - pp):
        assert np.linalg.eigvalsh(op).min() >= -1e-12


def test_click_povms_complete():
    # all click patterns, including bunched ones, resolve the identity
    total = sum(bsm_click_povms(0.4).values())
    assert np.allclose(total, np.eye(4), atol=1e-12)
