import time

import pytest

from qdteleport.calibration import HOM_ANCHORS, RETAINED_ANCHOR, fit_hom, hom_observables
from qdteleport.events.physics import resolve_photons
from qdteleport.interference import DetectorResponse, hom_curves


def test_fit_reproduces_anchors_and_shipped_values(fiber_cfg):
    t0 = time.perf_counter()
    fit = fit_hom()
    assert time.perf_counter() - t0 < 60
    assert fit.success
    for w, v in HOM_ANCHORS.items():
        assert fit.visibilities[w] == pytest.approx(v, abs=0.05)
    assert fit.retained == pytest.approx(RETAINED_ANCHOR[1], abs=0.03)
    # the shipped scenario carries the fitted parameters
    assert fiber_cfg.qd1.lifetime_x == pytest.approx(fit.lifetime_1, rel=0.02)
    assert fiber_cfg.qd2.pure_dephasing_rate == pytest.approx(fit.dephasing, rel=0.02)
    wp1, wp2 = fit.wavepackets()
    assert 1 / wp1.decay_rate == pytest.approx(fit.lifetime_1)


def test_observables_match_scenario_curves(fiber_cfg):
    ph = resolve_photons(fiber_cfg)
    vis, frac = hom_observables(1 / ph.wp1.decay_rate, 1 / ph.wp2.decay_rate, fiber_cfg.qd2.pure_dephasing_rate,
                                detuning=ph.wp1.detuning, dt=0.25)
    curves = hom_curves(ph.wp1, ph.wp2, DetectorResponse(19.0))
    assert vis[30.0] == pytest.approx(float(curves.visibility(30.0)), abs=1e-9)
    assert frac == pytest.approx(0.11, abs=0.02)
