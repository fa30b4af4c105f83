import dataclasses
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.stats import chisquare

from qdteleport import _accel
from qdteleport.calibration import threefold_rate_estimate
from qdteleport.events.coincidences import (PSI_MINUS, PSI_PLUS, Coincidences, find_bsm_pairs,
                                            find_threefold_coincidences, retained_fraction, stream_coincidences)
from qdteleport.events.config import (AnalysisOptions, ChannelModel, ClockModel, FadingModel, GenerationOptions,
                                      check_unitary)
from qdteleport.events.generate import generate_timetags
from qdteleport.events.kernels import diff_histogram, greedy_pairs, match_heralds, sample_categorical
from qdteleport.events.physics import herald_delay_model, resolve_photons, signature_table
from qdteleport.events.timetags import (CH_BSM, CH_HERALD, TAG_DTYPE, TimeTagStream, make_tags, read_binary,
                                        read_csv, sort_tags, tags_to_bytes, write_binary, write_csv)
from qdteleport.interference import DetectorResponse, hom_curves
from qdteleport.quantum import QuantumInputError

NO_DARK = DetectorResponse(19.0, 0.85, 0.0)


@pytest.fixture
def both_paths():
    """Run a callable with numba on and off; returns both results."""
    def run(fn):
        prev = _accel.set_enabled(True)
        try:
            a = fn()
            _accel.set_enabled(False)
            b = fn()
        finally:
            _accel.set_enabled(prev)
        return a, b
    return run


def _bright(cfg, t=0.1, duration=1.0, **kw):
    """Brighter, dark-free variant with a shared clock so heralds need no sync."""
    ch = ChannelModel(transmission=t)
    clock = ClockModel()
    base = dict(x1_channel=ch, x2_channel=ch, xx2_channel=ch, bsm_detector=NO_DARK, herald_detector=NO_DARK,
                bsm_clock=clock, herald_clock=clock, duration=duration)
    base.update(kw)
    return dataclasses.replace(cfg, **base)


# -- time tags ------------------------------------------------------------------


def _random_tags(rng, n=500):
    ch = rng.integers(0, 8, n)
    clock = np.isin(ch, [4, 5, 7]).astype(int)
    return sort_tags(make_tags(ch, clock, rng.integers(0, 2**62, n)))


def test_binary_round_trip(tmp_path, rng):
    tags = _random_tags(rng)
    write_binary(tmp_path / "t.bin", tags)
    back = read_binary(tmp_path / "t.bin")
    assert back.dtype == TAG_DTYPE and np.array_equal(back, tags)
    assert tags_to_bytes(tags) == (tmp_path / "t.bin").read_bytes()
    assert TAG_DTYPE.itemsize == 12
    (tmp_path / "bad.bin").write_bytes(b"\0" * 13)
    with pytest.raises(ValueError):
        read_binary(tmp_path / "bad.bin")


def test_csv_round_trip(tmp_path, rng):
    tags = _random_tags(rng, 50)
    write_csv(tmp_path / "t.csv", tags)
    assert np.array_equal(read_csv(tmp_path / "t.csv"), tags)
    (tmp_path / "bad.csv").write_text("a,b,c\n")
    with pytest.raises(ValueError):
        read_csv(tmp_path / "bad.csv")


def test_stream_accessors(rng):
    s = TimeTagStream(_random_tags(rng))
    assert s.is_sorted()
    t, ch = s.channels([0, 1])
    assert np.all(np.diff(t) >= 0) and set(np.unique(ch)) <= {0, 1}
    assert len(s.head(0)) == 0
    with pytest.raises(ValueError):
        TimeTagStream(np.zeros(3))


# -- kernels: numba and numpy paths agree -----------------------------------------


def test_categorical_paths_agree(both_paths, rng):
    feats = rng.random((5000, 4))
    coef = rng.normal(size=(4, 7))
    u = rng.random(5000)
    a, b = both_paths(lambda: sample_categorical(feats, coef, u))
    assert np.array_equal(a, b)
    w = np.maximum(feats @ coef, 0)
    assert np.all(w[np.arange(5000), a] > 0)


def test_categorical_frequencies(rng):
    feats = np.ones((200_000, 1))
    coef = np.array([[1.0, 3.0, 0.0, -1.0]])
    cat = sample_categorical(feats, coef, rng.random(200_000))
    freq = np.bincount(cat, minlength=4) / cat.size
    assert np.allclose(freq, [0.25, 0.75, 0, 0], atol=0.005)


def test_greedy_pairs_paths_agree(both_paths, rng):
    t = np.sort(rng.integers(0, 10**7, 20_000))
    ch = rng.integers(0, 4, t.size)
    a, b = both_paths(lambda: greedy_pairs(t, ch, 200, signature_table()))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_match_heralds_paths_agree(both_paths, rng):
    pt = np.sort(rng.integers(0, 10**8, 5000))
    ht = np.sort(rng.integers(0, 10**8, 5000))
    a, b = both_paths(lambda: match_heralds(pt, ht, 1000, 5000))
    assert np.array_equal(a, b)
    used = a[a >= 0]
    assert used.size == np.unique(used).size


def test_diff_histogram_paths_agree(both_paths, rng):
    ta = np.sort(rng.integers(0, 10**8, 3000))
    tb = np.sort(rng.integers(0, 10**8, 3000))
    a, b = both_paths(lambda: diff_histogram(ta, tb, -10**6, 10**6, 1000))
    assert np.array_equal(a, b)
    d = (tb[None, :] - ta[:, None]).ravel()
    d = d[(d >= -10**6) & (d < 10**6)]
    assert np.array_equal(a, np.bincount((d + 10**6) // 1000, minlength=2000))


# -- configuration ----------------------------------------------------------------


def test_config_validation(fiber_cfg):
    with pytest.raises(QuantumInputError):
        ChannelModel(transmission=1.5)
    with pytest.raises(QuantumInputError):
        ChannelModel(background_rate=-1)
    with pytest.raises(QuantumInputError):
        check_unitary(np.ones((2, 2)))
    with pytest.raises(QuantumInputError):
        ClockModel(drift=float("nan"))
    with pytest.raises(QuantumInputError):
        FadingModel(sigma=-0.1)
    with pytest.raises(QuantumInputError):
        GenerationOptions(min_detected_photons=4)
    with pytest.raises(QuantumInputError):
        AnalysisOptions(windows=(30, 20))
    assert 400.0 in AnalysisOptions(windows=(10, 20), reference_window=400).windows
    with pytest.raises(QuantumInputError):
        dataclasses.replace(fiber_cfg, duration=-1)
    with pytest.raises(QuantumInputError):
        dataclasses.replace(fiber_cfg, topology="satellite")
    assert fiber_cfg.period == pytest.approx(12500.0)


# -- generation ----------------------------------------------------------------------


def test_no_light_no_darks_is_empty(fiber_cfg):
    dark = ChannelModel(transmission=0.0)
    cfg = dataclasses.replace(fiber_cfg, x1_channel=dark, x2_channel=dark, xx2_channel=dark,
                              bsm_detector=NO_DARK, herald_detector=NO_DARK, duration=1.0,
                              generation=dataclasses.replace(fiber_cfg.generation, pps=False))
    assert len(generate_timetags(cfg).stream) == 0


def test_dark_counts_poisson(fiber_cfg):
    dark = ChannelModel(transmission=0.0)
    det = DetectorResponse(19.0, 0.85, 1000.0)
    cfg = dataclasses.replace(fiber_cfg, x1_channel=dark, x2_channel=dark, xx2_channel=dark,
                              bsm_detector=det, herald_detector=det, duration=10.0)
    tags = generate_timetags(cfg).stream.tags
    for ch in list(CH_BSM) + list(CH_HERALD):
        assert abs(np.sum(tags["channel"] == ch) - 10_000) <= 300


def test_generation_deterministic(short_cfg):
    a = generate_timetags(short_cfg, "D", "RL", setting_index=3)
    b = generate_timetags(short_cfg, "D", "RL", setting_index=3)
    assert tags_to_bytes(a.stream.tags) == tags_to_bytes(b.stream.tags)
    c = generate_timetags(short_cfg, "D", "RL", setting_index=4)
    assert tags_to_bytes(a.stream.tags) != tags_to_bytes(c.stream.tags)


def test_generation_independent_of_threads(short_cfg):
    cfg = dataclasses.replace(short_cfg, generation=dataclasses.replace(short_cfg.generation, slab=0.5))
    a = generate_timetags(cfg, threads=1)
    b = generate_timetags(cfg, threads=3)
    assert np.array_equal(a.stream.tags, b.stream.tags)


def test_generation_same_with_and_without_numba(short_cfg, both_paths):
    a, b = both_paths(lambda: generate_timetags(short_cfg, "R", "DA", setting_index=1).stream.tags)
    assert np.array_equal(a, b)


def _rates(cfg):
    gen = generate_timetags(cfg)
    model = herald_delay_model(cfg)
    ev = stream_coincidences(gen.stream, lambda t: t, herald_delay=model["pair_offset"])
    return len(ev), int(np.sum(ev.herald >= 0))


def test_rate_scaling_all_legs(fiber_cfg):
    two_a, three_a = _rates(_bright(fiber_cfg, 0.1))
    two_b, three_b = _rates(_bright(fiber_cfg, 0.05))
    r2, r3 = two_b / two_a, three_b / three_a
    assert abs(r2 - 0.25) <= 3 * r2 * np.sqrt(1 / two_a + 1 / two_b)
    assert abs(r3 - 0.125) <= 3 * r3 * np.sqrt(1 / three_a + 1 / three_b)


def test_rate_scaling_one_leg(fiber_cfg):
    cfg = _bright(fiber_cfg, 0.1)
    two_a, three_a = _rates(cfg)
    two_b, three_b = _rates(dataclasses.replace(cfg, xx2_channel=ChannelModel(transmission=0.05)))
    r2, r3 = two_b / two_a, three_b / three_a
    assert abs(r2 - 1.0) <= 3 * np.sqrt(1 / two_a + 1 / two_b)
    assert abs(r3 - 0.5) <= 3 * r3 * np.sqrt(1 / three_a + 1 / three_b)


def test_hybrid_rate_tenth_of_fiber(fiber_cfg, hybrid_scenario):
    ratio = threefold_rate_estimate(hybrid_scenario.config) / threefold_rate_estimate(fiber_cfg)
    assert ratio == pytest.approx(0.1, rel=1e-9)


def test_fiber_rate_estimate(fiber_cfg):
    assert threefold_rate_estimate(fiber_cfg) == pytest.approx(43.0, rel=0.3)


def test_bsm_delay_histogram_matches_density(fiber_cfg):
    cfg = _bright(fiber_cfg, 0.1, duration=2.0)
    gen = generate_timetags(cfg)
    t, ch = gen.stream.channels(list(CH_BSM))
    pairs = find_bsm_pairs(t, ch, 400)
    assert len(pairs) >= 100_000
    ph = resolve_photons(cfg)
    curves = hom_curves(ph.wp1, ph.wp2, cfg.bsm_detector)
    # integer-ps timestamps: bin on half-integer edges
    edges = np.arange(0, 201, 10.0) - 0.5
    edges[0] = 0.0
    cum = curves.counts(2 * edges)[1]
    prob = np.diff(cum) / cum[-1]
    obs = np.histogram(pairs.dt, bins=edges)[0]
    assert chisquare(obs, prob * obs.sum()).pvalue > 0.01


# -- coincidences -----------------------------------------------------------------


def test_empty_streams():
    e = np.empty(0, dtype=np.int64)
    assert len(find_threefold_coincidences(e, e, e, e)) == 0
    assert len(find_bsm_pairs(e, e)) == 0


def test_identical_times_single_event():
    ev = find_threefold_coincidences([1000, 1000], [0, 3], [1000], [4], herald_delay=0)
    assert len(ev) == 1 and ev.herald[0] == 0 and ev.projection[0] == PSI_MINUS and ev.dt[0] == 0


def test_signatures():
    # c_H d_V -> psi-, c_H c_V -> psi+, c_H d_H -> no signature
    assert find_bsm_pairs([0, 10], [0, 3]).projection.tolist() == [PSI_MINUS]
    assert find_bsm_pairs([0, 10], [0, 1]).projection.tolist() == [PSI_PLUS]
    assert len(find_bsm_pairs([0, 10], [0, 2])) == 0


def test_window_is_full_width():
    assert len(find_bsm_pairs([0, 200], [0, 3], window=400)) == 1
    assert len(find_bsm_pairs([0, 201], [0, 3], window=400)) == 0
    ev = find_bsm_pairs([0, 15, 100, 131], [0, 3, 1, 2], window=400)
    assert len(ev.within(30)) == 1


def test_herald_window_and_delay():
    ev = find_threefold_coincidences([0, 10], [0, 3], [5000 + 999], [5], herald_delay=5000,
                                     heralding_window=1000)
    assert ev.herald.tolist() == [1]
    ev = find_threefold_coincidences([0, 10], [0, 3], [5000 + 1001], [5], herald_delay=5000,
                                     heralding_window=1000)
    assert ev.herald.tolist() == [-1] and len(ev.heralded()) == 0


def test_input_validation():
    with pytest.raises(ValueError):
        find_bsm_pairs([10, 0], [0, 3])
    with pytest.raises(ValueError):
        find_bsm_pairs([0, 10], [0, 7])
    with pytest.raises(ValueError):
        find_threefold_coincidences([0, 10], [0, 3], [20, 10], [4, 4])
    with pytest.raises(ValueError):
        find_threefold_coincidences([0, 10], [0, 3], [10], [4], bsm_window=0)


def test_partition_independence(short_cfg):
    gen = generate_timetags(short_cfg)
    model = herald_delay_model(short_cfg)
    from qdteleport.events.sync import synchronize

    sync = synchronize(gen.stream, model["sync_centroid"], short_cfg.period)
    base = stream_coincidences(gen.stream, sync.apply, herald_delay=model["pair_offset"])
    for parts in (2, 7):
        other = stream_coincidences(gen.stream, sync.apply, herald_delay=model["pair_offset"], partitions=parts)
        assert base.equals(other)


def test_coincidences_container():
    a = find_bsm_pairs([0, 10, 100, 150], [0, 3, 0, 1])
    b = Coincidences.concat([a.select(np.array([True, False])), a.select(np.array([False, True]))])
    assert b.equals(a)
    assert len(Coincidences.concat([])) == 0


def test_retained_fraction():
    dt = np.array([0, 5, 14, 16, 100, 199, 250])
    rf = retained_fraction(dt, [30, 400], 400)
    assert rf.defined and rf.fraction.tolist() == [3 / 6, 1.0]
    empty = retained_fraction([], [30, 400], 400)
    assert not empty.defined and np.all(np.isnan(empty.fraction))


@pytest.mark.parametrize("value,expected", [("1", "False"), ("", "True")])
def test_env_flag_selects_numpy_path(value, expected):
    env = dict(os.environ, QDTELEPORT_NO_NUMBA=value)
    res = subprocess.run([sys.executable, "-c", "from qdteleport import _accel; print(_accel.enabled())"],
                         env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == expected
