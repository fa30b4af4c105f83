"""Monte Carlo time-tag generation for one tomography setting.

Time is split into slabs of ``generation.slab`` seconds; every slab draws
from its own generator seeded by ``SeedSequence(seed, spawn_key=(setting,
0, slab))`` so the output does not depend on how slabs are scheduled.
Within a slab only cycles with at least ``min_detected_photons`` recorded
photons are materialized, found by geometric gaps between such cycles.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ClockModel, ScenarioConfig
from .kernels import sample_categorical
from .physics import (PATTERN_FIRST, PATTERN_SECOND, X1, X2, XX2, Photons, detection_probabilities,
                      jitter_sigma, kept_masks, resolve_photons, setting_tables, subset_probabilities)
from .timetags import (CH_PPS_BSM, CH_PPS_HERALD, CLOCK_BSM, CLOCK_HERALD, TimeTagStream, make_tags,
                       sort_tags)

PS_PER_S = 1e12


def _seed(cfg: ScenarioConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=tuple(int(k) for k in key)))


# -- clocks ---------------------------------------------------------------


@dataclass
class ClockTrack:
    """A local clock: ``local = true (1 + drift) + offset + wander(true)``."""

    model: ClockModel
    grid: np.ndarray  # true time (ps) of the wander samples
    wander: np.ndarray  # ps

    @classmethod
    def build(cls, model: ClockModel, duration_ps: float, rng: np.random.Generator) -> "ClockTrack":
        sigma = model.discipline_jitter_rms
        step = min(model.wander_correlation / 20, 1e-3) * PS_PER_S
        n = int(math.ceil(max(duration_ps, 0) / step)) + 2
        grid = np.arange(n) * step
        if sigma == 0:
            return cls(model, grid, np.zeros(n))
        # stationary Ornstein-Uhlenbeck samples
        rho = math.exp(-step / (model.wander_correlation * PS_PER_S))
        z = rng.standard_normal(n)
        w = np.empty(n)
        w[0] = z[0]
        k = math.sqrt(1 - rho * rho)
        for i in range(1, n):
            w[i] = rho * w[i - 1] + k * z[i]
        return cls(model, grid, sigma * w)

    def local(self, t_true) -> np.ndarray:
        t = np.asarray(t_true, dtype=float)
        m = self.model
        return t * (1 + m.drift * 1e-6) + m.offset + np.interp(t, self.grid, self.wander)

    def true(self, t_local) -> np.ndarray:
        """Invert :meth:`local` by fixed-point iteration (wander is tiny and slow)."""
        m = self.model
        t_local = np.asarray(t_local, dtype=float)
        t = (t_local - m.offset) / (1 + m.drift * 1e-6)
        for _ in range(3):
            t = (t_local - m.offset - np.interp(t, self.grid, self.wander)) / (1 + m.drift * 1e-6)
        return t


@dataclass
class GroundTruth:
    clocks: dict[int, ClockTrack]
    duration_ps: float
    photons: Photons
    true_counts: dict = field(default_factory=dict)

    def herald_to_bsm(self, t_local_herald) -> np.ndarray:
        """Exact map of herald-clock readings onto the BSM clock."""
        t = self.clocks[CLOCK_HERALD].true(t_local_herald)
        return self.clocks[CLOCK_BSM].local(t)


@dataclass
class GeneratedStreams:
    stream: TimeTagStream
    truth: GroundTruth
    input_label: str
    basis: str


# -- slab generation ----------------------------------------------------------


def _fading(cfg: ScenarioConfig, n_blocks: int, rng) -> np.ndarray:
    fm = cfg.xx2_channel.fading
    if fm.sigma == 0 or n_blocks == 0:
        return np.ones(max(n_blocks, 1))
    rho = math.exp(-fm.block / fm.correlation_time)
    z = rng.standard_normal(n_blocks)
    out = np.empty(n_blocks)
    out[0] = z[0]
    k = math.sqrt(1 - rho * rho)
    for i in range(1, n_blocks):
        out[i] = rho * out[i - 1] + k * z[i]
    return np.exp(fm.sigma * out - fm.sigma**2 / 2)


def _kept_cycles(n_cycles: int, p_max: float, rng) -> np.ndarray:
    if p_max <= 0 or n_cycles <= 0:
        return np.empty(0, dtype=np.int64)
    chunks = []
    pos = -1
    while True:
        m = int(n_cycles * p_max + 6 * math.sqrt(n_cycles * p_max) + 16)
        idx = pos + np.cumsum(rng.geometric(p_max, size=m))
        chunks.append(idx[idx < n_cycles])
        if idx[-1] >= n_cycles:
            break
        pos = int(idx[-1])
    return np.concatenate(chunks)


def _exp(rng, lifetime, n):
    return rng.exponential(lifetime, size=n)


def _pair_features(ph: Photons, x, y) -> np.ndarray:
    a1x, a2x = ph.wp1.amplitude(x), ph.wp2.amplitude(x)
    a1y, a2y = ph.wp1.amplitude(y), ph.wp2.amplitude(y)
    u = a1x * a2y
    w = a2x * a1y
    cross = np.conj(u) * w * np.exp(-(ph.wp1.dephasing_rate + ph.wp2.dephasing_rate) * (y - x))
    return np.column_stack([np.abs(u) ** 2, np.abs(w) ** 2, cross.real, cross.imag])


def _slab(cfg: ScenarioConfig, ph: Photons, tables, slab_index: int, setting_index: int,
          t0_ps: float, n_cycles: int, slab_ps: float):
    """True click times (ps) and channels for one slab."""
    rng = _seed(cfg, setting_index, 0, slab_index)
    period = cfg.period
    fm = cfg.xx2_channel.fading
    n_blocks = max(1, int(math.ceil(slab_ps / (fm.block * PS_PER_S)))) if fm.sigma > 0 else 1
    fade = _fading(cfg, n_blocks, rng)
    q = subset_probabilities(*detection_probabilities(cfg, fade))  # (n_blocks, 8)
    keep = kept_masks(cfg.generation.min_detected_photons)
    qk = q[:, keep]
    p_keep = qk.sum(axis=1)
    p_max = float(p_keep.max())

    cyc = _kept_cycles(n_cycles, p_max, rng)
    cycles_per_block = n_cycles / n_blocks
    blk = np.minimum((cyc / cycles_per_block).astype(np.int64), n_blocks - 1)
    if n_blocks > 1:
        cyc = cyc[rng.random(cyc.size) * p_max < p_keep[blk]]
        blk = np.minimum((cyc / cycles_per_block).astype(np.int64), n_blocks - 1)
    cum = np.cumsum(qk, axis=1)[blk]
    pick = (cum < (rng.random(cyc.size) * p_keep[blk])[:, None]).sum(axis=1)
    masks = keep[np.minimum(pick, keep.size - 1)]

    base = t0_ps + cyc * period
    s1, s2 = cfg.x1_arrival_offset, cfg.x2_arrival_offset
    tau1, tau2 = 1 / ph.wp1.decay_rate, 1 / ph.wp2.decay_rate
    sig_b, sig_h = jitter_sigma(cfg.bsm_detector), jitter_sigma(cfg.herald_detector)
    times, chans = [], []

    def emit(t, ch, sigma):
        if t.size:
            times.append(t + rng.normal(0.0, sigma, t.size) if sigma > 0 else t)
            chans.append(np.broadcast_to(np.asarray(ch, dtype=np.int16), t.shape).copy())

    def herald_times(sel):
        return base[sel] + cfg.herald_path_delay + _exp(rng, ph.lifetime_xx, sel.size)

    for mask in (X1, X2, XX2, X1 | XX2, X2 | XX2):
        sel = np.flatnonzero(masks == mask)
        if sel.size == 0:
            continue
        cats, probs = tables.single[mask]
        c = cats[np.minimum(np.searchsorted(np.cumsum(probs), rng.random(sel.size) * probs.sum(), side="right"),
                            cats.size - 1)]
        if mask == XX2:
            emit(herald_times(sel), 4 + c, sig_h)
            continue
        photon_t = s1 + _exp(rng, tau1, sel.size) if mask & X1 else s2 + _exp(rng, tau2, sel.size)
        det = c if mask in (X1, X2) else c // 2
        emit(base[sel] + photon_t, det, sig_b)
        if mask & XX2:
            emit(herald_times(sel), 4 + c % 2, sig_h)

    for mask, coef, with_herald in ((X1 | X2, tables.pair_coef, False), (X1 | X2 | XX2, tables.triple_coef, True)):
        sel = np.flatnonzero(masks == mask)
        if sel.size == 0:
            continue
        t1 = s1 + _exp(rng, tau1, sel.size)
        t2 = s2 + _exp(rng, tau2, sel.size)
        x, y = np.minimum(t1, t2), np.maximum(t1, t2)
        cat = sample_categorical(_pair_features(ph, x, y), coef, rng.random(sel.size))
        pat = cat // 2 if with_herald else cat
        d1, d2 = PATTERN_FIRST[pat], PATTERN_SECOND[pat]
        emit(base[sel] + x, d1, sig_b)
        two = d1 != d2  # photons bunched in one detector give a single click
        emit(base[sel][two] + y[two], d2[two], sig_b)
        if with_herald:
            emit(herald_times(sel), 4 + cat % 2, sig_h)

    # dark counts and background, uniform over the slab
    bsm_dark = cfg.bsm_detector.dark_rate + (cfg.x1_channel.background_rate + cfg.x2_channel.background_rate) / 4
    her_dark = cfg.herald_detector.dark_rate + cfg.xx2_channel.background_rate / 2
    for ch, rate in ((0, bsm_dark), (1, bsm_dark), (2, bsm_dark), (3, bsm_dark), (4, her_dark), (5, her_dark)):
        n = rng.poisson(rate * slab_ps / PS_PER_S)
        emit(t0_ps + rng.random(n) * slab_ps, ch, 0.0)

    if not times:
        return np.empty(0), np.empty(0, dtype=np.int16), masks
    return np.concatenate(times), np.concatenate(chans), masks


def generate_timetags(cfg: ScenarioConfig, input_label: str = "H", basis: str = "HV",
                      setting_index: int = 0, duration: float | None = None,
                      threads: int = 1, photons: Photons | None = None) -> GeneratedStreams:
    """Tag streams of both taggers for one (input, herald basis) setting."""
    duration = cfg.duration if duration is None else float(duration)
    ph = photons or resolve_photons(cfg)
    tables = setting_tables(cfg, input_label, basis, ph.pair)
    dur_ps = duration * PS_PER_S
    period = cfg.period
    total_cycles = int(math.floor(dur_ps / period + 1e-9))
    slab_cycles = max(1, int(round(cfg.generation.slab * PS_PER_S / period)))
    jobs = []
    for k, c0 in enumerate(range(0, total_cycles, slab_cycles)):
        n = min(slab_cycles, total_cycles - c0)
        jobs.append((k, c0 * period, n, n * period))

    def run(job):
        k, t0, n, length = job
        return _slab(cfg, ph, tables, k, setting_index, t0, n, length)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    true_counts = np.zeros(8, dtype=np.int64)
    for _, _, masks in parts:
        true_counts += np.bincount(masks, minlength=8)
    t_true = np.concatenate([p[0] for p in parts]) if parts else np.empty(0)
    chan = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, dtype=np.int16)

    clocks = {
        CLOCK_BSM: ClockTrack.build(cfg.bsm_clock, dur_ps, _seed(cfg, setting_index, 1, CLOCK_BSM)),
        CLOCK_HERALD: ClockTrack.build(cfg.herald_clock, dur_ps, _seed(cfg, setting_index, 1, CLOCK_HERALD)),
    }
    pieces = []
    for clock_id, chans in ((CLOCK_BSM, (0, 1, 2, 3)), (CLOCK_HERALD, (4, 5))):
        sel = np.isin(chan, chans)
        loc = np.rint(clocks[clock_id].local(t_true[sel]))
        ok = loc >= 0
        pieces.append(make_tags(chan[sel][ok], clock_id, loc[ok].astype(np.uint64)))
    if cfg.generation.pps and duration > 0:
        rng = _seed(cfg, setting_index, 2, 0)
        secs = np.arange(0, int(math.floor(duration)) + 1) * PS_PER_S
        for clock_id, ch in ((CLOCK_BSM, CH_PPS_BSM), (CLOCK_HERALD, CH_PPS_HERALD)):
            loc = np.rint(clocks[clock_id].local(secs) + rng.normal(0, cfg.generation.pps_jitter, secs.size))
            ok = loc >= 0
            pieces.append(make_tags(ch, clock_id, loc[ok].astype(np.uint64)))
    tags = sort_tags(np.concatenate(pieces))
    truth = GroundTruth(clocks, dur_ps, ph, {"subsets": true_counts})
    return GeneratedStreams(TimeTagStream(tags), truth, input_label, basis)
