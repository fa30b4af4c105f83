"""End-to-end simulated teleportation run.

For every (input state, herald basis) setting: generate both taggers'
streams, recover the herald clock, find heralded BSM coincidences and
histogram them by projection, window and herald outcome. Fidelities per
window then come from single-qubit tomography of the heralded outputs and
process tomography over the six inputs, with Poisson bootstrap error bars.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .events.coincidences import PROJECTIONS, retained_fraction, stream_coincidences
from .events.config import ScenarioConfig
from .events.generate import PS_PER_S, generate_timetags
from .events.physics import HERALD_BASES, herald_delay_model, resolve_photons
from .events.sync import SyncError, SyncResult, synchronize
from .events.timetags import CH_HERALD, TimeTagStream
from .quantum import CARDINAL_LABELS, QuantumInputError
from .teleport import CORRECTIONS
from .tomography import (ChiMatrix, average_fidelity_from_chi, direct_average_fidelity, ideal_chi,
                         process_tomography, reconstruct_state)

OUTCOME_LABELS = CARDINAL_LABELS  # herald outcomes, two per analyzer basis


@dataclass
class SettingReport:
    index: int
    input_label: str
    basis: str
    n_tags: int
    sync: SyncResult | None
    sync_error_rms_ps: float | None  # against the generator's ground truth
    sync_drift_error_ppm: float | None
    threefolds: int  # heralded events within the reference window


@dataclass
class WindowFidelity:
    window: float
    events: tuple[int, int]  # per projection
    fidelity: tuple[float, float]  # chi-derived, per projection
    fidelity_err: tuple[float, float]
    direct: tuple[float, float]  # averaged state fidelities, per projection
    average: float  # event-weighted over projections
    average_err: float


@dataclass
class ExperimentResult:
    config: ScenarioConfig
    windows: np.ndarray
    counts: np.ndarray  # (projection, window, input, outcome)
    dt_all: np.ndarray  # BSM time differences of all heralded events
    settings: list[SettingReport]
    fidelities: list[WindowFidelity]
    chi: dict[str, ChiMatrix | None]
    model: dict
    elapsed: float = 0.0
    tag_excerpts: list = field(default_factory=list)

    @property
    def total_duration(self) -> float:
        return self.config.duration * len(self.settings)

    def threefold_rate(self, window: float | None = None) -> float:
        w = self.config.analysis.reference_window if window is None else window
        n = int(np.sum(np.abs(self.dt_all) <= w / 2))
        return n / self.total_duration if self.total_duration > 0 else float("nan")

    def retained(self):
        a = self.config.analysis
        return retained_fraction(self.dt_all, self.windows, a.reference_window)

    def at(self, window: float) -> WindowFidelity:
        for f in self.fidelities:
            if f.window == float(window):
                return f
        raise KeyError(window)


def _sync_truth_error(gen, sync: SyncResult, n: int = 2001):
    """RMS mismatch of the recovered clock map over the run, and its drift error."""
    th, _ = gen.stream.channels(list(CH_HERALD))
    if th.size < 2:
        return None, None
    grid = np.linspace(th[0], th[-1], n)
    err = sync.map(grid) - gen.truth.herald_to_bsm(grid)
    slope_true = np.polyfit(grid - grid[0], gen.truth.herald_to_bsm(grid), 1)[0]
    return float(np.sqrt(np.mean(err**2))), float((sync.scale - slope_true) * 1e6)


def _excerpt(stream: TimeTagStream, seconds: float) -> np.ndarray:
    tags = stream.tags
    if seconds <= 0 or len(tags) == 0:
        return tags[:0]
    keep = np.zeros(len(tags), dtype=bool)
    for cid in np.unique(tags["clock_id"]):
        sel = tags["clock_id"] == cid
        t0 = tags["timestamp"][sel].min()
        keep |= sel & (tags["timestamp"] - t0 < seconds * PS_PER_S)
    return tags[keep]


def collect_counts(cfg: ScenarioConfig, *, threads: int = 1, progress=None):
    """Generate, synchronize and coincide every setting; returns raw tallies."""
    a = cfg.analysis
    windows = np.array(a.windows, dtype=float)
    ph = resolve_photons(cfg)
    model = herald_delay_model(cfg, ph)
    counts = np.zeros((2, windows.size, len(CARDINAL_LABELS), len(OUTCOME_LABELS)), dtype=np.int64)
    dts, reports, excerpts = [], [], []
    settings = [(i, b) for i in cfg.inputs for b in cfg.herald_bases]
    for idx, (inp, basis) in enumerate(settings):
        gen = generate_timetags(cfg, inp, basis, idx, threads=threads, photons=ph)
        excerpts.append(_excerpt(gen.stream, cfg.generation.timetag_dump))
        n_tags = len(gen.stream)
        if n_tags == 0 or cfg.duration == 0:
            reports.append(SettingReport(idx, inp, basis, n_tags, None, None, None, 0))
            continue
        sync = synchronize(gen.stream, model["sync_centroid"], cfg.period, use_pps=cfg.generation.pps,
                           segment=a.sync_segment)
        if not sync.ok:
            sync.diagnostics["setting"] = idx
            raise SyncError(sync)
        rms, drift_err = _sync_truth_error(gen, sync)
        ev = stream_coincidences(gen.stream, sync.apply, bsm_window=a.reference_window,
                                 heralding_window=a.heralding_window,
                                 herald_delay=model["pair_offset"]).heralded()
        kets = HERALD_BASES[basis]
        out_idx = np.array([OUTCOME_LABELS.index(k) for k in kets])[ev.herald]
        i_in = CARDINAL_LABELS.index(inp)
        for w_i, w in enumerate(windows):
            sel = ev.dt <= w / 2
            np.add.at(counts[:, w_i, i_in, :], (ev.projection[sel], out_idx[sel]), 1)
        dts.append(ev.dt)
        reports.append(SettingReport(idx, inp, basis, n_tags, sync, rms, drift_err, len(ev)))
        if progress:
            progress(idx, len(settings), reports[-1])
    dt_all = np.concatenate(dts) if dts else np.empty(0, dtype=np.int64)
    return windows, counts, dt_all, reports, model, excerpts


def _records(table: np.ndarray) -> dict[str, dict]:
    """(input, outcome) count table to per-input single-qubit records."""
    return {k: {(o,): float(table[i, j]) for j, o in enumerate(OUTCOME_LABELS)}
            for i, k in enumerate(CARDINAL_LABELS)}


def fidelity_from_table(table: np.ndarray, projection: str):
    """(chi-derived average fidelity, direct average, chi) from one count table."""
    outputs = {}
    for k, rec in _records(table).items():
        if sum(rec.values()) <= 0:
            return math.nan, math.nan, None
        outputs[k] = reconstruct_state(rec)
    chi = process_tomography(outputs, projection)
    f_chi = average_fidelity_from_chi(chi, ideal_chi(projection))
    f_dir = direct_average_fidelity(outputs, CORRECTIONS[projection])
    return f_chi, f_dir, chi


def analyze(cfg: ScenarioConfig, windows, counts, rng: np.random.Generator | None = None):
    """Fidelity per window with bootstrap error bars, and chi at the chi window."""
    a = cfg.analysis
    rng = rng or np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7, 0)))
    full = all(k in cfg.inputs for k in CARDINAL_LABELS)
    out, chis = [], {p: None for p in PROJECTIONS}
    for w_i, w in enumerate(windows):
        f, ferr, fd, n = [], [], [], []
        for p_i, proj in enumerate(PROJECTIONS):
            table = counts[p_i, w_i]
            n.append(int(table.sum()))
            if not full:
                f.append(math.nan), fd.append(math.nan), ferr.append(math.nan)
                continue
            f_chi, f_dir, chi = fidelity_from_table(table, proj)
            if w == a.chi_window:
                chis[proj] = chi
            boot = []
            if chi is not None:
                for _ in range(a.bootstrap_samples):
                    fb, _, _ = fidelity_from_table(rng.poisson(table), proj)
                    boot.append(fb)
            boot = np.array(boot, dtype=float)
            boot = boot[np.isfinite(boot)]
            f.append(f_chi)
            fd.append(f_dir)
            ferr.append(float(np.std(boot, ddof=1)) if boot.size > 1 else math.nan)
        tot = sum(n)
        if tot > 0 and all(np.isfinite(f)):
            avg = (n[0] * f[0] + n[1] * f[1]) / tot
            err = math.sqrt((n[0] * ferr[0]) ** 2 + (n[1] * ferr[1]) ** 2) / tot
        elif tot > 0 and any(np.isfinite(f)):
            k = int(np.argmax(np.isfinite(f)))
            avg, err = f[k], ferr[k]
        else:
            avg = err = math.nan
        out.append(WindowFidelity(float(w), tuple(n), tuple(f), tuple(ferr), tuple(fd), avg, err))
    return out, chis


def run_experiment(cfg: ScenarioConfig, *, threads: int = 1, progress=None) -> ExperimentResult:
    if any(b not in HERALD_BASES for b in cfg.herald_bases):
        raise QuantumInputError("unknown herald basis")
    start = time.perf_counter()
    windows, counts, dt_all, reports, model, excerpts = collect_counts(cfg, threads=threads, progress=progress)
    fids, chis = analyze(cfg, windows, counts)
    res = ExperimentResult(cfg, windows, counts, dt_all, reports, fids, chis, model, tag_excerpts=excerpts)
    res.elapsed = time.perf_counter() - start
    return res


def model_prediction(cfg: ScenarioConfig, window: float) -> dict:
    """Noise-free model of the per-projection fidelity at one window.

    The effective BSM visibility is the jitter-convolved HOM visibility in the
    window; polarization errors enter as unitaries on the three photons.
    Accidental coincidences are not modeled here.
    """
    from .interference import hom_visibility
    from .teleport import projection_fidelity

    ph = resolve_photons(cfg)
    v = hom_visibility(ph.wp1, ph.wp2, cfg.bsm_detector, window)
    ub = cfg.bsm_port_error
    errs = (ub @ cfg.x1_channel.polarization_error, ub @ cfg.x2_channel.polarization_error,
            cfg.xx2_channel.polarization_error)
    f = {p: projection_fidelity(ph.pair, min(max(v, 0.0), 1.0), p, channel_errors=errs) for p in PROJECTIONS}
    return {"visibility": v, **f}
