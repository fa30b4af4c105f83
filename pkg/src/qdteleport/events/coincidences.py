"""BSM pair finding, herald matching and temporal post-selection.

A BSM pair is two clicks whose channel combination is a Bell-state signature
(psi-: different port and polarization, psi+: same port, different
polarization) with ``|t2 - t1| <= window / 2``. Pairing is greedy: each click
takes the earliest later unused partner. Heralds are then assigned greedily
in pair order to the earliest unused XX2 click with
``|t_xx - t_first - delay| <= heralding_window``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import greedy_pairs, match_heralds
from .physics import signature_table
from .timetags import CH_BSM, CH_HERALD, TimeTagStream

PSI_MINUS, PSI_PLUS = 0, 1
PROJECTIONS = ("psi_minus", "psi_plus")
_SIG = signature_table()


@dataclass
class Coincidences:
    """Event table, one row per BSM pair, ordered by ``t_first``."""

    t_first: np.ndarray  # ps, BSM clock
    dt: np.ndarray  # ps, second minus first click, >= 0
    ch_first: np.ndarray
    ch_second: np.ndarray
    projection: np.ndarray  # PSI_MINUS or PSI_PLUS
    herald: np.ndarray  # 0 / 1 analyzer outcome, -1 when unheralded
    t_herald: np.ndarray  # ps on the BSM clock, -1 when unheralded

    def __len__(self) -> int:
        return int(self.t_first.size)

    @classmethod
    def empty(cls) -> "Coincidences":
        z = np.empty(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), z.copy())

    def select(self, mask) -> "Coincidences":
        return Coincidences(*(getattr(self, f)[mask] for f in _FIELDS))

    def heralded(self) -> "Coincidences":
        return self.select(self.herald >= 0)

    def within(self, window: float) -> "Coincidences":
        """Events whose BSM time difference lies inside a full-width window."""
        return self.select(self.dt <= window / 2)

    def equals(self, other: "Coincidences") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _FIELDS)

    @staticmethod
    def concat(parts) -> "Coincidences":
        parts = list(parts)
        if not parts:
            return Coincidences.empty()
        return Coincidences(*(np.concatenate([getattr(p, f) for p in parts]) for f in _FIELDS))


_FIELDS = ("t_first", "dt", "ch_first", "ch_second", "projection", "herald", "t_herald")


def find_bsm_pairs(t, ch, window: float = 400.0) -> Coincidences:
    """Greedy BSM pairs from time-ordered clicks on channels 0-3."""
    t = np.asarray(t, dtype=np.int64)
    ch = np.asarray(ch, dtype=np.int64)
    if t.size != ch.size:
        raise ValueError("times and channels differ in length")
    if t.size < 2:
        return Coincidences.empty()
    if np.any(np.diff(t) < 0):
        raise ValueError("BSM clicks must be sorted by time")
    if np.any((ch < 0) | (ch > 3)):
        raise ValueError("BSM channels must be 0-3")
    first, second = greedy_pairs(t, ch, int(np.floor(window / 2)), _SIG)
    n = first.size
    return Coincidences(t[first], t[second] - t[first], ch[first], ch[second],
                        _SIG[ch[first], ch[second]], np.full(n, -1, np.int64), np.full(n, -1, np.int64))


def _threefold(bt, bch, ht, hch, window, half, delay) -> Coincidences:
    pairs = find_bsm_pairs(bt, bch, window)
    if len(pairs) == 0 or ht.size == 0:
        return pairs
    k = match_heralds(pairs.t_first, ht, int(round(delay)), int(np.floor(half)))
    ok = k >= 0
    pairs.herald[ok] = hch[k[ok]] - CH_HERALD[0]
    pairs.t_herald[ok] = ht[k[ok]]
    return pairs


def _cut_points(bt, n_parts: int, min_gap: float) -> list[int]:
    """Indices splitting ``bt`` into about ``n_parts`` chunks at gaps wider than ``min_gap``."""
    if n_parts <= 1 or bt.size < 2:
        return []
    gaps = np.flatnonzero(np.diff(bt) > min_gap) + 1
    if gaps.size == 0:
        return []
    targets = np.linspace(0, bt.size, n_parts + 1)[1:-1]
    picks = gaps[np.clip(np.searchsorted(gaps, targets), 0, gaps.size - 1)]
    return sorted(set(int(p) for p in picks))


def find_threefold_coincidences(bsm_t, bsm_ch, herald_t, herald_ch, *, bsm_window: float = 400.0,
                                heralding_window: float = 1000.0, herald_delay: float = 0.0,
                                partitions: int = 1) -> Coincidences:
    """All BSM pairs within ``bsm_window`` with their herald assignment.

    Herald times must already be on the BSM timebase. With ``partitions > 1``
    the stream is cut at gaps wide enough that no pair or herald can straddle
    a cut, so the result does not depend on the partition count.
    """
    bt = np.asarray(bsm_t, dtype=np.int64)
    bch = np.asarray(bsm_ch, dtype=np.int64)
    ht = np.asarray(herald_t, dtype=np.int64)
    hch = np.asarray(herald_ch, dtype=np.int64)
    if ht.size != hch.size:
        raise ValueError("herald times and channels differ in length")
    if np.any(np.diff(ht) < 0):
        raise ValueError("herald clicks must be sorted by time")
    if heralding_window <= 0 or bsm_window <= 0:
        raise ValueError("windows must be positive")
    cuts = _cut_points(bt, partitions, bsm_window / 2 + 2 * heralding_window + 1)
    if not cuts:
        return _threefold(bt, bch, ht, hch, bsm_window, heralding_window, herald_delay)
    parts = []
    bounds = [0, *cuts, bt.size]
    for a, b in zip(bounds[:-1], bounds[1:]):
        d, h = int(round(herald_delay)), int(np.floor(heralding_window))
        i0 = np.searchsorted(ht, bt[a] + d - h, side="left")
        i1 = np.searchsorted(ht, bt[b - 1] + d + h, side="right")
        parts.append(_threefold(bt[a:b], bch[a:b], ht[i0:i1], hch[i0:i1], bsm_window,
                                heralding_window, herald_delay))
    return Coincidences.concat(parts)


def stream_coincidences(stream: TimeTagStream, herald_map, *, bsm_window: float = 400.0,
                        heralding_window: float = 1000.0, herald_delay: float = 0.0,
                        partitions: int = 1) -> Coincidences:
    """Coincidences of a two-tagger stream; ``herald_map`` converts herald-clock
    readings to BSM-clock ps (for example ``SyncResult.apply``)."""
    bt, bch = stream.channels(list(CH_BSM))
    ht_local, hch = stream.channels(list(CH_HERALD))
    ht = np.asarray(herald_map(ht_local), dtype=np.int64)
    order = np.argsort(ht, kind="stable")
    return find_threefold_coincidences(bt, bch, ht[order], hch[order], bsm_window=bsm_window,
                                       heralding_window=heralding_window, herald_delay=herald_delay,
                                       partitions=partitions)


@dataclass
class RetainedFraction:
    windows: np.ndarray
    counts: np.ndarray
    reference_count: int
    fraction: np.ndarray  # NaN when undefined
    defined: bool


def retained_fraction(dt, windows, reference: float = 400.0) -> RetainedFraction:
    """``N(|dt| <= W/2) / N(|dt| <= reference/2)`` for each window ``W``."""
    dt = np.abs(np.asarray(dt, dtype=float))
    w = np.asarray(windows, dtype=float)
    srt = np.sort(dt)
    counts = np.searchsorted(srt, w / 2, side="right")
    ref = int(np.searchsorted(srt, reference / 2, side="right"))
    if ref == 0:
        return RetainedFraction(w, counts, 0, np.full(w.shape, np.nan), False)
    return RetainedFraction(w, counts, ref, counts / ref, True)
