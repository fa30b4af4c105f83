"""Recovering the herald-tagger clock on the BSM tagger's timebase.

The estimate is an affine map ``t_bsm = scale * t_herald + offset``. It is
found in three stages:

1. a prior: a straight-line fit to the GPS pulse-per-second tags of both
   taggers (integer-second pairing ambiguity resolved in stage 2), or, when
   no PPS tags are present, FFT cross-correlation of coarse-binned arrival
   histograms on a few short segments;
2. comb-tooth selection: all photons share the laser clock so the
   herald-minus-BSM delay histogram is a comb with one tooth raised by the
   same-cycle correlation of the cascade photons;
3. refinement: per segment, the background-subtracted centroid of that tooth
   (neighbouring teeth estimate the accidental background) is compared with
   the model centroid and a weighted line through the residuals corrects
   offset and drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import diff_histogram
from .timetags import CH_BSM, CH_HERALD, CH_PPS_BSM, CH_PPS_HERALD, TimeTagStream

PS_PER_S = 1e12


@dataclass
class SyncResult:
    ok: bool
    scale: float = 1.0
    offset: float = 0.0
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def drift_ppm(self) -> float:
        """Rate of the BSM clock relative to the herald clock, minus one, in ppm."""
        return (self.scale - 1.0) * 1e6

    def map(self, t_herald) -> np.ndarray:
        return self.scale * np.asarray(t_herald, dtype=float) + self.offset

    def apply(self, t_herald) -> np.ndarray:
        if not self.ok:
            raise RuntimeError(f"synchronization failed: {self.diagnostics.get('reason', 'unknown')}")
        return np.rint(self.map(t_herald)).astype(np.int64)


class SyncError(RuntimeError):
    def __init__(self, result: SyncResult):
        super().__init__(result.diagnostics.get("reason", "synchronization failed"))
        self.result = result


def _fit_line(x, y, w=None):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    if x.size == 1:
        return 0.0, float(y[0])
    xm = np.average(x, weights=w)
    ym = np.average(y, weights=w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx) if sxx > 0 else 0.0
    return slope, float(ym - slope * xm)


# -- stage 2/3: comb teeth --------------------------------------------------------


def _tooth_counts(tb, mapped, centroid, period, n_teeth, half):
    """Counts in windows ``centroid + k*period +- half`` for k in [-n_teeth, n_teeth]."""
    lo = int(math.floor(centroid - n_teeth * period - half))
    hi = int(math.ceil(centroid + n_teeth * period + half)) + 1
    width = 50
    hist = diff_histogram(tb, mapped, lo, hi, width)
    edges = lo + width * np.arange(hist.size + 1)
    cum = np.concatenate([[0], np.cumsum(hist)])
    ks = np.arange(-n_teeth, n_teeth + 1)
    a = np.clip(np.searchsorted(edges, centroid + ks * period - half), 0, hist.size)
    b = np.clip(np.searchsorted(edges, centroid + ks * period + half), 0, hist.size)
    return ks, cum[b] - cum[a]


def _tooth_contrast(counts):
    peak = int(np.argmax(counts))
    others = np.delete(counts, peak)
    bg = float(np.median(others)) if others.size else 0.0
    excess = counts[peak] - bg
    z = excess / math.sqrt(max(counts[peak] + bg, 1.0))
    return peak, excess, z


def _centroid_residual(tb, mapped, centre, period, half):
    """Background-subtracted mean of ``mapped - tb`` in the tooth at ``centre``."""
    width = 8
    lo = int(math.floor(centre - period - half))
    hi = int(math.ceil(centre + period + half)) + width
    hist = diff_histogram(tb, mapped, lo, hi, width).astype(float)
    mid = lo + width * (np.arange(hist.size) + 0.5)

    def window(c):
        sel = np.abs(mid - c) <= half
        return hist[sel], mid[sel] - c

    h0, d0 = window(centre)
    hm, _ = window(centre - period)
    hp, _ = window(centre + period)
    n = min(h0.size, hm.size, hp.size)
    h0, d0 = h0[:n], d0[:n]
    bg = 0.5 * (hm[:n] + hp[:n])
    ex = h0 - bg
    n_ex = ex.sum()
    if n_ex <= 0:
        return None, 0.0, 0.0
    var = np.sum((h0 + 0.25 * (hm[:n] + hp[:n])) * d0**2) / n_ex**2 + np.sum(ex * d0**2) / n_ex**2
    return float(np.sum(ex * d0) / n_ex), float(n_ex), float(math.sqrt(max(var, 1e-12)))


# -- stage 1 priors -----------------------------------------------------------------


def _pps_candidates(pps_b, pps_h, max_shift=2):
    out = []
    if pps_b.size < 2 or pps_h.size < 2:
        return out
    for n in range(-max_shift, max_shift + 1):
        ib = np.arange(pps_h.size) + n
        ok = (ib >= 0) & (ib < pps_b.size)
        if ok.sum() < 2:
            continue
        slope, icpt = _fit_line(pps_h[ok], pps_b[ib[ok]])
        resid = pps_b[ib[ok]] - (slope * pps_h[ok] + icpt)
        if abs(slope - 1) > 1e-3:
            continue
        out.append((slope, icpt, float(np.sqrt(np.mean(resid**2))), n))
    return out


def _fft_lag(tb, th, h0, length, search, width):
    """Lag (ps) maximizing the binned cross-correlation of herald segment
    ``[h0, h0 + length)`` against BSM tags, with ``tb ~ th + lag``."""
    seg_h = th[(th >= h0) & (th < h0 + length)]
    if seg_h.size == 0:
        return None, 0.0
    b0 = h0 - search
    nb = int(math.ceil((length + 2 * search) / width))
    seg_b = tb[(tb >= b0) & (tb < b0 + nb * width)]
    hb = np.bincount(((seg_b - b0) // width).astype(np.int64), minlength=nb)[:nb].astype(float)
    nh = int(math.ceil(length / width))
    hh = np.bincount(((seg_h - h0) // width).astype(np.int64), minlength=nh)[:nh].astype(float)
    n = 1 << int(math.ceil(math.log2(nb + nh)))
    corr = np.fft.irfft(np.fft.rfft(hb, n) * np.conj(np.fft.rfft(hh, n)), n)[: nb - nh + 1]
    k = int(np.argmax(corr))
    z = (corr[k] - np.median(corr)) / (np.std(corr) + 1e-12)
    return b0 - h0 + k * width + width / 2, float(z)


def _coarse_prior(tb, th, max_offset, centroid):
    """Offset/drift prior without PPS: two resolutions of binned cross-correlation."""
    t_end = float(th[-1])
    t_start = float(th[0])
    n_seg = 5
    starts = np.linspace(t_start, max(t_start, t_end - 0.02 * PS_PER_S), n_seg)
    lags, zs = [], []
    for s in starts:
        lag, z = _fft_lag(tb, th, s, 0.02 * PS_PER_S, max_offset, 1_000_000)
        lags.append(lag)
        zs.append(z)
    good = [i for i, lag in enumerate(lags) if lag is not None and zs[i] > 6]
    if not good:
        return None, {"reason": "no significant coarse correlation", "coarse_z": zs}
    mids = starts[good] + 0.01 * PS_PER_S
    slope, icpt = _fit_line(mids, np.array(lags)[good])
    # second pass with 16 ns bins around the coarse line
    lags2, mids2 = [], []
    th_m = th * (1 + slope) + icpt
    for s in starts[good]:
        mid = s + 0.01 * PS_PER_S
        lag, z = _fft_lag(tb, th_m, s * (1 + slope) + icpt, 0.02 * PS_PER_S, 4_000_000, 16_000)
        if lag is not None and z > 6:
            lags2.append(slope * mid + icpt + lag * (1 + slope))
            mids2.append(mid)
    if len(lags2) >= 2:
        slope, icpt = _fit_line(mids2, lags2)
    # lag is tb - th; the correlated photons sit at th - tb = centroid
    return (1.0 + slope, icpt + centroid), {"coarse_z": zs}


# -- driver -------------------------------------------------------------------------


def synchronize(stream: TimeTagStream, centroid: float, period: float, *, use_pps: bool = True,
                max_offset: float = 1.1e12, segment: float = 1.0, min_significance: float = 5.0) -> SyncResult:
    """Estimate the herald-to-BSM clock map from one pair of tag streams.

    ``centroid`` is the model mean of ``t_herald - t_bsm`` for correlated
    photons on a common timebase; ``period`` is the laser period (ps).
    Failures return ``ok=False`` with a ``reason`` in the diagnostics.
    """
    diag: dict = {}
    try:
        tb, _ = stream.channels(list(CH_BSM))
        th, _ = stream.channels(list(CH_HERALD))
        if tb.size < 2 or th.size < 2:
            return SyncResult(False, method="none", diagnostics={"reason": "not enough tags to correlate"})
        pps_b = stream.channel(CH_PPS_BSM).astype(float)
        pps_h = stream.channel(CH_PPS_HERALD).astype(float)
        half = min(0.4 * period, 4000.0)
        n_teeth = 8

        candidates = []
        if use_pps:
            for slope, icpt, rms, shift in _pps_candidates(pps_b, pps_h):
                candidates.append(("pps", slope, icpt, {"pps_rms_ps": rms, "pps_shift": shift}))
        if not candidates:
            prior, info = _coarse_prior(tb, th.astype(float), max_offset, centroid)
            diag.update(info)
            if prior is None:
                return SyncResult(False, method="xcorr", diagnostics={**diag, "reason": info["reason"]})
            candidates.append(("xcorr", prior[0], prior[1], {}))

        # pick the candidate whose comb shows the strongest raised tooth
        best = None
        for method, slope, icpt, info in candidates:
            mapped = np.rint(slope * th + icpt).astype(np.int64)
            ks, counts = _tooth_counts(tb, np.sort(mapped), centroid, period, n_teeth, half)
            peak, excess, z = _tooth_contrast(counts)
            if best is None or z > best[0]:
                best = (z, method, slope, icpt, ks[peak], info, excess)
        z, method, slope, icpt, k_peak, info, excess = best
        diag.update(info)
        diag.update({"tooth_z": z, "tooth_index": int(k_peak), "tooth_excess": excess})
        if z < min_significance:
            return SyncResult(False, slope, icpt, method,
                              {**diag, "reason": f"correlation peak significance {z:.2f} below {min_significance}"})
        icpt -= k_peak * period  # move the raised tooth onto the model centroid

        t0, t1 = float(th[0]), float(th[-1])
        span = t1 - t0
        seg_len = min(segment * PS_PER_S, max(span / 4, 1.0))
        for _ in range(3):
            n_seg = max(1, int(round(span / seg_len)))
            edges = np.linspace(t0, t1 + 1, n_seg + 1)
            mids, res, wts = [], [], []
            mapped_all = slope * th + icpt
            for a, b in zip(edges[:-1], edges[1:]):
                sel = (th >= a) & (th < b)
                if sel.sum() < 2:
                    continue
                m = np.rint(mapped_all[sel]).astype(np.int64)
                lo_b, hi_b = m[0] - centroid - 2 * period, m[-1] - centroid + 2 * period
                bsel = tb[(tb >= lo_b) & (tb <= hi_b)]
                c, n_ex, err = _centroid_residual(bsel, m, centroid, period, half)
                if c is None or n_ex < 10:
                    continue
                mids.append(0.5 * (a + b))
                res.append(c)
                wts.append(1.0 / err**2)
            if not res:
                return SyncResult(False, slope, icpt, method, {**diag, "reason": "no segment with a usable tooth"})
            if len(res) >= 2:
                ds, di = _fit_line(mids, res, wts)
            else:
                ds, di = 0.0, res[0]
            slope -= ds
            icpt -= di
        resid = np.array(res) - (ds * np.array(mids) + di)
        diag.update({"segments": len(res), "segment_residual_rms_ps": float(np.sqrt(np.mean(resid**2))),
                     "centroid_ps": centroid})
        return SyncResult(True, float(slope), float(icpt), method, diag)
    except Exception as exc:  # report, never crash the pipeline
        return SyncResult(False, method="error", diagnostics={**diag, "reason": f"{type(exc).__name__}: {exc}"})
