"""Hot loops of the event layer, each with a numba and a numpy implementation.

Dispatch follows :mod:`qdteleport._accel`. The public wrappers validate and
convert inputs, then call ``_nb_*`` or ``_np_*``.
"""
from __future__ import annotations

import numpy as np

from .. import _accel
from .._accel import njit

# --------------------------------------------------------------------------
# categorical sampling from linear features


@njit
def _nb_categorical(feats, coef, uniforms):
    n, nf = feats.shape
    k = coef.shape[1]
    out = np.empty(n, dtype=np.int64)
    probs = np.empty(k)
    for i in range(n):
        total = 0.0
        for j in range(k):
            p = 0.0
            for f in range(nf):
                p += feats[i, f] * coef[f, j]
            if p < 0.0:
                p = 0.0
            probs[j] = p
            total += p
        target = uniforms[i] * total
        acc = 0.0
        choice = k - 1
        for j in range(k):
            acc += probs[j]
            if target < acc:
                choice = j
                break
        out[i] = choice
    return out


def _np_categorical(feats, coef, uniforms, chunk=200_000):
    n = feats.shape[0]
    out = np.empty(n, dtype=np.int64)
    k = coef.shape[1]
    for s in range(0, n, chunk):
        p = np.maximum(feats[s:s + chunk] @ coef, 0.0)
        cum = np.cumsum(p, axis=1)
        target = uniforms[s:s + chunk] * cum[:, -1]
        idx = (cum <= target[:, None]).sum(axis=1)
        out[s:s + chunk] = np.minimum(idx, k - 1)
    return out


def sample_categorical(feats, coef, uniforms) -> np.ndarray:
    """Draw one category per row with weights ``max(feats @ coef, 0)``.

    ``uniforms`` are U[0,1) variates, one per row; inverse-CDF selection.
    """
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if feats.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    if _accel.enabled():
        return _nb_categorical(feats, coef, uniforms)
    return _np_categorical(feats, coef, uniforms)


# --------------------------------------------------------------------------
# greedy earliest-match pairing of BSM clicks


@njit
def _nb_greedy_pairs(t, ch, window, sig):
    n = t.shape[0]
    used = np.zeros(n, dtype=np.bool_)
    first = np.empty(n, dtype=np.int64)
    second = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        if used[i]:
            continue
        j = i + 1
        while j < n and t[j] - t[i] <= window:
            if not used[j] and sig[ch[i], ch[j]] >= 0:
                used[i] = True
                used[j] = True
                first[m] = i
                second[m] = j
                m += 1
                break
            j += 1
    return first[:m], second[:m]


def _np_greedy_pairs(t, ch, window, sig):
    n = t.size
    if n < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    close = np.diff(t) <= window
    # only clusters of clicks chained by short gaps can pair; walk those in python
    starts = np.flatnonzero(close & np.concatenate([[True], ~close[:-1]]))
    ends = np.flatnonzero(close & np.concatenate([~close[1:], [True]])) + 2
    firsts, seconds = [], []
    sig_l = sig.tolist()
    for s, e in zip(starts.tolist(), ends.tolist()):
        tt = t[s:e].tolist()
        cc = ch[s:e].tolist()
        used = [False] * (e - s)
        for i in range(e - s):
            if used[i]:
                continue
            j = i + 1
            while j < e - s and tt[j] - tt[i] <= window:
                if not used[j] and sig_l[cc[i]][cc[j]] >= 0:
                    used[i] = used[j] = True
                    firsts.append(s + i)
                    seconds.append(s + j)
                    break
                j += 1
    return np.array(firsts, dtype=np.int64), np.array(seconds, dtype=np.int64)


def greedy_pairs(t, ch, window: int, sig) -> tuple[np.ndarray, np.ndarray]:
    """Pair each click with the earliest later unused click within ``window``
    whose channel pair has ``sig[ch_i, ch_j] >= 0``. Returns index arrays."""
    t = np.ascontiguousarray(t, dtype=np.int64)
    ch = np.ascontiguousarray(ch, dtype=np.int64)
    sig = np.ascontiguousarray(sig, dtype=np.int64)
    if _accel.enabled():
        return _nb_greedy_pairs(t, ch, np.int64(window), sig)
    return _np_greedy_pairs(t, ch, int(window), sig)


# --------------------------------------------------------------------------
# herald assignment


@njit
def _nb_match_heralds(pair_t, ht, delay, half):
    n = pair_t.shape[0]
    nh = ht.shape[0]
    used = np.zeros(nh, dtype=np.bool_)
    out = np.full(n, -1, dtype=np.int64)
    ptr = 0
    for i in range(n):
        lo = pair_t[i] + delay - half
        hi = pair_t[i] + delay + half
        while ptr < nh and ht[ptr] < lo:
            ptr += 1
        k = ptr
        while k < nh and ht[k] <= hi:
            if not used[k]:
                used[k] = True
                out[i] = k
                break
            k += 1
    return out


def _np_match_heralds(pair_t, ht, delay, half):
    out = np.full(pair_t.size, -1, dtype=np.int64)
    if ht.size == 0 or pair_t.size == 0:
        return out
    lo = np.searchsorted(ht, pair_t + delay - half, side="left")
    hi = np.searchsorted(ht, pair_t + delay + half, side="right")
    used = set()
    for i in np.flatnonzero(hi > lo).tolist():
        for k in range(int(lo[i]), int(hi[i])):
            if k not in used:
                used.add(k)
                out[i] = k
                break
    return out


def match_heralds(pair_t, ht, delay: int, half: int) -> np.ndarray:
    """For pairs in time order, the earliest unused herald with
    ``|ht - pair_t - delay| <= half``; -1 where none."""
    pair_t = np.ascontiguousarray(pair_t, dtype=np.int64)
    ht = np.ascontiguousarray(ht, dtype=np.int64)
    if _accel.enabled():
        return _nb_match_heralds(pair_t, ht, np.int64(delay), np.int64(half))
    return _np_match_heralds(pair_t, ht, int(delay), int(half))


# --------------------------------------------------------------------------
# pairwise time differences


@njit
def _nb_diff_histogram(ta, tb, lo, hi, width):
    nbins = (hi - lo) // width
    hist = np.zeros(nbins, dtype=np.int64)
    start = 0
    nb = tb.shape[0]
    for i in range(ta.shape[0]):
        a = ta[i]
        while start < nb and tb[start] - a < lo:
            start += 1
        k = start
        while k < nb:
            d = tb[k] - a
            if d >= hi:
                break
            b = (d - lo) // width
            if b < nbins:
                hist[b] += 1
            k += 1
    return hist


def _np_diff_histogram(ta, tb, lo, hi, width, chunk=100_000):
    nbins = (hi - lo) // width
    hist = np.zeros(nbins, dtype=np.int64)
    for s in range(0, ta.size, chunk):
        a = ta[s:s + chunk]
        i0 = np.searchsorted(tb, a + lo, side="left")
        i1 = np.searchsorted(tb, a + hi, side="left")
        cnt = i1 - i0
        if cnt.sum() == 0:
            continue
        rep = np.repeat(np.arange(a.size), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        d = tb[i0[rep] + offs] - a[rep]
        b = (d - lo) // width
        hist += np.bincount(b[b < nbins], minlength=nbins)
    return hist


def diff_histogram(ta, tb, lo: int, hi: int, width: int) -> np.ndarray:
    """Histogram of ``tb[k] - ta[i]`` over all pairs with ``lo <= d < hi``.

    Both inputs sorted ascending (int64 ps). Bin ``b`` covers
    ``[lo + b*width, lo + (b+1)*width)``.
    """
    ta = np.ascontiguousarray(ta, dtype=np.int64)
    tb = np.ascontiguousarray(tb, dtype=np.int64)
    lo, hi, width = int(lo), int(hi), int(width)
    if hi <= lo or width <= 0:
        raise ValueError("need hi > lo and width > 0")
    hi = lo + ((hi - lo) // width) * width
    if _accel.enabled():
        return _nb_diff_histogram(ta, tb, np.int64(lo), np.int64(hi), np.int64(width))
    return _np_diff_histogram(ta, tb, lo, hi, width)
