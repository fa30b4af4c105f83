"""Brute-force reference computations.

These deliberately avoid the closed forms used elsewhere in the package and
are only meant for cross-checking them in tests and calibration reports.
"""
from __future__ import annotations

import itertools

import numpy as np

from .interference import PhotonWavepacket

# single-photon modes: (port, pol, temporal) with port 0/1 = a/b before and c/d after the BS
_N_MODES = 8


def _mode(port: int, pol: int, tmode: int) -> int:
    return port * 4 + pol * 2 + tmode


def _beam_splitter(port_unitaries=None) -> np.ndarray:
    """Single-particle unitary: a -> (c + d)/sqrt2, b -> (c - d)/sqrt2, then
    optional polarization unitaries on the c and d outputs."""
    u = np.zeros((_N_MODES, _N_MODES), dtype=np.complex128)
    s = 1 / np.sqrt(2)
    for pol in range(2):
        for t in range(2):
            a, b = _mode(0, pol, t), _mode(1, pol, t)
            c, d = _mode(0, pol, t), _mode(1, pol, t)
            u[c, a] += s
            u[d, a] += s
            u[c, b] += s
            u[d, b] -= s
    if port_unitaries is not None:
        w = np.eye(_N_MODES, dtype=np.complex128)
        for port, pu in enumerate(port_unitaries):
            if pu is None:
                continue
            for t in range(2):
                idx = [_mode(port, 0, t), _mode(port, 1, t)]
                w[np.ix_(idx, idx)] = pu
        u = w @ u
    return u


def bsm_click_povms(v_hom: float, port_unitaries=None) -> dict[tuple, np.ndarray]:
    """POVM element (4x4 on X1 x X2 polarization) for every two-detector click pair.

    Photon 1 enters port a in temporal mode 0; photon 2 enters port b in
    ``sqrt(v)|0> + sqrt(1-v)|1>``. Detectors resolve port and polarization
    only. Keys are sorted pairs of ``(port, pol)`` detectors; a single key
    ``((port, pol),)`` collects the bunched events in one detector.
    """
    temporal2 = np.array([np.sqrt(v_hom), np.sqrt(1 - v_hom)])
    u = _beam_splitter(port_unitaries)
    # amplitude[occupation][input basis index]
    amps: dict[tuple, np.ndarray] = {}
    for i, j in itertools.product(range(2), repeat=2):
        c1 = np.zeros(_N_MODES, dtype=np.complex128)
        c1[_mode(0, i, 0)] = 1
        c2 = np.zeros(_N_MODES, dtype=np.complex128)
        c2[_mode(1, j, 0)] = temporal2[0]
        c2[_mode(1, j, 1)] = temporal2[1]
        m = 0.5 * (np.outer(c1, c2) + np.outer(c2, c1))
        m = u @ m @ u.T
        for p in range(_N_MODES):
            for q in range(p, _N_MODES):
                amp = 2 * m[p, q] if p != q else np.sqrt(2) * m[p, p]
                amps.setdefault((p, q), np.zeros(4, dtype=np.complex128))[2 * i + j] = amp
    povms: dict[tuple, np.ndarray] = {}
    for (p, q), vec in amps.items():
        dp, dq = (p // 4, (p // 2) % 2), (q // 4, (q // 2) % 2)
        key = (dp,) if dp == dq else tuple(sorted((dp, dq)))
        povms.setdefault(key, np.zeros((4, 4), dtype=np.complex128))
        povms[key] += np.outer(vec.conj(), vec)
    return povms


PSI_MINUS_CLICKS = (((0, 0), (1, 1)), ((0, 1), (1, 0)))
PSI_PLUS_CLICKS = (((0, 0), (0, 1)), ((1, 0), (1, 1)))


def bsm_operators_oracle(v_hom: float, port_unitaries=None) -> tuple[np.ndarray, np.ndarray]:
    povms = bsm_click_povms(v_hom, port_unitaries)
    pm = sum(povms[k] for k in PSI_MINUS_CLICKS)
    pp = sum(povms[k] for k in PSI_PLUS_CLICKS)
    return pm, pp


def tpi_density_oracle(wp1: PhotonWavepacket, wp2: PhotonWavepacket, copolarized: bool,
                       dt: float = 0.5, t_max: float | None = None, n_tau: int | None = None):
    """Coincidence density from a discretized two-photon state.

    Each photon is a density matrix on a time grid (pure amplitude times the
    dephasing kernel). Pure photons are propagated as explicit two-photon
    amplitudes through the beam splitter; mixed ones through the equivalent
    second-order correlation of the BS output modes. Returns ``(tau, g)``
    normalized like :func:`tpi_coincidence_density`.
    """
    if t_max is None:
        t_max = max(wp1.arrival_offset, wp2.arrival_offset) + 25 * max(1 / wp1.decay_rate, 1 / wp2.decay_rate)
    t = np.arange(min(wp1.arrival_offset, wp2.arrival_offset), t_max, dt) + dt / 2
    n = t.size
    x1 = wp1.amplitude(t) * np.sqrt(dt)
    x2 = wp2.amplitude(t) * np.sqrt(dt)
    n_tau = n - 1 if n_tau is None else n_tau
    shifts = np.arange(-n_tau, n_tau + 1)
    g = np.zeros(shifts.size)
    pure = wp1.dephasing_rate == 0 and wp2.dephasing_rate == 0
    deph = wp1.dephasing_rate + wp2.dephasing_rate
    for k, s in enumerate(shifts):
        # pairs (c at t_i, d at t_i+s) along one diagonal of the two-time plane
        i = np.arange(max(0, -s), min(n, n - s))
        a1, a2, b1, b2 = x1[i], x2[i], x1[i + s], x2[i + s]
        if pure and copolarized:
            amp = -a1 * b2 + a2 * b1
            g[k] = 0.25 * np.sum(np.abs(amp) ** 2)
            continue
        direct = np.abs(a1 * b2) ** 2 + np.abs(a2 * b1) ** 2
        if copolarized:
            # rho1(x, y) rho2(y, x) with the dephasing kernel on both photons
            cross = 2 * np.real(a1 * b1.conj() * b2 * a2.conj()) * np.exp(-deph * abs(s) * dt)
            direct = direct - cross
        g[k] = 0.25 * np.sum(direct)
    # per unit delay, normalized to the distinguishable coincidence probability 1/2
    return shifts * dt, 2 * g / dt


def conditional_output_oracle(rho_in, pair, pi) -> np.ndarray:
    """Explicit index loop for ``Tr_12[(Pi x I)(rho_in x pair)]``."""
    rho3 = np.zeros((8, 8), dtype=np.complex128)
    for a, b, c, a2, b2, c2 in itertools.product(range(2), repeat=6):
        rho3[4 * a + 2 * b + c, 4 * a2 + 2 * b2 + c2] = rho_in[a, a2] * pair[2 * b + c, 2 * b2 + c2]
    m = np.kron(pi, np.eye(2)) @ rho3
    out = np.zeros((2, 2), dtype=np.complex128)
    for c, c2 in itertools.product(range(2), repeat=2):
        out[c, c2] = sum(m[4 * a + 2 * b + c, 4 * a + 2 * b + c2] for a in range(2) for b in range(2))
    return out


def haar_average_fidelity(channel, rng: np.random.Generator, n: int = 100_000):
    """Monte Carlo Haar average of ``<psi|channel(|psi><psi|)|psi>``; returns (mean, stderr)."""
    v = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    vals = np.empty(n)
    for k in range(n):
        rho = np.outer(v[k], v[k].conj())
        vals[k] = np.vdot(v[k], channel(rho) @ v[k]).real
    return vals.mean(), vals.std(ddof=1) / np.sqrt(n)
