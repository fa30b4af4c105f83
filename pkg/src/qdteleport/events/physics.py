"""Per-setting outcome tables feeding the event generator.

Photons: X1 (from QD1), X2 and XX2 (the entangled pair from QD2). Each laser
cycle detects a subset of them, encoded as a bit mask (X1=1, X2=2, XX2=4).
BSM detectors are indexed ``port * 2 + pol`` (c_H, c_V, d_H, d_V); the
herald analyzer has outcome 0 (first basis vector) and 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..emitter import entangled_pair_state, fss_vs_strain, solve_resonance_field
from ..interference import FWHM_TO_SIGMA, PhotonWavepacket
from ..quantum import KETS, QuantumInputError, partial_trace, projector
from .config import ScenarioConfig

X1, X2, XX2 = 1, 2, 4
SUBSETS = np.arange(8)
HERALD_BASES = {"HV": ("H", "V"), "DA": ("D", "A"), "RL": ("R", "L")}

# ordered BSM click patterns: first detector at the earlier time, second at the later one
PATTERN_FIRST = np.repeat(np.arange(4), 4)
PATTERN_SECOND = np.tile(np.arange(4), 4)


def signature_table() -> np.ndarray:
    """``sig[ch_a, ch_b]``: 0 for psi-, 1 for psi+, -1 otherwise (BSM channels 0-3)."""
    sig = -np.ones((8, 8), dtype=np.int64)
    for a in range(4):
        for b in range(4):
            pa, qa = divmod(a, 2)
            pb, qb = divmod(b, 2)
            if qa != qb:
                sig[a, b] = 0 if pa != pb else 1
    return sig


@dataclass(frozen=True)
class Photons:
    wp1: PhotonWavepacket
    wp2: PhotonWavepacket
    lifetime_xx: float
    field: float | None
    pair: np.ndarray


def resolve_photons(cfg: ScenarioConfig) -> Photons:
    """Wavepackets at the operating point and the QD2 pair state."""
    field = cfg.magnetic_field
    ref = cfg.qd2.exciton_energy
    if field is None:
        field = solve_resonance_field(cfg.qd1, ref, cfg.qd1_branch)
        if field is None:
            raise QuantumInputError("QD1 cannot be tuned onto QD2 within the field range")
    wp1 = cfg.qd1.exciton_wavepacket(ref, field, cfg.qd1_branch, cfg.x1_arrival_offset)
    wp2 = cfg.qd2.exciton_wavepacket(ref, 0.0, "plus", cfg.x2_arrival_offset)
    fss = fss_vs_strain(cfg.qd2, cfg.qd2_strain_voltage)
    pair = entangled_pair_state(cfg.qd2, fss)
    return Photons(wp1, wp2, cfg.qd2.lifetime_xx, field, pair)


def detection_probabilities(cfg: ScenarioConfig, xx_fading=1.0) -> tuple[float, float, float, float]:
    """``(eta_x1, p2, eta_x2, eta_xx2)``; ``eta_x1`` includes QD1 preparation."""
    p1, p2 = cfg.preparation_efficiency
    eta_b = cfg.bsm_detector.efficiency
    eta_x1 = p1 * cfg.x1_channel.transmission * eta_b
    eta_x2 = cfg.x2_channel.transmission * eta_b
    eta_xx = np.minimum(cfg.xx2_channel.transmission * np.asarray(xx_fading), 1.0) * cfg.herald_detector.efficiency
    return eta_x1, p2, eta_x2, eta_xx


def subset_probabilities(eta_x1, p2, eta_x2, eta_xx) -> np.ndarray:
    """Probability of each detected subset per cycle; last axis indexed by mask."""
    eta_xx = np.asarray(eta_xx, dtype=float)
    q2 = np.stack([
        1 - p2 + p2 * (1 - eta_x2) * (1 - eta_xx),  # neither
        p2 * eta_x2 * (1 - eta_xx),  # X2 only
        p2 * (1 - eta_x2) * eta_xx,  # XX2 only
        p2 * eta_x2 * eta_xx,  # both
    ], axis=-1)
    out = np.empty(eta_xx.shape + (8,))
    for mask in range(8):
        qd2_state = ((mask >> 1) & 1) + 2 * ((mask >> 2) & 1)
        x1 = eta_x1 if mask & X1 else 1 - eta_x1
        out[..., mask] = x1 * q2[..., qd2_state]
    return out


def kept_masks(min_photons: int) -> np.ndarray:
    return np.array([m for m in range(1, 8) if bin(m).count("1") >= min_photons])


def herald_delay_model(cfg: ScenarioConfig, photons: Photons | None = None) -> dict:
    """Model means of the timing offsets used by sync and coincidence matching.

    ``pair_offset``: mean of ``t_XX2 - t_first`` for a BSM pair.
    ``sync_centroid``: mean ``t_XX2 - t_X`` of the same-cycle excess that
    survives background subtraction, for the configured recording mode.
    """
    ph = photons or resolve_photons(cfg)
    t1 = cfg.x1_arrival_offset + 1 / ph.wp1.decay_rate
    t2 = cfg.x2_arrival_offset + 1 / ph.wp2.decay_rate
    txx = cfg.herald_path_delay + ph.lifetime_xx
    g1, g2 = ph.wp1.decay_rate, ph.wp2.decay_rate
    s1, s2 = cfg.x1_arrival_offset, cfg.x2_arrival_offset
    # E[min(s1 + E1, s2 + E2)] by quadrature of the survival function
    lo = min(s1, s2)
    grid = np.linspace(lo, lo + 40 / min(g1, g2), 20001)
    surv = np.where(grid < s1, 1.0, np.exp(-g1 * (grid - s1))) * np.where(grid < s2, 1.0, np.exp(-g2 * (grid - s2)))
    e_first = lo + np.trapezoid(surv, grid)

    q = subset_probabilities(*detection_probabilities(cfg))
    keep = kept_masks(cfg.generation.min_detected_photons)
    rec = np.zeros(8)
    rec[keep] = q[keep]

    def p_with(bits):
        return sum(rec[m] for m in range(8) if m & bits == bits)

    w1 = p_with(X1 | XX2) - p_with(X1) * p_with(XX2)
    w2 = p_with(X2 | XX2) - p_with(X2) * p_with(XX2)
    if w1 + w2 <= 0:
        centroid = txx - t2
    else:
        centroid = txx - (w1 * t1 + w2 * t2) / (w1 + w2)
    return {"pair_offset": txx - e_first, "sync_centroid": centroid, "x1_mean": t1, "x2_mean": t2,
            "xx2_mean": txx, "excess_weights": (w1, w2)}


@dataclass(frozen=True)
class SettingTables:
    """Outcome weights for one (input state, herald basis) setting."""

    single: dict  # mask -> (categories, probs); static categorical draws
    pair_coef: np.ndarray  # (4, 16) features -> pattern weights, herald not detected
    triple_coef: np.ndarray  # (4, 32) features -> (pattern, herald outcome) weights
    herald_kets: tuple[str, str]


def _three_photon_state(cfg: ScenarioConfig, input_label: str, pair) -> np.ndarray:
    ub = cfg.bsm_port_error
    u1 = ub @ cfg.x1_channel.polarization_error
    u2 = ub @ cfg.x2_channel.polarization_error
    uxx = cfg.xx2_channel.polarization_error
    u = np.kron(np.kron(u1, u2), uxx)
    rho = np.kron(projector(input_label), pair)
    return u @ rho @ u.conj().T


def _pattern_coefficients(rho2) -> np.ndarray:
    """Feature coefficients for the 16 ordered patterns given the (X1, X2) operator ``rho2``.

    Features are ``|u|^2, |w|^2, D Re(u* w), D Im(u* w)`` with
    ``u = xi1(x) xi2(y)``, ``w = xi2(x) xi1(y)``.
    """
    coef = np.zeros((4, 16))
    for p in range(16):
        dx, dy = PATTERN_FIRST[p], PATTERN_SECOND[p]
        (px, a), (py, b) = divmod(int(dx), 2), divmod(int(dy), 2)
        sgn = 1.0 if px == py else -1.0
        ab, ba = 2 * a + b, 2 * b + a
        c = rho2[ba, ab]
        coef[0, p] = rho2[ab, ab].real / 4
        coef[1, p] = rho2[ba, ba].real / 4
        coef[2, p] = sgn * c.real / 2
        coef[3, p] = -sgn * c.imag / 2
    return coef


def setting_tables(cfg: ScenarioConfig, input_label: str, basis: str, pair) -> SettingTables:
    if basis not in HERALD_BASES:
        raise QuantumInputError(f"unknown herald basis {basis!r}")
    if input_label not in KETS:
        raise QuantumInputError(f"unknown input state {input_label!r}")
    rho3 = _three_photon_state(cfg, input_label, pair)
    kets = HERALD_BASES[basis]
    herald_ops = [projector(k) for k in kets]
    eye2 = np.eye(2)

    def prob(op_x1, op_x2, op_xx):
        return float(np.trace(np.kron(np.kron(op_x1, op_x2), op_xx) @ rho3).real)

    pol_ops = [projector("H"), projector("V")]
    single = {}
    # a lone BSM photon picks a port 50/50, then a polarization
    det_ops = [0.5 * pol_ops[d % 2] for d in range(4)]
    single[X1] = (np.arange(4), np.array([prob(o, eye2, eye2) for o in det_ops]))
    single[X2] = (np.arange(4), np.array([prob(eye2, o, eye2) for o in det_ops]))
    single[XX2] = (np.arange(2), np.array([prob(eye2, eye2, h) for h in herald_ops]))
    cats = np.array([d * 2 + k for d in range(4) for k in range(2)])
    single[X1 | XX2] = (cats, np.array([prob(det_ops[d], eye2, herald_ops[k]) for d in range(4) for k in range(2)]))
    single[X2 | XX2] = (cats, np.array([prob(eye2, det_ops[d], herald_ops[k]) for d in range(4) for k in range(2)]))
    for key, (c, p) in single.items():
        single[key] = (c, np.clip(p, 0.0, None))

    rho_pair = partial_trace(rho3, [0, 1])
    pair_coef = _pattern_coefficients(rho_pair)
    triple = np.zeros((4, 32))
    for k, h in enumerate(herald_ops):
        cond = np.kron(np.eye(4), h)
        rho_k = partial_trace(cond @ rho3, [0, 1])
        triple[:, k::2] = _pattern_coefficients(rho_k)
    return SettingTables(single, pair_coef, triple, kets)


def jitter_sigma(det) -> float:
    return det.jitter_fwhm * FWHM_TO_SIGMA
