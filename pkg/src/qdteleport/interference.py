"""Two-photon interference between dissimilar exponential wavepackets.

Densities are normalized so that the cross-polarized density integrates to
one over all delays. The delay is ``tau = t_d - t_c`` between the clicks at
the two beam-splitter outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .quantum import QuantumInputError, projector

HBAR_UEV_PS = 658.2119569  # hbar in ueV * ps
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
REFERENCE_WINDOW_PS = 400.0


@dataclass(frozen=True)
class PhotonWavepacket:
    decay_rate: float  # 1/ps
    arrival_offset: float = 0.0  # ps
    detuning: float = 0.0  # ueV
    dephasing_rate: float = 0.0  # 1/ps

    def __post_init__(self):
        if not self.decay_rate > 0:
            raise QuantumInputError("decay_rate must be positive")
        if self.dephasing_rate < 0:
            raise QuantumInputError("dephasing_rate must be non-negative")

    @classmethod
    def from_lifetime(cls, lifetime_ps: float, **kw) -> "PhotonWavepacket":
        return cls(decay_rate=1.0 / lifetime_ps, **kw)

    @property
    def angular_frequency(self) -> float:
        """Detuning in rad/ps."""
        return self.detuning / HBAR_UEV_PS

    def amplitude(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        dt = t - self.arrival_offset
        env = np.where(dt >= 0, np.sqrt(self.decay_rate) * np.exp(-0.5 * self.decay_rate * np.maximum(dt, 0)), 0.0)
        return env * np.exp(-1j * self.angular_frequency * t)

    def intensity(self, t) -> np.ndarray:
        return np.abs(self.amplitude(t)) ** 2


@dataclass(frozen=True)
class DetectorResponse:
    jitter_fwhm: float = 0.0  # ps, single detector
    efficiency: float = 1.0
    dark_rate: float = 0.0  # 1/s

    def __post_init__(self):
        if self.jitter_fwhm < 0:
            raise QuantumInputError("jitter_fwhm must be non-negative")
        if not 0.0 <= self.efficiency <= 1.0:
            raise QuantumInputError("efficiency must lie in [0, 1]")

    @property
    def pair_sigma(self) -> float:
        """Std. dev. of the click-time difference between two such detectors."""
        return math.sqrt(2.0) * self.jitter_fwhm * FWHM_TO_SIGMA


@dataclass(frozen=True)
class CoincidenceWindow:
    """Full width of the accepted delay range: ``|t1 - t2| <= delta_tau / 2``."""

    delta_tau: float  # ps

    def __post_init__(self):
        if not self.delta_tau > 0:
            raise QuantumInputError("coincidence window must be positive")
        if self.delta_tau > REFERENCE_WINDOW_PS + 1e-9:
            raise QuantumInputError("coincidence window exceeds the 400 ps reference")

    @property
    def half_width(self) -> float:
        return self.delta_tau / 2.0


def _intensity_overlap(ga, sa, gb, sb, tau):
    """int |xi_a(t)|^2 |xi_b(t + tau)|^2 dt for one-sided exponentials."""
    m = np.maximum(sa, sb - tau)
    return ga * gb / (ga + gb) * np.exp(-ga * (m - sa) - gb * (m + tau - sb))


def _interference_term(wp1: PhotonWavepacket, wp2: PhotonWavepacket, tau):
    """Re int xi1(t) xi2(t+tau) xi2*(t) xi1*(t+tau) dt, including dephasing."""
    g1, g2 = wp1.decay_rate, wp2.decay_rate
    s1, s2 = wp1.arrival_offset, wp2.arrival_offset
    m = np.maximum(np.maximum(s1, s1 - tau), np.maximum(s2, s2 - tau))
    mag = g1 * g2 / (g1 + g2) * np.exp(-g1 * (m - s1 + tau / 2) - g2 * (m - s2 + tau / 2))
    dw = wp1.angular_frequency - wp2.angular_frequency
    deph = np.exp(-(wp1.dephasing_rate + wp2.dephasing_rate) * np.abs(tau))
    return mag * np.cos(dw * tau) * deph


def tpi_coincidence_density(wp1: PhotonWavepacket, wp2: PhotonWavepacket,
                            copolarized: bool, tau_grid) -> np.ndarray:
    """Time-resolved two-photon coincidence density (per ps) on ``tau_grid``.

    The cross-polarized density is the symmetrized intensity correlation; the
    co-polarized one subtracts the interference term, i.e.
    ``g_par = g_perp * (1 - v(tau))`` with ``v`` from :func:`single_event_visibility`.
    """
    tau = np.asarray(tau_grid, dtype=float)
    a = _intensity_overlap(wp1.decay_rate, wp1.arrival_offset, wp2.decay_rate, wp2.arrival_offset, tau)
    b = _intensity_overlap(wp2.decay_rate, wp2.arrival_offset, wp1.decay_rate, wp1.arrival_offset, tau)
    g = 0.5 * (a + b)
    if copolarized:
        g = g - _interference_term(wp1, wp2, tau)
        g = np.maximum(g, 0.0)
    return g


def single_event_visibility(wp1: PhotonWavepacket, wp2: PhotonWavepacket, tau_grid) -> np.ndarray:
    """Interference contrast ``v(tau)`` of a coincidence at delay ``tau``.

    Equals ``cos(dw tau) exp(-(g*_1 + g*_2)|tau|)`` times the envelope factor
    ``2 sqrt(A B) / (A + B)``, which reduces to ``sech((g1 - g2) tau / 2)`` for
    simultaneous arrivals.
    """
    tau = np.asarray(tau_grid, dtype=float)
    perp = tpi_coincidence_density(wp1, wp2, False, tau)
    inter = _interference_term(wp1, wp2, tau)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(perp > 0, inter / np.where(perp > 0, perp, 1.0), 0.0)
    return v


def convolve_jitter(density, det: DetectorResponse, dt: float) -> np.ndarray:
    """Convolve a density sampled on a uniform grid (step ``dt`` ps) with the
    Gaussian response of two independent detectors."""
    density = np.asarray(density, dtype=float)
    sigma = det.pair_sigma
    if sigma == 0:
        return density.copy()
    half = int(math.ceil(8 * sigma / dt))
    x = np.arange(-half, half + 1) * dt
    kern = np.exp(-0.5 * (x / sigma) ** 2)
    kern /= kern.sum()
    return fftconvolve(density, kern, mode="same")


def default_tau_grid(wp1: PhotonWavepacket, wp2: PhotonWavepacket,
                     det: DetectorResponse | None = None, dt: float = 0.25) -> np.ndarray:
    """Symmetric delay grid wide enough to hold both tails and the jitter kernel."""
    slow = max(1 / wp1.decay_rate, 1 / wp2.decay_rate)
    shift = abs(wp1.arrival_offset - wp2.arrival_offset)
    sigma = det.pair_sigma if det is not None else 0.0
    span = 30 * slow + shift + 10 * sigma
    n = int(math.ceil(span / dt))
    return np.arange(-n, n + 1) * dt


@dataclass(frozen=True)
class HomCurves:
    tau: np.ndarray
    parallel: np.ndarray
    perpendicular: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.tau[1] - self.tau[0])

    def _window_sum(self, g, half_width):
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * self.dt)])
        return np.interp(half_width, self.tau, cum) - np.interp(-half_width, self.tau, cum)

    def counts(self, delta_tau) -> tuple[np.ndarray, np.ndarray]:
        half = np.asarray(delta_tau, dtype=float) / 2
        return self._window_sum(self.parallel, half), self._window_sum(self.perpendicular, half)

    def visibility(self, delta_tau) -> np.ndarray:
        par, perp = self.counts(delta_tau)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(perp > 0, 1 - par / np.where(perp > 0, perp, 1.0), np.nan)


def hom_curves(wp1: PhotonWavepacket, wp2: PhotonWavepacket, det: DetectorResponse,
               dt: float = 0.25) -> HomCurves:
    """Jitter-convolved co- and cross-polarized densities on a fine grid."""
    tau = default_tau_grid(wp1, wp2, det, dt)
    par = convolve_jitter(tpi_coincidence_density(wp1, wp2, True, tau), det, dt)
    perp = convolve_jitter(tpi_coincidence_density(wp1, wp2, False, tau), det, dt)
    return HomCurves(tau, par, perp)


def hom_visibility(wp1: PhotonWavepacket, wp2: PhotonWavepacket, det: DetectorResponse,
                   window: CoincidenceWindow | float) -> float:
    """``V = 1 - N_par / N_perp`` over ``|tau| <= delta_tau / 2``.

    Returns NaN when no cross-polarized coincidences fall in the window.
    """
    dtau = window.delta_tau if isinstance(window, CoincidenceWindow) else float(window)
    return float(hom_curves(wp1, wp2, det).visibility(dtau))


def bsm_operators(v_hom: float) -> tuple[np.ndarray, np.ndarray]:
    """POVM elements ``(Pi_psi-, Pi_psi+)`` of the linear-optics Bell measurement.

    Partial distinguishability ``v`` leaks weight ``(1 - v)/2`` into the
    other sampled Bell state; at ``v = 1`` each element is the Bell projector.
    """
    if not 0.0 <= v_hom <= 1.0:
        raise QuantumInputError(f"visibility {v_hom} outside [0, 1]")
    pm, pp = projector("psi-"), projector("psi+")
    hi, lo = (1 + v_hom) / 2, (1 - v_hom) / 2
    return hi * pm + lo * pp, hi * pp + lo * pm
