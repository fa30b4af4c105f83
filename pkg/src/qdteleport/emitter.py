"""Quantum-dot emitter physics: strain-tuned FSS, magneto-optical tuning and
the time-averaged polarization state of the biexciton-exciton cascade."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .interference import HBAR_UEV_PS, PhotonWavepacket
from .quantum import QuantumInputError

BOHR_MAGNETON_UEV_PER_T = 57.88
UEV_PER_EV = 1e6

Branch = Literal["plus", "minus"]


@dataclass(frozen=True)
class QuantumDotParams:
    exciton_energy: float  # eV
    xx_binding: float = 4.0  # meV
    lifetime_x: float = 200.0  # ps
    lifetime_xx: float = 100.0  # ps
    pure_dephasing_rate: float = 0.0  # 1/ns
    fss_min: float = 0.0  # ueV
    fss_slope: float = 1.0  # ueV/V
    fss_v0: float = 0.0  # V
    g_factor: float = 0.0
    diamagnetic_coeff: float = 0.0  # ueV/T^2
    cross_dephasing: float = 1.0

    def __post_init__(self):
        if not (self.lifetime_x > 0 and self.lifetime_xx > 0):
            raise QuantumInputError("lifetimes must be positive")
        if self.fss_min < 0:
            raise QuantumInputError("fss_min must be non-negative")
        if not 0.0 <= self.cross_dephasing <= 1.0:
            raise QuantumInputError("cross_dephasing must lie in [0, 1]")

    def exciton_wavepacket(self, reference_energy: float | None = None, field: float = 0.0,
                           branch: Branch = "plus", arrival_offset: float = 0.0) -> PhotonWavepacket:
        """Exciton photon relative to ``reference_energy`` (eV) at magnetic field ``field``."""
        e_plus, e_minus = zeeman_energies(self, field)
        energy = e_plus if branch == "plus" else e_minus
        ref = self.exciton_energy if reference_energy is None else reference_energy
        return PhotonWavepacket(
            decay_rate=1.0 / self.lifetime_x,
            arrival_offset=arrival_offset,
            detuning=(energy - ref) * UEV_PER_EV,
            dephasing_rate=self.pure_dephasing_rate * 1e-3,
        )


def fss_vs_strain(qd: QuantumDotParams, voltage) -> np.ndarray | float:
    """Hyperbolic anticrossing of the fine-structure splitting (ueV)."""
    out = np.hypot(qd.fss_min, qd.fss_slope * (np.asarray(voltage, dtype=float) - qd.fss_v0))
    return float(out) if np.ndim(out) == 0 else out


def zeeman_energies(qd: QuantumDotParams, field: float) -> tuple[float, float]:
    """Upper and lower Zeeman branches (eV) including the diamagnetic shift."""
    if not (math.isfinite(field) and field >= 0):
        raise QuantumInputError("magnetic field must be finite and non-negative")
    half_split = 0.5 * qd.g_factor * BOHR_MAGNETON_UEV_PER_T * field
    shift = qd.diamagnetic_coeff * field**2
    e0 = qd.exciton_energy
    return e0 + (shift + half_split) / UEV_PER_EV, e0 + (shift - half_split) / UEV_PER_EV


def _branch_energy(qd, field, branch):
    e_plus, e_minus = zeeman_energies(qd, field)
    return e_plus if branch == "plus" else e_minus


def solve_resonance_field(qd: QuantumDotParams, target_energy: float, branch: Branch = "plus",
                          b_max: float = 9.0, tol_uev: float = 0.01, n_scan: int = 901) -> float | None:
    """Smallest field in ``[0, b_max]`` tuning the chosen branch onto ``target_energy``.

    A coarse scan brackets the first sign change, bisection refines it until the
    energy mismatch is below ``tol_uev``. Returns ``None`` when no root exists.
    """
    if branch not in ("plus", "minus"):
        raise QuantumInputError(f"unknown Zeeman branch {branch!r}")

    def mismatch(b):
        return (_branch_energy(qd, b, branch) - target_energy) * UEV_PER_EV

    fields = np.linspace(0.0, b_max, n_scan)
    vals = np.array([mismatch(b) for b in fields])
    if abs(vals[0]) <= tol_uev:
        return 0.0
    hits = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)
    if hits.size == 0:
        return None
    lo, hi = fields[hits[0]], fields[hits[0] + 1]
    f_lo = vals[hits[0]]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = mismatch(mid)
        if abs(f_mid) <= tol_uev:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fss_phase_average(fss_uev: float, lifetime_ps: float) -> complex:
    """``<exp(-i S t / hbar)>`` over an exponential emission delay of mean ``lifetime_ps``."""
    x = fss_uev * lifetime_ps / HBAR_UEV_PS
    return 1.0 / (1.0 + 1j * x)


def entangled_pair_state(qd: QuantumDotParams, fss: float) -> np.ndarray:
    """Time-integrated two-photon polarization state of the cascade.

    Populations stay at ``|HH>`` and ``|VV>``; the coherence is the FSS phase
    averaged over the exciton decay, scaled by ``cross_dephasing``.
    """
    if fss < 0:
        raise QuantumInputError("fss must be non-negative")
    coh = 0.5 * qd.cross_dephasing * fss_phase_average(fss, qd.lifetime_x)
    rho = np.zeros((4, 4), dtype=np.complex128)
    rho[0, 0] = rho[3, 3] = 0.5
    rho[0, 3] = coh
    rho[3, 0] = np.conj(coh)
    return rho


def cross_dephasing_for_fidelity(fidelity: float, fss: float, lifetime_x: float) -> float:
    """Back-solve ``cross_dephasing`` so the pair state has the requested Bell fidelity."""
    re = fss_phase_average(fss, lifetime_x).real
    cd = (2 * fidelity - 1) / re
    if not 0 <= cd <= 1:
        raise QuantumInputError(f"fidelity {fidelity} unreachable at FSS {fss} ueV")
    return cd


def detuning_for_resonance(qd: QuantumDotParams, field: float, branch: Branch = "plus") -> float:
    """Energy (eV) the partner exciton must have for ``qd`` to be resonant at ``field``."""
    return _branch_energy(qd, field, branch)
