"""Instrument and network description of one simulated experiment."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from ..emitter import QuantumDotParams
from ..interference import DetectorResponse
from ..quantum import QuantumInputError

Topology = Literal["fiber_only", "hybrid_free_space"]
TOPOLOGIES = ("fiber_only", "hybrid_free_space")

IDENTITY2 = np.eye(2, dtype=np.complex128)


def check_unitary(u, name: str = "unitary", tol: float = 1e-10) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (2, 2):
        raise QuantumInputError(f"{name} must be 2x2")
    if np.max(np.abs(u @ u.conj().T - IDENTITY2)) > tol:
        raise QuantumInputError(f"{name} is not unitary within {tol}")
    return u


@dataclass(frozen=True)
class ClockModel:
    offset: float = 0.0  # ps, local minus true at t = 0
    drift: float = 0.0  # ppm
    discipline_jitter_rms: float = 0.0  # ps
    wander_correlation: float = 0.1  # s

    def __post_init__(self):
        if not math.isfinite(self.drift) or not math.isfinite(self.offset):
            raise QuantumInputError("clock offset and drift must be finite")
        if self.discipline_jitter_rms < 0:
            raise QuantumInputError("discipline_jitter_rms must be non-negative")
        if self.wander_correlation <= 0:
            raise QuantumInputError("wander_correlation must be positive")


@dataclass(frozen=True)
class FadingModel:
    """Log-normal multiplicative transmission fading with unit mean."""

    sigma: float = 0.0  # std of log transmission
    correlation_time: float = 0.01  # s
    block: float = 1e-3  # s, piecewise-constant step

    def __post_init__(self):
        if self.sigma < 0 or self.correlation_time <= 0 or self.block <= 0:
            raise QuantumInputError("fading parameters must be positive")


@dataclass(frozen=True)
class ChannelModel:
    transmission: float = 1.0
    background_rate: float = 0.0  # 1/s reaching the detectors
    polarization_error: np.ndarray = field(default_factory=lambda: IDENTITY2.copy())
    fading: FadingModel = field(default_factory=FadingModel)

    def __post_init__(self):
        if not 0.0 <= self.transmission <= 1.0:
            raise QuantumInputError("transmission must lie in [0, 1]")
        if self.background_rate < 0:
            raise QuantumInputError("background_rate must be non-negative")
        object.__setattr__(self, "polarization_error",
                           check_unitary(self.polarization_error, "polarization_error"))


@dataclass(frozen=True)
class GenerationOptions:
    # cycles with fewer recorded photons are skipped (darks are always generated)
    min_detected_photons: int = 2
    slab: float = 1.0  # s
    pps: bool = True
    pps_jitter: float = 1000.0  # ps rms
    timetag_dump: float = 0.0  # s of tags written per setting

    def __post_init__(self):
        if self.min_detected_photons not in (1, 2, 3):
            raise QuantumInputError("min_detected_photons must be 1, 2 or 3")
        if self.slab <= 0:
            raise QuantumInputError("slab must be positive")


@dataclass(frozen=True)
class AnalysisOptions:
    windows: tuple[float, ...] = (10, 20, 30, 40, 50, 75, 100, 150, 200, 250, 300, 400)
    reference_window: float = 400.0  # ps
    heralding_window: float = 1000.0  # ps, |t_XX - t_pair - delay| <= this
    chi_window: float = 30.0
    bootstrap_samples: int = 200
    sync_segment: float = 1.0  # s

    def __post_init__(self):
        w = tuple(float(x) for x in self.windows)
        if not w or any(x <= 0 for x in w):
            raise QuantumInputError("analysis windows must be positive")
        if list(w) != sorted(set(w)):
            raise QuantumInputError("analysis windows must be strictly ascending")
        if self.reference_window not in w:
            w = tuple(sorted(set(w) | {float(self.reference_window)}))
        object.__setattr__(self, "windows", w)
        if self.heralding_window <= 0:
            raise QuantumInputError("heralding_window must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    topology: Topology
    seed: int
    rep_rate: float  # MHz
    duration: float  # s per tomography setting
    qd1: QuantumDotParams
    qd2: QuantumDotParams
    qd1_branch: str = "plus"
    magnetic_field: float | None = None  # T on QD1; None solves for resonance
    qd2_strain_voltage: float = 0.0  # V
    x1_arrival_offset: float = 0.0  # ps, HOM arrival offsets at the BS
    x2_arrival_offset: float = 0.0
    herald_path_delay: float = 0.0  # ps, XX2 arrival minus the laser cycle start
    preparation_efficiency: tuple[float, float] = (1.0, 1.0)
    x1_channel: ChannelModel = field(default_factory=ChannelModel)
    x2_channel: ChannelModel = field(default_factory=ChannelModel)
    xx2_channel: ChannelModel = field(default_factory=ChannelModel)
    bsm_port_error: np.ndarray = field(default_factory=lambda: IDENTITY2.copy())
    bsm_detector: DetectorResponse = field(default_factory=DetectorResponse)
    herald_detector: DetectorResponse = field(default_factory=DetectorResponse)
    bsm_clock: ClockModel = field(default_factory=ClockModel)
    herald_clock: ClockModel = field(default_factory=ClockModel)
    generation: GenerationOptions = field(default_factory=GenerationOptions)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    inputs: Sequence[str] = ("H", "V", "D", "A", "R", "L")
    herald_bases: Sequence[str] = ("HV", "DA", "RL")

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise QuantumInputError(f"unknown topology {self.topology!r}")
        if not self.rep_rate > 0:
            raise QuantumInputError("rep_rate must be positive")
        if self.duration < 0:
            raise QuantumInputError("duration must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise QuantumInputError("seed must be a 64-bit unsigned integer")
        if any(not 0 <= p <= 1 for p in self.preparation_efficiency):
            raise QuantumInputError("preparation efficiencies must lie in [0, 1]")
        object.__setattr__(self, "bsm_port_error", check_unitary(self.bsm_port_error, "bsm_port_error"))

    @property
    def period(self) -> float:
        """Laser period in ps."""
        return 1e6 / self.rep_rate
