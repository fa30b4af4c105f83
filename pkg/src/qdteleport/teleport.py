"""Teleportation of a polarization qubit through a linear-optics Bell measurement."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .interference import bsm_operators
from .quantum import (CARDINAL_LABELS, PAULI, QuantumInputError, check_density_matrix,
                      maximally_mixed, projector, werner_state)

Projection = Literal["psi_minus", "psi_plus"]
PROJECTIONS: tuple[Projection, ...] = ("psi_minus", "psi_plus")
PairModel = Literal["werner", "dephased_bell"]

# Pauli frame of each sampled Bell state; -i sigma_Y for psi-.
CORRECTIONS = {
    "psi_plus": PAULI["X"],
    "psi_minus": -1j * PAULI["Y"],
}

CLASSICAL_LIMIT = 2.0 / 3.0
DEGENERATE_PROBABILITY = 1e-14


def classical_limit() -> float:
    """Best average fidelity of measure-and-resend on pure qubit inputs."""
    return CLASSICAL_LIMIT


@dataclass(frozen=True)
class TeleportOutcome:
    bsm_projection: Projection
    output_state: np.ndarray | None
    success_probability: float

    @property
    def degenerate(self) -> bool:
        return self.output_state is None


@dataclass(frozen=True)
class ResourcePoint:
    bell_fidelity: float
    hom_visibility: float

    def __post_init__(self):
        if not 0.25 <= self.bell_fidelity <= 1.0:
            raise QuantumInputError("bell_fidelity must lie in [0.25, 1]")
        if not 0.0 <= self.hom_visibility <= 1.0:
            raise QuantumInputError("hom_visibility must lie in [0, 1]")


def _as_rho(state) -> np.ndarray:
    if isinstance(state, str):
        return projector(state)
    a = np.asarray(state, dtype=np.complex128)
    return projector(a) if a.ndim == 1 else a


def _bsm_element(v_hom: float, projection: Projection) -> np.ndarray:
    pm, pp = bsm_operators(v_hom)
    return pm if projection == "psi_minus" else pp


def _conditional_output(rho_in, pair, pi) -> np.ndarray:
    """Unnormalized ``Tr_12[(Pi x I)(rho_in x pair)]``."""
    pair4 = pair.reshape(2, 2, 2, 2)  # (b, c, b', c')
    pi4 = pi.reshape(2, 2, 2, 2)  # (a, b, a', b')
    return np.einsum("abxy,xa,ycbd->cd", pi4, rho_in, pair4, optimize=True)


def teleport(input_state, pair, v_hom: float, projection: Projection,
             correct: bool = True, output_error=None, channel_errors=None) -> TeleportOutcome:
    """Condition ``input x pair`` on one sampled Bell outcome of (X1, X2).

    ``channel_errors`` is an optional triple of unitaries acting on X1, X2
    and XX2 before the measurement; ``output_error`` acts on the teleported
    qubit after the Pauli correction.
    """
    if projection not in PROJECTIONS:
        raise QuantumInputError(f"unknown projection {projection!r}")
    rho_in = check_density_matrix(_as_rho(input_state), dim=2)
    pair = check_density_matrix(pair, dim=4)
    if channel_errors is not None:
        u1, u2, uxx = (np.asarray(u, dtype=np.complex128) for u in channel_errors)
        rho_in = u1 @ rho_in @ u1.conj().T
        u = np.kron(u2, uxx)
        pair = u @ pair @ u.conj().T
    out = _conditional_output(rho_in, pair, _bsm_element(v_hom, projection))
    prob = float(np.trace(out).real)
    if prob < DEGENERATE_PROBABILITY:
        return TeleportOutcome(projection, None, max(prob, 0.0))
    out = out / prob
    if correct:
        u = CORRECTIONS[projection]
        out = u @ out @ u.conj().T
    if output_error is not None:
        u = np.asarray(output_error)
        out = u @ out @ u.conj().T
    out = (out + out.conj().T) / 2
    return TeleportOutcome(projection, out, prob)


def projection_fidelity(pair, v_hom: float, projection: Projection, output_error=None,
                        inputs: Sequence[str] = CARDINAL_LABELS, channel_errors=None) -> float:
    """Average over cardinal inputs of the corrected output fidelity for one projection."""
    vals = []
    for label in inputs:
        res = teleport(label, pair, v_hom, projection, output_error=output_error,
                       channel_errors=channel_errors)
        p = projector(label)
        vals.append(np.trace(p @ res.output_state).real)
    return float(np.mean(vals))


def average_teleport_fidelity(pair, v_hom: float,
                              output_errors: Mapping[str, np.ndarray] | None = None) -> float:
    """Mean over the six cardinal inputs; projections weighted by success probability."""
    output_errors = output_errors or {}
    total = 0.0
    for label in CARDINAL_LABELS:
        target = projector(label)
        num = den = 0.0
        for proj in PROJECTIONS:
            res = teleport(label, pair, v_hom, proj, output_error=output_errors.get(proj))
            if res.degenerate:
                continue
            num += res.success_probability * np.trace(target @ res.output_state).real
            den += res.success_probability
        total += num / den
    return float(total / len(CARDINAL_LABELS))


def pair_from_bell_fidelity(f_bell: float, model: PairModel = "werner") -> np.ndarray:
    """Map a scalar fidelity to |phi+> onto a two-qubit state.

    ``werner`` mixes |phi+> with white noise. ``dephased_bell`` keeps the
    HH/VV populations and scales the coherence; below 1/2 (where dephasing
    alone cannot go) it continues by mixing the fully dephased state with
    white noise, reaching I/4 at 1/4.
    """
    if not 0.25 - 1e-12 <= f_bell <= 1.0 + 1e-12:
        raise QuantumInputError(f"Bell fidelity {f_bell} outside [0.25, 1]")
    if model == "werner":
        return werner_state((4 * f_bell - 1) / 3)
    if model == "dephased_bell":
        rho = np.zeros((4, 4), dtype=np.complex128)
        rho[0, 0] = rho[3, 3] = 0.5
        if f_bell >= 0.5:
            rho[0, 3] = rho[3, 0] = f_bell - 0.5
            return rho
        t = 4 * f_bell - 1
        return t * rho + (1 - t) * maximally_mixed(4)
    raise QuantumInputError(f"unknown pair model {model!r}")


@dataclass
class Landscape:
    f_grid: np.ndarray
    v_grid: np.ndarray
    fidelity: np.ndarray  # shape (len(f_grid), len(v_grid))
    pair_model: str
    contour: list[np.ndarray] = field(default_factory=list)  # polylines of (f_bell, v_hom)

    def is_monotone(self, tol: float = 1e-9) -> bool:
        f = self.fidelity
        ok_f = f.shape[0] < 2 or np.all(np.diff(f, axis=0) >= -tol)
        ok_v = f.shape[1] < 2 or np.all(np.diff(f, axis=1) >= -tol)
        return bool(ok_f and ok_v)

    def contour_is_monotone(self, tol: float = 1e-9) -> bool:
        """Along each contour, higher Bell fidelity never needs higher visibility."""
        for line in self.contour:
            # ties in Bell fidelity (vertical runs) are ordered by falling visibility
            order = np.lexsort((-line[:, 1], np.round(line[:, 0] / tol)))
            if np.any(np.diff(line[order, 1]) > tol):
                return False
        return True


def _landscape_row(pair, v_grid) -> np.ndarray:
    """Average fidelity along ``v_grid`` for one pair; exploits linearity of Pi in v."""
    pm0, pp0 = bsm_operators(0.0)
    pm1, pp1 = bsm_operators(1.0)
    num = np.zeros_like(v_grid)
    acc = np.zeros_like(v_grid)
    for label in CARDINAL_LABELS:
        rho_in = projector(label)
        num[:] = 0.0
        den = np.zeros_like(v_grid)
        for proj, (e0, e1) in (("psi_minus", (pm0, pm1)), ("psi_plus", (pp0, pp1))):
            u = CORRECTIONS[proj]
            o0 = _conditional_output(rho_in, pair, e0)
            o1 = _conditional_output(rho_in, pair, e1)
            f0 = np.trace(rho_in @ u @ o0 @ u.conj().T).real
            f1 = np.trace(rho_in @ u @ o1 @ u.conj().T).real
            p0, p1 = np.trace(o0).real, np.trace(o1).real
            # outputs are affine in v between the v=0 and v=1 operators
            num += f0 + v_grid * (f1 - f0)
            den += p0 + v_grid * (p1 - p0)
        acc += num / den
    return acc / len(CARDINAL_LABELS)


def fidelity_landscape(f_grid, v_grid, pair_model: PairModel = "werner",
                       level: float = CLASSICAL_LIMIT) -> Landscape:
    f_grid = np.asarray(f_grid, dtype=float)
    v_grid = np.asarray(v_grid, dtype=float)
    if f_grid.size == 0 or v_grid.size == 0:
        raise QuantumInputError("landscape grids must be non-empty")
    if np.any(np.diff(f_grid) < 0) or np.any(np.diff(v_grid) < 0):
        raise QuantumInputError("landscape grids must be sorted")
    if v_grid.min() < 0 or v_grid.max() > 1:
        raise QuantumInputError("visibility grid outside [0, 1]")
    fid = np.vstack([_landscape_row(pair_from_bell_fidelity(f, pair_model), v_grid) for f in f_grid])
    land = Landscape(f_grid, v_grid, fid, pair_model)
    land.contour = extract_contour(f_grid, v_grid, fid, level)
    return land


def extract_contour(f_grid, v_grid, values, level: float) -> list[np.ndarray]:
    """Marching-squares iso-lines of ``values`` as ``(f_bell, v_hom)`` polylines."""
    if len(f_grid) < 2 or len(v_grid) < 2:
        return []
    import contourpy

    gen = contourpy.contour_generator(x=v_grid, y=f_grid, z=values,
                                      line_type=contourpy.LineType.Separate)
    lines = gen.lines(level)
    return [np.column_stack([ln[:, 1], ln[:, 0]]) for ln in lines if len(ln) >= 2]
