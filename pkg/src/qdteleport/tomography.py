"""State and process tomography from polarization-projection counts.

Counts are keyed by tuples of projector labels, one per qubit, drawn from
{H, V, D, A, R, L}. The pairs H/V, D/A and R/L form the three analyzer bases;
frequencies are normalized within each basis setting, so settings may carry
different exposure.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .quantum import (CARDINAL_LABELS, PAULI, QuantumInputError, matrix_from_jsonable,
                      matrix_to_jsonable, projector)

BASIS_OF = {"H": "Z", "V": "Z", "D": "X", "A": "X", "R": "Y", "L": "Y"}
CHI_LABELS = ("I", "X", "Y", "Z")
# process basis; Y is -i sigma_Y
CHI_BASIS = (PAULI["I"], PAULI["X"], -1j * PAULI["Y"], PAULI["Z"])
# correction-disabled frame: raw outputs of ideal teleportation
IDEAL_CHI_INDEX = {"psi_minus": 2, "psi_plus": 1, "identity": 0}

Counts = Mapping[tuple, float]


def _pauli_strings(n: int):
    return [_kron_all(k) for k in itertools.product([PAULI[c] for c in "IXYZ"], repeat=n)]


def _kron_all(ops):
    out = np.array([[1.0]], dtype=complex)
    for o in ops:
        out = np.kron(out, o)
    return out


def complete_settings(n_qubits: int) -> list[tuple[str, ...]]:
    return list(itertools.product(CARDINAL_LABELS, repeat=n_qubits))


def _check_counts(counts: Counts) -> int:
    if not counts:
        raise QuantumInputError("no measurement records")
    keys = list(counts)
    n = len(keys[0])
    if n not in (1, 2) or any(len(k) != n for k in keys):
        raise QuantumInputError("records must cover one or two qubits consistently")
    missing = set(complete_settings(n)) - set(keys)
    if missing:
        raise QuantumInputError(f"incomplete setting set: missing {sorted(missing)[:4]}...")
    vals = np.array([counts[k] for k in complete_settings(n)], dtype=float)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise QuantumInputError("counts must be finite and non-negative")
    if vals.sum() <= 0:
        raise QuantumInputError("total counts must be positive")
    return n


def clip_and_redistribute(rho) -> np.ndarray:
    """Closest trace-one PSD matrix in the 2-norm sense by eigenvalue clipping.

    Negative eigenvalues are zeroed from the bottom up, their weight spread
    evenly over the remaining ones until all are non-negative.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    rho = (rho + rho.conj().T) / 2
    rho = rho / np.trace(rho).real
    w, u = np.linalg.eigh(rho)
    lam = w[::-1].copy()  # descending
    d = lam.size
    acc = 0.0
    i = d - 1
    while i >= 0 and lam[i] + acc / (i + 1) < 0:
        acc += lam[i]
        lam[i] = 0.0
        i -= 1
    lam[: i + 1] += acc / (i + 1)
    lam = np.clip(lam, 0.0, None)
    lam /= lam.sum()
    u = u[:, ::-1]
    out = (u * lam) @ u.conj().T
    return (out + out.conj().T) / 2


def linear_inversion(counts: Counts) -> np.ndarray:
    """Unit-trace Hermitian estimate by least squares over Pauli coefficients."""
    n = _check_counts(counts)
    d = 2**n
    paulis = _pauli_strings(n)
    rows, freqs = [], []
    for bases in itertools.product("ZXY", repeat=n):
        labels = [k for k in complete_settings(n) if tuple(BASIS_OF[c] for c in k) == bases]
        total = sum(float(counts[k]) for k in labels)
        if total <= 0:
            continue
        for k in labels:
            p = _kron_all([projector(c) for c in k])
            # Tr(P rho) with rho = (I + sum r_j P_j) / d
            rows.append([np.trace(p @ s).real / d for s in paulis[1:]])
            freqs.append(float(counts[k]) / total - np.trace(p).real / d)
    r, *_ = np.linalg.lstsq(np.array(rows), np.array(freqs), rcond=None)
    rho = np.eye(d, dtype=complex) / d
    for coef, s in zip(r, paulis[1:]):
        rho = rho + coef * s / d
    return (rho + rho.conj().T) / 2


def reconstruct_state(counts: Counts, physical: bool = True) -> np.ndarray:
    """Density matrix from a complete 6- or 36-setting record set.

    ``physical=False`` returns the raw linear-inversion estimate.
    """
    rho = linear_inversion(counts)
    return clip_and_redistribute(rho) if physical else rho


def expected_counts(rho, total: float) -> dict[tuple, float]:
    """Noiseless counts: ``total`` split evenly over the basis settings."""
    rho = np.asarray(rho, dtype=np.complex128)
    n = int(round(np.log2(rho.shape[0])))
    per_basis = total / 3**n
    out = {}
    for k in complete_settings(n):
        p = _kron_all([projector(c) for c in k])
        out[k] = per_basis * max(np.trace(p @ rho).real, 0.0)
    return out


def sample_counts(rho, total: float, rng: np.random.Generator) -> dict[tuple, int]:
    """Poisson counts around :func:`expected_counts`."""
    exp = expected_counts(rho, total)
    return {k: int(rng.poisson(v)) for k, v in exp.items()}


def poisson_resample(counts: Counts, rng: np.random.Generator) -> dict[tuple, int]:
    """Parametric bootstrap replicate of a count record."""
    return {k: int(rng.poisson(float(v))) for k, v in counts.items()}


# -- counts IO -----------------------------------------------------------------

COUNT_HEADER = ("basis1", "basis2", "counts")


def counts_to_csv(counts: Counts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNT_HEADER)
    for k in sorted(counts, key=lambda k: [CARDINAL_LABELS.index(c) for c in k]):
        w.writerow([k[0], k[1] if len(k) > 1 else "", _fmt_count(counts[k])])
    return buf.getvalue()


def _fmt_count(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def counts_from_csv(text: str) -> dict[tuple, float]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COUNT_HEADER:
        raise QuantumInputError(f"count CSV must start with header {','.join(COUNT_HEADER)}")
    out = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise QuantumInputError(f"line {i}: expected 3 fields")
        key = (row[0],) if row[1] == "" else (row[0], row[1])
        if any(c not in CARDINAL_LABELS for c in key):
            raise QuantumInputError(f"line {i}: unknown projector label")
        try:
            out[key] = float(row[2])
        except ValueError:
            raise QuantumInputError(f"line {i}: counts is not a number") from None
    return out


def read_counts(path) -> dict[tuple, float]:
    return counts_from_csv(Path(path).read_text())


def write_counts(path, counts: Counts) -> None:
    Path(path).write_text(counts_to_csv(counts))


# -- process tomography ----------------------------------------------------------


@dataclass(frozen=True)
class ChiMatrix:
    """Process matrix over ``{I, X, Y=-i sigma_Y, Z}``."""

    matrix: np.ndarray
    projection: str | None = None

    @property
    def labels(self) -> tuple[str, ...]:
        return CHI_LABELS

    def apply(self, rho) -> np.ndarray:
        return apply_chi(self.matrix, rho)

    def to_json(self) -> dict:
        return {"basis": list(CHI_LABELS), "projection": self.projection,
                "chi": matrix_to_jsonable(self.matrix)}

    @classmethod
    def from_json(cls, data: dict) -> "ChiMatrix":
        if list(data.get("basis", CHI_LABELS)) != list(CHI_LABELS):
            raise QuantumInputError("chi basis must be I, X, Y, Z")
        return cls(matrix_from_jsonable(data["chi"]), data.get("projection"))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def apply_chi(chi, rho) -> np.ndarray:
    chi = np.asarray(chi, dtype=np.complex128)
    rho = np.asarray(rho, dtype=np.complex128)
    out = np.zeros((2, 2), dtype=np.complex128)
    for m, em in enumerate(CHI_BASIS):
        for n, en in enumerate(CHI_BASIS):
            out += chi[m, n] * em @ rho @ en.conj().T
    return out


def chi_from_unitary(u) -> np.ndarray:
    """Rank-one process matrix of ``rho -> U rho U^dagger``."""
    u = np.asarray(u, dtype=np.complex128)
    a = np.array([np.trace(e.conj().T @ u) / 2 for e in CHI_BASIS])
    return np.outer(a, a.conj())


def ideal_chi(projection: str) -> np.ndarray:
    """Correction-disabled ideal: single unit entry at (Y,Y) for psi-, (X,X) for psi+."""
    if projection not in IDEAL_CHI_INDEX:
        raise QuantumInputError(f"unknown projection {projection!r}")
    chi = np.zeros((4, 4), dtype=np.complex128)
    k = IDEAL_CHI_INDEX[projection]
    chi[k, k] = 1.0
    return chi


def _process_design(inputs):
    """Linear map from vec(chi) to the stacked vec(rho_out)."""
    rows = []
    for rho in inputs:
        cols = []
        for m, em in enumerate(CHI_BASIS):
            for n, en in enumerate(CHI_BASIS):
                cols.append((em @ rho @ en.conj().T).ravel())
        rows.append(np.array(cols).T)
    return np.vstack(rows)


_DESIGN = _process_design([projector(k) for k in CARDINAL_LABELS])


def process_tomography(outputs: Mapping[str, np.ndarray], projection: str | None = None,
                       physical: bool = True) -> ChiMatrix:
    """Least-squares process matrix from the outputs of the six cardinal inputs."""
    missing = [k for k in CARDINAL_LABELS if k not in outputs]
    if missing:
        raise QuantumInputError(f"process tomography needs all six inputs; missing {missing}")
    stack = []
    for k in CARDINAL_LABELS:
        rho = np.asarray(outputs[k], dtype=np.complex128)
        if rho.shape != (2, 2):
            raise QuantumInputError(f"output for {k} must be 2x2, got {rho.shape}")
        stack.append(rho.ravel())
    x, *_ = np.linalg.lstsq(_DESIGN, np.concatenate(stack), rcond=None)
    chi = x.reshape(4, 4)
    chi = (chi + chi.conj().T) / 2
    chi = clip_and_redistribute(chi) if physical else chi / np.trace(chi).real
    return ChiMatrix(chi, projection)


def process_fidelity(chi, chi_ideal) -> float:
    return float(np.trace(np.asarray(chi) @ np.asarray(chi_ideal)).real)


def average_fidelity_from_chi(chi, chi_ideal) -> float:
    """``(2 F_proc + 1) / 3`` for a qubit channel with a rank-one ideal."""
    chi = chi.matrix if isinstance(chi, ChiMatrix) else chi
    chi_ideal = chi_ideal.matrix if isinstance(chi_ideal, ChiMatrix) else chi_ideal
    return (2 * process_fidelity(chi, chi_ideal) + 1) / 3


def direct_average_fidelity(outputs: Mapping[str, np.ndarray], frame=None) -> float:
    """Mean over cardinal inputs of ``<k| U^dagger rho_k U |k>``; ``frame`` is the
    Pauli correction mapping outputs back onto the inputs."""
    u = np.eye(2) if frame is None else np.asarray(frame)
    vals = []
    for k in CARDINAL_LABELS:
        rho = u.conj().T @ np.asarray(outputs[k]) @ u
        vals.append(np.trace(projector(k) @ rho).real)
    return float(np.mean(vals))


def state_from_counts_or_none(counts: Counts):
    """Reconstruction, or None when every basis setting is empty."""
    try:
        return reconstruct_state(counts)
    except QuantumInputError:
        return None

