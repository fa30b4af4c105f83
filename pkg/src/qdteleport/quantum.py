"""Polarization-qubit states, operators and entanglement measures.

Basis ordering is ``{|H>, |V>}`` per qubit; composite systems use the
Kronecker convention, qubit 0 being the most significant index.
"""
from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
NORM_TOL = 1e-12


class QuantumInputError(ValueError):
    """Raised when an operator or state violates its contract."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


_S2 = 1 / np.sqrt(2)

KETS = {
    "H": _frozen([1, 0]),
    "V": _frozen([0, 1]),
    "D": _frozen([_S2, _S2]),
    "A": _frozen([_S2, -_S2]),
    "R": _frozen([_S2, 1j * _S2]),
    "L": _frozen([_S2, -1j * _S2]),
}
CARDINAL_LABELS = ("H", "V", "D", "A", "R", "L")

BELL = {
    "phi+": _frozen([_S2, 0, 0, _S2]),
    "phi-": _frozen([_S2, 0, 0, -_S2]),
    "psi+": _frozen([0, _S2, _S2, 0]),
    "psi-": _frozen([0, _S2, -_S2, 0]),
}

PAULI = {
    "I": _frozen([[1, 0], [0, 1]]),
    "X": _frozen([[0, 1], [1, 0]]),
    "Y": _frozen([[0, -1j], [1j, 0]]),
    "Z": _frozen([[1, 0], [0, -1]]),
}


def ket(label_or_vector) -> np.ndarray:
    """Return a normalized ket from a label (``"H"``, ``"psi-"``...) or amplitudes."""
    if isinstance(label_or_vector, str):
        if label_or_vector in KETS:
            return KETS[label_or_vector]
        if label_or_vector in BELL:
            return BELL[label_or_vector]
        raise QuantumInputError(f"unknown state label {label_or_vector!r}")
    v = np.asarray(label_or_vector, dtype=np.complex128).ravel()
    if v.size not in (2, 4, 8):
        raise QuantumInputError(f"unsupported state dimension {v.size}")
    if abs(np.vdot(v, v).real - 1.0) > NORM_TOL:
        raise QuantumInputError("state vector is not normalized")
    return v


def projector(state) -> np.ndarray:
    v = ket(state)
    return np.outer(v, v.conj())


def check_density_matrix(rho, dim: int | None = None, psd_tol: float = PSD_TOL) -> np.ndarray:
    """Validate and return ``rho`` as a complex array.

    Raises :class:`QuantumInputError` when the matrix is not square, not
    Hermitian, not unit trace or has eigenvalues below ``-psd_tol``.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise QuantumInputError(f"density matrix must be square, got shape {rho.shape}")
    if dim is not None and rho.shape[0] != dim:
        raise QuantumInputError(f"expected a {dim}x{dim} density matrix, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise QuantumInputError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > TRACE_TOL:
        raise QuantumInputError(f"density matrix trace {np.trace(rho).real:.12g} != 1")
    if np.linalg.eigvalsh(rho).min() < -psd_tol:
        raise QuantumInputError("density matrix has negative eigenvalues")
    return rho


def repair_psd(rho) -> np.ndarray:
    """Clip negative eigenvalues and renormalize (opt-in cleanup)."""
    rho = np.asarray(rho, dtype=np.complex128)
    rho = (rho + rho.conj().T) / 2
    w, u = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise QuantumInputError("no positive weight left after clipping")
    out = (u * (w / w.sum())) @ u.conj().T
    return (out + out.conj().T) / 2


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=np.complex128) / dim


def werner_state(p: float) -> np.ndarray:
    """``p |phi+><phi+| + (1 - p) I/4``."""
    return p * projector("phi+") + (1 - p) * maximally_mixed(4)


def fidelity(rho, target) -> float:
    """Overlap fidelity ``<target|rho|target>`` with a pure target."""
    rho = np.asarray(rho, dtype=np.complex128)
    v = ket(target)
    if rho.shape != (v.size, v.size):
        raise QuantumInputError(
            f"dimension mismatch: state {rho.shape} vs target of size {v.size}")
    return float(np.vdot(v, rho @ v).real)


_YY = np.kron(PAULI["Y"], PAULI["Y"])


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit state."""
    rho = check_density_matrix(rho, dim=4)
    r = rho @ _YY @ rho.conj() @ _YY
    lam = np.sqrt(np.clip(np.linalg.eigvals(r).real, 0.0, None))
    lam = np.sort(lam)[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def tensor(*ops) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, np.asarray(op, dtype=np.complex128))
    return out


def _n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if dim < 2 or 2**n != dim:
        raise QuantumInputError(f"dimension {dim} is not a power of two")
    return n


def partial_trace(rho, keep: Iterable[int]) -> np.ndarray:
    """Reduced state on the qubits listed in ``keep`` (order preserved as sorted)."""
    rho = np.asarray(rho, dtype=np.complex128)
    n = _n_qubits(rho.shape[0])
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise QuantumInputError(f"subsystem indices {keep} out of range for {n} qubits")
    traced = [k for k in range(n) if k not in keep]
    t = rho.reshape([2] * (2 * n))
    # trace highest index first so the remaining axis numbers stay valid
    for q in sorted(traced, reverse=True):
        cur = t.ndim // 2
        t = np.trace(t, axis1=q, axis2=q + cur)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def apply_unitary(rho, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    return u @ rho @ u.conj().T


def trace_distance(a, b) -> float:
    return float(0.5 * np.abs(np.linalg.eigvalsh(np.asarray(a) - np.asarray(b))).sum())


def rotation(axis: Sequence[float], angle: float) -> np.ndarray:
    """SU(2) rotation ``exp(-i angle/2 n.sigma)`` on the polarization sphere."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    gen = n[0] * PAULI["X"] + n[1] * PAULI["Y"] + n[2] * PAULI["Z"]
    return np.cos(angle / 2) * PAULI["I"] - 1j * np.sin(angle / 2) * gen


def haar_state(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def haar_unitary(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density_matrix(rng: np.random.Generator, dim: int, rank: int | None = None) -> np.ndarray:
    g = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


# -- JSON wire format: row-major arrays of [re, im] pairs --------------------

def matrix_to_jsonable(m) -> list:
    m = np.asarray(m, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_jsonable(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise QuantumInputError("matrix JSON must be rows of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def dumps_matrix(m) -> str:
    return json.dumps(matrix_to_jsonable(m))


def loads_matrix(s: str) -> np.ndarray:
    return matrix_from_jsonable(json.loads(s))
