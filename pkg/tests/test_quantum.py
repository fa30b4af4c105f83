import numpy as np
import pytest

from qdteleport.quantum import (BELL, CARDINAL_LABELS, PAULI, QuantumInputError, check_density_matrix,
                                concurrence, dumps_matrix, fidelity, haar_unitary, ket, loads_matrix,
                                maximally_mixed, partial_trace, projector, random_density_matrix,
                                repair_psd, rotation, tensor, trace_distance, werner_state)


def _contract_fidelity(rho, v):
    # explicit double sum, independent of the vdot path
    return sum((v[i].conjugate() * rho[i, j] * v[j]).real for i in range(len(v)) for j in range(len(v)))


def _kron_oracle(a, b):
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n * m, n * m), dtype=complex)
    for i in range(n):
        for j in range(n):
            for k in range(m):
                for l in range(m):
                    out[i * m + k, j * m + l] = a[i, j] * b[k, l]
    return out


def test_kets_normalized():
    for v in list(BELL.values()) + [ket(k) for k in CARDINAL_LABELS]:
        assert abs(np.vdot(v, v).real - 1) < 1e-12


def test_ket_rejects_bad_input():
    with pytest.raises(QuantumInputError):
        ket("Q")
    with pytest.raises(QuantumInputError):
        ket([1, 1])
    with pytest.raises(QuantumInputError):
        ket([1, 0, 0])


def test_bell_convention():
    s = 1 / np.sqrt(2)
    assert np.allclose(BELL["phi+"], [s, 0, 0, s])
    assert np.allclose(BELL["psi-"], [0, s, -s, 0])


def test_paulis():
    for k in "XYZ":
        p = PAULI[k]
        assert np.allclose(p @ p.conj().T, np.eye(2))
        assert abs(np.trace(p)) < 1e-15
        assert np.allclose(p, p.conj().T)


def test_check_density_matrix_rejects():
    with pytest.raises(QuantumInputError):
        check_density_matrix(np.ones((2, 3)))
    with pytest.raises(QuantumInputError):
        check_density_matrix(np.array([[1, 1], [0, 0]]))
    with pytest.raises(QuantumInputError):
        check_density_matrix(np.eye(2))
    with pytest.raises(QuantumInputError):
        check_density_matrix(np.diag([1.1, -0.1]))
    check_density_matrix(np.diag([1 + 5e-11, -5e-11]))


def test_repair_psd():
    r = repair_psd(np.diag([1.2, -0.2]))
    assert np.allclose(r, np.diag([1.0, 0.0]))


def test_fidelity_examples():
    assert fidelity(projector("phi+"), "phi+") == pytest.approx(1.0, abs=1e-12)
    assert fidelity(maximally_mixed(4), "phi+") == pytest.approx(0.25, abs=1e-12)
    w = werner_state(0.92)
    assert fidelity(w, "phi+") == pytest.approx(_contract_fidelity(w, BELL["phi+"]), abs=1e-12)
    assert fidelity(w, "phi+") == pytest.approx(0.94, abs=1e-12)


def test_fidelity_dimension_mismatch():
    with pytest.raises(QuantumInputError):
        fidelity(np.eye(2) / 2, "phi+")


def _concurrence_oracle(p):
    # Werner: eigenvalues of R are ((1+3p)/4)^2 and three times ((1-p)/4)^2
    lam = np.sort(np.sqrt(np.abs(np.linalg.eigvals(
        werner_state(p) @ np.kron(PAULI["Y"], PAULI["Y"]) @ werner_state(p).conj()
        @ np.kron(PAULI["Y"], PAULI["Y"])))))[::-1]
    return max(0.0, lam[0] - lam[1:].sum())


def test_concurrence_examples():
    assert concurrence(projector("phi+")) == pytest.approx(1.0, abs=1e-9)
    assert concurrence(maximally_mixed(4)) == pytest.approx(0.0, abs=1e-12)
    assert concurrence(werner_state(0.92)) == pytest.approx(_concurrence_oracle(0.92), abs=1e-9)
    assert concurrence(werner_state(0.92)) == pytest.approx(0.88, abs=1e-9)


def test_concurrence_local_unitary_invariance(rng):
    rho = random_density_matrix(rng, 4)
    c0 = concurrence(rho)
    for _ in range(100):
        u = np.kron(haar_unitary(rng), haar_unitary(rng))
        assert concurrence(u @ rho @ u.conj().T) == pytest.approx(c0, abs=1e-8)


def test_tensor_examples():
    assert np.allclose(tensor(np.eye(2) / 2, np.eye(2) / 2), np.eye(4) / 4)
    assert np.allclose(tensor(projector("H"), projector("V")), np.diag([0, 1, 0, 0]))
    t = tensor(werner_state(0.5), projector("H"))
    assert t.shape == (8, 8)
    assert np.trace(t).real == pytest.approx(1.0)
    assert np.allclose(t, _kron_oracle(werner_state(0.5), projector("H")))


def test_partial_trace_examples():
    assert np.allclose(partial_trace(projector("phi+"), [0]), np.eye(2) / 2)
    assert np.allclose(partial_trace(tensor(projector("H"), projector("V")), [0]), projector("H"))
    w = werner_state(0.92)
    # keep qubit 1: sum over the first index of each row/column pair
    oracle = np.array([[sum(w[2 * a + i, 2 * a + j] for a in range(2)) for j in range(2)] for i in range(2)])
    assert np.allclose(partial_trace(w, [1]), oracle)
    assert np.allclose(partial_trace(w, [1]), np.eye(2) / 2)


def test_partial_trace_three_qubits(rng):
    a, b, c = (random_density_matrix(rng, 2) for _ in range(3))
    abc = tensor(a, b, c)
    assert np.allclose(partial_trace(abc, [1]), b, atol=1e-12)
    assert np.allclose(partial_trace(abc, [0, 2]), tensor(a, c), atol=1e-12)
    with pytest.raises(QuantumInputError):
        partial_trace(abc, [3])


def test_rotation_is_su2():
    u = rotation([1, 1, 0], 0.7)
    assert np.allclose(u @ u.conj().T, np.eye(2))
    assert np.linalg.det(u) == pytest.approx(1.0)
    assert np.allclose(rotation([0, 0, 1], np.pi), -1j * PAULI["Z"])


def test_trace_distance():
    assert trace_distance(projector("H"), projector("V")) == pytest.approx(1.0)
    assert trace_distance(projector("H"), projector("H")) == pytest.approx(0.0)


def test_matrix_json_round_trip(rng):
    m = random_density_matrix(rng, 4)
    assert np.array_equal(loads_matrix(dumps_matrix(m)), m)
    with pytest.raises(QuantumInputError):
        loads_matrix("[[1, 2], [3, 4]]")
