import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dflab.circuits import (Circuit, Gate, TrotterParams, build_dual_trotter_circuit, build_trotter_circuit,
                            build_ub, build_uj_via_ub, circuit_unitary, compile_zzz, gauss_operator, pauli_operator,
                            zzz_layer)
from dflab.lattice import LatticeSpec, build_lattice

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def _equal_up_to_phase(a, b, tol=1e-10):
    k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    ph = a[k] / b[k]
    return abs(abs(ph) - 1) < tol and np.allclose(a, ph * b, atol=tol)


def test_ub_ring19():
    c = build_ub(build_lattice(LatticeSpec.ring(19)))
    assert c.count("CNOT") == 38
    assert len(c.moments) == 2


def test_ub_grid_four_moments():
    c = build_ub(build_lattice(LatticeSpec.grid(3, 3)))
    assert len(c.moments) == 4
    assert c.count("CNOT") == 2 * 12


def test_ub_chain2_hand_matrix():
    g = build_lattice(LatticeSpec.chain(2))  # qubits m0, m1, link 2
    U = circuit_unitary(build_ub(g))
    expect = np.eye(8, dtype=complex)
    for ctrl in (0, 1):
        P = np.zeros((8, 8))
        for i in range(8):
            j = i ^ (4 if (i >> ctrl) & 1 else 0)
            P[j, i] = 1
        expect = P @ expect
    assert np.allclose(U, expect)


def test_ub_involution_and_gauss_map():
    g = build_lattice(LatticeSpec.ring(3))
    U = circuit_unitary(build_ub(g))
    assert np.allclose(U @ U, np.eye(2**g.n_qubits))
    for j in range(g.n_matter):
        assert np.allclose(U @ gauss_operator(g, j) @ U, pauli_operator(g.n_qubits, [(j, "X")]))


def test_single_gates():
    H = circuit_unitary(Circuit.from_gates([Gate("H", (0,))], 1))
    assert np.allclose(H, np.array([[1, 1], [1, -1]]) / math.sqrt(2))
    # CNOT control 1, target 0 in little-endian matches the textbook matrix on |q1 q0>
    C = circuit_unitary(Circuit.from_gates([Gate("CNOT", (1, 0))], 2))
    assert np.allclose(C, CNOT)


def test_dt_zero_identity():
    g = build_lattice(LatticeSpec.chain(2))
    U = circuit_unitary(build_trotter_circuit(g, TrotterParams(dt=0.0, cycles=3)))
    assert np.allclose(U, np.eye(U.shape[0]))


def test_zzz_theta_zero():
    c = Circuit.from_gates([Gate("EXP_ZZZ", (0, 1, 2), 0.0)], 3)
    assert np.allclose(circuit_unitary(c), np.eye(8))


@pytest.mark.parametrize("style", ["CNOT_RZ", "CPHASE_RZ"])
@pytest.mark.parametrize("theta", [0.0, 0.3, -1.1, 2.5])
def test_compile_zzz(style, theta):
    ref = circuit_unitary(Circuit.from_gates([Gate("EXP_ZZZ", (0, 1, 2), theta)], 3))
    got = circuit_unitary(compile_zzz(theta, style))
    assert _equal_up_to_phase(got, ref)


def test_uj_via_ub():
    g = build_lattice(LatticeSpec.ring(3))
    ref = circuit_unitary(Circuit.from_gates(zzz_layer(g, 0.37), g.n_qubits))
    assert np.allclose(circuit_unitary(build_uj_via_ub(g, 0.37)), ref)


def test_merged_equals_unmerged():
    g = build_lattice(LatticeSpec.chain(3))
    p = TrotterParams(J=1, h=1.3, mu=1.5, dt=0.25, order=2, cycles=3)
    a = circuit_unitary(build_trotter_circuit(g, p, merge=True))
    b = circuit_unitary(build_trotter_circuit(g, p, merge=False))
    assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1), st.sampled_from([1, 2]))
def test_gauss_law_commutes(J, h, mu, dt, order):
    g = build_lattice(LatticeSpec.ring(3))
    U = circuit_unitary(build_trotter_circuit(g, TrotterParams(J=J, h=h, mu=mu, dt=dt, order=order, cycles=1)))
    for j in range(g.n_matter):
        G = gauss_operator(g, j)
        assert np.abs(U @ G - G @ U).max() < 1e-10


def test_json_roundtrip():
    g = build_lattice(LatticeSpec.ring(3))
    c = build_trotter_circuit(g, TrotterParams(cycles=2))
    c2 = Circuit.from_json(c.to_json())
    assert c2 == c
    import json
    assert json.loads(c.to_json())["schema_version"] == 1


def test_dual_circuit_sector_length():
    g = build_lattice(LatticeSpec.ring(3))
    with pytest.raises(ValueError):
        build_dual_trotter_circuit(g, TrotterParams(), [1, 1])


def test_dense_refuses_large():
    with pytest.raises(ValueError):
        circuit_unitary(Circuit.from_gates([Gate("H", (0,))], 13))


def test_moment_conflict_rejected():
    with pytest.raises(ValueError):
        Circuit(((Gate("H", (0,)), Gate("X", (0,))),), 1)
