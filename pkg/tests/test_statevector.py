import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dflab.circuits import Circuit, Gate, TrotterParams, build_trotter_circuit, build_ub, circuit_unitary
from dflab.lattice import LatticeSpec, build_lattice
from dflab.observables import InitialStateSpec, prepare_state
from dflab.statevector import (CapacityError, PauliTerm, StateVector, apply_circuit, dump_state, expect,
                               init_product, load_state, reduced_density_matrix, sample_bits, subsystem_purity)


def _bell():
    return StateVector(np.array([1, 0, 0, 1]) / math.sqrt(2), 2)


def test_all_plus_z():
    psi = init_product(3, [(0, 0, 1)] * 3)
    assert np.allclose(psi.amplitudes, np.eye(8)[0])


def test_tilted_qubit_expectations():
    v = np.array([1.3, 0, 1]) / math.sqrt(2.69)
    psi = init_product(1, [tuple(v)])
    assert expect(psi, PauliTerm.of((0, "X"))) == pytest.approx(1.3 / math.sqrt(2.69), abs=1e-12)
    assert expect(psi, PauliTerm.of((0, "Z"))) == pytest.approx(1 / math.sqrt(2.69), abs=1e-12)
    flipped = init_product(1, [tuple(-v)])
    assert expect(flipped, PauliTerm.of((0, "X"))) == pytest.approx(-1.3 / math.sqrt(2.69), abs=1e-12)
    assert expect(flipped, PauliTerm.of((0, "Z"))) == pytest.approx(-1 / math.sqrt(2.69), abs=1e-12)


def test_non_unit_bloch_rejected():
    with pytest.raises(ValueError):
        init_product(1, [(0.5, 0, 0)])


def test_capacity():
    with pytest.raises(CapacityError):
        init_product(40, [(0, 0, 1)] * 40)


def test_identity_circuit():
    psi = init_product(2, [(1, 0, 0), (0, 1, 0)])
    out = apply_circuit(psi, Circuit.from_moments([], 2))
    assert np.allclose(out.amplitudes, psi.amplitudes)


def test_ub_twice_identity():
    g = build_lattice(LatticeSpec.ring(4))
    rng = np.random.default_rng(0)
    v = rng.normal(size=(g.n_qubits, 3))
    psi = init_product(g.n_qubits, [tuple(x / np.linalg.norm(x)) for x in v])
    ub = build_ub(g)
    out = apply_circuit(apply_circuit(psi, ub), ub)
    assert np.abs(out.amplitudes - psi.amplitudes).max() < 1e-10


def test_ring_cycle_vs_dense():
    g = build_lattice(LatticeSpec.ring(3))  # 6 qubits
    c = build_trotter_circuit(g, TrotterParams(J=1, h=1.3, mu=1.5, dt=0.25, order=2, cycles=1), merge=False)
    rng = np.random.default_rng(1)
    a = rng.normal(size=64) + 1j * rng.normal(size=64)
    psi = StateVector(a / np.linalg.norm(a), 6)
    ref = circuit_unitary(c) @ psi.amplitudes
    # dense oracle from per-gate Kronecker products
    U = np.eye(64, dtype=complex)
    for gate in c.gates():
        U = _embed(gate, 6) @ U
    assert np.abs(U @ psi.amplitudes - apply_circuit(psi, c).amplitudes).max() < 1e-10
    assert np.abs(ref - apply_circuit(psi, c).amplitudes).max() < 1e-10


def _embed(gate, n):
    """Kronecker-product embedding of a gate, independent of the simulator kernels."""
    m = gate.matrix()
    k = len(gate.targets)
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        sub = 0
        for i, t in enumerate(gate.targets):
            sub |= ((col >> t) & 1) << (k - 1 - i)
        for row_sub in range(2**k):
            amp = m[row_sub, sub]
            if amp == 0:
                continue
            row = col
            for i, t in enumerate(gate.targets):
                bit = (row_sub >> (k - 1 - i)) & 1
                row = (row & ~(1 << t)) | (bit << t)
            out[row, col] += amp
    return out


def test_expect_basic():
    assert expect(init_product(1, [(0, 0, 1)]), PauliTerm.of((0, "Z"))) == 1
    assert expect(_bell(), PauliTerm.of((0, "X"), (1, "X"))) == pytest.approx(1)
    assert expect(_bell(), PauliTerm.of((0, "Y"), (1, "Y"))) == pytest.approx(-1)


def test_gauss_zero_on_superposition_state():
    g = build_lattice(LatticeSpec.ring(4))
    psi = prepare_state(InitialStateSpec(matter="AllPlusZ"), g)
    for j in range(g.n_matter):
        t = PauliTerm.of((j, "X"), *[(g.link_qubit(l), "X") for l in g.incident_links(j)])
        assert abs(expect(psi, t)) < 1e-12


def test_purity():
    psi = init_product(3, [(1, 0, 0), (0, 0, 1), (0, 1, 0)])
    assert subsystem_purity(psi, [0, 2]) == pytest.approx(1)
    assert subsystem_purity(_bell(), [0]) == pytest.approx(0.5)
    ghz = np.zeros(16)
    ghz[0] = ghz[15] = 1 / math.sqrt(2)
    psi = StateVector(ghz, 4)
    rho = reduced_density_matrix(psi, [1, 2])
    assert np.allclose(rho, np.diag([0.5, 0, 0, 0.5]))
    assert subsystem_purity(psi, [1, 2]) == pytest.approx(0.5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 4), min_size=1, max_size=4, unique=True))
def test_purity_complement_symmetry(seed, subset):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=32) + 1j * rng.normal(size=32)
    psi = StateVector(a / np.linalg.norm(a), 5)
    rest = [q for q in range(5) if q not in subset]
    p = subsystem_purity(psi, subset)
    assert 1 / 2 ** min(len(subset), 5 - len(subset)) - 1e-12 <= p <= 1 + 1e-12
    if rest:
        assert p == pytest.approx(subsystem_purity(psi, rest), abs=1e-12)


def test_sampling():
    zero = init_product(2, [(0, 0, 1)] * 2)
    assert sample_bits(zero, [], 100, 1).bits.sum() == 0
    plus = init_product(1, [(1, 0, 0)])
    b = sample_bits(plus, [], 10**6, 2)
    assert abs(b.bits.mean() - 0.5) < 0.002
    assert sample_bits(plus, [Gate("H", (0,))], 1000, 3).bits.sum() == 0


def test_sampling_seeded():
    plus = init_product(3, [(1, 0, 0)] * 3)
    assert np.array_equal(sample_bits(plus, [], 50, 9).bits, sample_bits(plus, [], 50, 9).bits)


def test_dump_roundtrip(tmp_path):
    psi = init_product(3, [(1, 0, 0), (0, 0, 1), (0, 1, 0)])
    dump_state(psi, tmp_path / "s.bin")
    back = load_state(tmp_path / "s.bin")
    assert back.n_qubits == 3 and np.array_equal(back.amplitudes, psi.amplitudes)
