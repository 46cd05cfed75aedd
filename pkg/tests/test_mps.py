import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dflab import mps as M
from dflab.circuits import Circuit, TrotterParams, build_dual_trotter_circuit, build_trotter_circuit, build_ub
from dflab.lattice import DUAL, LGT, LatticeSpec, build_lattice, snake_order
from dflab.statevector import PauliTerm, StateVector, apply_circuit, expect, init_product


def _random_bloch(rng, n):
    return [tuple(v / np.linalg.norm(v)) for v in rng.normal(size=(n, 3))]


def test_all_plus_z_product():
    g = build_lattice(LatticeSpec.chain(3))
    psi = M.mps_from_product(snake_order(g), [(0, 0, 1)] * 5)
    assert psi.bond_dims() == [1, 1, 1, 1]
    assert np.allclose(M.to_dense(psi), np.eye(32)[0])


def test_to_dense_matches_statevector_order():
    rng = np.random.default_rng(0)
    g = build_lattice(LatticeSpec.ring(3))
    bl = _random_bloch(rng, 6)
    psi = M.mps_from_product(snake_order(g), bl)
    assert np.allclose(M.to_dense(psi), init_product(6, bl).amplitudes)


@pytest.mark.parametrize("L", [3, 4, 5, 6])
def test_grid_mpo_counts(L):
    g = build_lattice(LatticeSpec.grid(L, L))
    assert len(M.build_layer_mpos(g, snake_order(g, LGT), "ZZZ", 0.3)) == L + 1
    assert len(M.build_layer_mpos(g, snake_order(g, DUAL), "XSTAR", 0.3, [1] * L * L)) == L


def test_small_grid_packs_tighter():
    g = build_lattice(LatticeSpec.grid(2, 2))
    assert len(M.build_layer_mpos(g, snake_order(g, LGT), "ZZZ", 0.3)) == 2


def test_mpos_have_bond_two():
    g = build_lattice(LatticeSpec.grid(3, 3))
    for m in M.build_layer_mpos(g, snake_order(g, LGT), "ZZZ", 0.3):
        assert m.bond_dim() <= 2


def test_theta_zero_mpos_identity():
    g = build_lattice(LatticeSpec.grid(2, 2))
    o = snake_order(g, LGT)
    for m in M.build_layer_mpos(g, o, "ZZZ", 0.0):
        d = M.mpo_dense(m, o.order.__len__())
        assert np.allclose(d, np.eye(d.shape[0]))


def test_mpo_product_equals_layer_unitary():
    g = build_lattice(LatticeSpec.grid(2, 2))
    o = snake_order(g, LGT)
    rng = np.random.default_rng(1)
    bl = _random_bloch(rng, g.n_qubits)
    psi = M.mps_from_product(o, bl, chi_max=1024)
    for m in M.build_layer_mpos(g, o, "ZZZ", 0.4):
        M.apply_mpo_truncate(psi, m)
    gates = M.layer_gates(g, LGT, "ZZZ", 0.4)
    ref = apply_circuit(init_product(g.n_qubits, bl), Circuit.from_gates(gates, g.n_qubits))
    assert np.abs(M.to_dense(psi) - ref.amplitudes).max() < 1e-10


def test_single_qubit_layer_no_truncation():
    g = build_lattice(LatticeSpec.ring(4))
    o = snake_order(g, LGT)
    psi = M.mps_from_product(o, [(1, 0, 0)] * 8, chi_max=1)
    for q, u in M.single_qubit_layer(g, LGT, "RX", {q: 0.3 * q for q in range(8)}):
        M.apply_1q(psi, q, u)
    assert psi.log == [] or all(r.eps == 0 for r in psi.log)
    assert M.fidelity_proxy(psi) == 1.0


@pytest.mark.parametrize("spec,frame", [(LatticeSpec.ring(6), LGT), (LatticeSpec.chain(4), LGT),
                                        (LatticeSpec.grid(2, 3), DUAL), (LatticeSpec.ring(5), DUAL)])
def test_ample_chi_equals_dense(spec, frame):
    g = build_lattice(spec)
    o = snake_order(g, frame)
    n = g.n_frame_qubits(frame)
    assert n <= 12
    rng = np.random.default_rng(2)
    bl = _random_bloch(rng, n)
    p = TrotterParams(J=1.0, h=1.3, mu=1.5, dt=0.3, order=2)
    sec = rng.choice([-1, 1], size=g.n_matter)
    psi = M.mps_from_product(o, bl, chi_max=2 ** (n // 2 + 1))
    ev = M.MPSEvolver(g, p, o, sector=sec)
    sv = init_product(n, bl)
    if frame == LGT:
        ev.prepare_ub(psi)
        sv = apply_circuit(sv, build_ub(g))
        step = build_trotter_circuit(g, p, cycles=1, merge=False)
    else:
        step = build_dual_trotter_circuit(g, p, sec, cycles=1, merge=False)
    run = ev.run(psi, 3)
    for c in range(4):
        assert np.abs(M.to_dense(run.states[c]) - sv.amplitudes).max() < 1e-10
        sv = apply_circuit(sv, step)
    assert run.proxies[-1] == pytest.approx(1.0, abs=1e-12)


def test_chi_one_logs_truncation():
    g = build_lattice(LatticeSpec.ring(4))
    o = snake_order(g, LGT)
    psi = M.mps_from_product(o, [(1, 0, 0)] * 4 + [(0.6, 0, 0.8)] * 4, chi_max=1)
    M.MPSEvolver(g, TrotterParams(dt=0.3), o).run(psi, 1)
    assert any(r.eps > 0 for r in psi.log)
    assert max(psi.bond_dims()) == 1


def test_proxy_definition():
    psi = M.mps_from_product([0, 1], [(0, 0, 1)] * 2)
    assert M.fidelity_proxy(psi) == 1.0
    psi.log = [M.TruncationRecord(0, "a", 0, 0.1), M.TruncationRecord(1, "b", 0, 0.02)]
    assert M.fidelity_proxy(psi) == pytest.approx(0.9 * 0.98)
    assert M.fidelity_proxy(psi, per_qubit=2) == pytest.approx(math.sqrt(0.9 * 0.98))


def test_single_truncation_proxy_is_exact_fidelity():
    # one truncation of a normalized state: |<trunc|exact>|^2 = 1 - eps
    g = build_lattice(LatticeSpec.ring(4))
    o = snake_order(g, LGT)
    psi = M.mps_from_product(o, _random_bloch(np.random.default_rng(4), 8), chi_max=256)
    for m in M.build_layer_mpos(g, o, "UB"):
        M.apply_mpo_truncate(psi, m)
    M.MPSEvolver(g, TrotterParams(dt=0.5), o).run(psi, 1)
    exact, trunc = psi.copy(), psi.copy()
    trunc.chi_max, trunc.log = 2, []
    m = M.build_layer_mpos(g, o, "ZZZ", 0.7)[0]
    M.apply_mpo_truncate(exact, m)
    M.apply_mpo_truncate(trunc, m)
    assert trunc.log and trunc.log[0].eps > 0
    f = abs(np.vdot(M.to_dense(trunc), M.to_dense(exact))) ** 2
    assert f == pytest.approx(M.fidelity_proxy(trunc), abs=1e-10)


def test_canonical_and_norm():
    g = build_lattice(LatticeSpec.ring(4))
    o = snake_order(g, LGT)
    psi = M.mps_from_product(o, _random_bloch(np.random.default_rng(5), 8), chi_max=64)
    M.MPSEvolver(g, TrotterParams(dt=0.3), o).run(psi, 2)
    assert M.norm(psi) == pytest.approx(1.0, abs=1e-12)
    M.canonicalize(psi, 3)
    assert M.isometry_error(psi) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.tuples(st.integers(0, 7), st.sampled_from("XYZ")), min_size=1,
                                            max_size=3, unique_by=lambda t: t[0]))
def test_expect_pauli_matches_dense(seed, factors):
    g = build_lattice(LatticeSpec.ring(4))
    o = snake_order(g, LGT)
    psi = M.mps_from_product(o, _random_bloch(np.random.default_rng(seed), 8), chi_max=64)
    M.MPSEvolver(g, TrotterParams(dt=0.3), o).run(psi, 1)
    ref = expect(StateVector(M.to_dense(psi), 8), PauliTerm.of(*factors))
    assert M.expect_pauli(psi, factors) == pytest.approx(ref, abs=1e-10)


def test_bond_entropy_bell():
    t0 = np.zeros((1, 2, 2), dtype=complex)
    t0[0, 0, 0] = t0[0, 1, 1] = 1 / math.sqrt(2)
    t1 = np.zeros((2, 2, 1), dtype=complex)
    t1[0, 0, 0] = t1[1, 1, 0] = 1
    psi = M.MPSState([t0, t1], (0, 1))
    assert M.bond_entropies(psi)[0] == pytest.approx(1.0)


def test_fit_recovers_synthetic():
    A, B = 0.5, 2.0
    f = np.array([0.5, 0.7, 0.8, 0.9, 0.95])
    pts = [(1 / (A * (1 - x) ** B), x) for x in f]
    fit = M.fit_required_chi(pts, 0.99)
    assert fit.A == pytest.approx(A, rel=0.01)
    assert fit.B == pytest.approx(B, rel=0.01)
    assert fit.chi_star == pytest.approx(1 / (A * 0.01**B), rel=0.01)


def test_fit_chi_sufficient():
    assert M.fit_required_chi([(64, 1.0)]).status == "chi sufficient"
    assert M.fit_required_chi([(8, 1.0), (16, 1.0)]).status == "chi sufficient"


def test_fit_interpolates_below_window():
    fit = M.fit_required_chi([(2, 0.9), (4, 0.96), (16, 0.99), (32, 0.995)], 0.95, fit_min_chi=16)
    assert fit.status == "interpolated"
    assert 2 < fit.chi_star < 4


def test_truncation_csv():
    text = M.truncation_csv([M.TruncationRecord(1, "ZZZ[0]", 3, 1e-5)])
    assert text.splitlines() == ["cycle,mpo,bond,eps", "1,ZZZ[0],3,1e-05"]
