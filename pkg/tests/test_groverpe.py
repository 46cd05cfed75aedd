import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dflab.circuits import Circuit, Gate, TrotterParams
from dflab.dualsim import all_sectors, dual_trotter_evolve
from dflab.groverpe import (CapacityError, PhaseEstimationConfig, build_gamma, cost_compare, cost_csv, fit_exponent,
                            lgt_instance, naive_shots_needed, pe_distribution, phase_estimate)
from dflab.lattice import LatticeSpec, build_lattice
from dflab.statevector import PauliTerm

P = TrotterParams(J=1.0, h=1.3, mu=1.5, dt=0.3, order=2)
Z0 = PauliTerm.of((0, "Z"))


def _lam(gamma):
    return abs(gamma.plane_phases()).max()


def test_identity_gives_pi():
    gm = build_gamma(np.eye(2), Z0)
    assert gm.expectation == pytest.approx(1.0)
    assert _lam(gm) == pytest.approx(math.pi, abs=1e-9)


def test_hadamard_gives_half_pi():
    gm = build_gamma(Circuit.from_gates([Gate("H", (0,))], 1), Z0)
    assert gm.expectation == pytest.approx(0.0, abs=1e-12)
    assert _lam(gm) == pytest.approx(math.pi / 2, abs=1e-9)


def test_gamma_unitary_and_plane_rotation():
    g = build_lattice(LatticeSpec.chain(2))
    gm = lgt_instance(g, P, 1, PauliTerm.of((g.link_qubit(0), "X")), 0.4)
    d = gm.matrix.shape[0]
    assert np.abs(gm.matrix.conj().T @ gm.matrix - np.eye(d)).max() < 1e-10
    ph = gm.plane_phases()
    assert ph[0] == pytest.approx(-ph[1], abs=1e-9)
    assert math.cos(ph[1]) == pytest.approx(-gm.expectation, abs=1e-9)


def test_lgt_phase_matches_dense_eigensolver():
    g = build_lattice(LatticeSpec.ring(3))
    O = PauliTerm.of((g.link_qubit(1), "X"))
    gm = lgt_instance(g, P, 1, O, 0.6)
    w, V = np.linalg.eig(gm.matrix)
    overlap = np.abs(V.conj().T @ gm.psi) ** 2
    ph = np.angle(w[overlap > 1e-8])
    assert np.allclose(np.abs(ph), _lam(gm), atol=1e-8)
    assert math.cos(_lam(gm)) == pytest.approx(-gm.expectation, abs=1e-9)


def test_grid_phase_recovered_exactly():
    gm = build_gamma(Circuit.from_gates([Gate("H", (0,))], 1), Z0)
    res = phase_estimate(PhaseEstimationConfig(2, gm, shots=200), seed=3)
    assert set(res.outcomes.tolist()) <= {1, 3}
    assert res.probabilities[[1, 3]].sum() == pytest.approx(1.0, abs=1e-12)
    assert res.estimate == pytest.approx(0.0, abs=1e-12)


def test_query_accounting():
    gm = build_gamma(np.eye(2), Z0)
    for m in (1, 2, 5):
        res = phase_estimate(PhaseEstimationConfig(m, gm), seed=0)
        assert res.gamma_applications == 2**m - 1
        assert res.u_applications == 2 * (2**m - 1) + 1
        assert res.resolution == pytest.approx(math.pi / 2**m)


def test_sector_toy_matches_enumeration():
    g = build_lattice(LatticeSpec.chain(2))
    a = 0.7
    gm = lgt_instance(g, P, 2, PauliTerm.of((g.link_qubit(0), "X")), a)
    tp = TrotterParams(J=1.0, h=1.3, mu=1.5, dt=0.3, order=2, cycles=2)
    avg = np.mean([dual_trotter_evolve(s, g, tp, [(math.sin(a), 0, math.cos(a))]).x[-1, 0] for s in all_sectors(2)])
    assert gm.expectation == pytest.approx(avg, abs=1e-10)
    m = 6
    res = phase_estimate(PhaseEstimationConfig(m, gm, shots=400), seed=1)
    assert abs(math.acos(-avg) - abs(res.phases[0])) <= 2 * math.pi / 2**m + 1e-12


def test_error_shrinks_with_ancillas():
    g = build_lattice(LatticeSpec.chain(2))
    gm = lgt_instance(g, P, 2, PauliTerm.of((g.link_qubit(0), "X")), 0.7)
    lam = _lam(gm)
    errs = {}
    for m in (3, 6):
        res = phase_estimate(PhaseEstimationConfig(m, gm, shots=400), seed=2)
        errs[m] = abs(lam - abs(res.phases[0]))
        assert errs[m] <= math.pi / 2**m + 1e-12
    assert errs[6] <= errs[3]


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 3.0), st.integers(3, 6))
def test_mass_near_true_phase(angle, m):
    gm = build_gamma(Circuit.from_gates([Gate("RY", (0,), angle)], 1), Z0)
    probs, _ = pe_distribution(gm, m)
    M = 2**m
    lam = _lam(gm)
    grid = 2 * np.pi * np.arange(M) / M
    dist = np.minimum.reduce([np.abs(np.angle(np.exp(1j * (grid - sgn * lam)))) for sgn in (1, -1)])
    near = dist < 2 * math.pi / M
    assert probs[near].sum() >= 4 / math.pi**2


def test_non_pauli_rejected():
    with pytest.raises(TypeError):
        build_gamma(np.eye(2), np.diag([1, -1]))
    with pytest.raises(ValueError):
        build_gamma(np.eye(2), PauliTerm.of((0, "Z"), coefficient=0.5))


def test_capacity_limits():
    with pytest.raises(CapacityError):
        build_gamma(Circuit.from_gates([], 11), Z0)
    gm = build_gamma(np.eye(2**10), Z0)
    with pytest.raises(CapacityError):
        PhaseEstimationConfig(9, gm)
    with pytest.raises(ValueError):
        PhaseEstimationConfig(0, gm)


def test_naive_shots_scale():
    n1 = naive_shots_needed(0.3, 0.1, seed=0)
    n2 = naive_shots_needed(0.3, 0.05, seed=0)
    assert 2.5 < n2 / n1 < 6


def test_cost_table_and_exponents():
    g = build_lattice(LatticeSpec.chain(2))
    gm = lgt_instance(g, P, 2, PauliTerm.of((g.link_qubit(0), "X")), 0.7)
    eps = [0.2, 0.1, 0.05, 0.025]
    rows = cost_compare(eps, gm, seed=0)
    assert [r.pe_applications for r in rows] == [2 * (2 ** math.ceil(-math.log2(e)) - 1) + 1 for e in eps]
    assert fit_exponent(eps, [r.naive_shots for r in rows]) == pytest.approx(2.0, abs=0.3)
    assert cost_csv(rows).splitlines()[0] == "eps,naive_shots,pe_applications,achieved_error"
