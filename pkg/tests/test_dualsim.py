import math

import numpy as np
import pytest

from dflab.circuits import TrotterParams, build_trotter_circuit
from dflab.dualsim import (DualIsing1D, SectorWeighting, all_sectors, disorder_average, dual_trotter_evolve,
                           evolve_hamiltonian, imbalance_curve, krylov_evolve, load_sectors, run_disorder,
                           sample_sectors, save_sectors)
from dflab.lattice import LatticeSpec, build_lattice
from dflab.observables import InitialStateSpec, gauge_bloch, measure_direct, prepare_state, stack_tables
from dflab.statevector import apply_circuit

P = TrotterParams(J=1.0, h=1.3, mu=1.5, dt=0.25, order=2, cycles=5)


def _lgt_table(g, spec, p):
    psi = prepare_state(spec, g)
    step = build_trotter_circuit(g, p, cycles=1, merge=False)
    rows = []
    for c in range(p.cycles + 1):
        rows.append(measure_direct(psi, g))
        psi = apply_circuit(psi, step)
    return stack_tables(rows, np.arange(p.cycles + 1), g, p.J, p.h, p.mu)


def test_dt_zero_constant():
    g = build_lattice(LatticeSpec.ring(4))
    spec = InitialStateSpec(flips=(1,))
    t = dual_trotter_evolve([1, -1, 1, 1], g, TrotterParams(dt=0.0, cycles=4), gauge_bloch(spec, g))
    for k, arr in t.arrays().items():
        assert np.allclose(arr, arr[0]), k


@pytest.mark.parametrize("sector", [(1, 1, 1), (1, -1, 1), (-1, -1, 1)])
def test_dual_matches_lgt_ring3(sector):
    g = build_lattice(LatticeSpec.ring(3))
    spec = InitialStateSpec(matter="Explicit", matter_bloch=tuple((float(s), 0.0, 0.0) for s in sector), flips=(1,))
    lgt = _lgt_table(g, spec, P)
    dual = dual_trotter_evolve(sector, g, P, gauge_bloch(spec, g))
    for k in ("x", "zint", "matter", "gauss", "energy"):
        assert np.abs(getattr(lgt, k) - getattr(dual, k)).max() < 1e-10, k


def test_single_sector_identity():
    g = build_lattice(LatticeSpec.ring(3))
    spec = InitialStateSpec(flips=(0,))
    run = run_disorder(g, P, gauge_bloch(spec, g), SectorWeighting.single([1, 1, 1]))
    ref = dual_trotter_evolve([1, 1, 1], g, P, gauge_bloch(spec, g))
    assert np.array_equal(run.table.energy, ref.energy)


def test_uniform_average_enumerates():
    g = build_lattice(LatticeSpec.ring(3))
    spec = InitialStateSpec(flips=(0,))
    run = run_disorder(g, P, gauge_bloch(spec, g), SectorWeighting.uniform())
    assert len(run.sectors) == 8 and not run.monte_carlo
    manual = disorder_average(np.ones(8), [dual_trotter_evolve(s, g, P, gauge_bloch(spec, g)) for s in all_sectors(3)])
    assert np.allclose(run.table.energy, manual.energy)


def test_superposition_equals_sector_average():
    g = build_lattice(LatticeSpec.ring(3))
    lgt = _lgt_table(g, InitialStateSpec(matter="AllPlusZ", flips=(1,)), P)
    prep = prepare_state(InitialStateSpec(matter="AllPlusZ", flips=(1,), frame="Dual"), g)
    avg = run_disorder(g, P, prep.gauge_bloch, prep.weighting).table
    for k in ("x", "zint", "energy"):
        assert np.abs(getattr(lgt, k) - getattr(avg, k)).max() < 1e-10


def test_sampler_deterministic_and_uniform():
    a = sample_sectors(12, 4000, 7)
    assert np.array_equal(a, sample_sectors(12, 4000, 7))
    assert not np.array_equal(a, sample_sectors(12, 4000, 8))
    assert set(np.unique(a)) == {-1, 1}
    assert abs(a.mean()) < 0.02


def test_sector_file_roundtrip(tmp_path):
    s = sample_sectors(5, 10, 1)
    w = np.full(10, 0.1)
    save_sectors(tmp_path / "s.json", s, w, {"seed": 1})
    s2, w2 = load_sectors(tmp_path / "s.json")
    assert np.array_equal(s, s2) and np.allclose(w, w2)


def test_hamiltonian_t0_is_initial():
    g = build_lattice(LatticeSpec.ring(4))
    spec = InitialStateSpec(flips=(2,))
    H = DualIsing1D.from_lattice(g, [1, 1, -1, 1], 1.0, 1.3, 1.5)
    t = evolve_hamiltonian(H, gauge_bloch(spec, g), [0.0])
    ref = dual_trotter_evolve([1, 1, -1, 1], g, TrotterParams(cycles=0), gauge_bloch(spec, g))
    assert np.allclose(t.energy[0], ref.energy[0])


def test_krylov_matches_dense():
    g = build_lattice(LatticeSpec.ring(8))
    spec = InitialStateSpec(flips=(4,))
    H = DualIsing1D.from_lattice(g, sample_sectors(8, 1, 3)[0], 1.0, 1.3, 1.5)
    times = [0.0, 0.5, 3.0, 20.0]
    a = evolve_hamiltonian(H, gauge_bloch(spec, g), times, method="dense")
    b = evolve_hamiltonian(H, gauge_bloch(spec, g), times, method="krylov")
    assert np.abs(a.energy - b.energy).max() < 1e-6


def test_krylov_unitary():
    H = DualIsing1D.chain(6, [1, -1, 1, 1, -1, 1], 1.0, 1.3, 1.5)
    v = np.zeros(64, dtype=complex)
    v[5] = 1
    out = krylov_evolve(H.matvec(), v, [0.0, 1.0, 10.0])
    assert all(abs(np.linalg.norm(x) - 1) < 1e-8 for x in out)


def test_small_trotter_step_approaches_hamiltonian():
    g = build_lattice(LatticeSpec.ring(3))
    spec = InitialStateSpec(flips=(1,))
    s = [1, -1, 1]
    T = 1.0
    trot = dual_trotter_evolve(s, g, TrotterParams(J=1, h=1.3, mu=1.5, dt=T / 200, order=2, cycles=200), gauge_bloch(spec, g))
    ex = evolve_hamiltonian(DualIsing1D.from_lattice(g, s, 1.0, 1.3, 1.5), gauge_bloch(spec, g), [T])
    assert np.abs(trot.energy[-1] - ex.energy[0]).max() < 1e-3


def test_imbalance_cycle0_and_warning():
    g = build_lattice(LatticeSpec.chain(4))
    p = TrotterParams(J=1, h=2.2, mu=2, dt=0.25, cycles=3)
    for th in (0.0, 0.4, math.pi / 2):
        assert imbalance_curve(th, g, p)[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.warns(UserWarning):
        imbalance_curve(2.0, g, p)


def test_bad_sector_rejected():
    g = build_lattice(LatticeSpec.ring(3))
    with pytest.raises(ValueError):
        dual_trotter_evolve([1, 0, 1], g, P, gauge_bloch(InitialStateSpec(), g))
