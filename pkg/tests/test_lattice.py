import pytest
from hypothesis import given, strategies as st

from dflab.lattice import (DUAL, LGT, LatticeError, LatticeSpec, build_lattice, manhattan_distance, read_adjacency,
                           snake_order)


def test_ring_counts():
    g = build_lattice(LatticeSpec.ring(19))
    assert g.n_matter == 19 and g.n_gauge == 19
    assert g.links[-1] == (18, 0)


def test_grid_counts():
    g = build_lattice(LatticeSpec.grid(4, 4))
    assert g.n_matter == 16
    assert g.n_gauge == 2 * 4 * 3


def test_ring2_rejected():
    with pytest.raises(LatticeError):
        build_lattice(LatticeSpec.ring(2))


@given(st.integers(3, 30))
def test_ring_every_vertex_degree_two(n):
    g = build_lattice(LatticeSpec.ring(n))
    assert list(g.degree) == [2] * n


def test_custom_disconnected_names_edge(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n2 3\n")
    with pytest.raises(LatticeError, match="2"):
        build_lattice(LatticeSpec.custom(p))


def test_custom_malformed(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n1 x\n")
    with pytest.raises(LatticeError):
        read_adjacency(p)


def test_custom_ok(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# triangle plus tail\n0 1\n1 2\n2 0\n2 3\n")
    g = build_lattice(LatticeSpec.custom(p))
    assert g.n_matter == 4 and g.n_gauge == 4


def test_manhattan():
    g = build_lattice(LatticeSpec.grid(3, 3))
    assert manhattan_distance(g, ("v", 0), ("v", 8)) == 4
    assert manhattan_distance(g, ("v", 4), ("v", 4)) == 0
    link = g.links.index((0, 1))
    # doubled coords: vertex (0,0), link midpoint (0,1) -> distance 1 halved up to 1
    assert manhattan_distance(g, ("v", 0), ("l", link)) == 1


def test_manhattan_ring_undefined():
    g = build_lattice(LatticeSpec.ring(5))
    with pytest.raises(LatticeError, match="metric undefined"):
        manhattan_distance(g, ("v", 0), ("v", 1))


def test_snake_chain():
    g = build_lattice(LatticeSpec.chain(3))
    o = snake_order(g, LGT)
    # m0, g(0,1), m1, g(1,2), m2
    assert o.order == (0, 3, 1, 4, 2)


def test_snake_ring_wrap_last():
    g = build_lattice(LatticeSpec.ring(4))
    o = snake_order(g, LGT)
    assert o.order == (0, 4, 1, 5, 2, 6, 3, 7)


def test_snake_grid_dual():
    g = build_lattice(LatticeSpec.grid(2, 2))
    o = snake_order(g, DUAL)
    # links sorted: (0,1)=0, (0,2)=1, (1,3)=2, (2,3)=3; row 0: h(0,1), then down (0,2),(1,3); row 1: h(2,3)
    assert o.order == (0, 1, 2, 3)
    assert sorted(o.order) == list(range(g.n_gauge))


def test_snake_custom_needs_order(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n1 2\n")
    g = build_lattice(LatticeSpec.custom(p))
    with pytest.raises(LatticeError):
        snake_order(g, LGT)
    assert snake_order(g, LGT, order=[0, 3, 1, 4, 2]).order == (0, 3, 1, 4, 2)


@given(st.integers(2, 5), st.integers(2, 5))
def test_snake_grid_permutation(r, c):
    g = build_lattice(LatticeSpec.grid(r, c))
    o = snake_order(g, LGT)
    assert sorted(o.order) == list(range(g.n_qubits))
