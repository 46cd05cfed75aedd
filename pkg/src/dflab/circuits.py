"""Gate-level circuit IR and builders for Z2 LGT Trotter dynamics.

Conventions:
    RX/RY/RZ(theta) = exp(-i theta P / 2)
    EXP_ZZZ(theta) = exp(-i theta Z Z Z)
    EXP_XSTAR(theta) = exp(-i theta X ... X) on all of its targets
    CPHASE(phi) = diag(1, 1, 1, exp(i phi))
Gate matrices are big-endian over ``targets`` (``targets[0]`` is the most
significant bit of the matrix index).
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .lattice import DUAL, LGT, LatticeGraph

SCHEMA_VERSION = 1

_ARITY = {
    "RX": 1, "RY": 1, "RZ": 1, "H": 1, "X": 1, "Y": 1, "Z": 1,
    "CNOT": 2, "CZ": 2, "CPHASE": 2, "EXP_ZZZ": 3, "EXP_XSTAR": None,
}
_ANGLED = {"RX", "RY", "RZ", "CPHASE", "EXP_ZZZ", "EXP_XSTAR"}
ENTANGLING = {"CNOT", "CZ", "CPHASE", "EXP_ZZZ"}

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
PAULI = {"I": _I2, "X": _X, "Y": _Y, "Z": _Z}


@dataclass(frozen=True)
class Gate:
    """A gate record.

    Attributes:
        kind: Gate name.
        targets: Qubit ids, big-endian with respect to ``matrix()``.
        angle: Rotation angle for parametrized kinds.
    """

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        arity = _ARITY[self.kind]
        if arity is not None and len(self.targets) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubits, got {len(self.targets)}")
        if not self.targets:
            raise ValueError(f"{self.kind} needs at least one target")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"{self.kind} targets must be distinct: {self.targets}")
        if self.kind in _ANGLED:
            if self.angle is None or not math.isfinite(self.angle):
                raise ValueError(f"{self.kind} needs a finite angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise ValueError(f"{self.kind} takes no angle")

    @property
    def is_entangling(self) -> bool:
        return self.kind in ENTANGLING or (self.kind == "EXP_XSTAR" and len(self.targets) > 1)

    @property
    def is_diagonal(self) -> bool:
        return self.kind in ("RZ", "Z", "CZ", "CPHASE", "EXP_ZZZ")

    def matrix(self) -> np.ndarray:
        """Dense unitary over the gate's targets."""
        k, a = self.kind, self.angle
        if k == "RX":
            return math.cos(a / 2) * _I2 - 1j * math.sin(a / 2) * _X
        if k == "RY":
            return math.cos(a / 2) * _I2 - 1j * math.sin(a / 2) * _Y
        if k == "RZ":
            return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])
        if k in ("H", "X", "Y", "Z"):
            return {"H": _H, "X": _X, "Y": _Y, "Z": _Z}[k].copy()
        if k == "CNOT":
            m = np.eye(4, dtype=complex)
            m[2:, 2:] = _X
            return m
        if k == "CZ":
            return np.diag([1, 1, 1, -1]).astype(complex)
        if k == "CPHASE":
            return np.diag([1, 1, 1, np.exp(1j * a)])
        if k == "EXP_ZZZ":
            par = np.array([bin(i).count("1") % 2 for i in range(8)])
            return np.diag(np.exp(-1j * a * (1 - 2 * par)))
        if k == "EXP_XSTAR":
            n = len(self.targets)
            xs = np.ones((1, 1), dtype=complex)
            for _ in range(n):
                xs = np.kron(xs, _X)
            return math.cos(a) * np.eye(2**n) - 1j * math.sin(a) * xs
        raise AssertionError(k)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "targets": list(self.targets)}
        if self.angle is not None:
            d["angle"] = self.angle
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        return cls(d["kind"], tuple(d["targets"]), d.get("angle"))


@dataclass(frozen=True)
class Circuit:
    """Moment-ordered gate list.

    Attributes:
        moments: Gates grouped into moments with disjoint targets.
        n_qubits: Register width.
        frame: ``LGT`` or ``Dual``.
    """

    moments: tuple[tuple[Gate, ...], ...]
    n_qubits: int
    frame: str = LGT

    def __post_init__(self):
        object.__setattr__(self, "moments", tuple(tuple(m) for m in self.moments))
        for i, m in enumerate(self.moments):
            used: set[int] = set()
            for gate in m:
                for t in gate.targets:
                    if not 0 <= t < self.n_qubits:
                        raise ValueError(f"target {t} out of range for {self.n_qubits} qubits")
                    if t in used:
                        raise ValueError(f"moment {i} reuses qubit {t}")
                    used.add(t)

    @classmethod
    def from_gates(cls, gates: Iterable[Gate], n_qubits: int, frame: str = LGT) -> "Circuit":
        """Schedule gates as early as possible, preserving per-qubit order."""
        moments: list[list[Gate]] = []
        level = defaultdict(int)
        for gate in gates:
            m = max(level[t] for t in gate.targets)
            if m == len(moments):
                moments.append([])
            moments[m].append(gate)
            for t in gate.targets:
                level[t] = m + 1
        return cls(tuple(tuple(m) for m in moments), n_qubits, frame)

    @classmethod
    def from_moments(cls, moments: Sequence[Sequence[Gate]], n_qubits: int, frame: str = LGT) -> "Circuit":
        return cls(tuple(tuple(m) for m in moments if m), n_qubits, frame)

    def gates(self) -> list[Gate]:
        return [g for m in self.moments for g in m]

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits or other.frame != self.frame:
            raise ValueError("cannot join circuits with different registers")
        return Circuit(self.moments + other.moments, self.n_qubits, self.frame)

    def repeat(self, k: int) -> "Circuit":
        return Circuit(self.moments * k, self.n_qubits, self.frame)

    def count(self, kind: str | None = None) -> int:
        return sum(1 for g in self.gates() if kind is None or g.kind == kind)

    def entangling_count(self) -> int:
        return sum(1 for g in self.gates() if g.is_entangling)

    def inverse(self) -> "Circuit":
        inv = []
        for m in reversed(self.moments):
            inv.append(tuple(_inverse_gate(g) for g in m))
        return Circuit(tuple(inv), self.n_qubits, self.frame)

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "n_qubits": self.n_qubits,
            "frame": self.frame,
            "bit_order": "little-endian",
            "moments": [[g.to_dict() for g in m] for m in self.moments],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported circuit schema version {doc.get('schema_version')}")
        moments = [[Gate.from_dict(g) for g in m] for m in doc["moments"]]
        return cls(tuple(tuple(m) for m in moments), doc["n_qubits"], doc["frame"])


def _inverse_gate(g: Gate) -> Gate:
    # unparametrized kinds are all self-inverse
    if g.angle is not None:
        return Gate(g.kind, g.targets, -g.angle)
    return g


@dataclass(frozen=True)
class TrotterParams:
    """Couplings and step for Trotterized evolution.

    Attributes:
        J: Matter-gauge-matter coupling.
        h: Gauge field.
        mu: Matter field.
        dt: Trotter step.
        order: 1 or 2.
        cycles: Number of Trotter cycles.
        Q: Optional Gauss-term coefficient, energy bookkeeping only.
    """

    J: float = 1.0
    h: float = 1.3
    mu: float = 1.5
    dt: float = 0.25
    order: int = 2
    cycles: int = 0
    Q: float = 0.0

    def __post_init__(self):
        if self.dt < 0:
            raise ValueError("dt must be non-negative")
        if self.cycles < 0:
            raise ValueError("cycles must be non-negative")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")

    @classmethod
    def from_dict(cls, d: dict) -> "TrotterParams":
        return cls(**{k: d[k] for k in ("J", "h", "mu", "dt", "order", "cycles", "Q") if k in d})

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _edge_coloring(edges: Sequence[tuple], ncolors: int) -> list[int]:
    """Proper edge coloring of a bipartite multigraph via alternating paths."""
    at: dict = defaultdict(dict)
    color = [-1] * len(edges)
    for e, (u, v) in enumerate(edges):
        a = next(c for c in range(ncolors) if c not in at[u])
        b = next(c for c in range(ncolors) if c not in at[v])
        if a in at[v]:
            path, node, c = [], v, a
            while c in at[node]:
                ed = at[node][c]
                path.append(ed)
                x, y = edges[ed]
                node = y if x == node else x
                c = b if c == a else a
            for ed in path:
                x, y = edges[ed]
                del at[x][color[ed]]
                del at[y][color[ed]]
            for ed in path:
                color[ed] = b if color[ed] == a else a
                x, y = edges[ed]
                at[x][color[ed]] = ed
                at[y][color[ed]] = ed
        color[e] = a
        at[u][a] = e
        at[v][a] = e
    return color


def ub_pairs(g: LatticeGraph) -> list[tuple[int, int]]:
    """(matter qubit, link qubit) control/target pairs of U_B."""
    return [(j, g.link_qubit(l)) for l, (u, v) in enumerate(g.links) for j in (u, v)]


def build_ub(g: LatticeGraph) -> Circuit:
    """CNOT involution mapping Gauss operators onto matter qubits.

    Each matter vertex controls a CNOT onto every incident link. Gates are
    packed into ``max(max degree, 2)`` moments by bipartite edge coloring.

    Args:
        g: Lattice graph.

    Returns:
        LGT-frame circuit.
    """
    pairs = ub_pairs(g)
    ncol = max(int(g.degree.max()), 2)
    colors = _edge_coloring([(("m", c), ("l", t)) for c, t in pairs], ncol)
    moments: list[list[Gate]] = [[] for _ in range(ncol)]
    for (c, t), k in zip(pairs, colors):
        moments[k].append(Gate("CNOT", (c, t)))
    return Circuit.from_moments(moments, g.n_qubits, LGT)


def _layer(gates: list[Gate], n: int, frame: str) -> list[tuple[Gate, ...]]:
    return list(Circuit.from_gates(gates, n, frame).moments)


def zzz_layer(g: LatticeGraph, theta: float) -> list[Gate]:
    """EXP_ZZZ(theta) on each (matter, link, matter) triple."""
    return [Gate("EXP_ZZZ", (u, g.link_qubit(l), v), theta) for l, (u, v) in enumerate(g.links)]


def mixing_layer(g: LatticeGraph, p: TrotterParams) -> list[Gate]:
    """RX(2 mu dt) on matter and RX(2 h dt) on gauge qubits."""
    gates = [Gate("RX", (j,), 2 * p.mu * p.dt) for j in range(g.n_matter)]
    gates += [Gate("RX", (g.link_qubit(l),), 2 * p.h * p.dt) for l in range(g.n_gauge)]
    return gates


def z_layer_dual(g: LatticeGraph, theta: float) -> list[Gate]:
    """RZ(2 theta) on every gauge qubit, the dual image of EXP_ZZZ(theta)."""
    return [Gate("RZ", (l,), 2 * theta) for l in range(g.n_gauge)]


def mixing_layer_dual(g: LatticeGraph, p: TrotterParams, sector: Sequence[int]) -> list[Gate]:
    """RX(2 h dt) on links and EXP_XSTAR(g_j mu dt) on each vertex star."""
    gates = [Gate("RX", (l,), 2 * p.h * p.dt) for l in range(g.n_gauge)]
    gates += [
        Gate("EXP_XSTAR", g.incident_links(j), sector[j] * p.mu * p.dt)
        for j in range(g.n_matter)
    ]
    return gates


def _assemble(z_half, z_full, mix, p: TrotterParams, cycles: int, merge: bool, n: int, frame: str) -> Circuit:
    moments: list[tuple[Gate, ...]] = []
    if p.order == 1:
        for _ in range(cycles):
            moments += _layer(z_full, n, frame) + _layer(mix, n, frame)
    elif merge and cycles > 0:
        moments += _layer(z_half, n, frame)
        for c in range(cycles):
            moments += _layer(mix, n, frame)
            moments += _layer(z_full if c < cycles - 1 else z_half, n, frame)
    else:
        for _ in range(cycles):
            moments += _layer(z_half, n, frame) + _layer(mix, n, frame) + _layer(z_half, n, frame)
    return Circuit.from_moments(moments, n, frame)


def build_trotter_cycle(g: LatticeGraph, p: TrotterParams) -> Circuit:
    """One Trotter cycle in the LGT frame.

    First order applies U_J, then U_mu and U_h. Second order applies
    U_J(dt/2), U_h U_mu, U_J(dt/2).
    """
    return build_trotter_circuit(g, p, cycles=1)


def build_trotter_circuit(g: LatticeGraph, p: TrotterParams, cycles: int | None = None, merge: bool = True) -> Circuit:
    """Several Trotter cycles in the LGT frame.

    For second order with ``merge=True``, adjacent half steps of U_J are fused,
    so the repeating unit is the first-order cycle.

    Args:
        g: Lattice graph.
        p: Trotter parameters.
        cycles: Override for ``p.cycles``.
        merge: Fuse adjacent half layers.

    Returns:
        LGT-frame circuit.
    """
    cycles = p.cycles if cycles is None else cycles
    return _assemble(
        zzz_layer(g, p.J * p.dt / 2), zzz_layer(g, p.J * p.dt), mixing_layer(g, p),
        p, cycles, merge, g.n_qubits, LGT,
    )


def build_dual_trotter_circuit(
    g: LatticeGraph, p: TrotterParams, sector: Sequence[int], cycles: int | None = None, merge: bool = True
) -> Circuit:
    """Trotter cycles of the dual model in charge sector ``sector``."""
    if len(sector) != g.n_matter:
        raise ValueError(f"sector has {len(sector)} entries, graph has {g.n_matter} vertices")
    cycles = p.cycles if cycles is None else cycles
    return _assemble(
        z_layer_dual(g, p.J * p.dt / 2), z_layer_dual(g, p.J * p.dt), mixing_layer_dual(g, p, sector),
        p, cycles, merge, g.n_gauge, DUAL,
    )


def build_uj_via_ub(g: LatticeGraph, theta: float) -> Circuit:
    """U_J(theta) written as U_B, single-qubit RZ on links, U_B."""
    ub = build_ub(g)
    rz = Circuit.from_gates([Gate("RZ", (g.link_qubit(l),), 2 * theta) for l in range(g.n_gauge)], g.n_qubits)
    return ub + rz + ub


def compile_zzz(theta: float, style: str = "CPHASE_RZ", targets: Sequence[int] = (0, 1, 2), n_qubits: int | None = None) -> Circuit:
    """Decompose EXP_ZZZ(theta) into one- and two-qubit gates.

    ``CNOT_RZ`` uses four CNOTs around a single RZ. ``CPHASE_RZ`` replaces the
    inner CNOT-RZ-CNOT block by two RZ and a CPHASE, for three entangling gates.
    Both equal EXP_ZZZ(theta) up to a global phase.
    """
    a, b, c = targets
    n = n_qubits if n_qubits is not None else max(targets) + 1
    if style == "CNOT_RZ":
        gates = [
            Gate("CNOT", (a, b)), Gate("CNOT", (c, b)), Gate("RZ", (b,), 2 * theta),
            Gate("CNOT", (c, b)), Gate("CNOT", (a, b)),
        ]
    elif style == "CPHASE_RZ":
        gates = [
            Gate("CNOT", (a, b)), Gate("RZ", (b,), 2 * theta), Gate("RZ", (c,), 2 * theta),
            Gate("CPHASE", (b, c), -4 * theta), Gate("CNOT", (a, b)),
        ]
    else:
        raise ValueError(f"unknown style {style!r}")
    return Circuit.from_gates(gates, n)


def circuit_unitary(c: Circuit, max_qubits: int = 12) -> np.ndarray:
    """Dense unitary of a circuit (little-endian basis ordering)."""
    if c.n_qubits > max_qubits:
        raise ValueError(f"refusing a dense unitary on {c.n_qubits} > {max_qubits} qubits")
    from .statevector import apply_circuit_array

    dim = 2**c.n_qubits
    return apply_circuit_array(np.eye(dim, dtype=complex), c)


def pauli_operator(n: int, factors: Sequence[tuple[int, str]]) -> np.ndarray:
    """Dense Pauli string on ``n`` qubits (little-endian)."""
    mats = [_I2] * n
    for q, ax in factors:
        mats[n - 1 - q] = PAULI[ax]
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def gauss_operator(g: LatticeGraph, j: int) -> np.ndarray:
    """Dense G_j = sigma^X_j times X on each incident link."""
    return pauli_operator(g.n_qubits, [(j, "X")] + [(g.link_qubit(l), "X") for l in g.incident_links(j)])
