"""Dense statevector engine.

Bit order is little-endian: qubit ``q`` is bit ``q`` of the amplitude index,
which is tensor axis ``n - 1 - q`` after reshaping to ``(2,) * n``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuits import Circuit, Gate

DEFAULT_MAX_QUBITS = 26
_MAGIC = b"DFSV"


class CapacityError(ValueError):
    """Raised when a request exceeds the engine's size limits."""


@lru_cache(maxsize=8)
def basis_index(n: int) -> np.ndarray:
    """Read-only ``arange(2**n)``."""
    idx = np.arange(2**n, dtype=np.int64)
    idx.flags.writeable = False
    return idx


def bit_column(n: int, q: int) -> np.ndarray:
    """Bit ``q`` of every basis index."""
    return (basis_index(n) >> q) & 1


def parity(n: int, qubits: Sequence[int]) -> np.ndarray:
    """Parity of the selected bits of every basis index."""
    mask = 0
    for q in qubits:
        mask |= 1 << q
    x = basis_index(n) & mask
    # popcount parity by folding
    for s in (32, 16, 8, 4, 2, 1):
        x = x ^ (x >> s)
    return x & 1


def _bcast(v: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return v.reshape(v.shape + (1,) * (psi.ndim - 1))


def apply_gate_array(psi: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    """Apply a gate to an amplitude array of shape ``(2**n, ...)``.

    Trailing axes are treated as a batch, so identity columns give the unitary.
    """
    k, t, a = gate.kind, gate.targets, gate.angle
    if max(t) >= n:
        raise ValueError(f"gate {k} targets qubit {max(t)} on a {n}-qubit register")
    if k == "EXP_ZZZ":
        phase = np.where(parity(n, t), np.exp(1j * a), np.exp(-1j * a))
        return psi * _bcast(phase, psi)
    if k == "RZ":
        phase = np.where(bit_column(n, t[0]), np.exp(0.5j * a), np.exp(-0.5j * a))
        return psi * _bcast(phase, psi)
    if k == "Z":
        return psi * _bcast(1 - 2 * bit_column(n, t[0]), psi)
    if k in ("CZ", "CPHASE"):
        both = bit_column(n, t[0]) & bit_column(n, t[1])
        ph = -1.0 if k == "CZ" else np.exp(1j * a)
        return psi * _bcast(np.where(both, ph, 1.0), psi)
    if k in ("EXP_XSTAR", "X"):
        mask = 0
        for q in t:
            mask |= 1 << q
        flipped = psi[basis_index(n) ^ mask]
        if k == "X":
            return flipped
        return math.cos(a) * psi - 1j * math.sin(a) * flipped
    if k == "CNOT":
        c, tg = t
        idx = basis_index(n)
        src = np.where((idx >> c) & 1, idx ^ (1 << tg), idx)
        return psi[src]
    m = gate.matrix()
    nt = len(t)
    trailing = psi.shape[1:]
    tens = psi.reshape((2,) * n + trailing)
    axes = [n - 1 - q for q in t]
    out = np.tensordot(m.reshape((2,) * (2 * nt)), tens, axes=(list(range(nt, 2 * nt)), axes))
    out = np.moveaxis(out, list(range(nt)), axes)
    return out.reshape(psi.shape)


def apply_circuit_array(psi: np.ndarray, c: Circuit) -> np.ndarray:
    n = c.n_qubits
    if psi.shape[0] != 2**n:
        raise ValueError(f"array has {psi.shape[0]} rows, circuit needs {2**n}")
    for m in c.moments:
        for gate in m:
            psi = apply_gate_array(psi, gate, n)
    return psi


@dataclass
class StateVector:
    """Pure state of ``n_qubits`` qubits.

    Attributes:
        amplitudes: Complex amplitudes, little-endian.
        n_qubits: Register width.
        labels: Optional physical label per qubit id.
    """

    amplitudes: np.ndarray
    n_qubits: int
    labels: tuple[str, ...] | None = None
    bit_order: str = field(default="little-endian")

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError("amplitude length must be 2**n_qubits")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n_qubits, self.labels)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def bloch_qubit(v: Sequence[float], tol: float = 1e-12) -> np.ndarray:
    """Single-qubit state with Bloch vector ``v``."""
    vx, vy, vz = (float(x) for x in v)
    r = math.sqrt(vx * vx + vy * vy + vz * vz)
    if abs(r - 1) > tol:
        raise ValueError(f"Bloch vector {tuple(v)} has norm {r}, expected 1")
    theta = math.acos(max(-1.0, min(1.0, vz / r)))
    phi = math.atan2(vy, vx)
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


def product_amplitudes(qubits: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of single-qubit states, qubit 0 least significant."""
    out = np.ones(1, dtype=complex)
    for q in reversed(range(len(qubits))):
        out = np.kron(out, np.asarray(qubits[q], dtype=complex))
    return out


def init_product(n: int, bloch: Sequence[Sequence[float]], max_qubits: int = DEFAULT_MAX_QUBITS) -> StateVector:
    """Product state with one Bloch vector per qubit.

    Args:
        n: Number of qubits.
        bloch: Unit vectors ``(vx, vy, vz)`` indexed by qubit id.
        max_qubits: Capacity cap.

    Returns:
        The product state.
    """
    if n > max_qubits:
        raise CapacityError(f"{n} qubits exceeds the statevector cap of {max_qubits}")
    if len(bloch) != n:
        raise ValueError(f"need {n} Bloch vectors, got {len(bloch)}")
    return StateVector(product_amplitudes([bloch_qubit(v) for v in bloch]), n)


def apply_circuit(psi: StateVector, c: Circuit) -> StateVector:
    """Run a circuit on a state, returning a new state."""
    if c.n_qubits != psi.n_qubits:
        raise ValueError(f"circuit has {c.n_qubits} qubits, state has {psi.n_qubits}")
    return StateVector(apply_circuit_array(psi.amplitudes, c), psi.n_qubits, psi.labels)


@dataclass(frozen=True)
class PauliTerm:
    """``coefficient`` times a Pauli string.

    Attributes:
        coefficient: Real prefactor.
        factors: ``(qubit id, axis)`` pairs, axis in ``XYZ``.
    """

    coefficient: float
    factors: tuple[tuple[int, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple((int(q), str(a)) for q, a in self.factors))
        qs = [q for q, _ in self.factors]
        if len(set(qs)) != len(qs):
            raise ValueError(f"repeated qubit in Pauli term {self.factors}")
        for _, a in self.factors:
            if a not in ("X", "Y", "Z"):
                raise ValueError(f"axis must be X, Y or Z, got {a!r}")

    @classmethod
    def of(cls, *factors: tuple[int, str], coefficient: float = 1.0) -> "PauliTerm":
        return cls(coefficient, tuple(factors))


def pauli_apply(amps: np.ndarray, n: int, factors: Sequence[tuple[int, str]]) -> np.ndarray:
    """Apply a Pauli string to an amplitude array."""
    mx = mz = 0
    ny = 0
    for q, a in factors:
        if a in ("X", "Y"):
            mx |= 1 << q
        if a in ("Z", "Y"):
            mz |= 1 << q
        ny += a == "Y"
    idx = basis_index(n)
    out = amps
    if mz:
        sign = 1 - 2 * parity(n, [q for q in range(n) if mz >> q & 1])
        out = out * _bcast(sign, out)
    if mx:
        out = out[idx ^ mx]
    if ny:
        out = out * (1j**ny)
    return out


def expect(psi: StateVector, t: PauliTerm) -> float:
    """Expectation value of a Pauli term."""
    if not t.factors:
        return t.coefficient * psi.norm() ** 2
    if max(q for q, _ in t.factors) >= psi.n_qubits:
        raise ValueError("Pauli term references a qubit outside the register")
    val = np.vdot(psi.amplitudes, pauli_apply(psi.amplitudes, psi.n_qubits, t.factors))
    return float(t.coefficient * val.real)


def _bipartition(amps: np.ndarray, n: int, subset: Sequence[int]) -> np.ndarray:
    subset = list(subset)
    if len(set(subset)) != len(subset) or any(not 0 <= q < n for q in subset):
        raise ValueError(f"invalid subset {subset}")
    rest = [q for q in range(n) if q not in subset]
    axes = [n - 1 - q for q in reversed(subset)] + [n - 1 - q for q in reversed(rest)]
    return amps.reshape((2,) * n).transpose(axes).reshape(2 ** len(subset), -1)


def reduced_density_matrix(psi: StateVector, subset: Sequence[int]) -> np.ndarray:
    """Reduced state on ``subset``; ``subset[0]`` is the least significant bit."""
    m = _bipartition(psi.amplitudes, psi.n_qubits, subset)
    return m @ m.conj().T


def subsystem_purity(psi: StateVector, subset: Sequence[int]) -> float:
    """Tr(rho_A^2) of the subsystem ``subset``."""
    if len(subset) == 0 or len(subset) == psi.n_qubits:
        return float(psi.norm() ** 4)
    m = _bipartition(psi.amplitudes, psi.n_qubits, subset)
    gram = m @ m.conj().T if m.shape[0] <= m.shape[1] else m.conj().T @ m
    return float(np.sum(np.abs(gram) ** 2))


@dataclass
class ShotBatch:
    """Sampled bitstrings.

    Attributes:
        bits: ``(shots, n)`` array of 0/1, column ``q`` is qubit ``q``.
        basis: Basis-change gates applied before measurement.
        seed: Seed used for sampling.
        noise: Free-form noise tag.
        traj_ids: Trajectory index per shot for noisy runs.
    """

    bits: np.ndarray
    basis: tuple[Gate, ...] = ()
    seed: int | None = None
    noise: str = "none"
    traj_ids: np.ndarray | None = None

    @property
    def shots(self) -> int:
        return int(self.bits.shape[0])

    @property
    def n_qubits(self) -> int:
        return int(self.bits.shape[1])

    def as_ints(self) -> np.ndarray:
        return self.bits.astype(np.int64) @ (1 << np.arange(self.n_qubits, dtype=np.int64))

    def subset(self, mask: np.ndarray) -> "ShotBatch":
        tid = None if self.traj_ids is None else self.traj_ids[mask]
        return ShotBatch(self.bits[mask], self.basis, self.seed, self.noise, tid)


def ints_to_bits(values: np.ndarray, n: int) -> np.ndarray:
    return ((np.asarray(values, dtype=np.int64)[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def sample_from_probabilities(p: np.ndarray, n: int, shots: int, rng: np.random.Generator) -> np.ndarray:
    p = np.clip(p, 0, None)
    outcomes = rng.choice(p.size, size=shots, p=p / p.sum())
    return ints_to_bits(outcomes, n)


def sample_bits(psi: StateVector, basis: Sequence[Gate], shots: int, seed: int | np.random.Generator | None) -> ShotBatch:
    """Measure all qubits after single-qubit basis rotations.

    Args:
        psi: State to sample.
        basis: Gates applied before a computational-basis measurement.
        shots: Number of samples.
        seed: Seed or generator.

    Returns:
        Sampled shots.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    amps = psi.amplitudes
    for gate in basis:
        amps = apply_gate_array(amps, gate, psi.n_qubits)
    rng = np.random.default_rng(seed)
    bits = sample_from_probabilities(np.abs(amps) ** 2, psi.n_qubits, shots, rng)
    return ShotBatch(bits, tuple(basis), seed if isinstance(seed, int) else None)


def dump_state(psi: StateVector, path: str | Path) -> None:
    """Binary dump: magic, n_qubits, bit-order tag, interleaved re/im doubles."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", psi.n_qubits))
        f.write(b"LE")
        f.write(np.ascontiguousarray(psi.amplitudes, dtype="<c16").tobytes())


def load_state(path: str | Path) -> StateVector:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path} is not a statevector dump")
    (n,) = struct.unpack("<I", data[4:8])
    if data[8:10] != b"LE":
        raise ValueError("unsupported bit order tag")
    amps = np.frombuffer(data[10:], dtype="<c16").copy()
    return StateVector(amps, n)
