"""Matrix product states with MPO layers, SVD truncation and fidelity bookkeeping.

Site tensors have shape ``(left bond, physical, right bond)``. Site ``i``
holds qubit ``order[i]`` of the snake order. Commuting gate layers are packed
into groups whose gates touch disjoint MPS bonds; each group is one MPO of
bond dimension 2 because every gate is a sum of two product operators.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuits import Gate, TrotterParams
from .lattice import DUAL, LGT, LatticeGraph, SnakeOrder
from .statevector import bloch_qubit

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.diag([1.0, -1.0]).astype(complex)
_P0 = np.diag([1.0, 0.0]).astype(complex)
_P1 = np.diag([0.0, 1.0]).astype(complex)
_PAULI = {"X": _X, "Y": _Y, "Z": _Z}
CUTOFF = 1e-14


@dataclass
class TruncationRecord:
    cycle: int
    label: str
    bond: int
    eps: float


@dataclass
class MPSState:
    """Matrix product state.

    Attributes:
        tensors: Site tensors ``(Dl, 2, Dr)``.
        order: Qubit id held by each site.
        center: Orthogonality center, or ``None`` if unknown.
        chi_max: Bond dimension cap.
        log: Truncation records.
        cycle: Current cycle tag used when logging.
    """

    tensors: list
    order: tuple[int, ...]
    center: int | None = 0
    chi_max: int = 64
    log: list = field(default_factory=list)
    cycle: int = 0

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "MPSState":
        return MPSState([t.copy() for t in self.tensors], self.order, self.center, self.chi_max, list(self.log), self.cycle)

    def position(self) -> dict:
        return {q: i for i, q in enumerate(self.order)}


def mps_from_product(order: SnakeOrder | Sequence[int], bloch: Sequence[Sequence[float]], chi_max: int = 64) -> MPSState:
    """Bond-dimension-1 MPS of a product state.

    Args:
        order: Snake order (site to qubit id).
        bloch: Bloch vector per qubit id.
        chi_max: Bond dimension cap for later truncations.

    Returns:
        The MPS.
    """
    ordr = tuple(order.order if isinstance(order, SnakeOrder) else order)
    if len(bloch) != len(ordr):
        raise ValueError("need one Bloch vector per qubit")
    tensors = [bloch_qubit(bloch[q]).reshape(1, 2, 1).astype(complex) for q in ordr]
    return MPSState(tensors, ordr, 0, chi_max)


def to_dense(psi: MPSState) -> np.ndarray:
    """Contract to a little-endian amplitude vector (small systems)."""
    n = psi.n_sites
    if n > 26:
        raise ValueError("too many sites for a dense vector")
    v = psi.tensors[0]
    for t in psi.tensors[1:]:
        v = np.tensordot(v, t, axes=(v.ndim - 1, 0))
    v = v.reshape((2,) * n)
    # axis i is site i (qubit order[i]); little-endian wants axis n-1-q for qubit q
    axes = [0] * n
    for i, q in enumerate(psi.order):
        axes[n - 1 - q] = i
    return np.transpose(v, axes).reshape(-1)


def norm(psi: MPSState) -> float:
    E = np.ones((1, 1), dtype=complex)
    for t in psi.tensors:
        E = np.tensordot(t.conj(), np.tensordot(E, t, axes=(1, 0)), axes=([0, 1], [0, 1]))
    return float(np.sqrt(abs(E[0, 0])))


def _qr_right(psi: MPSState, i: int) -> None:
    """Move center from site ``i`` to ``i + 1``."""
    t = psi.tensors[i]
    dl, d, dr = t.shape
    q, r = np.linalg.qr(t.reshape(dl * d, dr))
    psi.tensors[i] = q.reshape(dl, d, q.shape[1])
    psi.tensors[i + 1] = np.tensordot(r, psi.tensors[i + 1], axes=(1, 0))


def _qr_left(psi: MPSState, i: int) -> None:
    """Move center from site ``i`` to ``i - 1``."""
    t = psi.tensors[i]
    dl, d, dr = t.shape
    q, r = np.linalg.qr(t.reshape(dl, d * dr).T)
    psi.tensors[i] = q.T.reshape(q.shape[1], d, dr)
    psi.tensors[i - 1] = np.tensordot(psi.tensors[i - 1], r.T, axes=(2, 0))


def canonicalize(psi: MPSState, center: int = 0) -> MPSState:
    """Bring the state to mixed canonical form around ``center`` (in place)."""
    n = psi.n_sites
    if psi.center is None:
        for i in range(n - 1):
            _qr_right(psi, i)
        psi.center = n - 1
    while psi.center < center:
        _qr_right(psi, psi.center)
        psi.center += 1
    while psi.center > center:
        _qr_left(psi, psi.center)
        psi.center -= 1
    return psi


def isometry_error(psi: MPSState) -> float:
    """Max deviation from left/right isometry around the center."""
    err = 0.0
    for i, t in enumerate(psi.tensors):
        dl, d, dr = t.shape
        if i < psi.center:
            m = t.reshape(dl * d, dr)
            err = max(err, np.abs(m.conj().T @ m - np.eye(dr)).max())
        elif i > psi.center:
            m = t.reshape(dl, d * dr)
            err = max(err, np.abs(m @ m.conj().T - np.eye(dl)).max())
    return float(err)


def apply_1q(psi: MPSState, qubit: int, u: np.ndarray) -> None:
    """Apply a one-qubit unitary in place; canonical form is preserved."""
    i = psi.position()[qubit]
    psi.tensors[i] = np.einsum("st,atb->asb", u, psi.tensors[i])


@dataclass
class MPOLayer:
    """MPO acting on sites ``start..stop-1``.

    Attributes:
        start: First site.
        tensors: ``(wl, out, in, wr)`` per site of the span.
        label: Which layer and group this encodes.
    """

    start: int
    tensors: list
    label: str = ""

    @property
    def stop(self) -> int:
        return self.start + len(self.tensors)

    def bond_dim(self) -> int:
        return max([t.shape[3] for t in self.tensors[:-1]] + [1])


def _two_term(gate: Gate) -> list[dict[int, np.ndarray]]:
    """Write a gate as a sum of two products of one-qubit operators."""
    k, a, t = gate.kind, gate.angle, gate.targets
    if k == "EXP_ZZZ":
        return [{q: math.cos(a) * _I if i == 0 else _I for i, q in enumerate(t)},
                {q: -1j * math.sin(a) * _Z if i == 0 else _Z for i, q in enumerate(t)}]
    if k == "EXP_XSTAR":
        return [{q: math.cos(a) * _I if i == 0 else _I for i, q in enumerate(t)},
                {q: -1j * math.sin(a) * _X if i == 0 else _X for i, q in enumerate(t)}]
    if k == "CNOT":
        return [{t[0]: _P0, t[1]: _I}, {t[0]: _P1, t[1]: _X}]
    if k == "CZ":
        return [{t[0]: _P0, t[1]: _I}, {t[0]: _P1, t[1]: _Z}]
    raise ValueError(f"{k} has no two-term MPO form here")


def group_gates(gates: Sequence[Gate], pos: dict) -> list[list[Gate]]:
    """First-fit packing of commuting gates into groups with disjoint bond spans."""
    spans = []
    for gate in gates:
        p = [pos[q] for q in gate.targets]
        spans.append((min(p), max(p), gate))
    spans.sort(key=lambda s: (s[0], s[1]))
    groups: list[list] = []
    for a, b, gate in spans:
        for grp in groups:
            if all(b <= a2 or a >= b2 for a2, b2, _ in grp):
                grp.append((a, b, gate))
                break
        else:
            groups.append([(a, b, gate)])
    return [[x[2] for x in grp] for grp in groups]


def mpo_from_group(gates: Sequence[Gate], pos: dict, label: str = "") -> MPOLayer:
    """Exact bond-dimension-2 MPO for gates whose bond spans do not overlap.

    Gates may share an endpoint site; their operators there are multiplied,
    which is exact because the gates in one layer commute.
    """
    items = []
    for gate in gates:
        p = [pos[q] for q in gate.targets]
        items.append((min(p), max(p), _two_term(gate), gate))
    lo = min(x[0] for x in items)
    hi = max(x[1] for x in items)
    # per site: list of (gate index, role) where role in {"first", "mid", "last", "only"}
    tensors = []
    for s in range(lo, hi + 1):
        left_gate = next((it for it in items if it[0] < s <= it[1]), None)
        right_gate = next((it for it in items if it[0] <= s < it[1]), None)
        wl = 2 if left_gate is not None else 1
        wr = 2 if right_gate is not None else 1
        W = np.zeros((wl, 2, 2, wr), dtype=complex)
        for a in range(wl):
            for b in range(wr):
                op = _I.copy()
                if left_gate is not None and left_gate is right_gate:
                    if a != b:
                        continue
                    terms = left_gate[2][a]
                    q = _site_qubit(left_gate[3], pos, s)
                    op = terms.get(q, _I) if q is not None else _I
                else:
                    if left_gate is not None:
                        q = _site_qubit(left_gate[3], pos, s)
                        op = op @ left_gate[2][a].get(q, _I)
                    if right_gate is not None:
                        q = _site_qubit(right_gate[3], pos, s)
                        op = op @ right_gate[2][b].get(q, _I)
                # gates that start and end on this site alone (one-qubit stars)
                for it in items:
                    if it[0] == it[1] == s:
                        op = op @ (it[2][0][it[3].targets[0]] + it[2][1][it[3].targets[0]])
                W[a, :, :, b] = op
        tensors.append(W)
    return MPOLayer(lo, tensors, label)


def _site_qubit(gate: Gate, pos: dict, s: int):
    for q in gate.targets:
        if pos[q] == s:
            return q
    return None


def mpo_dense(m: MPOLayer, n_sites: int) -> np.ndarray:
    """Dense operator of an MPO in site order (site 0 most significant)."""
    op = np.ones((1, 1, 1), dtype=complex)  # (out, in, bond)
    for s in range(n_sites):
        if m.start <= s < m.stop:
            W = m.tensors[s - m.start]
        else:
            W = _I.reshape(1, 2, 2, 1)
        op = np.einsum("xyb,bstc->xsytc", op, W)
        d = op.shape
        op = op.reshape(d[0] * d[1], d[2] * d[3], d[4])
    return op[:, :, 0]


def apply_mpo_truncate(psi: MPSState, m: MPOLayer, chi_max: int | None = None, cutoff: float = CUTOFF) -> MPSState:
    """Apply an MPO exactly, then restore canonical form and truncate.

    The span is swept left to right with QR (no truncation) and then right to
    left with SVDs that keep at most ``chi_max`` singular values. The discarded
    weight of the normalized spectrum at each bond is logged. The state is
    renormalized and its center ends at the first site of the span.

    Args:
        psi: State, modified in place and returned.
        m: MPO layer.
        chi_max: Override for ``psi.chi_max``.
        cutoff: Relative singular-value floor.

    Returns:
        The updated state.
    """
    chi = psi.chi_max if chi_max is None else chi_max
    a, b = m.start, m.stop - 1
    canonicalize(psi, a)
    for k, W in enumerate(m.tensors):
        i = a + k
        t = psi.tensors[i]
        nt = np.einsum("xstz,atb->axsbz", W, t)
        wl, dl, d, dr, wr = W.shape[0], t.shape[0], 2, t.shape[2], W.shape[3]
        psi.tensors[i] = nt.reshape(wl * dl, d, dr * wr)
    psi.center = None
    for i in range(a, b):
        _qr_right(psi, i)
    for i in range(b, a, -1):
        t = psi.tensors[i]
        dl, d, dr = t.shape
        u, s, vh = np.linalg.svd(t.reshape(dl, d * dr), full_matrices=False)
        total = float(np.sum(s**2))
        keep = min(chi, int(np.sum(s > cutoff * s[0])) if s[0] > 0 else 1)
        keep = max(keep, 1)
        eps = float(np.sum(s[keep:] ** 2) / total) if total > 0 else 0.0
        psi.log.append(TruncationRecord(psi.cycle, m.label, i - 1, eps))
        s = s[:keep]
        psi.tensors[i] = vh[:keep].reshape(keep, d, dr)
        psi.tensors[i - 1] = np.tensordot(psi.tensors[i - 1], u[:, :keep] * s, axes=(2, 0))
    t = psi.tensors[a]
    psi.tensors[a] = t / np.linalg.norm(t)
    psi.center = a
    return psi


def fidelity_proxy(psi: MPSState, per_qubit: int | None = None) -> float:
    """``prod (1 - eps)`` over logged truncations, optionally to the ``1/per_qubit`` power."""
    f = float(np.prod([1 - r.eps for r in psi.log])) if psi.log else 1.0
    return f ** (1 / per_qubit) if per_qubit else f


def expect_pauli(psi: MPSState, factors: Sequence[tuple[int, str]]) -> float:
    """``<P>`` for a Pauli string given as ``(qubit id, axis)`` pairs."""
    pos = psi.position()
    ops = {pos[q]: _PAULI[ax] for q, ax in factors}
    if psi.center is None:
        canonicalize(psi, 0)
    c = psi.center
    first = min(list(ops) + [c])
    last = max(list(ops) + [c])
    E = np.ones((1, 1), dtype=complex)
    for i in range(first, last + 1):
        t = psi.tensors[i]
        if i == first:
            E = np.eye(t.shape[0], dtype=complex)
        ot = np.einsum("st,atb->asb", ops[i], t) if i in ops else t
        E = np.tensordot(t.conj(), np.tensordot(E, ot, axes=(1, 0)), axes=([0, 1], [0, 1]))
    return float(np.trace(E).real)


# layer builders ------------------------------------------------------------------


def layer_gates(g: LatticeGraph, frame: str, layer: str, theta: float, sector: Sequence[int] | None = None) -> list[Gate]:
    """Gates of one commuting layer: ``ZZZ``, ``XSTAR`` or ``UB``."""
    if layer == "ZZZ":
        if frame != LGT:
            raise ValueError("ZZZ layer lives in the LGT frame")
        return [Gate("EXP_ZZZ", (u, g.link_qubit(l), v), theta) for l, (u, v) in enumerate(g.links)]
    if layer == "XSTAR":
        if frame != DUAL:
            raise ValueError("XSTAR layer lives in the dual frame")
        s = np.ones(g.n_matter, dtype=int) if sector is None else np.asarray(sector)
        return [Gate("EXP_XSTAR", g.incident_links(j), s[j] * theta) for j in range(g.n_matter)]
    if layer == "UB":
        return [Gate("CNOT", (j, g.link_qubit(l))) for l, (u, v) in enumerate(g.links) for j in (u, v)]
    raise ValueError(f"unknown entangling layer {layer!r}")


def build_layer_mpos(g: LatticeGraph, order: SnakeOrder, layer: str, theta: float = 0.0,
                     sector: Sequence[int] | None = None) -> list[MPOLayer]:
    """Group an entangling layer into bond-dimension-2 MPOs.

    Args:
        g: Lattice graph.
        order: Snake order of the frame.
        layer: ``ZZZ`` (LGT), ``XSTAR`` (dual) or ``UB`` (LGT).
        theta: Gate angle.
        sector: Charges for ``XSTAR``.

    Returns:
        MPOs whose product is the layer unitary.
    """
    pos = {q: i for i, q in enumerate(order.order)}
    gates = layer_gates(g, order.frame, layer, theta, sector)
    groups = group_gates(gates, pos)
    return [mpo_from_group(grp, pos, f"{layer}[{k}]") for k, grp in enumerate(groups)]


def single_qubit_layer(g: LatticeGraph, frame: str, kind: str, angles: dict) -> list[tuple[int, np.ndarray]]:
    """One-qubit rotations as ``(qubit id, matrix)`` pairs."""
    out = []
    for q, a in angles.items():
        out.append((q, Gate(kind, (q,), a).matrix()))
    return out


@dataclass
class MPSRun:
    """Per-cycle output of an MPS evolution."""

    states: list
    proxies: np.ndarray
    max_entropy: np.ndarray
    log: list


def bond_entropies(psi: MPSState) -> np.ndarray:
    """Von Neumann entropy (bits) at every bond."""
    work = psi.copy()
    canonicalize(work, 0)
    out = []
    for i in range(work.n_sites - 1):
        t = work.tensors[i]
        dl, d, dr = t.shape
        u, s, vh = np.linalg.svd(t.reshape(dl * d, dr), full_matrices=False)
        p = s**2 / np.sum(s**2)
        p = p[p > 1e-16]
        out.append(float(-np.sum(p * np.log2(p))))
        work.tensors[i] = u.reshape(dl, d, -1)
        work.tensors[i + 1] = np.tensordot(np.diag(s) @ vh, work.tensors[i + 1], axes=(1, 0))
    return np.array(out)


class MPSEvolver:
    """Trotter evolution of an MPS in either frame.

    Second-order cycles fuse the closing half Z layer with the next opening one;
    measurements apply the pending half layer to a copy.
    """

    def __init__(self, g: LatticeGraph, p: TrotterParams, order: SnakeOrder, sector: Sequence[int] | None = None):
        self.g, self.p, self.order = g, p, order
        self.frame = order.frame
        self.sector = np.ones(g.n_matter, dtype=int) if sector is None else np.asarray(sector)
        self.pos = {q: i for i, q in enumerate(order.order)}

    def _z(self, psi: MPSState, scale: float, label: str) -> None:
        th = self.p.J * self.p.dt * scale
        if self.frame == LGT:
            for m in build_layer_mpos(self.g, self.order, "ZZZ", th):
                m.label = f"{label}:{m.label}"
                apply_mpo_truncate(psi, m)
        else:
            u = Gate("RZ", (0,), 2 * th).matrix()
            for l in range(self.g.n_gauge):
                apply_1q(psi, l, u)

    def _mix(self, psi: MPSState, label: str) -> None:
        p, g = self.p, self.g
        ug = Gate("RX", (0,), 2 * p.h * p.dt).matrix()
        if self.frame == LGT:
            um = Gate("RX", (0,), 2 * p.mu * p.dt).matrix()
            for j in range(g.n_matter):
                apply_1q(psi, j, um)
            for l in range(g.n_gauge):
                apply_1q(psi, g.link_qubit(l), ug)
        else:
            for l in range(g.n_gauge):
                apply_1q(psi, l, ug)
            for m in build_layer_mpos(g, self.order, "XSTAR", p.mu * p.dt, self.sector):
                m.label = f"{label}:{m.label}"
                apply_mpo_truncate(psi, m)

    def prepare_ub(self, psi: MPSState) -> MPSState:
        """Apply U_B (LGT frame) to a product state."""
        for m in build_layer_mpos(self.g, self.order, "UB"):
            m.label = f"prep:{m.label}"
            apply_mpo_truncate(psi, m)
        return psi

    def run(self, psi: MPSState, cycles: int, merge: bool = True) -> MPSRun:
        """Evolve and return the closed state at cycles ``0..cycles``."""
        states = [psi.copy()]
        proxies = [fidelity_proxy(psi)]
        ent = [float(bond_entropies(psi).max()) if psi.n_sites > 1 else 0.0]
        work = psi
        first = self.p.order == 2 and merge
        if first and cycles > 0:
            work.cycle = 1
            self._z(work, 0.5, "Zhalf")
        for c in range(1, cycles + 1):
            work.cycle = c
            if self.p.order == 1:
                self._z(work, 1.0, "Z")
                self._mix(work, "mix")
                closed = work.copy()
            elif merge:
                self._mix(work, "mix")
                closed = work.copy()
                self._z(closed, 0.5, "Zhalf")
                if c < cycles:
                    work.cycle = c + 1
                    self._z(work, 1.0, "Z")
            else:
                self._z(work, 0.5, "Zhalf")
                self._mix(work, "mix")
                self._z(work, 0.5, "Zhalf")
                closed = work.copy()
            states.append(closed)
            proxies.append(fidelity_proxy(closed))
            ent.append(float(bond_entropies(closed).max()))
        return MPSRun(states, np.array(proxies), np.array(ent), list(states[-1].log))


@dataclass
class ChiFit:
    """``1/chi = A (1 - f)^B`` with the points used."""

    A: float
    B: float
    target: float
    points: list
    used: list
    chi_star: float
    status: str = "fit"


def fit_required_chi(points: Sequence[tuple[float, float]], target: float = 0.95, fit_min_chi: float = 0.0) -> ChiFit:
    """Estimate the bond dimension needed for a per-qubit fidelity target.

    Points with ``f < 1`` and ``chi >= fit_min_chi`` are fit in log-log space.
    When the target is bracketed by measured points below ``fit_min_chi``, the
    estimate comes from linear interpolation of ``(chi, f)`` pairs instead.

    Args:
        points: ``(chi, f)`` pairs.
        target: Per-qubit fidelity target.
        fit_min_chi: Lower edge of the fit window.

    Returns:
        Fit summary; ``status`` is ``chi sufficient`` when no point falls short of 1.
    """
    pts = sorted((float(c), float(f)) for c, f in points)
    below = [(c, f) for c, f in pts if f < 1 - 1e-15]
    if not below:
        chi_ok = min(c for c, _ in pts) if pts else float("nan")
        return ChiFit(float("nan"), float("nan"), target, pts, [], chi_ok, "chi sufficient")
    # interpolation branch below the fit window
    small = [(c, f) for c, f in pts if c < fit_min_chi]
    for (c0, f0), (c1, f1) in zip(small, small[1:]):
        if f0 < target <= f1:
            chi_star = c0 + (target - f0) * (c1 - c0) / (f1 - f0)
            return ChiFit(float("nan"), float("nan"), target, pts, [(c0, f0), (c1, f1)], chi_star, "interpolated")
    if small and small[0][1] >= target:
        return ChiFit(float("nan"), float("nan"), target, pts, [small[0]], small[0][0], "interpolated")
    used = [(c, f) for c, f in below if c >= fit_min_chi]
    if len(used) < 2:
        raise ValueError("need at least two points with f < 1 inside the fit window")
    x = np.log([1 - f for _, f in used])
    y = np.log([1 / c for c, _ in used])
    B, logA = np.polyfit(x, y, 1)
    A = math.exp(logA)
    chi_star = 1 / (A * (1 - target) ** B)
    return ChiFit(A, float(B), target, pts, used, chi_star, "fit")


def truncation_csv(log: Sequence[TruncationRecord]) -> str:
    """CSV with columns ``cycle, mpo, bond, eps``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cycle", "mpo", "bond", "eps"])
    for r in log:
        w.writerow([r.cycle, r.label, r.bond, repr(r.eps)])
    return buf.getvalue()


def scaling_json(records: Sequence[dict]) -> str:
    """Scaling-study records ``{grid, chi, cycle, fidelity, max_entropy}``."""
    return json.dumps(list(records), indent=1)
