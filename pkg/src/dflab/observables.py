"""Initial states and measured quantities: polarizations, interaction terms and energy per link."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuits import build_ub
from .lattice import DUAL, LGT, LatticeGraph
from .statevector import (
    StateVector,
    apply_circuit,
    basis_index,
    expect,
    init_product,
    PauliTerm,
)

MATTER_PATTERNS = ("AllPlusX", "AllPlusZ", "StaggeredX", "Explicit")
GAUGE_PATTERNS = ("Aligned", "Theta", "PlusX", "MinusX")


def v_hat(J: float, h: float) -> np.ndarray:
    """Unit vector along ``h x + J z``."""
    r = math.hypot(J, h)
    if r == 0:
        raise ValueError("J and h cannot both vanish")
    return np.array([h / r, 0.0, J / r])


def stagger_sign(j: int) -> int:
    """sqrt(2) sin(pi (2j + 1) / 4) for 1-based link ``j``: +, -, -, +, ..."""
    return 1 if (j % 4) in (0, 1) else -1


@dataclass(frozen=True)
class InitialStateSpec:
    """Product-state recipe.

    Attributes:
        matter: One of ``AllPlusX`` (single sector), ``AllPlusZ`` (superposition),
            ``StaggeredX`` (matter ``(-1)^j x`` for 1-based ``j``) or ``Explicit``.
        gauge: ``Aligned`` with ``v_hat`` and ``-v_hat`` on ``flips``, ``Theta``,
            or ``PlusX``/``MinusX`` (every link in an X eigenstate, LGT frame only).
        J: Coupling used for ``v_hat``.
        h: Field used for ``v_hat``.
        flips: Link ids prepared along ``-v_hat``.
        theta: Tilt of the ``Theta`` gauge pattern.
        matter_bloch: Explicit matter Bloch vectors.
        frame: Target frame.
    """

    matter: str = "AllPlusX"
    gauge: str = "Aligned"
    J: float = 1.0
    h: float = 1.3
    flips: tuple[int, ...] = ()
    theta: float = 0.0
    matter_bloch: tuple[tuple[float, float, float], ...] | None = None
    frame: str = LGT

    def __post_init__(self):
        if self.matter not in MATTER_PATTERNS:
            raise ValueError(f"unknown matter pattern {self.matter!r}")
        if self.gauge not in GAUGE_PATTERNS:
            raise ValueError(f"unknown gauge pattern {self.gauge!r}")
        object.__setattr__(self, "flips", tuple(int(f) for f in self.flips))

    @classmethod
    def from_dict(cls, d: dict) -> "InitialStateSpec":
        d = dict(d)
        if "flips" in d:
            d["flips"] = tuple(d["flips"])
        if d.get("matter_bloch") is not None:
            d["matter_bloch"] = tuple(tuple(v) for v in d["matter_bloch"])
        return cls(**d)


def matter_bloch(spec: InitialStateSpec, g: LatticeGraph) -> list[tuple[float, float, float]]:
    n = g.n_matter
    if spec.matter == "AllPlusX":
        return [(1.0, 0.0, 0.0)] * n
    if spec.matter == "AllPlusZ":
        return [(0.0, 0.0, 1.0)] * n
    if spec.matter == "StaggeredX":
        return [(float((-1) ** (j + 1)), 0.0, 0.0) for j in range(n)]
    if spec.matter_bloch is None or len(spec.matter_bloch) != n:
        raise ValueError("Explicit matter pattern needs one Bloch vector per vertex")
    return [tuple(v) for v in spec.matter_bloch]


def gauge_bloch(spec: InitialStateSpec, g: LatticeGraph) -> list[tuple[float, float, float]]:
    """Bloch vector of every gauge qubit before any entangling layer."""
    for f in spec.flips:
        if not 0 <= f < g.n_gauge:
            raise ValueError(f"flip link {f} out of range 0..{g.n_gauge - 1}")
    if spec.gauge == "Aligned":
        v = v_hat(spec.J, spec.h)
        return [tuple(-v if l in spec.flips else v) for l in range(g.n_gauge)]
    if spec.gauge in ("PlusX", "MinusX"):
        sx = 1.0 if spec.gauge == "PlusX" else -1.0
        return [(-sx if l in spec.flips else sx, 0.0, 0.0) for l in range(g.n_gauge)]
    c, s = math.cos(spec.theta), math.sin(spec.theta)
    return [(stagger_sign(l + 1) * c, 0.0, s) for l in range(g.n_gauge)]


@dataclass(frozen=True)
class DualPreparation:
    """Dual-frame initial data: gauge product state and sector weighting."""

    gauge_bloch: list
    weighting: object


def prepare_state(spec: InitialStateSpec, g: LatticeGraph) -> StateVector | DualPreparation:
    """Build the initial state.

    LGT frame: the matter and gauge product state, followed by U_B for the
    ``Aligned`` gauge pattern. ``Theta``, ``PlusX`` and ``MinusX`` states are
    product states in the LGT frame as they stand. Dual frame: the gauge Bloch list with the sector
    weighting implied by the matter pattern.

    Args:
        spec: Initial-state recipe.
        g: Lattice graph.

    Returns:
        A ``StateVector`` (LGT) or a ``DualPreparation`` (Dual).
    """
    from .dualsim import SectorWeighting

    gb = gauge_bloch(spec, g)
    if spec.frame == DUAL:
        if spec.gauge in ("PlusX", "MinusX"):
            raise ValueError(f"gauge pattern {spec.gauge} is only defined in the LGT frame")
        if spec.gauge == "Theta":
            if spec.matter != "StaggeredX":
                raise ValueError("Theta gauge pattern pairs with StaggeredX matter")
            return DualPreparation(gb, SectorWeighting.theta_product(spec.theta))
        if spec.matter == "AllPlusX":
            return DualPreparation(gb, SectorWeighting.single(np.ones(g.n_matter, dtype=int)))
        if spec.matter == "AllPlusZ":
            return DualPreparation(gb, SectorWeighting.uniform())
        raise ValueError(f"matter pattern {spec.matter} has no dual-frame weighting")
    psi = init_product(g.n_qubits, matter_bloch(spec, g) + gb)
    if spec.gauge == "Aligned":
        psi = apply_circuit(psi, build_ub(g))
    return psi


def fwht(amps: np.ndarray, n: int) -> np.ndarray:
    """Hadamard on every qubit (normalized Walsh-Hadamard transform)."""
    a = np.asarray(amps, dtype=complex)
    trailing = a.shape[1:]
    for q in range(n):
        a = a.reshape((2 ** (n - 1 - q), 2, 2**q) + trailing)
        a = np.stack([a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]], axis=1)
    return a.reshape((2**n,) + trailing) / math.sqrt(2**n)


def sign_columns(n: int) -> np.ndarray:
    """``(2**n, n)`` array of ``1 - 2 b_q``."""
    return 1.0 - 2.0 * ((basis_index(n)[:, None] >> np.arange(n)) & 1)


def energy_per_link(
    g: LatticeGraph,
    x: np.ndarray,
    zint: np.ndarray,
    matter: np.ndarray,
    J: float,
    h: float,
    mu: float,
    Q: float = 0.0,
    gauss: np.ndarray | None = None,
) -> np.ndarray:
    """Energy density per link with ``1/deg`` weights on vertex terms.

    Args:
        g: Lattice graph.
        x: Gauge polarization, shape ``(..., N_g)``.
        zint: Matter-gauge-matter interaction, shape ``(..., N_g)``.
        matter: Matter polarization, shape ``(..., N_m)``.
        J: Interaction coupling.
        h: Gauge field.
        mu: Matter field.
        Q: Gauss-term coefficient.
        gauss: Gauss-law expectations, needed when ``Q != 0``.

    Returns:
        Energy per link, shape ``(..., N_g)``.
    """
    mpart = mu_part(g, matter, mu)
    out = J * np.asarray(zint) + h * np.asarray(x) + mpart
    if Q:
        if gauss is None:
            raise ValueError("Q term needs Gauss-law expectations")
        out = out + mu_part(g, gauss, Q)
    return out


def mu_part(g: LatticeGraph, matter: np.ndarray, mu: float) -> np.ndarray:
    """``mu (m_u / deg u + m_v / deg v)`` per link."""
    matter = np.asarray(matter, dtype=float)
    deg = g.degree
    u = np.array([a for a, _ in g.links])
    v = np.array([b for _, b in g.links])
    return mu * (matter[..., u] / deg[u] + matter[..., v] / deg[v])


@dataclass
class ObservableTable:
    """Per-time observables in the LGT language.

    Attributes:
        times: Cycle index or evolution time, shape ``(T,)``.
        x: Gauge polarization ``<X_l>``, ``(T, N_g)``.
        zint: Interaction ``<sZ Z sZ>``, ``(T, N_g)``.
        matter: Matter polarization ``<sX_j>``, ``(T, N_m)``.
        gauss: Gauss-law expectation ``<G_j>``, ``(T, N_m)``.
        energy: Energy per link, ``(T, N_g)``.
        stderr: Standard errors keyed like the arrays, absent for exact data.
        n_samples: Sector or trajectory count behind an average.
        time_label: ``cycle`` or ``time``.
    """

    times: np.ndarray
    x: np.ndarray
    zint: np.ndarray
    matter: np.ndarray
    gauss: np.ndarray
    energy: np.ndarray
    stderr: dict = field(default_factory=dict)
    n_samples: int = 1
    time_label: str = "cycle"

    ARRAYS = ("x", "zint", "matter", "gauss", "energy")

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in self.ARRAYS}

    def energy_profile_rows(self, g: LatticeGraph, mu: float) -> list[tuple]:
        """Rows ``(cycle, link, <X>, <sZ Z sZ>, mu part, energy)``."""
        mp = mu_part(g, self.matter, mu)
        rows = []
        for t in range(len(self.times)):
            for l in range(g.n_gauge):
                rows.append((self.times[t], l, self.x[t, l], self.zint[t, l], mp[t, l], self.energy[t, l]))
        return rows

    def long_rows(self) -> list[tuple]:
        """Rows ``(time, entity id, observable, value, stderr)``."""
        rows = []
        for name in self.ARRAYS:
            arr = getattr(self, name)
            err = self.stderr.get(name)
            for t in range(arr.shape[0]):
                for e in range(arr.shape[1]):
                    rows.append((self.times[t], e, name, float(arr[t, e]), float(err[t, e]) if err is not None else 0.0))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.time_label, "entity", "observable", "value", "stderr"])
        for r in self.long_rows():
            w.writerow([_fmt(r[0]), r[1], r[2], _fmt(r[3]), _fmt(r[4])])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def stack_tables(rows: Sequence[dict], times: Sequence, g: LatticeGraph, J: float, h: float, mu: float, Q: float = 0.0, time_label: str = "cycle") -> ObservableTable:
    """Assemble per-time measurement dicts into a table."""
    arr = {k: np.array([r[k] for r in rows], dtype=float) for k in ("x", "zint", "matter", "gauss")}
    energy = energy_per_link(g, arr["x"], arr["zint"], arr["matter"], J, h, mu, Q, arr["gauss"])
    return ObservableTable(np.asarray(times), arr["x"], arr["zint"], arr["matter"], arr["gauss"], energy, time_label=time_label)


def measure_dual_basis(psi: StateVector, g: LatticeGraph) -> dict:
    """LGT-frame observables read out after the U_B basis change.

    After U_B, ``G_j`` is matter ``X``, the interaction is link ``Z``, the gauge
    polarization is link ``X`` and matter polarization is ``sX_j`` times the
    ``X`` star of ``j``.
    """
    n = g.n_qubits
    dual = apply_circuit(psi, build_ub(g))
    signs = sign_columns(n)
    pz = np.abs(dual.amplitudes) ** 2
    px = np.abs(fwht(dual.amplitudes, n)) ** 2
    link_q = [g.link_qubit(l) for l in range(g.n_gauge)]
    sx = px @ signs
    zint = (pz @ signs)[link_q]
    matter = np.empty(g.n_matter)
    for j in range(g.n_matter):
        col = signs[:, j].copy()
        for l in g.incident_links(j):
            col *= signs[:, g.link_qubit(l)]
        matter[j] = px @ col
    return {"x": sx[link_q], "zint": zint, "matter": matter, "gauss": sx[: g.n_matter]}


def lgt_terms(g: LatticeGraph) -> dict:
    """Pauli terms of every LGT-frame observable, for direct evaluation."""
    lq = g.link_qubit
    return {
        "x": [PauliTerm.of((lq(l), "X")) for l in range(g.n_gauge)],
        "zint": [PauliTerm.of((u, "Z"), (lq(l), "Z"), (v, "Z")) for l, (u, v) in enumerate(g.links)],
        "matter": [PauliTerm.of((j, "X")) for j in range(g.n_matter)],
        "gauss": [
            PauliTerm.of((j, "X"), *[(lq(l), "X") for l in g.incident_links(j)]) for j in range(g.n_matter)
        ],
    }


def measure_direct(psi: StateVector, g: LatticeGraph) -> dict:
    """LGT-frame observables evaluated directly with Pauli expectations."""
    return {k: np.array([expect(psi, t) for t in terms]) for k, terms in lgt_terms(g).items()}


def lgt_hamiltonian_expectation(psi: StateVector, g: LatticeGraph, J: float, h: float, mu: float) -> float:
    """Total <H_LGT> evaluated directly."""
    m = measure_direct(psi, g)
    return float(J * m["zint"].sum() + h * m["x"].sum() + mu * m["matter"].sum())


def center_contrast(energy: np.ndarray, center: int) -> np.ndarray:
    """Mean energy of all other links minus the energy of ``center``.

    Args:
        energy: ``(T, N_g)`` energy per link.
        center: Perturbed link.

    Returns:
        Contrast per time, positive while the perturbation stands out.
    """
    e = np.asarray(energy, dtype=float)
    return np.delete(e, center, axis=-1).mean(axis=-1) - e[..., center]
