"""Fixed-charge-sector (dual frame) simulation and disorder averaging.

In sector ``g`` the gauge qubits evolve under
``H = sum_l (J Z_l + h X_l) + mu sum_j g_j prod_{l in star(j)} X_l``.
LGT observables map as ``<X_l> -> <X_l>``, interaction ``-> <Z_l>`` and
matter polarization ``-> g_j <prod_{star(j)} X>``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .circuits import TrotterParams, build_dual_trotter_circuit
from .lattice import LatticeGraph
from .observables import ObservableTable, fwht, sign_columns, stagger_sign
from .statevector import apply_circuit_array, basis_index, bloch_qubit, product_amplitudes

MAX_ENUMERATE = 12


@dataclass(frozen=True)
class SectorWeighting:
    """How sectors enter a disorder average.

    Attributes:
        kind: ``Uniform``, ``ThetaProduct``, ``Explicit`` or ``SingleSector``.
        theta: Tilt angle for ``ThetaProduct``.
        sector: The sector for ``SingleSector``.
        entries: ``(sector, weight)`` pairs for ``Explicit``.
    """

    kind: str
    theta: float | None = None
    sector: tuple[int, ...] | None = None
    entries: tuple = ()

    @classmethod
    def uniform(cls) -> "SectorWeighting":
        return cls("Uniform")

    @classmethod
    def single(cls, g: Sequence[int]) -> "SectorWeighting":
        return cls("SingleSector", sector=tuple(int(x) for x in g))

    @classmethod
    def theta_product(cls, theta: float) -> "SectorWeighting":
        return cls("ThetaProduct", theta=float(theta))

    @classmethod
    def explicit(cls, entries: Iterable[tuple[Sequence[int], float]]) -> "SectorWeighting":
        ent = tuple((tuple(int(x) for x in s), float(w)) for s, w in entries)
        if any(w < 0 for _, w in ent):
            raise ValueError("sector weights must be non-negative")
        return cls("Explicit", entries=ent)


def check_sector(sector: Sequence[int], n_matter: int) -> np.ndarray:
    s = np.asarray(sector, dtype=int)
    if s.shape != (n_matter,):
        raise ValueError(f"sector length {s.size} does not match N_m={n_matter}")
    if not np.all(np.abs(s) == 1):
        raise ValueError("sector entries must be +1 or -1")
    return s


def all_sectors(n: int) -> np.ndarray:
    """Every sector of ``n`` vertices, row ``k`` encodes integer ``k``."""
    return 1 - 2 * ((np.arange(2**n)[:, None] >> np.arange(n)) & 1)


def sample_sectors(n: int, count: int, seed: int) -> np.ndarray:
    """Uniform random sectors from a counter-based (Philox) generator."""
    rng = np.random.Generator(np.random.Philox(seed))
    return 1 - 2 * rng.integers(0, 2, size=(count, n))


def save_sectors(path: str | Path, sectors: np.ndarray, weights: np.ndarray, meta: dict | None = None) -> None:
    doc = {"sectors": np.asarray(sectors).tolist(), "weights": np.asarray(weights, dtype=float).tolist()}
    if meta:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc))


def load_sectors(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    doc = json.loads(Path(path).read_text())
    return np.array(doc["sectors"], dtype=int), np.array(doc["weights"], dtype=float)


def star_parity_columns(stars: Sequence[Sequence[int]], n: int) -> np.ndarray:
    """``(2**n, len(stars))`` signs of each star's X product in the X basis."""
    signs = sign_columns(n)
    out = np.ones((2**n, len(stars)))
    for k, st in enumerate(stars):
        for l in st:
            out[:, k] *= signs[:, l]
    return out


def stars_of(g: LatticeGraph) -> list[tuple[int, ...]]:
    return [g.incident_links(j) for j in range(g.n_matter)]


def mu_part_stars(stars: Sequence[Sequence[int]], matter: np.ndarray, mu: float, n_links: int) -> np.ndarray:
    """Per-link share ``mu m_j / |star j|`` summed over the stars holding the link."""
    matter = np.asarray(matter, dtype=float)
    out = np.zeros(matter.shape[:-1] + (n_links,))
    for j, st in enumerate(stars):
        for l in st:
            out[..., l] += mu * matter[..., j] / len(st)
    return out


class DualMeasurer:
    """Vectorized readout of dual-frame observables for a fixed star layout."""

    def __init__(self, stars: Sequence[Sequence[int]], n: int):
        self.n = n
        self.stars = [tuple(s) for s in stars]
        self.signs = sign_columns(n)
        self.star_cols = star_parity_columns(self.stars, n)

    def __call__(self, amps: np.ndarray, sector: np.ndarray) -> dict:
        pz = np.abs(amps) ** 2
        px = np.abs(fwht(amps, self.n)) ** 2
        return {
            "x": px @ self.signs,
            "zint": pz @ self.signs,
            "matter": sector * (px @ self.star_cols),
            "gauss": sector.astype(float),
        }


def _table(rows: list[dict], times, stars, J, h, mu, Q, n_links, time_label="cycle") -> ObservableTable:
    arr = {k: np.array([r[k] for r in rows], dtype=float) for k in ("x", "zint", "matter", "gauss")}
    energy = J * arr["zint"] + h * arr["x"] + mu_part_stars(stars, arr["matter"], mu, n_links)
    if Q:
        energy = energy + mu_part_stars(stars, arr["gauss"], Q, n_links)
    return ObservableTable(np.asarray(times), arr["x"], arr["zint"], arr["matter"], arr["gauss"], energy, time_label=time_label)


def initial_amplitudes(init, n: int) -> np.ndarray:
    """Gauge-register amplitudes from a Bloch list or an amplitude vector."""
    if isinstance(init, np.ndarray) and init.ndim == 1 and init.size == 2**n and init.dtype.kind == "c":
        return init / np.linalg.norm(init)
    if len(init) != n:
        raise ValueError(f"need one Bloch vector per gauge qubit ({n}), got {len(init)}")
    return product_amplitudes([bloch_qubit(v) for v in init])


def dual_trotter_evolve(
    sector: Sequence[int],
    g: LatticeGraph,
    p: TrotterParams,
    init,
    cycles: int | None = None,
) -> ObservableTable:
    """Trotter evolution of one charge sector with per-cycle readout.

    Args:
        sector: Charges ``g_j``.
        g: Lattice graph.
        p: Trotter parameters.
        init: Gauge Bloch vectors or a normalized gauge amplitude vector.
        cycles: Override for ``p.cycles``.

    Returns:
        Table with rows for cycles ``0..cycles``.
    """
    s = check_sector(sector, g.n_matter)
    cycles = p.cycles if cycles is None else cycles
    n = g.n_gauge
    stars = stars_of(g)
    meas = DualMeasurer(stars, n)
    amps = initial_amplitudes(init, n)
    step = build_dual_trotter_circuit(g, p, s, cycles=1, merge=False)
    rows = [meas(amps, s)]
    for _ in range(cycles):
        amps = apply_circuit_array(amps, step)
        rows.append(meas(amps, s))
    return _table(rows, np.arange(cycles + 1), stars, p.J, p.h, p.mu, p.Q, n)


def disorder_average(weights: Sequence[float], tables: Sequence[ObservableTable], monte_carlo: bool = False) -> ObservableTable:
    """Weighted mean of per-sector tables.

    Args:
        weights: Non-negative weights, normalized internally.
        tables: Tables of identical shape.
        monte_carlo: Treat entries as i.i.d. samples and report standard errors.

    Returns:
        The averaged table.
    """
    if not tables:
        raise ValueError("no tables to average")
    w = np.asarray(weights, dtype=float)
    if w.size != len(tables):
        raise ValueError("one weight per table required")
    ref = tables[0]
    for t in tables[1:]:
        for k in ObservableTable.ARRAYS:
            if getattr(t, k).shape != getattr(ref, k).shape:
                raise ValueError(f"table shape mismatch in {k}")
    if len(tables) == 1:
        return tables[0]
    w = w / w.sum()
    out, err = {}, {}
    for k in ObservableTable.ARRAYS:
        stack = np.stack([getattr(t, k) for t in tables])
        out[k] = np.tensordot(w, stack, axes=1)
        if monte_carlo:
            err[k] = stack.std(axis=0, ddof=1) / math.sqrt(len(tables))
    return ObservableTable(ref.times, out["x"], out["zint"], out["matter"], out["gauss"], out["energy"],
                           stderr=err, n_samples=len(tables), time_label=ref.time_label)


def theta_sector_states(g: LatticeGraph, theta: float, matter_signs: Sequence[int] | None = None) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """Resolve an LGT-frame product state with X-eigenstate matter into sectors.

    Matter ``j`` holds ``sX = m_j`` and link ``l`` the tilted state. After U_B,
    the link X-configuration ``n`` sends matter ``j`` to ``m_j prod_{l in star j} n_l``.

    Args:
        g: Lattice graph with ``N_g <= 16``.
        theta: Gauge tilt.
        matter_signs: ``m_j``, default staggered ``(-1)^j`` (1-based).

    Returns:
        ``(sector, normalized gauge amplitudes, weight)`` for every sector with
        nonzero weight, sorted by sector.
    """
    ng = g.n_gauge
    if ng > 16:
        raise ValueError("theta decomposition enumerates 2**N_g configurations; N_g <= 16 supported")
    m = np.array([(-1) ** (j + 1) for j in range(g.n_matter)] if matter_signs is None else matter_signs)
    c, s = math.cos(theta), math.sin(theta)
    # X-basis amplitudes of each link: index 0 is |+x>, 1 is |-x>
    plus = np.array([1, 1]) / math.sqrt(2)
    minus = np.array([1, -1]) / math.sqrt(2)
    link_amp = []
    for l in range(ng):
        q = bloch_qubit((stagger_sign(l + 1) * c, 0.0, s))
        link_amp.append(np.array([np.vdot(plus, q), np.vdot(minus, q)]))
    xamps = product_amplitudes(link_amp)
    signs = sign_columns(ng)
    sector_of = np.outer(np.ones(2**ng), m)
    for j in range(g.n_matter):
        for l in g.incident_links(j):
            sector_of[:, j] *= signs[:, l]
    keys = ((1 - sector_of.astype(int)) // 2) @ (1 << np.arange(g.n_matter))
    out = []
    for key in np.unique(keys):
        sel = keys == key
        part = np.where(sel, xamps, 0)
        wgt = float(np.sum(np.abs(part) ** 2))
        if wgt < 1e-15:
            continue
        comp = fwht(part, ng)
        out.append((sector_of[np.argmax(sel)].astype(int), comp / math.sqrt(wgt), wgt))
    return out


@dataclass
class SectorRun:
    """Disorder-average output."""

    table: ObservableTable
    sectors: np.ndarray
    weights: np.ndarray
    monte_carlo: bool
    per_sector: list = field(default_factory=list)


def resolve_weighting(weighting: SectorWeighting, g: LatticeGraph, gauge_bloch, samples: int = 2000, seed: int = 0,
                      max_enumerate: int = MAX_ENUMERATE) -> tuple[list, np.ndarray, bool]:
    """List of ``(sector, init)`` tasks with weights and a Monte-Carlo flag."""
    nm = g.n_matter
    if weighting.kind == "SingleSector":
        return [(np.array(weighting.sector), gauge_bloch)], np.ones(1), False
    if weighting.kind == "Uniform":
        if nm <= max_enumerate:
            secs = all_sectors(nm)
            return [(s, gauge_bloch) for s in secs], np.full(len(secs), 2.0**-nm), False
        secs = sample_sectors(nm, samples, seed)
        return [(s, gauge_bloch) for s in secs], np.full(samples, 1.0 / samples), True
    if weighting.kind == "ThetaProduct":
        parts = theta_sector_states(g, weighting.theta)
        return [(s, a) for s, a, _ in parts], np.array([w for *_, w in parts]), False
    if weighting.kind == "Explicit":
        return [(np.array(s), gauge_bloch) for s, _ in weighting.entries], np.array([w for _, w in weighting.entries]), False
    raise ValueError(f"unknown weighting {weighting.kind!r}")


def run_disorder(g: LatticeGraph, p: TrotterParams, gauge_bloch, weighting: SectorWeighting, samples: int = 2000,
                 seed: int = 0, keep_sectors: bool = False) -> SectorRun:
    """Evolve every sector implied by ``weighting`` and average."""
    tasks, w, mc = resolve_weighting(weighting, g, gauge_bloch, samples, seed)
    tables = [dual_trotter_evolve(s, g, p, init) for s, init in tasks]
    avg = disorder_average(w, tables, monte_carlo=mc)
    secs = np.array([s for s, _ in tasks])
    return SectorRun(avg, secs, w, mc, tables if keep_sectors else [])


@dataclass(frozen=True)
class DualIsing1D:
    """Dual mixed-field Ising Hamiltonian ``sum J Z + h X + mu g_k prod_{star k} X``.

    Attributes:
        n: Number of gauge qubits.
        J: Z field.
        h: X field.
        mu: Star coupling scale.
        sector: Sign ``g_k`` per star.
        stars: Qubits of each star term.
        boundary: ``Periodic``, ``Open`` or ``Lattice``.
    """

    n: int
    J: float
    h: float
    mu: float
    sector: tuple[int, ...]
    stars: tuple[tuple[int, ...], ...]
    boundary: str = "Periodic"

    @classmethod
    def chain(cls, n: int, sector: Sequence[int], J: float, h: float, mu: float, boundary: str = "Periodic") -> "DualIsing1D":
        """Bonds ``(j, j+1)``: ``n`` for periodic, ``n - 1`` for open."""
        nb = n if boundary == "Periodic" else n - 1
        if len(sector) != nb:
            raise ValueError(f"{boundary} chain of {n} sites has {nb} bonds, got {len(sector)} signs")
        stars = tuple((j, (j + 1) % n) for j in range(nb))
        return cls(n, J, h, mu, tuple(int(x) for x in sector), stars, boundary)

    @classmethod
    def from_lattice(cls, g: LatticeGraph, sector: Sequence[int], J: float, h: float, mu: float) -> "DualIsing1D":
        s = check_sector(sector, g.n_matter)
        return cls(g.n_gauge, J, h, mu, tuple(int(x) for x in s), tuple(stars_of(g)), "Lattice")

    @property
    def n_bonds(self) -> int:
        return len(self.stars)

    def sparse(self) -> sp.csr_matrix:
        n = self.n
        dim = 2**n
        idx = basis_index(n)
        diag = self.J * sign_columns(n).sum(axis=1)
        rows, cols, vals = [idx], [idx], [diag]
        for q in range(n):
            rows.append(idx ^ (1 << q)); cols.append(idx); vals.append(np.full(dim, self.h))
        for gk, st in zip(self.sector, self.stars):
            mask = 0
            for q in st:
                mask |= 1 << q
            rows.append(idx ^ mask); cols.append(idx); vals.append(np.full(dim, self.mu * gk))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))

    def matvec(self) -> Callable[[np.ndarray], np.ndarray]:
        m = self.sparse()
        return lambda v: m @ v


def _lanczos(matvec, v: np.ndarray, m: int):
    beta0 = np.linalg.norm(v)
    V = np.zeros((m + 1, v.size), dtype=complex)
    V[0] = v / beta0
    alpha, beta = [], []
    for j in range(m):
        w = matvec(V[j])
        a = float(np.vdot(V[j], w).real)
        w = w - a * V[j] - (beta[-1] * V[j - 1] if j > 0 else 0)
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = float(np.linalg.norm(w))
        alpha.append(a)
        if b < 1e-13:
            return V[: j + 1], np.array(alpha), np.array(beta), 0.0, beta0
        beta.append(b)
        V[j + 1] = w / b
    return V[:m], np.array(alpha), np.array(beta[:-1]), beta[-1], beta0


def krylov_evolve(matvec, psi0: np.ndarray, times: Sequence[float], m: int = 30, tol: float = 1e-8) -> list[np.ndarray]:
    """Propagate ``exp(-i H t) psi0`` to each requested time with Lanczos steps.

    The step size adapts so that the estimated local error of each step stays
    below ``tol``.

    Args:
        matvec: Hermitian action ``v -> H v``.
        psi0: Initial vector.
        times: Non-decreasing, non-negative targets.
        m: Krylov subspace dimension.
        tol: Local error per step.

    Returns:
        States at each target time.
    """
    times = list(times)
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("times must be sorted ascending and non-negative")
    psi = np.asarray(psi0, dtype=complex).copy()
    t_now, tau = 0.0, None
    out = []
    for target in times:
        while target - t_now > 1e-14 * max(1.0, target):
            V, alpha, beta, resid, beta0 = _lanczos(matvec, psi, m)
            k = len(alpha)
            T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1) if k > 1 else np.diag(alpha)
            evals, S = np.linalg.eigh(T)
            if tau is None:
                norm_est = max(abs(alpha).max() + (2 * abs(beta).max() if beta.size else 0), 1e-12)
                tau = min(target - t_now, 10.0 / norm_est)
            tau = min(tau, target - t_now)
            while True:
                coef = S @ (np.exp(-1j * evals * tau) * S[0].conj())
                err = beta0 * resid * abs(coef[-1])
                if err <= tol or tau < 1e-12:
                    break
                tau *= 0.5
            psi = beta0 * (V.T @ coef)
            psi /= np.linalg.norm(psi)
            t_now += tau
            tau = tau * (1.5 if err < tol / 10 else 1.0)
        out.append(psi.copy())
    return out


def evolve_hamiltonian(H: DualIsing1D, psi0, times: Sequence[float], method: str = "auto",
                       krylov_dim: int = 30, tol: float = 1e-8) -> ObservableTable:
    """Continuous-time evolution of one sector with readout at ``times``.

    Args:
        H: Dual Hamiltonian.
        psi0: Gauge Bloch list or amplitude vector.
        times: Sorted ascending evolution times.
        method: ``dense`` (eigendecomposition), ``krylov`` or ``auto``
            (dense for ``n <= 14``).
        krylov_dim: Lanczos dimension.
        tol: Krylov local error target.

    Returns:
        Table indexed by time.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted ascending")
    if method == "auto":
        method = "dense" if H.n <= 14 else "krylov"
    amps = initial_amplitudes(psi0, H.n)
    s = np.array(H.sector)
    meas = DualMeasurer(H.stars, H.n)
    if method == "dense":
        evals, evecs = np.linalg.eigh(H.sparse().toarray().real)
        coef = evecs.T @ amps
        states = [evecs @ (np.exp(-1j * evals * t) * coef) for t in times]
    elif method == "krylov":
        states = krylov_evolve(H.matvec(), amps, times, krylov_dim, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    rows = [meas(st, s) for st in states]
    return _table(rows, times, H.stars, H.J, H.h, H.mu, 0.0, H.n, time_label="time")


def imbalance_from_table(table: ObservableTable, initial_matter: np.ndarray) -> np.ndarray:
    """``I = (1/N_m) sum_j <sX_j(t)> <sX_j(0)>``."""
    return table.matter @ np.asarray(initial_matter, dtype=float) / len(initial_matter)


def imbalance_curve(theta: float, chain: LatticeGraph, p: TrotterParams, cycles: int | None = None) -> np.ndarray:
    """Matter imbalance of the staggered, theta-tilted product state.

    The state is resolved into charge sectors with weights ``c_n^2`` and each
    sector is evolved in the dual frame.

    Args:
        theta: Gauge tilt; values outside ``[0, pi/2]`` are allowed with a warning.
        chain: Lattice graph.
        p: Trotter parameters.
        cycles: Override for ``p.cycles``.

    Returns:
        Imbalance at cycles ``0..cycles``.
    """
    if not 0 <= theta <= math.pi / 2 + 1e-12:
        warnings.warn(f"theta={theta} lies outside [0, pi/2]", stacklevel=2)
    parts = theta_sector_states(chain, theta)
    tables = [dual_trotter_evolve(s, chain, p, a, cycles) for s, a, _ in parts]
    avg = disorder_average([w for *_, w in parts], tables)
    m0 = np.array([(-1) ** (j + 1) for j in range(chain.n_matter)], dtype=float)
    return imbalance_from_table(avg, m0)
