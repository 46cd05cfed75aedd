"""Phase estimation of disorder-averaged Pauli expectations.

With ``psi = U|0>`` and a Pauli ``O``, the operator
``Gamma = U (1 - 2|0><0|) U^dag O = (1 - 2|psi><psi|) O`` rotates the plane
spanned by ``psi`` and ``O psi`` by the angle ``lambda`` with
``cos(lambda) = -<psi|O|psi>``. Phase estimation on ``Gamma`` started from
``psi`` therefore reads out the expectation value with ``2^m - 1`` queries.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuits import Circuit, Gate, TrotterParams, build_trotter_circuit, build_ub, circuit_unitary
from .lattice import LatticeGraph
from .statevector import CapacityError, PauliTerm, pauli_apply

MAX_DENSE_SYSTEM = 10
MAX_TOTAL_QUBITS = 18


@dataclass
class GammaOperator:
    """Dense Grover-type operator.

    Attributes:
        matrix: ``Gamma`` as a dense unitary.
        psi: ``U|0>``.
        observable: The Pauli ``O``.
        n_qubits: System size.
    """

    matrix: np.ndarray
    psi: np.ndarray
    observable: PauliTerm
    n_qubits: int

    @property
    def expectation(self) -> float:
        """Exact ``<psi|O|psi>``."""
        return float(np.vdot(self.psi, _apply_O(self.psi, self.observable, self.n_qubits)).real)

    def plane_phases(self) -> np.ndarray:
        """Eigenphases of ``Gamma`` restricted to span{psi, O psi}."""
        a = self.psi
        b = _apply_O(self.psi, self.observable, self.n_qubits)
        basis = [a]
        r = b - np.vdot(a, b) * a
        if np.linalg.norm(r) > 1e-12:
            basis.append(r / np.linalg.norm(r))
        Q = np.stack(basis, axis=1)
        sub = Q.conj().T @ self.matrix @ Q
        return np.sort(np.angle(np.linalg.eigvals(sub)))


def _apply_O(v: np.ndarray, O: PauliTerm, n: int) -> np.ndarray:
    return O.coefficient * pauli_apply(v, n, O.factors)


def _check_pauli(O: PauliTerm) -> None:
    if not isinstance(O, PauliTerm):
        raise TypeError("observable must be a PauliTerm")
    c = complex(O.coefficient)
    if abs(abs(c) - 1) > 1e-12 or abs(c.imag) > 1e-12:
        raise ValueError("observable must be a Pauli string with coefficient +-1")
    if not O.factors:
        raise ValueError("observable must act on at least one qubit")


def build_gamma(U: Circuit | np.ndarray, O: PauliTerm, n_qubits: int | None = None) -> GammaOperator:
    """Build ``Gamma = U (1 - 2|0><0|) U^dag O`` densely.

    Args:
        U: System circuit or its dense unitary.
        O: Pauli observable.
        n_qubits: Required when ``U`` is an array.

    Returns:
        The operator with ``psi = U|0>``.

    Raises:
        CapacityError: more than 10 system qubits.
        ValueError: ``O`` is not a Pauli string.
    """
    _check_pauli(O)
    if isinstance(U, Circuit):
        n = U.n_qubits
        if n > MAX_DENSE_SYSTEM:
            raise CapacityError(f"dense Gamma supports at most {MAX_DENSE_SYSTEM} qubits, got {n}")
        Um = circuit_unitary(U, max_qubits=MAX_DENSE_SYSTEM)
    else:
        Um = np.asarray(U, dtype=complex)
        n = int(round(math.log2(Um.shape[0]))) if n_qubits is None else n_qubits
        if n > MAX_DENSE_SYSTEM:
            raise CapacityError(f"dense Gamma supports at most {MAX_DENSE_SYSTEM} qubits, got {n}")
    psi = Um[:, 0].copy()
    dim = 2**n
    Omat = np.stack([_apply_O(np.eye(dim, dtype=complex)[:, k], O, n) for k in range(dim)], axis=1)
    G = Omat - 2 * np.outer(psi, psi.conj() @ Omat)
    return GammaOperator(G, psi, O, n)


@dataclass
class PhaseEstimationConfig:
    """Phase estimation settings.

    Attributes:
        m: Ancilla count.
        gamma: Operator to probe.
        shots: Ancilla measurements to draw.
    """

    m: int
    gamma: GammaOperator
    shots: int = 1

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("need at least one ancilla")
        if self.m + self.gamma.n_qubits > MAX_TOTAL_QUBITS:
            raise CapacityError(f"m + n = {self.m + self.gamma.n_qubits} exceeds {MAX_TOTAL_QUBITS} simulated qubits")


@dataclass
class PEResult:
    """Phase estimation output.

    Attributes:
        estimate: ``-cos(2 pi k / 2^m)`` for the most frequent outcome.
        phases: Candidate phases ``+-2 pi k / 2^m`` of that outcome.
        outcomes: Sampled ancilla integers.
        probabilities: Exact outcome distribution.
        gamma_applications: Controlled-Gamma queries (``2^m - 1``).
        u_applications: Applications of ``U`` or ``U^dag`` including preparation.
        resolution: ``pi 2^-m`` bound on the phase error.
    """

    estimate: float
    phases: tuple[float, float]
    outcomes: np.ndarray
    probabilities: np.ndarray
    gamma_applications: int
    u_applications: int
    resolution: float

    def estimates(self) -> np.ndarray:
        M = len(self.probabilities)
        return -np.cos(2 * np.pi * self.outcomes / M)


def pe_distribution(gamma: GammaOperator, m: int) -> tuple[np.ndarray, int]:
    """Exact ancilla outcome probabilities and the number of Gamma queries."""
    M = 2**m
    vecs = np.empty((M, gamma.psi.size), dtype=complex)
    vecs[0] = gamma.psi
    for k in range(1, M):
        vecs[k] = gamma.matrix @ vecs[k - 1]
    # inverse QFT on the ancilla register: sum_k exp(-2 pi i k y / M)
    amps = np.fft.fft(vecs, axis=0) / M
    probs = np.sum(np.abs(amps) ** 2, axis=1)
    return probs / probs.sum(), M - 1


def phase_estimate(cfg: PhaseEstimationConfig, seed: int = 0) -> PEResult:
    """Run textbook phase estimation densely and sample the ancillas.

    Args:
        cfg: Settings.
        seed: Sampling seed.

    Returns:
        The estimate and query accounting.
    """
    probs, n_gamma = pe_distribution(cfg.gamma, cfg.m)
    rng = np.random.default_rng(seed)
    M = 2**cfg.m
    outcomes = rng.choice(M, size=cfg.shots, p=probs)
    k = int(np.bincount(outcomes, minlength=M).argmax())
    lam = 2 * np.pi * k / M
    return PEResult(
        estimate=float(-np.cos(lam)),
        phases=(float(lam), float(-lam)),
        outcomes=outcomes,
        probabilities=probs,
        gamma_applications=n_gamma,
        u_applications=2 * n_gamma + 1,
        resolution=math.pi / M,
    )


def lgt_instance(g: LatticeGraph, p: TrotterParams, cycles: int, observable: PauliTerm,
                 gauge_angle: float = 0.0) -> GammaOperator:
    """Gamma for the superposition state of a small LGT.

    Matter starts in ``|0>`` (all sectors with equal weight after U_B); gauge
    qubits are rotated by ``RY(gauge_angle)`` before U_B.
    """
    prep = Circuit.from_gates([Gate("RY", (g.link_qubit(l),), gauge_angle) for l in range(g.n_gauge)], g.n_qubits)
    U = prep + build_ub(g) + build_trotter_circuit(g, p, cycles=cycles)
    return build_gamma(U, observable)


def naive_shots_needed(mean: float, eps: float, seed: int = 0, confidence: float = 0.95,
                       repeats: int = 400, sector_means: Sequence[float] | None = None) -> int:
    """Smallest shot count whose sample mean lands within ``eps`` at the given confidence.

    Each shot draws a sector uniformly (from ``sector_means`` if given) and then
    a +-1 outcome with that sector's mean. Coverage is measured over ``repeats``
    independent experiments at each candidate shot count.
    """
    rng = np.random.default_rng(seed)
    sm = np.asarray(sector_means if sector_means is not None else [mean], dtype=float)

    def covered(n: int) -> bool:
        s = sm[rng.integers(0, sm.size, size=(repeats, n))]
        outcome = np.where(rng.random((repeats, n)) < (1 + s) / 2, 1.0, -1.0)
        return np.mean(np.abs(outcome.mean(axis=1) - mean) <= eps) >= confidence

    hi = 1
    while not covered(hi):
        hi *= 2
        if hi > 2**24:
            raise RuntimeError("naive sampling did not converge")
    lo = hi // 2
    while hi - lo > max(1, lo // 32):
        mid = (lo + hi) // 2
        if covered(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class CostRow:
    eps: float
    naive_shots: int
    pe_applications: int
    achieved_error: float


def cost_compare(eps_list: Sequence[float], gamma: GammaOperator, seed: int = 0,
                 sector_means: Sequence[float] | None = None) -> list[CostRow]:
    """Measured sampling cost of naive Monte Carlo next to phase estimation.

    Args:
        eps_list: Target accuracies; ``m = ceil(-log2 eps)`` ancillas are used.
        gamma: Instance whose ``<O>`` is estimated.
        seed: Seed for both estimators.
        sector_means: Per-sector expectations for two-stage naive sampling.

    Returns:
        One row per accuracy.
    """
    exact = gamma.expectation
    rows = []
    for i, eps in enumerate(eps_list):
        m = max(1, math.ceil(-math.log2(eps) - 1e-12))
        res = phase_estimate(PhaseEstimationConfig(m, gamma, shots=1), seed=seed + i)
        shots = naive_shots_needed(exact, eps, seed=seed + i, sector_means=sector_means)
        rows.append(CostRow(float(eps), shots, res.u_applications, abs(res.estimate - exact)))
    return rows


def fit_exponent(eps: Sequence[float], counts: Sequence[float]) -> float:
    """Slope of ``log(count)`` against ``log(1/eps)``."""
    return float(np.polyfit(np.log(1 / np.asarray(eps, float)), np.log(np.asarray(counts, float)), 1)[0])


def cost_csv(rows: Sequence[CostRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "naive_shots", "pe_applications", "achieved_error"])
    for r in rows:
        w.writerow([repr(r.eps), r.naive_shots, r.pe_applications, repr(r.achieved_error)])
    return buf.getvalue()
