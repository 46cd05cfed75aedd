"""Second Renyi entropy: exact values and randomized-measurement estimates.

The purity of an ``L``-qubit subsystem is estimated from random single-qubit
Clifford rotations followed by computational-basis measurement:
``P = 2^L / N_u sum_u sum_{s,s'} P_u(s) P_u(s') (-2)^{-D(s,s')}``
with ``D`` the Hamming distance. Empirical distributions include self pairs,
which biases ``P`` by ``2^L / N_s``; ``unbiased_purity`` removes it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .statevector import StateVector, subsystem_purity

LOG2 = "Log2"
LN = "Ln"

_K1 = np.array([[1.0, -0.5], [-0.5, 1.0]])


@lru_cache(maxsize=1)
def clifford_group() -> tuple[np.ndarray, ...]:
    """The 24 single-qubit Cliffords modulo phase, generated from H and S."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    s = np.diag([1, 1j])

    def canon(u):
        k = np.flatnonzero(np.abs(u.ravel()) > 1e-9)[0]
        v = u / (u.ravel()[k] / abs(u.ravel()[k]))
        return tuple(np.round(v.ravel(), 9))

    elems = [np.eye(2, dtype=complex)]
    seen = {canon(elems[0])}
    frontier = list(elems)
    while frontier:
        nxt = []
        for u in frontier:
            for gen in (h, s):
                w = gen @ u
                key = canon(w)
                if key not in seen:
                    seen.add(key)
                    elems.append(w)
                    nxt.append(w)
        frontier = nxt
    if len(elems) != 24:
        raise AssertionError(f"generated {len(elems)} Cliffords, expected 24")
    return tuple(elems)


@dataclass
class RandomizedMeasurementBatch:
    """Randomized single-qubit Clifford measurements.

    Attributes:
        settings: ``(N_u, n)`` Clifford ids in ``0..23``.
        bits: ``(N_u, N_s, n)`` outcomes, or ``None`` for exact probabilities.
        probs: ``(N_u, 2**n)`` exact outcome distributions, if requested.
        seed: Seed record.
    """

    settings: np.ndarray
    bits: np.ndarray | None
    probs: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_settings(self) -> int:
        return int(self.settings.shape[0])

    @property
    def n_shots(self) -> int | None:
        return None if self.bits is None else int(self.bits.shape[1])

    @property
    def n_qubits(self) -> int:
        return int(self.settings.shape[1])

    @property
    def total_shots(self) -> int | None:
        return None if self.bits is None else self.n_settings * self.n_shots

    def to_json(self) -> str:
        if self.bits is None:
            raise ValueError("exact-probability batches are not serialized")
        weights = 1 << np.arange(self.n_qubits, dtype=np.int64)
        blocks = [(self.bits[u].astype(np.int64) @ weights).tolist() for u in range(self.n_settings)]
        doc = {
            "header": {
                "n_qubits": self.n_qubits,
                "n_settings": self.n_settings,
                "n_shots": self.n_shots,
                "seed": self.seed,
                "bit_order": "little-endian",
                "settings": self.settings.tolist(),
                **self.meta,
            },
            "blocks": blocks,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RandomizedMeasurementBatch":
        doc = json.loads(text)
        hd = doc["header"]
        n = hd["n_qubits"]
        ints = np.array(doc["blocks"], dtype=np.int64)
        bits = ((ints[..., None] >> np.arange(n)) & 1).astype(np.uint8)
        meta = {k: v for k, v in hd.items() if k not in ("n_qubits", "n_settings", "n_shots", "seed", "bit_order", "settings")}
        return cls(np.array(hd["settings"], dtype=int), bits, None, hd["seed"], meta)


def _rotated_probs(amps: np.ndarray, n: int, setting: np.ndarray) -> np.ndarray:
    cl = clifford_group()
    out = amps
    for q in range(n):
        # apply the Clifford as a generic one-qubit gate through the tensor path
        out = _apply_1q(out, cl[setting[q]], q, n)
    return np.abs(out) ** 2


def _apply_1q(amps: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    a = amps.reshape(2 ** (n - 1 - q), 2, 2**q)
    return np.einsum("ab,xby->xay", u, a).reshape(-1)


def generate_batch(
    states: StateVector | Sequence[StateVector],
    n_settings: int | None,
    n_shots: int | None,
    seed: int,
    weights: Sequence[float] | None = None,
) -> RandomizedMeasurementBatch:
    """Sample randomized Clifford measurements of a pure state or an ensemble.

    Args:
        states: One state, or several mixed with ``weights``.
        n_settings: Number of random basis settings ``N_u``; ``None`` enumerates
            all ``24**n`` settings (small ``n`` only).
        n_shots: Shots per setting ``N_s``; ``None`` stores exact probabilities.
        seed: Seed; settings and shots derive from it deterministically.
        weights: Mixture weights for an ensemble.

    Returns:
        The batch.
    """
    if isinstance(states, StateVector):
        states = [states]
    n = states[0].n_qubits
    w = np.ones(len(states)) / len(states) if weights is None else np.asarray(weights, float) / np.sum(weights)
    rng = np.random.default_rng(seed)
    if n_settings is None:
        if n > 3:
            raise ValueError("exhaustive settings are limited to 3 qubits")
        settings = ((np.arange(24**n)[:, None] // 24 ** np.arange(n)) % 24).astype(int)
        n_settings = settings.shape[0]
    else:
        settings = rng.integers(0, 24, size=(n_settings, n))
    probs = np.zeros((n_settings, 2**n))
    for u in range(n_settings):
        for wk, st in zip(w, states):
            probs[u] += wk * _rotated_probs(st.amplitudes, n, settings[u])
    if n_shots is None:
        return RandomizedMeasurementBatch(settings, None, probs, seed)
    bits = np.empty((n_settings, n_shots, n), dtype=np.uint8)
    for u in range(n_settings):
        p = np.clip(probs[u], 0, None)
        outs = rng.choice(p.size, size=n_shots, p=p / p.sum())
        bits[u] = ((outs[:, None] >> np.arange(n)) & 1).astype(np.uint8)
    return RandomizedMeasurementBatch(settings, bits, None, seed)


def _kernel_form(p: np.ndarray, L: int) -> float:
    """``p^T (K1 x ... x K1) p`` with ``K1 = [[1, -1/2], [-1/2, 1]]``."""
    t = p.reshape((2,) * L)
    kp = t
    for ax in range(L):
        kp = np.moveaxis(np.tensordot(_K1, kp, axes=(1, ax)), 0, ax)
    return float(np.sum(t * kp))


def _marginals(batch: RandomizedMeasurementBatch, subset: Sequence[int]) -> np.ndarray:
    subset = list(subset)
    L = len(subset)
    if batch.bits is not None:
        idx = batch.bits[:, :, subset].astype(np.int64) @ (1 << np.arange(L, dtype=np.int64))
        out = np.zeros((batch.n_settings, 2**L))
        for u in range(batch.n_settings):
            out[u] = np.bincount(idx[u], minlength=2**L) / batch.n_shots
        return out
    n = batch.n_qubits
    full = batch.probs.reshape((batch.n_settings,) + (2,) * n)
    rest = tuple(1 + (n - 1 - q) for q in range(n) if q not in subset)
    marg = full.sum(axis=rest) if rest else full
    kept = sorted(subset, reverse=True)
    order = [kept.index(q) for q in reversed(subset)]
    marg = np.transpose(marg, [0] + [1 + o for o in order])
    return marg.reshape(batch.n_settings, 2**L)


def purity_per_setting(batch: RandomizedMeasurementBatch, subset: Sequence[int]) -> np.ndarray:
    """Raw estimator ``2^L p^T K p`` evaluated for each setting."""
    if len(subset) == 0:
        raise ValueError("subset must be non-empty")
    if any(not 0 <= q < batch.n_qubits for q in subset):
        raise ValueError("subset outside the batch's qubits")
    L = len(subset)
    marg = _marginals(batch, subset)
    return np.array([2**L * _kernel_form(m, L) for m in marg])


def estimate_purity(batch: RandomizedMeasurementBatch, subset: Sequence[int]) -> float:
    """Raw (self-pair biased) purity estimate averaged over settings."""
    return float(purity_per_setting(batch, subset).mean())


def unbiased_purity(P: float, n_shots: int, L: int) -> float:
    """Remove the self-pair bias: ``N_s/(N_s-1) P - 2^L/(N_s-1)``."""
    if n_shots < 2:
        raise ValueError("jackknife needs at least 2 shots per setting")
    return n_shots / (n_shots - 1) * P - 2**L / (n_shots - 1)


@dataclass(frozen=True)
class PurityEstimate:
    value: float
    stderr: float
    raw: float
    total_shots: int | None


def purity(batches: RandomizedMeasurementBatch | Sequence[RandomizedMeasurementBatch], subset: Sequence[int]) -> PurityEstimate:
    """Debiased purity with standard error over settings.

    Several batches (for example one per disorder sector) are pooled so the
    disorder average and the setting average happen in one step.
    """
    if isinstance(batches, RandomizedMeasurementBatch):
        batches = [batches]
    L = len(subset)
    vals, raws, total = [], [], 0
    for b in batches:
        per = purity_per_setting(b, subset)
        raws.append(per)
        if b.bits is not None:
            vals.append(np.array([unbiased_purity(x, b.n_shots, L) for x in per]))
            total += b.total_shots
        else:
            vals.append(per)
            total = None
    v = np.concatenate(vals)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return PurityEstimate(float(v.mean()), se, float(np.concatenate(raws).mean()), total)


def _log(x: float, base: str) -> float:
    if base == LOG2:
        return math.log2(x)
    if base == LN:
        return math.log(x)
    raise ValueError(f"base must be {LOG2} or {LN}")


def renyi2_from_purity(p: float, base: str = LOG2) -> float:
    """``-log p``; non-positive purity gives ``nan``."""
    if not p > 0:
        return float("nan")
    return -_log(p, base)


def renyi2(source, subset: Sequence[int], base: str = LOG2) -> float:
    """Second Renyi entropy of ``subset`` from a state (exact) or batch(es)."""
    if isinstance(source, StateVector):
        return renyi2_from_purity(subsystem_purity(source, subset), base)
    return renyi2_from_purity(purity(source, subset).value, base)


def windows(order: Sequence[int], L: int, periodic: bool = True) -> list[list[int]]:
    """Contiguous windows of length ``L`` along ``order``."""
    n = len(order)
    if not 1 <= L <= n:
        raise ValueError(f"window length {L} outside 1..{n}")
    if L == n:
        return [list(order)]
    starts = range(n) if periodic else range(n - L + 1)
    return [[order[(s + k) % n] for k in range(L)] for s in starts]


def renyi2_windows(source, L: int, order: Sequence[int] | None = None, periodic: bool = True, base: str = LOG2) -> float:
    """Entropy averaged over all contiguous windows of length ``L``."""
    n = source.n_qubits if isinstance(source, StateVector) else (
        source.n_qubits if isinstance(source, RandomizedMeasurementBatch) else source[0].n_qubits)
    order = list(range(n)) if order is None else list(order)
    return float(np.mean([renyi2(source, w, base) for w in windows(order, L, periodic)]))


def background_subtract(raw: Sequence[float], sizes: Sequence[int], s_full: float, n: int) -> np.ndarray:
    """``S_mit(L) = S_raw(L) - (L / N) S_raw(N)``."""
    return np.asarray(raw, dtype=float) - np.asarray(sizes, dtype=float) / n * s_full


def entropy_csv(rows: Sequence[tuple]) -> str:
    """CSV with columns ``cycle, L, raw, mitigated, stderr``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cycle", "L", "raw", "mitigated", "stderr"])
    for r in rows:
        w.writerow([int(r[0]), int(r[1])] + [repr(float(x)) for x in r[2:]])
    return buf.getvalue()
