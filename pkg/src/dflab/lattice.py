"""Matter/gauge qubit graphs for Z2 lattice gauge theory simulations.

Matter qubits live on vertices and gauge qubits on links. In the LGT frame
matter vertex ``j`` is qubit ``j`` and link ``l`` is qubit ``n_matter + l``.
In the dual frame only gauge qubits remain and link ``l`` is qubit ``l``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

LGT = "LGT"
DUAL = "Dual"
FRAMES = (LGT, DUAL)


class LatticeError(ValueError):
    """Raised for malformed lattice specifications or unsupported queries."""


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry request.

    Attributes:
        kind: One of ``Ring1D``, ``OpenChain1D``, ``Grid2D`` or ``Custom``.
        n_matter: Vertex count for the 1d kinds.
        rows: Grid rows.
        cols: Grid columns.
        path: Adjacency file for ``Custom``.
    """

    kind: str
    n_matter: int | None = None
    rows: int | None = None
    cols: int | None = None
    path: str | None = None

    @classmethod
    def ring(cls, n: int) -> "LatticeSpec":
        return cls("Ring1D", n_matter=n)

    @classmethod
    def chain(cls, n: int) -> "LatticeSpec":
        return cls("OpenChain1D", n_matter=n)

    @classmethod
    def grid(cls, rows: int, cols: int) -> "LatticeSpec":
        return cls("Grid2D", rows=rows, cols=cols)

    @classmethod
    def custom(cls, path: str | Path) -> "LatticeSpec":
        return cls("Custom", path=str(path))

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeSpec":
        return cls(
            d["kind"],
            n_matter=d.get("n_matter"),
            rows=d.get("rows"),
            cols=d.get("cols"),
            path=d.get("path"),
        )

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class LatticeGraph:
    """Immutable matter/gauge graph.

    Attributes:
        kind: Geometry kind copied from the spec.
        n_matter: Number of matter vertices.
        links: Link endpoints ``(u, v)`` indexed by link id.
        coords: Integer ``(row, col)`` per vertex, or ``None``.
        shape: ``(rows, cols)`` for grids.
    """

    kind: str
    n_matter: int
    links: tuple[tuple[int, int], ...]
    coords: tuple[tuple[int, int], ...] | None = None
    shape: tuple[int, int] | None = None
    _incident: tuple[tuple[int, ...], ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        inc: list[list[int]] = [[] for _ in range(self.n_matter)]
        for l, (u, v) in enumerate(self.links):
            inc[u].append(l)
            inc[v].append(l)
        object.__setattr__(self, "_incident", tuple(tuple(x) for x in inc))

    @property
    def vertices(self) -> list[int]:
        return list(range(self.n_matter))

    @property
    def n_gauge(self) -> int:
        return len(self.links)

    @property
    def n_qubits(self) -> int:
        return self.n_matter + self.n_gauge

    @property
    def degree(self) -> np.ndarray:
        return np.array([len(x) for x in self._incident], dtype=int)

    def incident_links(self, j: int) -> tuple[int, ...]:
        """Link ids touching vertex ``j`` in increasing order."""
        return self._incident[j]

    def matter_qubit(self, j: int) -> int:
        return j

    def link_qubit(self, l: int, frame: str = LGT) -> int:
        return self.n_matter + l if frame == LGT else l

    def n_frame_qubits(self, frame: str) -> int:
        return self.n_qubits if frame == LGT else self.n_gauge

    def center_link(self) -> int:
        """Middle link for 1d graphs and the first link otherwise."""
        if self.kind in ("Ring1D", "OpenChain1D"):
            return self.n_gauge // 2
        return 0


def _check_simple_connected(n: int, edges: Sequence[tuple[int, int]]) -> None:
    seen = set()
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise LatticeError(f"edge ({u}, {v}) references a vertex outside 0..{n - 1}")
        if u == v:
            raise LatticeError(f"edge ({u}, {v}) is a self-loop")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise LatticeError(f"edge ({u}, {v}) duplicates an existing edge")
        seen.add(key)
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    reached = {0}
    queue = deque([0])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in reached:
                reached.add(y)
                queue.append(y)
    if len(reached) != n:
        missing = min(set(range(n)) - reached)
        bad = next(((u, v) for u, v in edges if u == missing or v == missing), None)
        where = f"edge {bad}" if bad else f"isolated vertex {missing}"
        raise LatticeError(f"graph is disconnected: {where} is not reachable from vertex 0")


def read_adjacency(path: str | Path) -> list[tuple[int, int]]:
    """Parse a ``u v`` edge list with ``#`` comments."""
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise LatticeError(f"{path}:{lineno}: expected 'u v', got {raw!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise LatticeError(f"{path}:{lineno}: non-integer vertex id in {raw!r}") from None
    return edges


def build_lattice(spec: LatticeSpec) -> LatticeGraph:
    """Build a lattice graph with deterministic ids.

    Vertices are row-major. Links are sorted by ``(min, max)`` endpoint, except
    that the ring's wrap link ``(n-1, 0)`` is always the last id.

    Args:
        spec: Geometry request.

    Returns:
        The lattice graph.
    """
    kind = spec.kind
    if kind in ("Ring1D", "OpenChain1D"):
        n = spec.n_matter
        if n is None or n < 2:
            raise LatticeError(f"{kind} needs n_matter >= 2, got {n}")
        links = [(j, j + 1) for j in range(n - 1)]
        if kind == "Ring1D":
            if n == 2:
                raise LatticeError("Ring1D(2) would need two parallel links between 0 and 1")
            links.append((n - 1, 0))
            return LatticeGraph(kind, n, tuple(links))
        return LatticeGraph(kind, n, tuple(links), tuple((0, j) for j in range(n)))
    if kind == "Grid2D":
        rows, cols = spec.rows, spec.cols
        if rows is None or cols is None or rows < 2 or cols < 2:
            raise LatticeError(f"Grid2D needs rows, cols >= 2, got {rows}x{cols}")
        links = []
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                if c + 1 < cols:
                    links.append((v, v + 1))
                if r + 1 < rows:
                    links.append((v, v + cols))
        links.sort()
        coords = tuple((r, c) for r in range(rows) for c in range(cols))
        return LatticeGraph(kind, rows * cols, tuple(links), coords, (rows, cols))
    if kind == "Custom":
        if spec.path is None:
            raise LatticeError("Custom lattice needs an adjacency file path")
        edges = read_adjacency(spec.path)
        if not edges:
            raise LatticeError(f"{spec.path}: no edges")
        n = 1 + max(max(e) for e in edges)
        _check_simple_connected(n, edges)
        if n < 2:
            raise LatticeError("custom graph needs at least 2 vertices")
        links = sorted((min(u, v), max(u, v)) for u, v in edges)
        return LatticeGraph(kind, n, tuple(links))
    raise LatticeError(f"unknown lattice kind {kind!r}")


def _doubled(g: LatticeGraph, entity: tuple[str, int]) -> tuple[int, int]:
    kind, idx = entity
    if kind in ("v", "vertex"):
        if not 0 <= idx < g.n_matter:
            raise LatticeError(f"vertex {idx} does not exist")
        r, c = g.coords[idx]
        return 2 * r, 2 * c
    if kind in ("l", "link"):
        if not 0 <= idx < g.n_gauge:
            raise LatticeError(f"link {idx} does not exist")
        u, v = g.links[idx]
        return (g.coords[u][0] + g.coords[v][0], g.coords[u][1] + g.coords[v][1])
    raise LatticeError(f"entity kind must be 'v' or 'l', got {kind!r}")


def manhattan_distance(g: LatticeGraph, a: tuple[str, int], b: tuple[str, int]) -> int:
    """Manhattan distance between vertices or link midpoints.

    Coordinates are doubled so link midpoints are integral; the doubled
    distance is halved and rounded up.

    Args:
        g: Graph with coordinates.
        a: Entity ``("v", id)`` or ``("l", id)``.
        b: Entity ``("v", id)`` or ``("l", id)``.

    Returns:
        Non-negative integer distance, zero only for the same entity.
    """
    if g.coords is None:
        raise LatticeError("metric undefined; use graph distance")
    pa, pb = _doubled(g, a), _doubled(g, b)
    d2 = abs(pa[0] - pb[0]) + abs(pa[1] - pb[1])
    return math.ceil(d2 / 2)


@dataclass(frozen=True)
class SnakeOrder:
    """Chain position ``i`` holds qubit ``order[i]``."""

    order: tuple[int, ...]
    frame: str

    def position(self) -> np.ndarray:
        """Inverse permutation: qubit id to chain position."""
        pos = np.empty(len(self.order), dtype=int)
        pos[list(self.order)] = np.arange(len(self.order))
        return pos


def snake_order(g: LatticeGraph, frame: str = LGT, order: Sequence[int] | None = None) -> SnakeOrder:
    """One-dimensional ordering of the frame's qubits for MPS simulation.

    1d graphs interleave ``m0, l0, m1, l1, ...``. Grids run one lattice row at
    a time (``m, h, m, h, ..., m``) followed by that row's downward links; a
    lattice row is an anti-diagonal of the 45-degree rotated device layout.

    Args:
        g: Lattice graph.
        frame: ``LGT`` keeps matter and gauge qubits, ``Dual`` gauge only.
        order: Explicit order, required for custom graphs.

    Returns:
        The snake order.
    """
    n = g.n_frame_qubits(frame)
    if order is not None:
        if sorted(order) != list(range(n)):
            raise LatticeError("explicit order must be a permutation of the frame's qubits")
        return SnakeOrder(tuple(int(x) for x in order), frame)
    seq: list[tuple[str, int]] = []
    if g.kind in ("Ring1D", "OpenChain1D"):
        for j in range(g.n_matter):
            seq.append(("v", j))
            if j < g.n_gauge:
                seq.append(("l", j))
    elif g.kind == "Grid2D":
        rows, cols = g.shape
        link_id = {e: l for l, e in enumerate(g.links)}
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                seq.append(("v", v))
                if c + 1 < cols:
                    seq.append(("l", link_id[(v, v + 1)]))
            if r + 1 < rows:
                for c in range(cols):
                    v = r * cols + c
                    seq.append(("l", link_id[(v, v + cols)]))
    else:
        raise LatticeError("custom graphs need an explicit snake order")
    out = []
    for kind, idx in seq:
        if kind == "v":
            if frame == LGT:
                out.append(idx)
        else:
            out.append(g.link_qubit(idx, frame))
    return SnakeOrder(tuple(out), frame)
