"""Per-game-day player-interaction graphs and their Laplacian spectra.

Every game contributes a complete subgraph over the players of both teams
who logged at least ``minutes_threshold`` minutes, so a day's graph is a
disjoint union of cliques (a cluster graph) over the fixed league roster.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

DEFAULT_MINUTES_THRESHOLD = 10.0


class GraphError(ValueError):
    """Raised for malformed snapshots or adjacency matrices."""


class DuplicatePlayerError(GraphError):
    def __init__(self, player: int, first_game: int, second_game: int):
        self.player = player
        self.games = (first_game, second_game)
        super().__init__(
            f"player {player} appears in game {first_game} and game {second_game} on the same day"
        )


class NotClusterGraphError(GraphError):
    def __init__(self, component: list[int]):
        self.component = component
        super().__init__(f"connected component {component} is not a complete graph")


@dataclass(frozen=True)
class GraphSnapshot:
    day_index: int
    edges: frozenset[tuple[int, int]]
    components: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def component_sizes(self) -> list[int]:
        return [len(c) for c in self.components]

    def players(self) -> set[int]:
        return {p for comp in self.components for p in comp}


def build_snapshot(
    games: Sequence[tuple[Iterable[tuple[int, float]], Iterable[tuple[int, float]]]],
    minutes_threshold: float = DEFAULT_MINUTES_THRESHOLD,
    day_index: int = 0,
) -> GraphSnapshot:
    """Build one day's cluster graph.

    ``games`` holds one ``(team_a, team_b)`` pair per game, each side an
    iterable of ``(player_index, minutes)``.
    """
    seen: dict[int, int] = {}
    components = []
    edges = set()
    for g, (side_a, side_b) in enumerate(games):
        members = []
        for player, minutes in list(side_a) + list(side_b):
            if minutes < 0:
                raise GraphError(f"negative minutes {minutes} for player {player} in game {g}")
            if player in seen:
                raise DuplicatePlayerError(player, seen[player], g)
            seen[player] = g
            if minutes >= minutes_threshold:
                members.append(int(player))
        members.sort()
        if len(members) >= 2:
            components.append(tuple(members))
            edges.update(combinations(members, 2))
        # a lone qualifying player forms no edge; keep it out of the component list
    return GraphSnapshot(day_index, frozenset(edges), tuple(components))


def adjacency(snapshot: GraphSnapshot, n: int) -> np.ndarray:
    adj = np.zeros((n, n), dtype=np.int64)
    for i, j in snapshot.edges:
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
        adj[i, j] = adj[j, i] = 1
    return adj


def laplacian(adj: np.ndarray) -> np.ndarray:
    """Combinatorial Laplacian ``D - A``; integer input stays integer."""
    adj = np.asarray(adj)
    return np.diag(adj.sum(axis=1)) - adj


def analytic_spectrum(component_sizes: Sequence[int], n: int) -> dict[int, int]:
    """Eigenvalue -> multiplicity for a cluster graph's Laplacian.

    Each ``K_k`` block contributes eigenvalue ``k`` with multiplicity ``k-1``
    and one zero; isolated nodes contribute zeros.
    """
    sizes = [int(k) for k in component_sizes]
    if any(k < 2 for k in sizes):
        raise GraphError(f"component sizes must be >= 2, got {sizes}")
    if sum(sizes) > n:
        raise GraphError(f"components cover {sum(sizes)} nodes but n={n}")
    spectrum: Counter[int] = Counter()
    spectrum[0] = n - sum(sizes) + len(sizes)
    for k in sizes:
        spectrum[k] += k - 1
    return {ev: m for ev, m in sorted(spectrum.items()) if m > 0}


def spectrum_values(spectrum: dict[int, int]) -> np.ndarray:
    """Expand an eigenvalue -> multiplicity map into a sorted array."""
    return np.sort(np.repeat(np.array(list(spectrum), dtype=float), list(spectrum.values())))


def spectrum_deviation(adj: np.ndarray) -> float:
    """Max |numeric - closed form| eigenvalue deviation for a cluster graph."""
    sizes = verify_cluster_structure(adj)
    numeric = np.linalg.eigvalsh(laplacian(adj).astype(float))
    expected = spectrum_values(analytic_spectrum(sizes, adj.shape[0]))
    return float(np.max(np.abs(numeric - expected))) if len(numeric) else 0.0


def verify_cluster_structure(adj: np.ndarray) -> list[int]:
    """Sizes of the non-trivial components, each checked to be a clique."""
    adj = np.asarray(adj)
    n = adj.shape[0]
    if adj.shape != (n, n):
        raise GraphError(f"adjacency must be square, got {adj.shape}")
    if not np.array_equal(adj, adj.T) or np.any(np.diag(adj) != 0):
        raise GraphError("adjacency must be symmetric with zero diagonal")
    visited = np.zeros(n, dtype=bool)
    sizes = []
    for start in range(n):
        if visited[start]:
            continue
        stack = [start]
        visited[start] = True
        comp = []
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in np.flatnonzero(adj[v]):
                if not visited[u]:
                    visited[u] = True
                    stack.append(u)
        if len(comp) < 2:
            continue
        comp.sort()
        block = adj[np.ix_(comp, comp)]
        if block.sum() != len(comp) * (len(comp) - 1):
            raise NotClusterGraphError(comp)
        sizes.append(len(comp))
    return sizes


def directed_edges(snapshot: GraphSnapshot, n: int, self_loops: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Both directions of every edge plus a self-loop per node.

    Returns ``(dst, src)`` index arrays sorted by destination; attention at
    ``dst`` is normalised over its incoming ``src`` entries.
    """
    pairs = [(i, j) for i, j in snapshot.edges] + [(j, i) for i, j in snapshot.edges]
    if self_loops:
        pairs.extend((i, i) for i in range(n))
    if not pairs:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    arr = np.array(sorted(pairs), dtype=np.int64)
    if arr.max() >= n or arr.min() < 0:
        raise GraphError(f"edge index out of range for n={n}")
    return arr[:, 0].copy(), arr[:, 1].copy()
