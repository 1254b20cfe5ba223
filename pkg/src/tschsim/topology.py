"""Static physical graph: nodes, permitted links and per-link quality."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

ROOT = 0


@dataclass(frozen=True)
class LinkQuality:
    pdr: float = 0.75
    rssi: float = -91.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.pdr <= 1.0:
            raise ValueError(f"link pdr must be in [0, 1], got {self.pdr}")
        if self.rssi > 0:
            raise ValueError(f"link rssi must be <= 0 dBm, got {self.rssi}")


@dataclass(frozen=True)
class Topology:
    """Undirected link map. ``links`` holds both orientations of every edge."""

    nodes: tuple[int, ...]
    links: Mapping[tuple[int, int], LinkQuality]
    groups: Mapping[int, int] = field(default_factory=dict)
    _adj: Mapping[int, tuple[int, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        adj: dict[int, list[int]] = {n: [] for n in self.nodes}
        for (a, b), q in self.links.items():
            if a == b:
                raise ValueError(f"self-link on node {a}")
            if a not in adj or b not in adj:
                raise ValueError(f"link ({a}, {b}) references an unknown node")
            if self.links.get((b, a)) != q:
                raise ValueError(f"link map not symmetric for ({a}, {b})")
            adj[a].append(b)
        object.__setattr__(
            self, "_adj", MappingProxyType({n: tuple(sorted(v)) for n, v in adj.items()})
        )
        object.__setattr__(self, "links", MappingProxyType(dict(self.links)))
        object.__setattr__(self, "groups", MappingProxyType(dict(self.groups)))

    @classmethod
    def from_edges(
        cls,
        nodes: Iterable[int],
        edges: Iterable[tuple[int, int]],
        quality: LinkQuality | None = None,
        groups: Mapping[int, int] | None = None,
    ) -> "Topology":
        q = quality or LinkQuality()
        links: dict[tuple[int, int], LinkQuality] = {}
        for a, b in edges:
            links[(a, b)] = q
            links[(b, a)] = q
        return cls(tuple(sorted(nodes)), links, dict(groups or {}))

    def neighbors(self, n: int) -> tuple[int, ...]:
        try:
            return self._adj[n]
        except KeyError:
            raise KeyError(f"unknown node {n}") from None

    def link(self, a: int, b: int) -> LinkQuality:
        return self.links[(a, b)]

    def has_link(self, a: int, b: int) -> bool:
        return (a, b) in self.links

    def edges(self) -> list[tuple[int, int]]:
        return sorted((a, b) for (a, b) in self.links if a < b)

    def to_edge_list(self) -> str:
        lines = []
        for a, b in self.edges():
            q = self.links[(a, b)]
            lines.append(f"{a} {b} {q.pdr:g} {q.rssi:g}")
        return "\n".join(lines) + "\n"

    def with_quality(self, quality: LinkQuality) -> "Topology":
        return Topology.from_edges(self.nodes, self.edges(), quality, self.groups)


def build_paper_topology(
    groups: int = 5, group_size: int = 4, quality: LinkQuality | None = None
) -> Topology:
    """Layered benchmark graph.

    Node ids are assigned group by group starting at 1 (group 1 is ``1..group_size``).
    Group 1 links to the root; every node links to every node of the adjacent
    groups and to nothing inside its own group.
    """
    if groups < 1 or group_size < 1:
        raise ValueError("groups and group_size must be >= 1")
    members = [
        list(range(1 + g * group_size, 1 + (g + 1) * group_size)) for g in range(groups)
    ]
    edges = [(ROOT, n) for n in members[0]]
    for lower, upper in zip(members, members[1:]):
        edges.extend((a, b) for a in lower for b in upper)
    group_of = {n: g + 1 for g, ms in enumerate(members) for n in ms}
    group_of[ROOT] = 0
    nodes = [ROOT] + [n for ms in members for n in ms]
    return Topology.from_edges(nodes, edges, quality, group_of)


def line_topology(n_nodes: int, quality: LinkQuality | None = None) -> Topology:
    """Chain ``0 - 1 - ... - n_nodes-1``."""
    edges = [(i, i + 1) for i in range(n_nodes - 1)]
    return Topology.from_edges(range(n_nodes), edges, quality)
