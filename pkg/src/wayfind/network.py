"""Hierarchical multi-story building network of decision points.

A building is modeled as an undirected graph of nodes (decision points)
grouped into levels (floors), with three link flavors: same-level corridor
links, stair-to-stair links inside a shaft, and stair-access links joining
a staircase to the rest of the network. Networks are immutable after
construction and safe for concurrent reads.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import math

FORMAT_VERSION = 1

STAIR_LETTERS = "ABCDE"


class NetworkError(ValueError):
    """A network document violates a structural constraint."""


class NodeKind(str, Enum):
    CORRIDOR_JUNCTION = "corridor_junction"
    ROOM_ACCESS = "room_access"
    STAIRCASE = "staircase"
    EXIT = "exit"


class LinkKind(str, Enum):
    SAME_LEVEL = "same_level"
    STAIR_STAIR = "stair_stair"
    STAIR_ACCESS = "stair_access"


@dataclass(frozen=True)
class Node:
    id: str
    level: int
    kind: NodeKind
    x: float
    y: float


@dataclass(frozen=True)
class Link:
    """Undirected link; endpoints are stored sorted so (a, b) == (b, a)."""

    a: str
    b: str
    kind: LinkKind

    @staticmethod
    def make(a: str, b: str, kind: LinkKind) -> "Link":
        if a > b:
            a, b = b, a
        return Link(a, b, kind)


class IndoorNetwork:
    """Validated building graph. Treat as immutable once built."""

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link], levels: Iterable[int]):
        self.levels: tuple[int, ...] = tuple(sorted(set(int(v) for v in levels)))
        self.nodes: dict[str, Node] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise NetworkError(f"duplicate node id: {node.id!r}")
            self.nodes[node.id] = node
        self.links: tuple[Link, ...] = tuple(
            sorted(set(links), key=lambda l: (l.a, l.b, l.kind.value))
        )
        self._adjacency: dict[str, tuple[str, ...]] = {}
        self._validate()

    # -- construction checks -------------------------------------------------

    def _validate(self) -> None:
        if not self.levels:
            raise NetworkError("no levels declared")
        if not self.nodes:
            raise NetworkError("network has no nodes")
        ground = self.levels[0]
        for node in self.nodes.values():
            if not node.id:
                raise NetworkError("empty node id")
            if node.level not in self.levels:
                raise NetworkError(
                    f"node {node.id!r}: level {node.level} not in declared levels {self.levels}"
                )
            if not (math.isfinite(node.x) and math.isfinite(node.y)):
                raise NetworkError(f"node {node.id!r}: non-finite position")
            if node.kind is NodeKind.EXIT and node.level != ground:
                raise NetworkError(
                    f"node {node.id!r}: exit on level {node.level}, exits only allowed on ground level {ground}"
                )
            if node.kind is NodeKind.STAIRCASE and node.id[0] not in STAIR_LETTERS:
                raise NetworkError(
                    f"node {node.id!r}: staircase label must carry a shaft letter in {STAIR_LETTERS}"
                )

        seen: set[tuple[str, str]] = set()
        adjacency: dict[str, set[str]] = {nid: set() for nid in self.nodes}
        for link in self.links:
            for end in (link.a, link.b):
                if end not in self.nodes:
                    raise NetworkError(f"link {link.a}-{link.b}: dangling endpoint {end!r}")
            if link.a == link.b:
                raise NetworkError(f"self-link on node {link.a!r}")
            key = (link.a, link.b)
            if key in seen:
                raise NetworkError(f"duplicate link {link.a}-{link.b}")
            seen.add(key)
            self._check_link_kind(link)
            adjacency[link.a].add(link.b)
            adjacency[link.b].add(link.a)
        self._adjacency = {nid: tuple(sorted(nbrs)) for nid, nbrs in adjacency.items()}

        self._check_connected()

    def _check_link_kind(self, link: Link) -> None:
        na, nb = self.nodes[link.a], self.nodes[link.b]
        stairs = (na.kind is NodeKind.STAIRCASE) + (nb.kind is NodeKind.STAIRCASE)
        if link.kind is LinkKind.SAME_LEVEL:
            if na.level != nb.level:
                raise NetworkError(
                    f"link {link.a}-{link.b}: same_level link joins levels {na.level} and {nb.level}"
                )
        elif link.kind is LinkKind.STAIR_STAIR:
            if stairs != 2:
                raise NetworkError(
                    f"link {link.a}-{link.b}: stair_stair link requires two staircase endpoints"
                )
        elif link.kind is LinkKind.STAIR_ACCESS:
            if stairs != 1:
                raise NetworkError(
                    f"link {link.a}-{link.b}: stair_access link requires exactly one staircase endpoint"
                )
            if abs(na.level - nb.level) > 1:
                raise NetworkError(
                    f"link {link.a}-{link.b}: stair_access link spans more than one level"
                )

    def _check_connected(self) -> None:
        if len(self.nodes) <= 1:
            return
        start = next(iter(sorted(self.nodes)))
        reached = {start}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for nbr in self._adjacency[cur]:
                if nbr not in reached:
                    reached.add(nbr)
                    queue.append(nbr)
        if len(reached) != len(self.nodes):
            missing = sorted(set(self.nodes) - reached)
            raise NetworkError(
                f"network not connected: {len(missing)} nodes unreachable from {start!r} "
                f"(e.g. {missing[:5]})"
            )

    # -- queries -------------------------------------------------------------

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndoorNetwork):
            return NotImplemented
        return (
            self.levels == other.levels
            and self.nodes == other.nodes
            and self.links == other.links
        )

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NetworkError(f"unknown node id: {node_id!r}") from None

    def nodes_on_level(self, level: int) -> list[Node]:
        return [n for n in self.nodes.values() if n.level == level]

    def nodes_of_kind(self, kind: NodeKind) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind is kind]

    def min_same_level_distance(self) -> float:
        """Smallest planar distance between two nodes sharing a level."""
        best = math.inf
        for level in self.levels:
            pts = [(n.x, n.y) for n in self.nodes_on_level(level)]
            for i in range(len(pts)):
                for j in range(i + 1, len(pts)):
                    d = math.hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1])
                    best = min(best, d)
        return best


def neighbors(net: IndoorNetwork, node_id: str) -> set[str]:
    """Link-adjacent node ids; symmetric by construction."""
    if node_id not in net.nodes:
        raise NetworkError(f"unknown node id: {node_id!r}")
    return set(net._adjacency[node_id])


def hop_distances(net: IndoorNetwork, targets: Iterable[str]) -> dict[str, int]:
    """Breadth-first hop count from every node to the nearest of `targets`."""
    dist: dict[str, int] = {}
    queue: deque[str] = deque()
    for t in sorted(set(targets)):
        if t not in net.nodes:
            raise NetworkError(f"unknown node id: {t!r}")
        dist[t] = 0
        queue.append(t)
    while queue:
        cur = queue.popleft()
        for nbr in net._adjacency[cur]:
            if nbr not in dist:
                dist[nbr] = dist[cur] + 1
                queue.append(nbr)
    return dist


def shortest_path(net: IndoorNetwork, src: str, dst: str) -> list[str]:
    """Minimum-hop path from src to dst.

    Among equal-hop paths the lexicographically smallest next node is taken
    at every step, which makes the result deterministic.
    """
    if src not in net.nodes:
        raise NetworkError(f"unknown node id: {src!r}")
    if dst not in net.nodes:
        raise NetworkError(f"unknown node id: {dst!r}")
    if src == dst:
        return [src]
    dist = hop_distances(net, [dst])
    if src not in dist:
        raise NetworkError(f"no path from {src!r} to {dst!r}")
    path = [src]
    cur = src
    while cur != dst:
        cur = min(
            (nbr for nbr in net._adjacency[cur] if dist.get(nbr, math.inf) == dist[cur] - 1),
        )
        path.append(cur)
    return path


# -- numbering conventions ----------------------------------------------------


def validate_numbering(net: IndoorNetwork) -> list[str]:
    """Check label conventions; returns one message per violation.

    Rules: a purely numeric label's leading digit equals the node's level;
    staircase labels are a shaft letter followed by the level digit; on each
    level the odd- and even-numbered corridor nodes occupy disjoint y bands
    (one major corridor per parity). Exits and staircases are exempt from
    the parity rule.
    """
    violations: list[str] = []
    for node in sorted(net.nodes.values(), key=lambda n: n.id):
        if node.kind is NodeKind.STAIRCASE:
            body = node.id[1:]
            if node.id[0] not in STAIR_LETTERS or not body.isdigit():
                violations.append(
                    f"staircase {node.id!r}: label must be a shaft letter followed by the level digit"
                )
            elif body != str(node.level):
                violations.append(
                    f"staircase {node.id!r}: level digit {body} does not match level {node.level}"
                )
        elif node.id.isdigit():
            if not 1 <= node.level <= 9:
                violations.append(
                    f"node {node.id!r}: level {node.level} cannot be a single leading digit"
                )
            elif node.id[0] != str(node.level):
                violations.append(
                    f"node {node.id!r}: leading digit does not encode level {node.level}"
                )

    corridor_kinds = (NodeKind.CORRIDOR_JUNCTION, NodeKind.ROOM_ACCESS)
    for level in net.levels:
        bands: dict[int, list[float]] = {0: [], 1: []}
        for node in net.nodes_on_level(level):
            if node.kind in corridor_kinds and node.id.isdigit():
                bands[int(node.id) % 2].append(node.y)
        if bands[0] and bands[1]:
            lo0, hi0 = min(bands[0]), max(bands[0])
            lo1, hi1 = min(bands[1]), max(bands[1])
            if not (hi0 < lo1 or hi1 < lo0):
                violations.append(
                    f"level {level}: odd- and even-numbered corridor nodes overlap in y "
                    f"(odd band [{lo1:.2f}, {hi1:.2f}], even band [{lo0:.2f}, {hi0:.2f}])"
                )
    return violations


# -- document round trip -------------------------------------------------------


def build_network(doc: Mapping) -> IndoorNetwork:
    """Build and validate a network from a parsed description document.

    Expected shape: {"format": 1, "levels": [...], "nodes": [{id, level,
    kind, x, y}], "links": [{a, b, kind}]}.
    """
    fmt = doc.get("format")
    if fmt != FORMAT_VERSION:
        raise NetworkError(f"unsupported network format {fmt!r}, expected {FORMAT_VERSION}")
    for key in ("levels", "nodes", "links"):
        if key not in doc:
            raise NetworkError(f"missing field {key!r} in network document")
    try:
        nodes = [
            Node(
                id=str(n["id"]),
                level=int(n["level"]),
                kind=NodeKind(n["kind"]),
                x=float(n["x"]),
                y=float(n["y"]),
            )
            for n in doc["nodes"]
        ]
        links = [Link.make(str(l["a"]), str(l["b"]), LinkKind(l["kind"])) for l in doc["links"]]
    except (KeyError, ValueError, TypeError) as exc:
        raise NetworkError(f"malformed network document: {exc}") from exc
    return IndoorNetwork(nodes, links, doc["levels"])


def serialize(net: IndoorNetwork) -> dict:
    """Inverse of build_network: build_network(serialize(net)) == net."""
    return {
        "format": FORMAT_VERSION,
        "levels": list(net.levels),
        "nodes": [
            {"id": n.id, "level": n.level, "kind": n.kind.value, "x": n.x, "y": n.y}
            for n in sorted(net.nodes.values(), key=lambda n: n.id)
        ],
        "links": [{"a": l.a, "b": l.b, "kind": l.kind.value} for l in net.links],
    }


def describe(net: IndoorNetwork) -> dict:
    """Summary counts used by reporting and the command line."""
    kind_counts = {k.value: 0 for k in NodeKind}
    for node in net.nodes.values():
        kind_counts[node.kind.value] += 1
    link_counts = {k.value: 0 for k in LinkKind}
    for link in net.links:
        link_counts[link.kind.value] += 1
    per_level = {
        level: sum(1 for n in net.nodes.values() if n.level == level) for level in net.levels
    }
    return {
        "n_nodes": len(net.nodes),
        "n_links": len(net.links),
        "levels": list(net.levels),
        "nodes_per_level": per_level,
        "nodes_by_kind": kind_counts,
        "links_by_kind": link_counts,
    }
