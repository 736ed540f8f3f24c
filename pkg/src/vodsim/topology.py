"""MMS / tracker ring / proxy ring / client hierarchy."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping


class NodeKind(str, enum.Enum):
    MMS = "MMS"
    TR = "TR"
    PS = "PS"
    CLIENT = "C"


class LinkClass(str, enum.Enum):
    PS_CLIENT = "PS-CLIENT"
    CLIENT_CLIENT = "CLIENT-CLIENT"
    TR_PS = "TR-PS"
    PS_PS = "PS-PS"
    TR_TR = "TR-TR"
    MMS_TR = "MMS-TR"


@dataclass(frozen=True, order=True)
class NodeId:
    kind: NodeKind
    lpsg: int = -1
    ps: int = -1
    client: int = -1

    def __str__(self):
        if self.kind is NodeKind.MMS:
            return "MMS"
        if self.kind is NodeKind.TR:
            return f"TR{self.lpsg}"
        if self.kind is NodeKind.PS:
            return f"PS{self.lpsg}.{self.ps}"
        return f"C{self.lpsg}.{self.ps}.{self.client}"

    @property
    def is_client(self) -> bool:
        return self.kind is NodeKind.CLIENT


MMS = NodeId(NodeKind.MMS)


def tracker(p: int) -> NodeId:
    return NodeId(NodeKind.TR, p)


def proxy(p: int, q: int) -> NodeId:
    return NodeId(NodeKind.PS, p, q)


def client(p: int, q: int, c: int) -> NodeId:
    return NodeId(NodeKind.CLIENT, p, q, c)


@dataclass(frozen=True)
class LinkSpec:
    delay_ms: float
    capacity: int

    def __post_init__(self):
        if self.delay_ms < 0:
            raise ValueError("delay_ms must be >= 0")
        if self.capacity < 0:
            # capacity 0 is allowed for forced-saturation scenarios
            raise ValueError("capacity must be >= 0")


DEFAULT_DELAYS_MS = {
    LinkClass.PS_CLIENT: 100.0,
    LinkClass.CLIENT_CLIENT: 100.0,
    LinkClass.TR_PS: 100.0,
    LinkClass.PS_PS: 100.0,
    LinkClass.TR_TR: 300.0,
    LinkClass.MMS_TR: 1200.0,
}

DEFAULT_CAPACITIES = {
    LinkClass.PS_CLIENT: 200,
    LinkClass.CLIENT_CLIENT: 4,
    LinkClass.TR_PS: 50,
    LinkClass.PS_PS: 50,
    LinkClass.TR_TR: 30,
    LinkClass.MMS_TR: 30,
}


def default_link_table() -> dict[LinkClass, LinkSpec]:
    return {lc: LinkSpec(DEFAULT_DELAYS_MS[lc], DEFAULT_CAPACITIES[lc]) for lc in LinkClass}


@dataclass(frozen=True)
class Topology:
    j_lpsgs: int
    ps_per_lpsg: int
    clients_per_ps: int
    links: Mapping[LinkClass, LinkSpec] = field(default_factory=default_link_table)

    @property
    def n_nodes(self) -> int:
        j, m, c = self.j_lpsgs, self.ps_per_lpsg, self.clients_per_ps
        return 1 + j + j * m + j * m * c

    def nodes(self) -> Iterable[NodeId]:
        yield MMS
        for p in range(self.j_lpsgs):
            yield tracker(p)
        for p in range(self.j_lpsgs):
            for q in range(self.ps_per_lpsg):
                yield proxy(p, q)
        for p in range(self.j_lpsgs):
            for q in range(self.ps_per_lpsg):
                for c in range(self.clients_per_ps):
                    yield client(p, q, c)

    def trackers(self) -> list[NodeId]:
        return [tracker(p) for p in range(self.j_lpsgs)]

    def proxies(self, p: int | None = None) -> list[NodeId]:
        groups = range(self.j_lpsgs) if p is None else [p]
        return [proxy(g, q) for g in groups for q in range(self.ps_per_lpsg)]

    def clients_of(self, ps: NodeId) -> list[NodeId]:
        return [client(ps.lpsg, ps.ps, c) for c in range(self.clients_per_ps)]

    def contains(self, node: NodeId) -> bool:
        if node.kind is NodeKind.MMS:
            return True
        if not 0 <= node.lpsg < self.j_lpsgs:
            return False
        if node.kind is NodeKind.TR:
            return True
        if not 0 <= node.ps < self.ps_per_lpsg:
            return False
        return node.kind is NodeKind.PS or 0 <= node.client < self.clients_per_ps

    # ring structure
    def next_tracker(self, p: int) -> int:
        return (p + 1) % self.j_lpsgs

    def next_proxy(self, ps: NodeId) -> NodeId:
        return proxy(ps.lpsg, (ps.ps + 1) % self.ps_per_lpsg)

    def tracker_neighbors(self, p: int) -> list[int]:
        """Left and right ring neighbours of tracker p, deduplicated, lower index first.

        Both neighbours are one TR-TR hop away, so the ordering is by index.
        """
        j = self.j_lpsgs
        return sorted({(p - 1) % j, (p + 1) % j})

    def proxy_neighbors(self, ps: NodeId) -> list[NodeId]:
        m = self.ps_per_lpsg
        return [proxy(ps.lpsg, q) for q in sorted({(ps.ps - 1) % m, (ps.ps + 1) % m})]

    # parent maps
    def parent(self, node: NodeId) -> NodeId | None:
        if node.kind is NodeKind.CLIENT:
            return proxy(node.lpsg, node.ps)
        if node.kind is NodeKind.PS:
            return tracker(node.lpsg)
        if node.kind is NodeKind.TR:
            return MMS
        return None

    def spec(self, link: LinkClass) -> LinkSpec:
        return self.links[link]

    def path_delay(self, hops: Iterable[LinkClass]) -> float:
        return path_delay(self, hops)


def build_topology(j_lpsgs: int, ps_per_lpsg: int, clients_per_ps: int,
                   link_table: Mapping[LinkClass, LinkSpec] | None = None) -> Topology:
    for name, value in (("j_lpsgs", j_lpsgs), ("ps_per_lpsg", ps_per_lpsg),
                        ("clients_per_ps", clients_per_ps)):
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    links = default_link_table()
    if link_table:
        missing = set(LinkClass) - set(link_table) - set(links)
        assert not missing
        links.update(link_table)
    return Topology(j_lpsgs, ps_per_lpsg, clients_per_ps, links)


def path_delay(topology: Topology, hops: Iterable[LinkClass]) -> float:
    """One-way setup delay of a path, in milliseconds."""
    return float(sum(topology.links[h].delay_ms for h in hops))
