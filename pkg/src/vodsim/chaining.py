"""Streaming-clients list (SCL) bookkeeping and the client chain state machine.

A chain is a linear sequence of clients watching the same video behind one proxy.
The head is fed by the proxy; every other member is fed by its parent client's
buffer. Chain members are identified by client id; the simulator additionally
tags each node with a session id.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from vodsim.topology import NodeId


class NodeState(str, enum.Enum):
    STREAMING = "STREAMING"
    DRAINING = "DRAINING"  # playback finished, still feeding its child
    CLOSED = "CLOSED"
    FAILED = "FAILED"


ACTIVE = (NodeState.STREAMING, NodeState.DRAINING)


@dataclass(eq=False)
class ChainNode:
    client: NodeId
    arrival_min: float
    parent: "ChainNode | None" = None  # None: fed by the proxy
    child: "ChainNode | None" = None
    state: NodeState = NodeState.STREAMING
    sid: int | None = None
    failed_at: float | None = None

    @property
    def active(self) -> bool:
        return self.state in ACTIVE

    def __repr__(self):
        return f"ChainNode({self.client}, t={self.arrival_min:g}, {self.state.value})"


@dataclass(eq=False)
class SclEntry:
    video_id: int
    sz_pref1_min: float
    ps: NodeId | None = None
    chain: list[ChainNode] = field(default_factory=list)

    @property
    def is_streaming(self) -> bool:
        return any(n.active for n in self.chain)

    def active_nodes(self) -> list[ChainNode]:
        return [n for n in self.chain if n.active]

    def clients(self) -> list[NodeId]:
        """The client list as the proxy sees it (failed-but-undetected nodes included)."""
        return [n.client for n in self.chain]

    def find(self, client: NodeId, states=None) -> ChainNode:
        states = states or (NodeState.STREAMING, NodeState.DRAINING, NodeState.FAILED)
        for n in reversed(self.chain):
            if n.client == client and n.state in states:
                return n
        raise ValueError(f"{client} is not in the chain of video {self.video_id}")

    def node(self, client_or_node) -> ChainNode:
        if isinstance(client_or_node, ChainNode):
            if client_or_node not in self.chain:
                raise ValueError(f"{client_or_node!r} is not in the chain of video {self.video_id}")
            return client_or_node
        return self.find(client_or_node)

    def parent_of(self, node: ChainNode) -> NodeId | None:
        """Parent as a node id: a client, or the entry's proxy for the head."""
        return node.parent.client if node.parent is not None else self.ps

    def format(self) -> str:
        clients = ",".join(str(n.client) for n in self.chain)
        return f"<{self.video_id} - {self.sz_pref1_min:g} - {clients}>"


class AdmitKind(str, enum.Enum):
    JOIN = "JOIN"
    NEW_STREAM = "NEW_STREAM"


@dataclass
class Admission:
    kind: AdmitKind
    node: ChainNode | None = None
    parent: ChainNode | None = None
    lac: list[ChainNode] = field(default_factory=list)


def build_lac(entry: SclEntry | None, d: int) -> list[ChainNode]:
    """Last min(d, n) streaming members in arrival order; the designated parent is last.

    Draining members keep feeding their current child but are not offered to new
    clients.
    """
    if entry is None or d <= 0:
        return []
    streaming = [n for n in entry.chain if n.state is NodeState.STREAMING]
    return streaming[-d:]


def most_recent_active(entry: SclEntry) -> ChainNode | None:
    for n in reversed(entry.chain):
        if n.active:
            return n
    return None


def try_admit(entry: SclEntry | None, client: NodeId, now_min: float, d: int,
              sid: int | None = None, commit: bool = True) -> Admission:
    """Chain admission: join behind the most recent member if it arrived within
    sz(pref-1) minutes, otherwise the caller starts a new stream.

    With commit=False the chain is left untouched (feasibility probe).
    """
    if entry is None or not entry.is_streaming:
        return Admission(AdmitKind.NEW_STREAM)
    if any(n.client == client and n.state is NodeState.STREAMING for n in entry.chain):
        raise ValueError(f"{client} is already streaming video {entry.video_id}")
    last = most_recent_active(entry)
    if now_min < last.arrival_min:
        raise ValueError("admission time precedes the chain tail")
    if last.state is not NodeState.STREAMING or now_min - last.arrival_min > entry.sz_pref1_min:
        return Admission(AdmitKind.NEW_STREAM)
    lac = build_lac(entry, d)
    if not commit:
        return Admission(AdmitKind.JOIN, None, last, lac)
    node = ChainNode(client, now_min, parent=last, sid=sid)
    last.child = node
    entry.chain.append(node)
    return Admission(AdmitKind.JOIN, node, last, lac)


def start_chain(entry: SclEntry, client: NodeId, now_min: float, sid: int | None = None) -> ChainNode:
    """Register a proxy-fed client (a new stream) in the SCL entry."""
    node = ChainNode(client, now_min, parent=None, sid=sid)
    entry.chain.append(node)
    return node


def _detach(entry: SclEntry, node: ChainNode, closed: list[ChainNode]):
    """Remove a node from the SCL; close draining ancestors left without a child."""
    if node in entry.chain:
        entry.chain.remove(node)
    parent = node.parent
    if parent is not None and parent.child is node:
        parent.child = None
        if parent.state is NodeState.DRAINING:
            parent.state = NodeState.CLOSED
            closed.append(parent)
            _detach(entry, parent, closed)


def _active_child(node: ChainNode) -> ChainNode | None:
    c = node.child
    if c is not None and c.active and c.parent is node:
        return c
    return None


def close_finished(entry: SclEntry, client) -> list[ChainNode]:
    """Playback of `client` is complete.

    Returns the nodes that reached CLOSED (possibly none, when the client drains
    into its child; possibly several, when draining ancestors cascade).
    """
    node = entry.node(client) if isinstance(client, ChainNode) else entry.find(client, (NodeState.STREAMING,))
    if node.state is not NodeState.STREAMING:
        raise ValueError(f"{node!r} is not streaming")
    if _active_child(node) is not None:
        node.state = NodeState.DRAINING
        return []
    node.state = NodeState.CLOSED
    closed = [node]
    _detach(entry, node, closed)
    return closed


class SpliceKind(str, enum.Enum):
    CLOSED = "CLOSED"
    SPLICED = "SPLICED"
    RESTREAM = "RESTREAM"


@dataclass
class SpliceResult:
    kind: SpliceKind
    leaver: ChainNode
    child: ChainNode | None = None
    new_parent: ChainNode | None = None  # None with RESTREAM: the proxy feeds the child
    gap_min: float | None = None
    closed: list[ChainNode] = field(default_factory=list)


def close_early(entry: SclEntry, client) -> SpliceResult:
    """A streaming client leaves mid-video.

    Its child is spliced onto the leaver's parent when their arrival gap is within
    sz(pref-1) (the parent still buffers what the child needs); otherwise the proxy
    must restream to the child. A head's child always needs the proxy.
    """
    node = entry.node(client) if isinstance(client, ChainNode) else entry.find(client, (NodeState.STREAMING,))
    if node.state is not NodeState.STREAMING:
        raise ValueError(f"{node!r} is not streaming")
    child = _active_child(node)
    parent = node.parent
    node.state = NodeState.CLOSED
    if child is None:
        closed = [node]
        _detach(entry, node, closed)
        return SpliceResult(SpliceKind.CLOSED, node, closed=closed)

    entry.chain.remove(node)
    node.child = None
    if parent is not None and parent.active:
        gap = abs(child.arrival_min - parent.arrival_min)
        if gap <= entry.sz_pref1_min:
            parent.child = child
            child.parent = parent
            return SpliceResult(SpliceKind.SPLICED, node, child, parent, gap, closed=[node])
    else:
        gap = None
    closed = [node]
    if parent is not None and parent.child is node:
        parent.child = None
        if parent.state is NodeState.DRAINING:
            parent.state = NodeState.CLOSED
            closed.append(parent)
            _detach(entry, parent, closed)
    child.parent = None
    return SpliceResult(SpliceKind.RESTREAM, node, child, None, gap, closed=closed)


def mark_failed(entry: SclEntry, client, now_min: float) -> ChainNode:
    """The node stops sending and receiving. It stays listed until its child detects it."""
    node = entry.node(client)
    if not node.active:
        raise ValueError(f"{node!r} cannot fail in state {node.state.value}")
    node.state = NodeState.FAILED
    node.failed_at = now_min
    return node


@dataclass
class RecoveryRecord:
    failed: ChainNode
    child: ChainNode | None
    new_parent: ChainNode | None  # None: the proxy becomes the child's source
    failed_at: float
    detected_at: float
    stall_sec: float
    closed: list[ChainNode] = field(default_factory=list)


def detect_and_recover_failure(entry: SclEntry, failed, now_min: float, g_sec: float) -> RecoveryRecord:
    """Re-parent the failed node's child onto the nearest live ancestor and drop the
    failed node from the SCL.

    If `failed` is still active it is marked failed at `now_min`; detection is then
    due g seconds later. The child's stall equals the detection timeout.
    """
    node = entry.node(failed)
    if node.active:
        mark_failed(entry, node, now_min)
    elif node.state is not NodeState.FAILED:
        raise ValueError(f"{node!r} has not failed")
    child = node.child if (node.child is not None and node.child.parent is node
                           and node.child.active) else None
    anc = node.parent
    while anc is not None and not anc.active:
        anc = anc.parent
    closed: list[ChainNode] = []
    entry.chain.remove(node)
    if node.parent is not None and node.parent.child is node:
        node.parent.child = None
    node.child = None
    if child is not None:
        child.parent = anc
        if anc is not None:
            anc.child = child
    elif anc is not None and anc.state is NodeState.DRAINING and _active_child(anc) is None:
        anc.state = NodeState.CLOSED
        closed.append(anc)
        _detach(entry, anc, closed)
    return RecoveryRecord(node, child, anc, node.failed_at, node.failed_at + g_sec / 60.0,
                          float(g_sec), closed)


def check_linear(entry: SclEntry):
    """Every active node has at most one active child and parent, parents arrived
    earlier, and parent links reach the proxy without cycles."""
    members = set(map(id, entry.chain))
    children = {}
    for n in entry.chain:
        if not n.active:
            continue
        seen = set()
        cur = n
        while cur is not None:
            if id(cur) in seen:
                raise AssertionError(f"cycle in chain of video {entry.video_id}")
            seen.add(id(cur))
            cur = cur.parent
        p = n.parent
        if p is not None:
            if id(p) not in members:
                raise AssertionError(f"{n!r} has a parent outside the SCL")
            if p.arrival_min > n.arrival_min:
                raise AssertionError(f"{n!r} arrived before its parent {p!r}")
            if p.active:
                if p.child is not n:
                    raise AssertionError(f"{p!r} does not point back at {n!r}")
                if id(p) in children:
                    raise AssertionError(f"{p!r} feeds two children")
                children[id(p)] = n
    if entry.is_streaming != bool(entry.active_nodes()):
        raise AssertionError("IS-STREAMING flag out of sync")
