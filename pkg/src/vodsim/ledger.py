"""Per-hop concurrent-stream reservations over simulated time intervals."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from vodsim.topology import LinkClass, NodeId, Topology

Hop = tuple[LinkClass, NodeId, NodeId]


def hop(link: LinkClass, a: NodeId, b: NodeId) -> Hop:
    """Undirected link key."""
    return (link, a, b) if a <= b else (link, b, a)


def hop_str(h: Hop) -> str:
    return f"{h[0].value}:{h[1]}~{h[2]}"


@dataclass(eq=False)
class Reservation:
    rid: int
    hops: tuple[Hop, ...]
    start: float
    end: float
    released: bool = False


def peak_overlap(intervals: Iterable[tuple[float, float]], lo: float = -math.inf,
                 hi: float = math.inf) -> int:
    """Max number of half-open intervals covering one instant inside [lo, hi)."""
    events = []
    for s, e in intervals:
        s, e = max(s, lo), min(e, hi)
        if s < e:
            events.append((s, 1))
            events.append((e, -1))
    events.sort()  # at equal times ends (-1) sort before starts (+1)
    best = cur = 0
    for _, d in events:
        cur += d
        best = max(best, cur)
    return best


class BandwidthLedger:
    """All-or-nothing interval reservations; each hop admits at most its link
    class capacity of simultaneous streams."""

    def __init__(self, topology: Topology, unlimited: bool = False):
        self.topology = topology
        self.unlimited = unlimited
        self._ids = itertools.count()
        self._by_hop: dict[Hop, list[Reservation]] = {}
        self.history: list[Reservation] = []

    def capacity(self, h: Hop) -> float:
        return math.inf if self.unlimited else self.topology.links[h[0]].capacity

    def _fits(self, h: Hop, start: float, end: float, extra: Sequence[tuple[float, float]] = ()) -> bool:
        cap = self.capacity(h)
        if cap == math.inf:
            return True
        if cap <= 0:
            return False
        live = [(r.start, r.end) for r in self._by_hop.get(h, ()) if r.end > start and r.start < end]
        live.extend(extra)
        if len(live) < cap:
            return True
        return peak_overlap(live, start, end) + 1 <= cap

    def feasible(self, requests: Sequence[tuple[Sequence[Hop], float, float]]) -> bool:
        """Whether every (hops, start, end) request could be reserved together."""
        pending: dict[Hop, list[tuple[float, float]]] = {}
        for hops, start, end in requests:
            if end <= start:
                continue
            for h in hops:
                if not self._fits(h, start, end, pending.get(h, ())):
                    return False
            for h in hops:
                pending.setdefault(h, []).append((start, end))
        return True

    def reserve(self, hops: Sequence[Hop], start: float, end: float) -> Reservation | None:
        if not self.feasible([(hops, start, end)]):
            return None
        return self._add(hops, start, end)

    def reserve_all(self, requests: Sequence[tuple[Sequence[Hop], float, float]]) -> list[Reservation] | None:
        if not self.feasible(requests):
            return None
        return [self._add(h, s, e) for h, s, e in requests if e > s]

    def _add(self, hops, start, end) -> Reservation:
        r = Reservation(next(self._ids), tuple(hops), start, end)
        for h in r.hops:
            self._by_hop.setdefault(h, []).append(r)
        self.history.append(r)
        return r

    def release(self, r: Reservation, at: float | None = None):
        """Release a reservation; with `at`, the link stays in use until then."""
        if r.released:
            return
        r.released = True
        if at is not None and at < r.end:
            r.end = max(at, r.start)
        if r.end <= r.start:
            for h in r.hops:
                self._by_hop[h].remove(r)

    def collect(self, now: float):
        """Forget finished, released reservations (bookkeeping only)."""
        for h, rs in self._by_hop.items():
            if rs:
                self._by_hop[h] = [r for r in rs if not (r.released and r.end <= now)]

    def open_reservations(self) -> list[Reservation]:
        return [r for r in self.history if not r.released]

    def reserved(self, h: Hop, t: float) -> int:
        return sum(1 for r in self.history if h in r.hops and r.start <= t < r.end)

    def replay_peaks(self) -> dict[Hop, int]:
        """Peak concurrent streams per hop over the whole history."""
        per: dict[Hop, list[tuple[float, float]]] = {}
        for r in self.history:
            for h in r.hops:
                per.setdefault(h, []).append((r.start, r.end))
        return {h: peak_overlap(iv) for h, iv in per.items()}
