"""Video distribution manager: prefix placement and eviction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from vodsim.catalog import PopularityEstimate, Video, X_MAX, prefix_sizes, scaled_x
from vodsim.topology import NodeId, NodeKind, Topology

EPS = 1e-9


@dataclass
class NodeCache:
    capacity_min: float
    contents: dict[int, float] = field(default_factory=dict)
    pins: dict[int, int] = field(default_factory=dict)

    @property
    def used_min(self) -> float:
        return sum(self.contents.values())

    @property
    def free_min(self) -> float:
        return self.capacity_min - self.used_min

    def fits(self, minutes: float) -> bool:
        return minutes <= self.free_min + EPS

    def pinned(self, video_id: int) -> bool:
        return self.pins.get(video_id, 0) > 0


class CacheState:
    """Per-node prefix storage (PS holds prefix-1, TR holds prefix-2)."""

    def __init__(self, nodes: dict[NodeId, NodeCache]):
        self.nodes = nodes

    @classmethod
    def for_topology(cls, topology: Topology, ps_capacity_min: float,
                     tr_capacity_min: float) -> "CacheState":
        nodes = {ps: NodeCache(ps_capacity_min) for ps in topology.proxies()}
        nodes.update({tr: NodeCache(tr_capacity_min) for tr in topology.trackers()})
        return cls(nodes)

    def __getitem__(self, node: NodeId) -> NodeCache:
        return self.nodes[node]

    def holds(self, node: NodeId, video_id: int) -> bool:
        return video_id in self.nodes[node].contents

    def add(self, node: NodeId, video_id: int, minutes: float):
        nc = self.nodes[node]
        if video_id in nc.contents:
            raise ValueError(f"{node} already caches video {video_id}")
        if not nc.fits(minutes):
            raise ValueError(f"{node}: {minutes:.3f} min does not fit in {nc.free_min:.3f}")
        nc.contents[video_id] = minutes

    def remove(self, node: NodeId, video_id: int):
        nc = self.nodes[node]
        if nc.pinned(video_id):
            raise ValueError(f"{node}: video {video_id} is pinned by a stream")
        del nc.contents[video_id]

    def pin(self, node: NodeId, video_id: int):
        nc = self.nodes[node]
        nc.pins[video_id] = nc.pins.get(video_id, 0) + 1

    def unpin(self, node: NodeId, video_id: int):
        nc = self.nodes[node]
        n = nc.pins.get(video_id, 0)
        if n <= 0:
            raise ValueError(f"{node}: unpin of unpinned video {video_id}")
        if n == 1:
            del nc.pins[video_id]
        else:
            nc.pins[video_id] = n - 1

    def check(self):
        for node, nc in self.nodes.items():
            if nc.used_min > nc.capacity_min + 1e-6:
                raise AssertionError(f"{node} over capacity: {nc.used_min} > {nc.capacity_min}")
            for v, n in nc.pins.items():
                if n > 0 and v not in nc.contents:
                    raise AssertionError(f"{node}: pin on uncached video {v}")


@dataclass
class PlanEntry:
    w1_min: float
    w2_min: float
    host_ps: NodeId | None = None
    host_tr: NodeId | None = None

    @property
    def empty(self) -> bool:
        return self.host_ps is None and self.host_tr is None


class PrefixPlan:
    """Tracker database of one LPSG: which PS holds prefix-1 of each video,
    and whether the tracker holds prefix-2."""

    def __init__(self, lpsg: int):
        self.lpsg = lpsg
        self.entries: dict[int, PlanEntry] = {}

    def __contains__(self, video_id: int) -> bool:
        return video_id in self.entries

    def get(self, video_id: int) -> PlanEntry | None:
        return self.entries.get(video_id)

    def lookup_pref1(self, video_id: int) -> NodeId | None:
        e = self.entries.get(video_id)
        return e.host_ps if e else None

    def has_pref2(self, video_id: int) -> bool:
        e = self.entries.get(video_id)
        return e is not None and e.host_tr is not None

    def drop(self, node: NodeId, video_id: int):
        e = self.entries[video_id]
        if node.kind is NodeKind.PS:
            e.host_ps = None
        else:
            e.host_tr = None
        if e.empty:
            del self.entries[video_id]

    def cached_pref1(self) -> dict[int, NodeId]:
        return {v: e.host_ps for v, e in self.entries.items() if e.host_ps is not None}


def distribute_videos(catalog: Sequence[Video], popularity: PopularityEstimate,
                      topology: Topology, cache: CacheState, lpsg: int = 0,
                      x_scale: float = 1.0, x_max: float = X_MAX) -> PrefixPlan:
    """Greedy placement in descending popularity.

    prefix-1 goes to the PS of the group with the most free space (lowest index on
    ties) if it fits there; prefix-2 goes to the tracker if it fits. Videos that do
    not fit stay uncached and are served from the MMS.
    """
    plan = PrefixPlan(lpsg)
    videos = {v.id: v for v in catalog}
    tr = topology.trackers()[lpsg]
    proxies = topology.proxies(lpsg)
    for vid in popularity.ranked():
        if vid not in videos:
            continue
        x = scaled_x(popularity[vid], x_scale, x_max)
        w1, w2 = prefix_sizes(x, videos[vid].duration_min)
        entry = PlanEntry(w1, w2)
        best = max(proxies, key=lambda ps: (cache[ps].free_min, -ps.ps))
        if cache[best].fits(w1):
            cache.add(best, vid, w1)
            entry.host_ps = best
        if cache[tr].fits(w2):
            cache.add(tr, vid, w2)
            entry.host_tr = tr
        if not entry.empty:
            plan.entries[vid] = entry
    return plan


def make_room(cache: CacheState, node: NodeId, needed_min: float,
              popularity: PopularityEstimate, below_x: float | None = None) -> list[int] | None:
    """Evict least-popular unpinned prefixes on `node` until `needed_min` is free.

    With `below_x`, only prefixes strictly less popular than that are eligible, so a
    request never displaces more popular content. Returns the evicted ids, or None
    (cache untouched) when enough space cannot be freed.
    """
    if needed_min < 0:
        raise ValueError("needed_min must be >= 0")
    nc = cache[node]
    if nc.fits(needed_min):
        return []

    def x_of(v):
        return popularity.x.get(v, 0.0)

    candidates = sorted((v for v in nc.contents if not nc.pinned(v)
                         and (below_x is None or x_of(v) < below_x)),
                        key=lambda v: (x_of(v), popularity.count(v), -v))
    free = nc.free_min
    chosen = []
    for v in candidates:
        if needed_min <= free + EPS:
            break
        chosen.append(v)
        free += nc.contents[v]
    if needed_min > free + EPS:
        return None
    for v in chosen:
        cache.remove(node, v)
    return chosen


def cache_on_miss(plan: PrefixPlan, cache: CacheState, video: Video, x: float,
                  ps: NodeId, tr: NodeId, popularity: PopularityEstimate) -> list[tuple[NodeId, int]]:
    """Cache prefix-1 at the requester's PS and prefix-2 at the tracker after an MMS fetch.

    Either half may fail independently. If the tracker already holds a prefix-2 for
    the video, the existing sizes are kept so the two halves stay contiguous.
    Returns the (node, video) evictions performed so callers can update other
    tracker databases.
    """
    entry = plan.get(video.id)
    if entry is not None and entry.host_ps is not None:
        raise ValueError(f"video {video.id} already has prefix-1 in LPSG {plan.lpsg}")
    if entry is None:
        w1, w2 = prefix_sizes(x, video.duration_min)
        entry = PlanEntry(w1, w2)
    evicted: list[tuple[NodeId, int]] = []

    def place(node: NodeId, minutes: float) -> bool:
        gone = make_room(cache, node, minutes, popularity, below_x=x)
        if gone is None:
            return False
        for v in gone:
            plan.drop(node, v)
            evicted.append((node, v))
        cache.add(node, video.id, minutes)
        return True

    if place(ps, entry.w1_min):
        entry.host_ps = ps
    if entry.host_tr is None and place(tr, entry.w2_min):
        entry.host_tr = tr
    if not entry.empty:
        plan.entries[video.id] = entry
    return evicted
