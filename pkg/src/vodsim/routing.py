"""Request routing: chain join, local proxy, peer proxy, neighbour group, MMS."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from vodsim.chaining import AdmitKind, ChainNode, try_admit
from vodsim.ledger import Hop, hop
from vodsim.placement import PrefixPlan
from vodsim.topology import MMS, LinkClass, NodeId, NodeKind, proxy, tracker

if TYPE_CHECKING:
    from vodsim.simcore import Simulation

LC = LinkClass


class DecisionKind(str, enum.Enum):
    JOIN_CHAIN = "JOIN_CHAIN"
    NEW_STREAM_LOCAL = "NEW_STREAM_LOCAL"
    STREAM_PEER_PS = "STREAM_PEER_PS"
    STREAM_NEIGHBOR_LPSG = "STREAM_NEIGHBOR_LPSG"
    FETCH_MMS = "FETCH_MMS"
    REJECT = "REJECT"


PRIORITY = list(DecisionKind)
IN_LPSG = (DecisionKind.JOIN_CHAIN, DecisionKind.NEW_STREAM_LOCAL, DecisionKind.STREAM_PEER_PS)


@dataclass
class Segment:
    """Content range [start, end) minutes of the video and where it comes from.

    `hops` are the links between the source and the client's proxy; the final
    PS-CLIENT hop is added when the segment is bound to a client.
    """
    source: NodeId
    start: float
    end: float
    hops: tuple[Hop, ...] = ()

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def from_mms(self) -> bool:
        return self.source.kind is NodeKind.MMS


@dataclass
class ServiceDecision:
    kind: DecisionKind
    segments: list[Segment] = field(default_factory=list)
    startup_path: list[LinkClass] = field(default_factory=list)
    reason: str = ""
    parent: ChainNode | None = None
    sz_pref1_min: float = 0.0
    uncached: bool = False  # prefix-1 absent from the client's group: cache on miss

    @property
    def mms_minutes(self) -> float:
        return sum(s.length for s in self.segments if s.from_mms)


def lookup_pref1(tracker_db: PrefixPlan, video_id: int) -> NodeId | None:
    return tracker_db.lookup_pref1(video_id)


def client_requests(segments: list[Segment], client: NodeId, now: float,
                    offset: float = 0.0) -> list[tuple[tuple[Hop, ...], float, float]]:
    """Ledger requests for delivering `segments` to a client whose playback is at
    `offset` at time `now`. Segments before the offset are skipped or clipped."""
    ps = proxy(client.lpsg, client.ps)
    out = []
    for s in segments:
        a = max(s.start, offset)
        if a >= s.end:
            continue
        if s.source.is_client:
            hops = (hop(LC.CLIENT_CLIENT, s.source, client),)
        else:
            hops = s.hops + (hop(LC.PS_CLIENT, ps, client),)
        out.append((hops, now + (a - offset), now + (s.end - offset)))
    return out


def compose(duration: float, w1: float, pref1_src: NodeId, pref1_hops: tuple[Hop, ...],
            w2: float | None, pref2_src: NodeId | None, pref2_hops: tuple[Hop, ...],
            mms_hops: tuple[Hop, ...]) -> list[Segment]:
    """Prefix-1, optional prefix-2 and the MMS remainder, tiling [0, duration)."""
    segs = [Segment(pref1_src, 0.0, w1, pref1_hops)]
    cut = w1
    if w2 is not None and pref2_src is not None and w2 > 0:
        segs.append(Segment(pref2_src, w1, w1 + w2, pref2_hops))
        cut = w1 + w2
    if cut < duration:
        segs.append(Segment(MMS, cut, duration, mms_hops))
    return segs


def _candidates(sim: "Simulation", client: NodeId, video_id: int, now: float):
    """Yield candidate decisions in priority order, feasibility of bandwidth unchecked."""
    topo = sim.topology
    video = sim.videos[video_id]
    S = video.duration_min
    p = client.lpsg
    ps = proxy(p, client.ps)
    tr = tracker(p)
    plan = sim.plans[p]
    mms_hops = (hop(LC.MMS_TR, MMS, tr), hop(LC.TR_PS, tr, ps))

    if sim.config.baseline:
        yield ServiceDecision(DecisionKind.FETCH_MMS, [Segment(MMS, 0.0, S, mms_hops)],
                              [LC.MMS_TR, LC.TR_PS, LC.PS_CLIENT], sz_pref1_min=0.0)
        return

    entry = plan.get(video_id)
    # (1) join a chain at the client's proxy
    if sim.config.chaining:
        scl = sim.scl_entry(ps, video_id)
        if scl is not None and scl.is_streaming:
            adm = try_admit(scl, client, now, sim.config.lac_d, commit=False)
            if adm.kind is AdmitKind.JOIN:
                yield ServiceDecision(DecisionKind.JOIN_CHAIN,
                                      [Segment(adm.parent.client, 0.0, S)],
                                      [LC.CLIENT_CLIENT], parent=adm.parent,
                                      sz_pref1_min=scl.sz_pref1_min)

    host = entry.host_ps if entry else None
    tr_src = tr if entry and entry.host_tr is not None else None
    w2 = entry.w2_min if entry else None
    tr_hops = (hop(LC.TR_PS, tr, ps),)
    # (2) prefix-1 at the client's own proxy
    if host == ps:
        segs = compose(S, entry.w1_min, ps, (), w2, tr_src, tr_hops, mms_hops)
        yield ServiceDecision(DecisionKind.NEW_STREAM_LOCAL, segs, [LC.PS_CLIENT],
                              sz_pref1_min=entry.w1_min)
    # (3) prefix-1 on a peer proxy of the group, found through the tracker database
    elif host is not None:
        segs = compose(S, entry.w1_min, host, (hop(LC.PS_PS, host, ps),), w2, tr_src,
                       tr_hops, mms_hops)
        yield ServiceDecision(DecisionKind.STREAM_PEER_PS, segs,
                              [LC.TR_PS, LC.PS_PS, LC.PS_CLIENT], sz_pref1_min=entry.w1_min)
    # (4) ring-neighbour groups
    for nb in topo.tracker_neighbors(p):
        if nb == p:
            continue
        nplan = sim.plans[nb]
        ne = nplan.get(video_id)
        if ne is None or ne.host_ps is None:
            continue
        ntr = tracker(nb)
        tt = hop(LC.TR_TR, ntr, tr)
        tp = hop(LC.TR_PS, tr, ps)
        pref1_hops = (hop(LC.TR_PS, ntr, ne.host_ps), tt, tp)
        ntr_src = ntr if ne.host_tr is not None else None
        segs = compose(S, ne.w1_min, ne.host_ps, pref1_hops, ne.w2_min, ntr_src, (tt, tp), mms_hops)
        yield ServiceDecision(DecisionKind.STREAM_NEIGHBOR_LPSG, segs,
                              [LC.TR_TR, LC.TR_PS, LC.PS_PS, LC.PS_CLIENT],
                              sz_pref1_min=ne.w1_min)
    # (5) whole video from the main server
    x = sim.effective_x(p, video_id)
    yield ServiceDecision(DecisionKind.FETCH_MMS, [Segment(MMS, 0.0, S, mms_hops)],
                          [LC.MMS_TR, LC.TR_PS, LC.PS_CLIENT], sz_pref1_min=x * S,
                          uncached=host is None)


def route(sim: "Simulation", client: NodeId, video_id: int, now: float) -> ServiceDecision:
    """First candidate, in priority order, whose links the ledger can admit.

    Saturated candidates fall through to the next source; REJECT when none fits.
    Does not mutate simulation state.
    """
    if not sim.topology.contains(client) or not client.is_client:
        raise ValueError(f"unknown client {client}")
    if video_id not in sim.videos:
        raise ValueError(f"unknown video {video_id}")
    tried = []
    for cand in _candidates(sim, client, video_id, now):
        if sim.ledger.feasible(client_requests(cand.segments, client, now)):
            return cand
        tried.append(cand.kind.value)
    reason = "bandwidth" if tried else "no source"
    return ServiceDecision(DecisionKind.REJECT, reason=reason)
