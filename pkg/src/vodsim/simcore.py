"""Deterministic discrete-event engine.

One event loop per run. Time is in fractional simulated minutes; link delays
are milliseconds and only feed the waiting-time metric.
"""
from __future__ import annotations

import enum
import heapq
import itertools
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Sequence

import numpy as np

from vodsim import chaining as ch
from vodsim.catalog import (PopularityEstimate, Video, X_MAX, X_MIN, estimate_popularity,
                            make_catalog, scaled_x, zipf_pmf)
from vodsim.ledger import BandwidthLedger, Reservation, hop, hop_str
from vodsim.metrics import Accumulators, MetricsReport, finalize
from vodsim.placement import CacheState, PrefixPlan, cache_on_miss, distribute_videos
from vodsim.routing import (DecisionKind, Segment, ServiceDecision, client_requests, route)
from vodsim.topology import (MMS, LinkClass, LinkSpec, NodeId, NodeKind, Topology,
                             build_topology, proxy, tracker, DEFAULT_CAPACITIES,
                             DEFAULT_DELAYS_MS)


class InvariantViolation(RuntimeError):
    pass


# streams used to derive independent generators from one seed
_CATALOG, _ARRIVALS, _WARMUP, _BEHAVIOUR = range(4)


@dataclass
class RunConfig:
    seed: int = 7
    duration_min: float = 600.0
    max_arrivals: int | None = 320
    rate_per_hour: float = 44.0  # per proxy
    n_videos: int = 5
    min_video_min: float = 120.0
    max_video_min: float = 180.0
    playback_rate: float = 200.0
    zipf_exponent: float = 0.73
    window_min: float = 60.0
    x_min: float = X_MIN
    x_max: float = X_MAX
    x_scale: float = 1.0
    lac_d: int = 4
    g_sec: float = 5.0
    early_depart_prob: float = 0.05
    failure_rate_per_hour: float = 0.01  # per client
    chaining: bool = True
    baseline: bool = False  # no-proxy: every request streamed whole from the MMS
    j_lpsgs: int = 6
    ps_per_lpsg: int = 6
    clients_per_ps: int = 25
    c_mms_min: float = 1000.0
    tr_ratio: float = 0.4
    ps_ratio: float = 0.2
    capacities: dict = field(default_factory=lambda: {k.value: v for k, v in DEFAULT_CAPACITIES.items()})
    delays_ms: dict = field(default_factory=lambda: {k.value: v for k, v in DEFAULT_DELAYS_MS.items()})
    warmup: bool = True
    check_invariants: bool = True

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise ValueError(msg)
        need(self.duration_min > 0, "duration_min must be > 0")
        need(self.rate_per_hour >= 0, "rate_per_hour must be >= 0")
        need(self.failure_rate_per_hour >= 0, "failure_rate_per_hour must be >= 0")
        need(0 <= self.early_depart_prob <= 1, "early_depart_prob must be in [0, 1]")
        need(self.max_arrivals is None or self.max_arrivals >= 0, "max_arrivals must be >= 0")
        need(self.n_videos >= 1, "n_videos must be >= 1")
        need(0 < self.min_video_min <= self.max_video_min, "video duration range invalid")
        need(self.playback_rate > 0, "playback_rate must be > 0")
        need(self.zipf_exponent >= 0, "zipf_exponent must be >= 0")
        need(self.window_min > 0, "window_min must be > 0")
        need(0 < self.x_min <= self.x_max < 1, "need 0 < x_min <= x_max < 1")
        need(self.x_scale > 0, "x_scale must be > 0")
        need(self.lac_d >= 1, "lac_d must be >= 1")
        need(self.g_sec >= 0, "g_sec must be >= 0")
        for name in ("j_lpsgs", "ps_per_lpsg", "clients_per_ps"):
            need(getattr(self, name) >= 1, f"{name} must be >= 1")
        need(self.c_mms_min >= 0 and self.tr_ratio >= 0 and self.ps_ratio >= 0,
             "cache sizes must be >= 0")
        names = {lc.value for lc in LinkClass}
        for k, v in self.capacities.items():
            need(k in names, f"unknown link class {k!r}")
            need(int(v) == v and v >= 0, f"capacity of {k} must be a non-negative integer")
        for k, v in self.delays_ms.items():
            need(k in names, f"unknown link class {k!r}")
            need(v >= 0, f"delay of {k} must be >= 0")
        return self

    @property
    def ps_capacity_min(self) -> float:
        return self.ps_ratio * self.c_mms_min

    @property
    def tr_capacity_min(self) -> float:
        return self.tr_ratio * self.c_mms_min

    def topology(self) -> Topology:
        links = {}
        for lc in LinkClass:
            links[lc] = LinkSpec(float(self.delays_ms.get(lc.value, DEFAULT_DELAYS_MS[lc])),
                                 int(self.capacities.get(lc.value, DEFAULT_CAPACITIES[lc])))
        return build_topology(self.j_lpsgs, self.ps_per_lpsg, self.clients_per_ps, links)

    def evolve(self, **kw) -> "RunConfig":
        return replace(self, **kw)


class EventKind(str, enum.Enum):
    ARRIVAL = "ARRIVAL"
    STREAM_SEGMENT_END = "STREAM_SEGMENT_END"
    PLAYBACK_END = "PLAYBACK_END"
    EARLY_DEPART = "EARLY_DEPART"
    FAIL = "FAIL"
    FAIL_DETECT = "FAIL_DETECT"
    POPULARITY_TICK = "POPULARITY_TICK"


@dataclass(order=True)
class Event:
    time_min: float
    seq: int
    kind: EventKind = field(compare=False)
    node: NodeId | None = field(default=None, compare=False)
    video: int | None = field(default=None, compare=False)
    data: dict = field(default_factory=dict, compare=False)


def gen_arrivals(seed: int, rate_per_hour: float, duration_min: float, zipf: Sequence[float],
                 topology: Topology, start_min: float = 0.0, stream: int = _ARRIVALS) -> list[Event]:
    """Independent Poisson request processes, one per proxy.

    Each arrival picks a uniformly random client of that proxy and a video drawn
    from `zipf` (probabilities by video id). Events come back time-ordered with
    seq numbers 0..n-1.
    """
    pmf = np.asarray(zipf, dtype=float)
    out = []
    if rate_per_hour <= 0:
        return out
    mean_gap = 60.0 / rate_per_hour
    end = start_min + duration_min
    for ps in topology.proxies():
        rng = np.random.default_rng([seed, stream, ps.lpsg, ps.ps])
        t = start_min
        while True:
            gaps = rng.exponential(mean_gap, size=64)
            stop = False
            for g in gaps:
                t += g
                if t > end:
                    stop = True
                    break
                c = int(rng.integers(topology.clients_per_ps))
                v = int(rng.choice(len(pmf), p=pmf))
                out.append((t, ps.lpsg, ps.ps, c, v))
            if stop:
                break
    out.sort()
    return [Event(t, i, EventKind.ARRIVAL, NodeId(NodeKind.CLIENT, p, q, c), v)
            for i, (t, p, q, c, v) in enumerate(out)]


@dataclass(eq=False)
class Session:
    sid: int
    client: NodeId
    video: Video
    arrival: float
    kind: DecisionKind
    entry: ch.SclEntry
    node: ch.ChainNode
    root: list[Segment]
    feed: list[Segment] = field(default_factory=list)
    feed_from: float = 0.0
    reservations: list[Reservation] = field(default_factory=list)
    pins: dict[int, tuple[NodeId, int]] = field(default_factory=dict)
    intervals: list[tuple[str, float, float]] = field(default_factory=list)
    stall_min: float = 0.0
    limbo_since: float | None = None
    end_version: int = 0
    planned_end: float = 0.0
    status: str = "streaming"
    departed_early: bool = False

    @property
    def S(self) -> float:
        return self.video.duration_min

    def offset(self, t: float) -> float:
        """Playback position (content minutes) at time t."""
        if self.limbo_since is not None:
            t = self.limbo_since
        return min(max(t - self.arrival - self.stall_min, 0.0), self.S)

    def delivered(self) -> float:
        return sum(b - a for _, a, b in self.intervals)


@dataclass
class RunResult:
    report: MetricsReport
    trace: list[tuple]
    sim: "Simulation"

    def trace_lines(self) -> list[str]:
        return format_trace(self.trace)


def format_trace(trace: Iterable[tuple]) -> list[str]:
    lines = ["time_min,seq,kind,node,video,detail"]
    for t, seq, kind, node, video, detail in trace:
        lines.append(f"{t:.6f},{seq},{kind},{node},{'' if video is None else video},{detail}")
    return lines


class Simulation:
    """One run of the hierarchical VoD system.

    Build it, optionally script extra arrivals, failures or placements, then
    call run(). Generated arrivals come from the config's Poisson workload.
    """

    def __init__(self, config: RunConfig, catalog: Sequence[Video] | None = None,
                 generate: bool = True):
        self.config = config.validate()
        cfg = self.config
        self.topology = cfg.topology()
        if catalog is None:
            catalog = make_catalog(cfg.n_videos, np.random.default_rng([cfg.seed, _CATALOG]),
                                   cfg.min_video_min, cfg.max_video_min, cfg.playback_rate)
        self.catalog = list(catalog)
        self.videos = {v.id: v for v in self.catalog}
        self.pmf = zipf_pmf(len(self.catalog), cfg.zipf_exponent)
        self.ledger = BandwidthLedger(self.topology, unlimited=cfg.baseline)
        self.cache = CacheState.for_topology(self.topology, cfg.ps_capacity_min, cfg.tr_capacity_min)
        self.plans = {p: PrefixPlan(p) for p in range(cfg.j_lpsgs)}
        self.scl: dict[tuple[NodeId, int], ch.SclEntry] = {}
        self.acc = Accumulators()
        self.trace: list[tuple] = []
        self.clock = -math.inf
        self.sessions: list[Session] = []
        self.by_node: dict[int, Session] = {}
        self.watching: dict[NodeId, Session] = {}
        self.joins: list[tuple[float, float, float]] = []  # (join time, parent arrival, threshold)
        self._heap: list[tuple[float, int, Event]] = []
        self._seq = itertools.count()
        self._tokens = itertools.count()
        self._behaviour = np.random.default_rng([cfg.seed, _BEHAVIOUR])
        self._last_arrival = 0.0
        self._touched: set[int] = set()

        ids = [v.id for v in self.catalog]
        self.request_log: dict[int, list[tuple[float, int]]] = {p: [] for p in self.plans}
        if cfg.warmup and not cfg.baseline:
            for ev in gen_arrivals(cfg.seed, cfg.rate_per_hour, cfg.window_min, self.pmf,
                                   self.topology, start_min=-cfg.window_min, stream=_WARMUP):
                self.request_log[ev.node.lpsg].append((ev.time_min, ev.video))
        self.popularity = {p: estimate_popularity(self.request_log[p], cfg.window_min, 0.0, ids,
                                                  cfg.x_min, cfg.x_max) for p in self.plans}
        if not cfg.baseline:
            for p in self.plans:
                self.plans[p] = distribute_videos(self.catalog, self.popularity[p], self.topology,
                                                  self.cache, lpsg=p, x_scale=cfg.x_scale,
                                                  x_max=cfg.x_max)
        if generate:
            arrivals = gen_arrivals(cfg.seed, cfg.rate_per_hour, cfg.duration_min, self.pmf,
                                    self.topology)
            if cfg.max_arrivals is not None:
                arrivals = arrivals[:cfg.max_arrivals]
            for ev in arrivals:
                self.schedule_arrival(ev.time_min, ev.node, ev.video)

    # -- scheduling -------------------------------------------------------
    def _push(self, t: float, kind: EventKind, node=None, video=None, **data) -> Event:
        ev = Event(t, next(self._seq), kind, node, video, data)
        heapq.heappush(self._heap, (t, ev.seq, ev))
        return ev

    def schedule_arrival(self, t: float, client: NodeId, video_id: int, depart_at: float | None = None,
                         fail_at: float | None = None):
        """Queue a request. Early departure and failure times are drawn from the
        config unless given (as offsets in minutes after arrival)."""
        u_dep, u_frac, u_fail = self._behaviour.random(3)
        self._last_arrival = max(self._last_arrival, t)
        self._push(t, EventKind.ARRIVAL, client, video_id, u=(u_dep, u_frac, u_fail),
                   depart_at=depart_at, fail_at=fail_at)

    def schedule_failure(self, t: float, client: NodeId):
        """Fail whatever session `client` is watching at time t."""
        self._push(t, EventKind.FAIL, client)

    def schedule_departure(self, t: float, client: NodeId):
        self._push(t, EventKind.EARLY_DEPART, client)

    # -- state helpers --------------------------------------------------
    def scl_entry(self, ps: NodeId, video_id: int) -> ch.SclEntry | None:
        return self.scl.get((ps, video_id))

    def effective_x(self, lpsg: int, video_id: int) -> float:
        return scaled_x(self.popularity[lpsg][video_id], self.config.x_scale, self.config.x_max)

    def place(self, video_id: int, lpsg: int, ps: int | None = None, tr: bool = False,
              x: float | None = None):
        """Manually cache a video's prefixes (scripted scenarios)."""
        from vodsim.catalog import prefix_sizes
        from vodsim.placement import PlanEntry
        v = self.videos[video_id]
        x = self.effective_x(lpsg, video_id) if x is None else x
        w1, w2 = prefix_sizes(x, v.duration_min)
        entry = self.plans[lpsg].entries.setdefault(video_id, PlanEntry(w1, w2))
        if ps is not None and entry.host_ps is None:
            node = proxy(lpsg, ps)
            self.cache.add(node, video_id, entry.w1_min)
            entry.host_ps = node
        if tr and entry.host_tr is None:
            self.cache.add(tracker(lpsg), video_id, entry.w2_min)
            entry.host_tr = tracker(lpsg)

    def clear_placement(self):
        for p in self.plans:
            self.plans[p] = PrefixPlan(p)
        for nc in self.cache.nodes.values():
            nc.contents.clear()

    def _record(self, kind, node=None, video=None, detail=""):
        self.trace.append((self.clock, self._cur_seq, kind, "" if node is None else str(node),
                           video, detail))

    # -- main loop --------------------------------------------------------
    def run(self) -> RunResult:
        cfg = self.config
        if self._heap and cfg.window_min and not cfg.baseline:
            self._push(cfg.window_min, EventKind.POPULARITY_TICK)
        n = 0
        while self._heap:
            t, seq, ev = heapq.heappop(self._heap)
            if t < self.clock:
                raise InvariantViolation(f"event {ev.kind} at {t} before clock {self.clock}")
            self.clock = t
            self._cur_seq = seq
            getattr(self, "_on_" + ev.kind.value.lower())(ev)
            if cfg.check_invariants:
                self._check_touched()
            n += 1
            if n % 500 == 0:
                self.ledger.collect(self.clock)
        self._final_checks()
        baseline_wan = None
        return RunResult(finalize(self.acc, baseline_wan), self.trace, self)

    # -- handlers -----------------------------------------------------------
    def _on_popularity_tick(self, ev: Event):
        cfg = self.config
        ids = [v.id for v in self.catalog]
        for p in self.plans:
            self.popularity[p] = estimate_popularity(self.request_log[p], cfg.window_min,
                                                     self.clock, ids, cfg.x_min, cfg.x_max)
        self._record("POPULARITY_TICK")
        nxt = self.clock + cfg.window_min
        if nxt <= self._last_arrival and nxt <= cfg.duration_min:
            self._push(nxt, EventKind.POPULARITY_TICK)

    def _on_arrival(self, ev: Event):
        cfg = self.config
        client, vid = ev.node, ev.video
        video = self.videos[vid]
        now = self.clock
        self.acc.arrival(video.duration_min)
        self.request_log[client.lpsg].append((now, vid))
        current = self.watching.get(client)
        if current is not None:
            # a client watches one video at a time; a new request ends the old one
            self._depart(current, "switch")

        dec = route(self, client, vid, now)
        if dec.kind is DecisionKind.REJECT:
            self.acc.rejected()
            self._record("ARRIVAL", client, vid, f"REJECT reason={dec.reason}")
            return
        ps = proxy(client.lpsg, client.ps)
        requests = client_requests(dec.segments, client, now)
        res = self.ledger.reserve_all(requests)
        if res is None:
            raise InvariantViolation(f"routing admitted {dec.kind} for {client} but reservation failed")
        sid = len(self.sessions)
        entry = self.scl.get((ps, vid))
        if dec.kind is DecisionKind.JOIN_CHAIN:
            adm = ch.try_admit(entry, client, now, cfg.lac_d, sid=sid)
            if adm.kind is not ch.AdmitKind.JOIN or adm.parent is not dec.parent:
                raise InvariantViolation("chain admission changed between routing and commit")
            node = adm.node
            root = self.by_node[id(adm.parent)].root
            gap = now - adm.parent.arrival_min
            self.joins.append((now, adm.parent.arrival_min, entry.sz_pref1_min))
            src_detail = f"parent={adm.parent.client} gap={gap:.6f} thr={entry.sz_pref1_min:.6f}"
        else:
            if entry is None or not entry.is_streaming:
                entry = ch.SclEntry(vid, dec.sz_pref1_min, ps)
                self.scl[(ps, vid)] = entry
            else:
                entry.sz_pref1_min = dec.sz_pref1_min
            node = ch.start_chain(entry, client, now, sid=sid)
            root = dec.segments
            src_detail = "src=" + "|".join(f"{s.source}:{s.start:.6f}-{s.end:.6f}" for s in dec.segments)

        sess = Session(sid, client, video, now, dec.kind, entry, node, root,
                       feed=dec.segments, feed_from=0.0, reservations=res,
                       planned_end=now + video.duration_min)
        self.sessions.append(sess)
        self.by_node[id(node)] = sess
        self.watching[client] = sess
        self._touched.add(id(entry))
        self._pin_segments(sess, dec.segments, 0.0)
        wait = self.topology.path_delay(dec.startup_path)
        mms = dec.mms_minutes
        self.acc.served(dec.kind, wait, mms)
        self._push(sess.planned_end, EventKind.PLAYBACK_END, client, vid, sid=sid, version=0)
        self._record("ARRIVAL", client, vid,
                     f"{dec.kind.value} sid={sid} wait_ms={wait:g} mms={mms:.6f} {src_detail}")

        u_dep, u_frac, u_fail = ev.data["u"]
        depart_at = ev.data.get("depart_at")
        if depart_at is None and u_dep < cfg.early_depart_prob:
            depart_at = u_frac * video.duration_min
        if depart_at is not None:
            self._push(now + depart_at, EventKind.EARLY_DEPART, client, vid, sid=sid)
        fail_at = ev.data.get("fail_at")
        if fail_at is None and cfg.failure_rate_per_hour > 0:
            fail_at = -math.log1p(-u_fail) * 60.0 / cfg.failure_rate_per_hour
            if fail_at >= video.duration_min:
                fail_at = None
        if fail_at is not None:
            self._push(now + fail_at, EventKind.FAIL, client, vid, sid=sid)

        if dec.kind is DecisionKind.FETCH_MMS and dec.uncached and not cfg.baseline:
            p = client.lpsg
            x = self.effective_x(p, vid)
            before = self.plans[p].get(vid)
            evicted = cache_on_miss(self.plans[p], self.cache, video, x, ps, tracker(p),
                                    self.popularity[p])
            after = self.plans[p].get(vid)
            ev_s = ";".join(f"{n}:{v}" for n, v in evicted)
            got = "none" if after is None else f"ps={after.host_ps} tr={after.host_tr}"
            if after is not before or evicted:
                self._record("CACHE_ON_MISS", ps, vid, f"{got} evicted={ev_s}")

    def _on_playback_end(self, ev: Event):
        sess = self.sessions[ev.data["sid"]]
        if sess.status != "streaming" or ev.data["version"] != sess.end_version:
            return
        if sess.limbo_since is not None:
            raise InvariantViolation(f"session {sess.sid} ended while waiting for failure detection")
        closed = ch.close_finished(sess.entry, sess.node)
        draining = sess.node.state is ch.NodeState.DRAINING
        self._end_session(sess, "draining" if draining else "done", sess.S)
        self._closed_nodes(closed)
        self._touched.add(id(sess.entry))
        self._record("PLAYBACK_END", sess.client, sess.video.id,
                     f"sid={sess.sid} state={sess.node.state.value} delivered={sess.delivered():.6f}")

    def _on_stream_segment_end(self, ev: Event):
        sess = self.sessions[ev.data["sid"]]
        pin = sess.pins.pop(ev.data["token"], None)
        if pin is not None:
            self.cache.unpin(*pin)

    def _on_early_depart(self, ev: Event):
        sid = ev.data.get("sid")
        sess = self.sessions[sid] if sid is not None else self.watching.get(ev.node)
        if sess is None or sess.status != "streaming":
            return
        self._depart(sess, "early")

    def _on_fail(self, ev: Event):
        cfg = self.config
        sid = ev.data.get("sid")
        if sid is not None:
            sess = self.sessions[sid]
        else:
            sess = self.watching.get(ev.node)
            if sess is None:
                return
        if sess.status not in ("streaming", "draining"):
            return
        node = sess.node
        child = node.child if (node.child is not None and node.child.parent is node
                               and node.child.active) else None
        ch.mark_failed(sess.entry, node, self.clock)
        self.acc.failures += 1
        if sess.status == "streaming":
            self._end_session(sess, "failed", sess.offset(self.clock))
        else:
            sess.status = "failed"
        self._touched.add(id(sess.entry))
        detail = f"sid={sess.sid}"
        if child is not None:
            cs = self.by_node[id(child)]
            if cs.status == "streaming":
                self._close_feed(cs, cs.offset(self.clock))
                self._release(cs)
                cs.limbo_since = self.clock
                # the child stalls for exactly the detection timeout
                self._reschedule_end(cs, cs.planned_end + cfg.g_sec / 60.0)
            detail += f" child={child.client}"
        self._push(self.clock + cfg.g_sec / 60.0, EventKind.FAIL_DETECT, node.client,
                   sess.video.id, sid=sess.sid)
        self._record("FAIL", sess.client, sess.video.id, detail)

    def _on_fail_detect(self, ev: Event):
        sess = self.sessions[ev.data["sid"]]
        entry = sess.entry
        rec = ch.detect_and_recover_failure(entry, sess.node, self.clock, self.config.g_sec)
        self._closed_nodes(rec.closed)
        self._touched.add(id(entry))
        detail = f"sid={sess.sid}"
        if rec.child is not None:
            cs = self.by_node[id(rec.child)]
            self.acc.recoveries += 1
            if cs.status == "streaming":
                if cs.limbo_since is not None:
                    cs.stall_min += self.clock - cs.limbo_since
                    cs.limbo_since = None
                if rec.new_parent is not None:
                    self._refeed(cs, rec.new_parent)
                else:
                    self._restream(cs)
            src = rec.new_parent.client if rec.new_parent is not None else entry.ps
            detail += f" child={rec.child.client} new_parent={src} stall_sec={rec.stall_sec:g}"
        self._record("FAIL_DETECT", sess.client, sess.video.id, detail)

    # -- session mechanics ------------------------------------------------
    def _depart(self, sess: Session, reason: str):
        entry = sess.entry
        res = ch.close_early(entry, sess.node)
        sess.departed_early = True
        self._end_session(sess, "departed", sess.offset(self.clock))
        self._closed_nodes(res.closed)
        self._touched.add(id(entry))
        if reason == "early":
            self.acc.early_departs += 1
        detail = f"sid={sess.sid} reason={reason} result={res.kind.value}"
        self._record("EARLY_DEPART", sess.client, sess.video.id, detail)
        if res.child is None:
            return
        cs = self.by_node[id(res.child)]
        if cs.status != "streaming" or cs.limbo_since is not None:
            # draining children need nothing; stalled ones are re-fed at detection
            return
        if res.kind is ch.SpliceKind.SPLICED:
            self.acc.splices += 1
            self._refeed(cs, res.new_parent)
        else:
            self.acc.restreams += 1
            self._restream(cs)

    def _refeed(self, sess: Session, parent: ch.ChainNode):
        """Switch a client's source to another chain member from its current offset."""
        now = self.clock
        off = sess.offset(now)
        self._close_feed(sess, off)
        self._release(sess)
        seg = [Segment(parent.client, 0.0, sess.S)]
        res = self.ledger.reserve_all(client_requests(seg, sess.client, now, off))
        if res is None:
            sess.node.parent = None
            if parent.child is sess.node:
                parent.child = None
            self._restream(sess)
            return
        sess.reservations = res
        sess.feed, sess.feed_from = seg, off
        self._record("REFEED", sess.client, sess.video.id,
                     f"sid={sess.sid} parent={parent.client} offset={off:.6f}")

    def _restream(self, sess: Session):
        """The proxy opens a fresh stream to the client at its current offset."""
        now = self.clock
        off = sess.offset(now)
        self._close_feed(sess, off)
        self._release(sess)
        segs = self._resolve(sess)
        requests = client_requests(segs, sess.client, now, off)
        res = self.ledger.reserve_all(requests)
        if res is None:
            self.acc.midstream_drops += 1
            self._record("DROP", sess.client, sess.video.id, f"sid={sess.sid} offset={off:.6f}")
            self._depart(sess, "drop")
            sess.status = "dropped"
            return
        sess.reservations = res
        sess.feed, sess.feed_from = segs, off
        sess.root = segs
        self._pin_segments(sess, segs, off)
        mms = sum(s.end - max(s.start, off) for s in segs if s.from_mms and s.end > off)
        self.acc.wan_minutes += mms
        self._record("RESTREAM", sess.client, sess.video.id,
                     f"sid={sess.sid} offset={off:.6f} mms={mms:.6f}")

    def _resolve(self, sess: Session) -> list[Segment]:
        """Re-check cached sources; evicted prefixes come from the MMS instead."""
        p = sess.client.lpsg
        ps = proxy(p, sess.client.ps)
        mms_hops = (hop(LinkClass.MMS_TR, MMS, tracker(p)), hop(LinkClass.TR_PS, tracker(p), ps))
        out = []
        for s in sess.root:
            if s.source.kind in (NodeKind.PS, NodeKind.TR) and not self.cache.holds(s.source, sess.video.id):
                out.append(Segment(MMS, s.start, s.end, mms_hops))
            else:
                out.append(s)
        return out

    def _pin_segments(self, sess: Session, segments: list[Segment], offset: float):
        vid = sess.video.id
        for s in segments:
            if s.source.kind not in (NodeKind.PS, NodeKind.TR) or s.end <= offset:
                continue
            if not self.cache.holds(s.source, vid):
                continue
            self.cache.pin(s.source, vid)
            token = next(self._tokens)
            sess.pins[token] = (s.source, vid)
            self._push(self.clock + (s.end - offset), EventKind.STREAM_SEGMENT_END, s.source, vid,
                       sid=sess.sid, token=token)

    def _close_feed(self, sess: Session, upto: float):
        for s in sess.feed:
            a, b = max(s.start, sess.feed_from), min(s.end, upto)
            if b > a:
                sess.intervals.append((str(s.source), a, b))
        sess.feed = []
        sess.feed_from = upto

    def _release(self, sess: Session):
        for r in sess.reservations:
            self.ledger.release(r, at=self.clock)
        sess.reservations = []

    def _end_session(self, sess: Session, status: str, upto: float):
        self._close_feed(sess, upto)
        self._release(sess)
        for node, vid in sess.pins.values():
            self.cache.unpin(node, vid)
        sess.pins.clear()
        sess.status = status
        sess.limbo_since = None
        if self.watching.get(sess.client) is sess:
            del self.watching[sess.client]

    def _closed_nodes(self, nodes: Iterable[ch.ChainNode]):
        for n in nodes:
            s = self.by_node.get(id(n))
            if s is not None and s.status == "draining":
                s.status = "done"

    def _reschedule_end(self, sess: Session, new_end: float):
        sess.end_version += 1
        sess.planned_end = new_end
        self._push(new_end, EventKind.PLAYBACK_END, sess.client, sess.video.id,
                   sid=sess.sid, version=sess.end_version)

    # -- invariants ---------------------------------------------------------
    def _check_touched(self):
        if not self._touched:
            return
        entries = {id(e): e for e in self.scl.values()}
        try:
            for k in self._touched:
                e = entries.get(k)
                if e is not None:
                    ch.check_linear(e)
            self.cache.check()
        except AssertionError as exc:
            raise InvariantViolation(f"t={self.clock:.6f}: {exc}") from exc
        self._touched.clear()

    def _final_checks(self):
        problems = []
        for s in self.sessions:
            if s.status in ("streaming", "draining"):
                problems.append(f"session {s.sid} still {s.status}")
            if s.status == "done":
                if not _tiles(s.intervals, s.S):
                    problems.append(f"session {s.sid} delivered {s.delivered():.6f} of {s.S}")
        for e in self.scl.values():
            if e.is_streaming:
                problems.append(f"SCL entry {e.format()} still streaming")
        opened = self.ledger.open_reservations()
        if opened:
            problems.append(f"{len(opened)} reservations never released")
        for h, peak in self.ledger.replay_peaks().items():
            if peak > self.ledger.capacity(h):
                problems.append(f"{hop_str(h)} peak {peak} over capacity")
        for node, nc in self.cache.nodes.items():
            if any(nc.pins.values()):
                problems.append(f"{node} still pinned")
        wan = trace_wan_minutes(self.trace)
        if abs(wan - self.acc.wan_minutes) > 1e-3:
            problems.append(f"trace WAN {wan} != accumulated {self.acc.wan_minutes}")
        if problems:
            raise InvariantViolation("; ".join(problems[:10]))


def _tiles(intervals, total, tol=1e-6) -> bool:
    pos = 0.0
    for _, a, b in sorted(intervals, key=lambda iv: iv[1]):
        if abs(a - pos) > tol:
            return False
        pos = b
    return abs(pos - total) <= tol


def trace_wan_minutes(trace) -> float:
    """MMS-sourced minutes recorded in the trace (admissions plus restreams)."""
    total = 0.0
    for rec in trace:
        for tok in str(rec[5]).split():
            if tok.startswith("mms="):
                total += float(tok[4:])
    return total


def run(config: RunConfig, catalog: Sequence[Video] | None = None) -> RunResult:
    return Simulation(config, catalog).run()


def run_paired(config: RunConfig) -> tuple[RunResult, RunResult]:
    """A run and its no-proxy baseline with the same seed; the first report
    carries server_load_reduction."""
    base = run(config.evolve(baseline=True))
    main = run(config)
    main.report = main.report.with_baseline(base.report)
    return main, base
