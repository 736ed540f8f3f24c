import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vodsim.catalog import PopularityEstimate, Video, prefix_sizes
from vodsim.placement import (CacheState, NodeCache, PrefixPlan, cache_on_miss,
                              distribute_videos, make_room)
from vodsim.topology import build_topology, proxy, tracker

PS, TR = proxy(0, 0), tracker(0)


def _pop(x):
    return PopularityEstimate(dict(x), 60.0)


def test_zero_capacity_caches_nothing():
    topo = build_topology(1, 2, 1)
    cache = CacheState.for_topology(topo, 0, 0)
    cat = [Video(0, 120), Video(1, 150)]
    plan = distribute_videos(cat, _pop({0: 0.5, 1: 0.3}), topo, cache)
    assert plan.entries == {}
    assert plan.lookup_pref1(0) is None


def test_greedy_fills_in_popularity_order():
    topo = build_topology(1, 1, 1)
    cache = CacheState.for_topology(topo, 70, 0)
    cat = [Video(0, 120), Video(1, 120)]
    plan = distribute_videos(cat, _pop({0: 0.5, 1: 0.25}), topo, cache)
    assert plan.lookup_pref1(0) == PS
    assert plan.get(0).w1_min == pytest.approx(60)
    assert 1 not in plan
    assert cache[PS].contents == {0: pytest.approx(60)}


def test_ratio_bounds_hold_for_default_sizes():
    topo = build_topology(2, 6, 1)
    rng = np.random.default_rng(0)
    cat = [Video(i, float(rng.integers(120, 181))) for i in range(40)]
    xs = rng.uniform(0.05, 0.95, size=40)
    cache = CacheState.for_topology(topo, 0.2 * 1000, 0.4 * 1000)
    for p in range(2):
        distribute_videos(cat, _pop(dict(enumerate(xs))), topo, cache, lpsg=p)
    for ps in topo.proxies():
        assert cache[ps].used_min <= 200 + 1e-9
    for tr in topo.trackers():
        assert cache[tr].used_min <= 400 + 1e-9


def test_most_free_proxy_gets_the_next_prefix():
    topo = build_topology(1, 3, 1)
    cache = CacheState.for_topology(topo, 100, 100)
    cat = [Video(i, 100) for i in range(3)]
    plan = distribute_videos(cat, _pop({0: 0.3, 1: 0.2, 2: 0.1}), topo, cache)
    assert [plan.lookup_pref1(v) for v in range(3)] == [proxy(0, 0), proxy(0, 1), proxy(0, 2)]


def _two_prefix_node():
    cache = CacheState({PS: NodeCache(75, {0: 30, 1: 40})})
    return cache, _pop({0: 0.1, 1: 0.4})


def test_make_room_noop_when_nothing_needed():
    cache, pop = _two_prefix_node()
    assert make_room(cache, PS, 0, pop) == []
    assert cache[PS].contents == {0: 30, 1: 40}


def test_make_room_evicts_least_popular_first():
    cache, pop = _two_prefix_node()
    assert make_room(cache, PS, 30, pop) == [0]
    assert cache[PS].contents == {1: 40}


def test_make_room_respects_pins():
    cache, pop = _two_prefix_node()
    cache.pin(PS, 0)
    # an incoming video less popular than vB may only displace vA, which is pinned
    assert make_room(cache, PS, 30, pop, below_x=0.3) is None
    assert cache[PS].contents == {0: 30, 1: 40}
    # with no popularity bound the more popular vB is the only way out
    assert make_room(cache, PS, 30, pop) == [1]


def test_pinned_prefix_cannot_be_removed():
    cache, _ = _two_prefix_node()
    cache.pin(PS, 1)
    with pytest.raises(ValueError):
        cache.remove(PS, 1)
    cache.unpin(PS, 1)
    cache.remove(PS, 1)
    with pytest.raises(ValueError):
        cache.unpin(PS, 1)


def _miss_setup(ps_cap, tr_cap):
    topo = build_topology(1, 1, 1)
    return topo, CacheState.for_topology(topo, ps_cap, tr_cap), PrefixPlan(0)


def test_cache_on_miss_with_room():
    _, cache, plan = _miss_setup(100, 100)
    v = Video(3, 120)
    cache_on_miss(plan, cache, v, 0.2, PS, TR, _pop({3: 0.2}))
    e = plan.get(3)
    assert e.host_ps == PS and e.host_tr == TR
    assert (e.w1_min, e.w2_min) == pytest.approx(prefix_sizes(0.2, 120))
    assert plan.lookup_pref1(3) == PS
    with pytest.raises(ValueError):
        cache_on_miss(plan, cache, v, 0.2, PS, TR, _pop({3: 0.2}))


def test_cache_on_miss_partial_success():
    _, cache, plan = _miss_setup(30, 100)
    cache.add(PS, 0, 30)
    cache.pin(PS, 0)
    cache_on_miss(plan, cache, Video(3, 120), 0.2, PS, TR, _pop({0: 0.1, 3: 0.2}))
    e = plan.get(3)
    assert e.host_ps is None and e.host_tr == TR


def test_cache_on_miss_no_room_is_noop():
    _, cache, plan = _miss_setup(30, 30)
    for node in (PS, TR):
        cache.add(node, 0, 30)
        cache.pin(node, 0)
    assert cache_on_miss(plan, cache, Video(3, 120), 0.2, PS, TR, _pop({0: 0.1, 3: 0.2})) == []
    assert 3 not in plan
    assert cache[PS].contents == {0: 30}


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(120, 180), st.floats(0.05, 0.95)), min_size=1, max_size=20),
       st.floats(0, 300), st.floats(0, 300),
       st.lists(st.tuples(st.integers(0, 19), st.booleans()), max_size=30))
def test_capacity_safety(videos, ps_cap, tr_cap, misses):
    topo = build_topology(1, 2, 1)
    cat = [Video(i, d) for i, (d, _) in enumerate(videos)]
    pop = _pop({i: x for i, (_, x) in enumerate(videos)})
    cache = CacheState.for_topology(topo, ps_cap, tr_cap)
    plan = distribute_videos(cat, pop, topo, cache)
    cache.check()
    for vid, pin in misses:
        if vid >= len(cat):
            continue
        if pin and cache.holds(PS, vid):
            cache.pin(PS, vid)
        if plan.lookup_pref1(vid) is None:
            before = dict(cache[PS].contents)
            cache_on_miss(plan, cache, cat[vid], pop[vid], PS, TR, pop)
            # pinned prefixes are never evicted
            for v in before:
                if cache[PS].pinned(v):
                    assert v in cache[PS].contents
        cache.check()
        for v, e in plan.entries.items():
            if e.host_ps is not None:
                assert cache.holds(e.host_ps, v)
            if e.host_tr is not None:
                assert cache.holds(e.host_tr, v)
