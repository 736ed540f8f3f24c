import pytest
from hypothesis import given, strategies as st

from vodsim.topology import (MMS, LinkClass, LinkSpec, NodeKind, build_topology, client,
                             path_delay, proxy, tracker)


def test_default_node_count():
    assert build_topology(6, 6, 25).n_nodes == 943
    assert len(list(build_topology(6, 6, 25).nodes())) == 943


def test_minimal_topology_self_neighbor():
    t = build_topology(1, 1, 1)
    assert t.n_nodes == 4
    assert t.tracker_neighbors(0) == [0]
    assert t.next_tracker(0) == 0


def test_small_adjacency():
    t = build_topology(3, 2, 1)
    assert t.tracker_neighbors(0) == [1, 2]
    for p in range(3):
        assert t.proxy_neighbors(proxy(p, 0)) == [proxy(p, 1)]
        assert t.next_proxy(proxy(p, 1)) == proxy(p, 0)


@pytest.mark.parametrize("hops,ms", [
    ([], 0),
    ([LinkClass.PS_CLIENT], 100),
    ([LinkClass.TR_TR, LinkClass.TR_PS, LinkClass.PS_CLIENT], 500),
    ([LinkClass.MMS_TR, LinkClass.TR_PS, LinkClass.PS_CLIENT], 1400),
])
def test_path_delay(hops, ms):
    t = build_topology(2, 2, 2)
    assert path_delay(t, hops) == ms
    assert t.path_delay(hops) == ms


def test_parents_and_names():
    t = build_topology(2, 2, 2)
    c = client(1, 0, 1)
    assert t.parent(c) == proxy(1, 0)
    assert t.parent(proxy(1, 0)) == tracker(1)
    assert t.parent(tracker(1)) == MMS
    assert t.parent(MMS) is None
    assert str(c) == "C1.0.1" and str(proxy(1, 0)) == "PS1.0" and str(tracker(1)) == "TR1"
    assert t.contains(c) and not t.contains(client(2, 0, 0))
    assert c.kind is NodeKind.CLIENT and c.is_client


def test_rejects_bad_counts_and_links():
    with pytest.raises(ValueError):
        build_topology(0, 1, 1)
    with pytest.raises(ValueError):
        LinkSpec(-1, 1)


@given(st.integers(1, 8), st.integers(1, 5), st.integers(1, 4))
def test_ring_neighbors_symmetric(j, m, c):
    t = build_topology(j, m, c)
    assert t.n_nodes == 1 + j + j * m + j * m * c
    for p in range(j):
        for nb in t.tracker_neighbors(p):
            assert p in t.tracker_neighbors(nb)
        assert t.tracker_neighbors(p) == sorted({(p - 1) % j, (p + 1) % j})
