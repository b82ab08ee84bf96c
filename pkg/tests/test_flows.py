import pytest

from conftest import random_window, window_of
from flows import FlowClasses, HsdEntry, PacketRecord, classify_flows, partition_windows


def _naive_classes(window) -> dict:
    """Literal, quadratic re-reading of the class definitions."""
    pkts = list(window.packets)
    sources = {p.src for p in pkts}
    dests = {p.dst for p in pkts}

    def group(key):
        out = {}
        for p in pkts:
            out.setdefault(key(p), []).append(p)
        return {k: tuple(sorted(v)) for k, v in out.items()}

    sd = group(lambda p: (p.src, p.dst))
    if_set = {a for a in sources if any(q.dst == a for q in pkts)}
    sh = {a: v for a, v in group(lambda p: p.src).items() if not any(q.dst == a for q in pkts)}
    dh = {a: v for a, v in group(lambda p: p.dst).items() if not any(q.src == a for q in pkts)}
    acs = {
        (s, d): v for (s, d), v in sd.items()
        if len({q.dst for q in pkts if q.src == s}) == 1
    }
    sdd = {
        d: tuple(sorted(q for q in pkts if q.dst == d))
        for d in dests
        if len({q.src for q in pkts if q.dst == d}) >= 2
    }
    hsd = {}
    for d in {p.dst for p in pkts if p.src in sh}:
        sh_pkts = [p for p in pkts if p.src in sh and p.dst == d]
        hsd[d] = HsdEntry(len({p.src for p in sh_pkts}), len({p.port for p in sh_pkts}))
    return {"sd": sd, "if_set": if_set, "sh": sh, "dh": dh, "acs": acs, "sdd": sdd, "hsd": hsd}


def _as_dict(classes: FlowClasses) -> dict:
    return {
        "sd": dict(classes.sd), "if_set": set(classes.if_set), "sh": dict(classes.sh),
        "dh": dict(classes.dh), "acs": dict(classes.acs), "sdd": dict(classes.sdd),
        "hsd": dict(classes.hsd),
    }


# ── partition_windows ────────────────────────────────────────


def _at(*times):
    return [PacketRecord(t, "10.0.0.1", "10.0.0.2", 80) for t in times]


def test_partition_groups_by_grid():
    windows = partition_windows(_at(0.1, 0.9, 1.5), 1.0)
    assert [len(w.packets) for w in windows] == [2, 1]
    assert [w.start for w in windows] == [0.0, 1.0]


def test_partition_emits_empty_windows():
    windows = partition_windows(_at(2.5), 1.0)
    assert [len(w.packets) for w in windows] == [0, 0, 1]
    assert [w.index for w in windows] == [0, 1, 2]


def test_partition_sorts_unsorted_input():
    windows = partition_windows(_at(1.5, 0.9, 0.1), 1.0)
    assert [p.t for p in windows[0].packets] == [0.1, 0.9]


def test_partition_empty_input():
    assert partition_windows([], 1.0) == []
    assert len(partition_windows([], 1.0, end=116.0)) == 116


def test_partition_116_second_trace():
    windows = partition_windows(_at(*[k + 0.5 for k in range(116)]), 1.0)
    assert len(windows) == 116
    assert all(len(w.packets) == 1 for w in windows)


def test_partition_pads_to_end():
    assert len(partition_windows(_at(0.5), 1.0, end=10.0)) == 10


def test_partition_half_open_boundary():
    windows = partition_windows(_at(1.0), 1.0)
    assert len(windows) == 2
    assert windows[0].packets == ()
    assert windows[1].packets[0].t == 1.0


def test_partition_rejects_bad_window():
    with pytest.raises(ValueError):
        partition_windows(_at(0.5), 0.0)


def test_packet_record_validation():
    with pytest.raises(ValueError):
        PacketRecord(-1.0, "a", "b", 80)
    with pytest.raises(ValueError):
        PacketRecord(0.0, "a", "b", 70000)
    for t in (float("inf"), float("-inf"), float("nan")):
        with pytest.raises(ValueError):
            PacketRecord(t, "a", "b", 80)


# ── classify_flows ───────────────────────────────────────────


def test_classify_interactive_pair():
    c = classify_flows(window_of((0.1, "A", "B", 80), (0.2, "B", "A", 1234)))
    assert c.if_set == {"A", "B"}
    assert c.sh == {} and c.dh == {}
    assert set(c.acs) == {("A", "B"), ("B", "A")}
    assert c.sdd == {}
    assert c.hsd == {}


def test_classify_spoofed_sources():
    c = classify_flows(window_of((0.1, "A", "V", 80), (0.2, "B", "V", 80), (0.3, "C", "V", 443)))
    assert set(c.sh) == {"A", "B", "C"}
    assert set(c.dh) == {"V"}
    assert c.if_set == frozenset()
    assert len({p.src for p in c.sdd["V"]}) == 3
    assert c.hsd == {"V": HsdEntry(hn=3, port_count=2)}


def test_classify_drops_multi_destination_sources():
    c = classify_flows(window_of((0.1, "A", "B", 80), (0.2, "A", "C", 80)))
    assert c.acs == {}


def test_classify_empty_window():
    assert classify_flows(window_of()) == FlowClasses()


def test_classify_matches_naive_oracle(rng):
    for _ in range(1000):
        window = random_window(rng)
        assert _as_dict(classify_flows(window)) == _naive_classes(window)


def test_classify_permutation_invariant(rng):
    for _ in range(200):
        window = random_window(rng)
        order = rng.permutation(len(window.packets))
        shuffled = type(window)(0, 0.0, 1.0, tuple(window.packets[k] for k in order))
        reversed_ = type(window)(0, 0.0, 1.0, tuple(reversed(window.packets)))
        expected = classify_flows(window)
        assert classify_flows(shuffled) == expected
        assert classify_flows(reversed_) == expected


def test_classify_partition_properties(rng):
    for _ in range(300):
        window = random_window(rng)
        c = classify_flows(window)
        sources = {p.src for p in window.packets}
        dests = {p.dst for p in window.packets}
        for a in sources:
            assert (a in c.if_set) != (a in c.sh)
        for a in dests:
            assert (a in c.if_set) != (a in c.dh)
        assert not set(c.dh) & sources
        for (src, _dst) in c.acs:
            assert len({d for (s, d) in c.acs if s == src}) == 1
        for pkts in c.sdd.values():
            assert len({p.src for p in pkts}) >= 2
        for entry in c.hsd.values():
            assert entry.hn >= 1
        sh_pairs = {(p.src, p.dst) for pkts in c.sh.values() for p in pkts}
        assert sum(e.hn for e in c.hsd.values()) == len(sh_pairs)


def test_hsd_bound_when_sh_sources_reach_one_destination():
    c = classify_flows(window_of(
        (0.1, "A", "V", 80), (0.2, "B", "V", 81), (0.3, "C", "W", 80), (0.4, "C", "W", 82),
    ))
    assert sum(e.hn for e in c.hsd.values()) <= len(c.sh)
    assert c.hsd["W"] == HsdEntry(hn=1, port_count=2)
