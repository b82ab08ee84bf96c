"""Split a packet stream into fixed time windows and partition each window into flow classes.

Class families per window:
    sd      (src, dst) -> packets
    if_set  addresses seen both as a source and as a destination
    sh      source never seen as a destination -> its packets
    dh      destination never seen as a source -> its packets
    acs     SD classes whose source talks to exactly one destination
    sdd     destination with >= 2 distinct sources -> all its packets
    hsd     destination -> (distinct SH sources, distinct ports) over SH traffic
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True, slots=True)
class PacketRecord:
    """One captured packet: time, source, destination, destination port."""

    t: float
    src: str
    dst: str
    port: int

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValueError(f"packet time must be finite and >= 0, got {self.t}")
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")


@dataclass(frozen=True)
class FlowWindow:
    """Packets with start <= t < start + duration, ordered by t."""

    index: int
    start: float
    duration: float
    packets: tuple[PacketRecord, ...] = ()


class HsdEntry(NamedTuple):
    hn: int  # distinct SH sources reaching this destination
    port_count: int  # distinct destination ports over those SH packets


@dataclass(frozen=True)
class FlowClasses:
    sd: dict[tuple[str, str], tuple[PacketRecord, ...]] = field(default_factory=dict)
    if_set: frozenset[str] = frozenset()
    sh: dict[str, tuple[PacketRecord, ...]] = field(default_factory=dict)
    dh: dict[str, tuple[PacketRecord, ...]] = field(default_factory=dict)
    acs: dict[tuple[str, str], tuple[PacketRecord, ...]] = field(default_factory=dict)
    sdd: dict[str, tuple[PacketRecord, ...]] = field(default_factory=dict)
    hsd: dict[str, HsdEntry] = field(default_factory=dict)


# ── Windowing ─────────────────────────────────────────────────


def partition_windows(
    packets: Iterable[PacketRecord],
    dt: float,
    end: float | None = None,
) -> list[FlowWindow]:
    """Bucket packets into contiguous half-open windows [k*dt, (k+1)*dt).

    The grid covers [0, max t]; pass ``end`` to extend it (e.g. to a known
    trace duration) so trailing quiet windows are still emitted.
    """
    if not dt > 0:
        raise ValueError(f"window length must be > 0, got {dt}")
    packets = list(packets)
    if not packets:
        count = math.ceil(end / dt) if end else 0
        return [FlowWindow(k, k * dt, dt) for k in range(count)]

    if any(a.t > b.t for a, b in zip(packets, packets[1:])):
        packets.sort(key=lambda p: p.t)

    count = int(packets[-1].t // dt) + 1
    if end is not None:
        count = max(count, math.ceil(end / dt))

    buckets: list[list[PacketRecord]] = [[] for _ in range(count)]
    for p in packets:
        buckets[int(p.t // dt)].append(p)

    windows = [FlowWindow(k, k * dt, dt, tuple(b)) for k, b in enumerate(buckets)]
    logger.debug("partitioned %d packets into %d windows of %.3gs", len(packets), count, dt)
    return windows


# ── Classification ────────────────────────────────────────────


def _frozen(groups: dict) -> dict:
    """Sort each group's packets so contents do not depend on arrival order."""
    return {key: tuple(sorted(pkts)) for key, pkts in sorted(groups.items())}


def classify_flows(window: FlowWindow) -> FlowClasses:
    """Partition one window into the flow-class families."""
    if not window.packets:
        return FlowClasses()

    sd: dict[tuple[str, str], list[PacketRecord]] = defaultdict(list)
    by_src: dict[str, list[PacketRecord]] = defaultdict(list)
    by_dst: dict[str, list[PacketRecord]] = defaultdict(list)
    for p in window.packets:
        sd[(p.src, p.dst)].append(p)
        by_src[p.src].append(p)
        by_dst[p.dst].append(p)

    sources = by_src.keys()
    dests = by_dst.keys()
    if_set = frozenset(sources & dests)
    sh = {a: pkts for a, pkts in by_src.items() if a not in dests}
    dh = {a: pkts for a, pkts in by_dst.items() if a not in sources}

    # Definition 1: drop every source that reaches two or more destinations.
    dest_count: dict[str, int] = defaultdict(int)
    src_count: dict[str, int] = defaultdict(int)
    for src, dst in sd:
        dest_count[src] += 1
        src_count[dst] += 1
    acs = {key: pkts for key, pkts in sd.items() if dest_count[key[0]] == 1}

    # Definition 2: drop single-source destinations, regroup the rest by destination.
    sdd = {dst: pkts for dst, pkts in by_dst.items() if src_count[dst] >= 2}

    # Definition 5: SH traffic grouped by destination.
    hsd_sources: dict[str, set[str]] = defaultdict(set)
    hsd_ports: dict[str, set[int]] = defaultdict(set)
    for pkts in sh.values():
        for p in pkts:
            hsd_sources[p.dst].add(p.src)
            hsd_ports[p.dst].add(p.port)
    hsd = {
        dst: HsdEntry(len(hsd_sources[dst]), len(hsd_ports[dst]))
        for dst in sorted(hsd_sources)
    }

    return FlowClasses(
        sd=_frozen(sd),
        if_set=if_set,
        sh=_frozen(sh),
        dh=_frozen(dh),
        acs=_frozen(acs),
        sdd=_frozen(sdd),
        hsd=hsd,
    )
