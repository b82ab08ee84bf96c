"""Seeded synthetic traffic: interactive normal sessions and spoofed-source floods.

All randomness comes from numpy's PCG64 bit generator; independent streams are
derived with ``SeedSequence.spawn`` so each part of a scenario is reproducible
on its own.  Times are generated in integer microseconds.
"""

import csv
import ipaddress
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from dotenv import dotenv_values

from config import (
    SCENARIO_DURATION, NORMAL_RATE, NORMAL_LOSS, ATTACK_RATE, ATTACK_RAMP, NORMAL_HOSTS,
    SPOOF_POOL, VICTIMS, NORMAL_NET, VICTIM_NET, SPOOF_NET, SERVICE_PORTS, WINDOW_SECONDS, SEED,
)
from errors import ConfigError, DataError
from flows import PacketRecord

logger = logging.getLogger(__name__)

USEC = 1_000_000
MAX_REPLY_DELAY_US = 50_000


class ScenarioKind(str, Enum):
    EARLY = "early"
    IMPULSE = "impulse"
    INTERMITTENT = "intermittent"
    BASELINE = "baseline"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    duration: float = SCENARIO_DURATION
    normal_rate: float = NORMAL_RATE
    attack_rate: float = ATTACK_RATE
    normal_loss: float = NORMAL_LOSS
    attack_ramp: int = ATTACK_RAMP
    normal_host_count: int = NORMAL_HOSTS
    spoof_pool_size: int = SPOOF_POOL
    victim_count: int = VICTIMS
    attack_intervals: tuple[tuple[float, float], ...] = ()
    seed: int = SEED
    dt: float = WINDOW_SECONDS

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if not self.duration > 0 or not self.dt > 0:
            raise ConfigError("duration and window length must be positive")
        if not self.normal_rate > 0 or not self.attack_rate > 0:
            raise ConfigError("traffic rates must be positive")
        if not 0 <= self.normal_loss < 1 or self.attack_ramp < 0:
            raise ConfigError("reply loss must be in [0, 1) and the attack ramp >= 0")
        if self.normal_host_count < 2:
            raise ConfigError("need at least 2 normal hosts")
        if self.victim_count < 1 or self.spoof_pool_size < 10 * self.victim_count:
            raise ConfigError("spoof pool must hold at least 10 addresses per victim")
        ivs = sorted(self.attack_intervals)
        for start, end in ivs:
            if not 0 <= start < end <= self.duration:
                raise ConfigError(f"attack interval [{start}, {end}) outside [0, {self.duration})")
        if any(a[1] > b[0] for a, b in zip(ivs, ivs[1:])):
            raise ConfigError("attack intervals overlap")
        if self.kind is ScenarioKind.EARLY and (not ivs or ivs[0][0] != 0):
            raise ConfigError("an early attack starts at t = 0")
        if self.kind is ScenarioKind.IMPULSE and len(ivs) != 1:
            raise ConfigError("an impulse attack is a single interval")
        if self.kind is ScenarioKind.INTERMITTENT and len(ivs) < 2:
            raise ConfigError("an intermittent attack needs at least 2 intervals")

    @property
    def window_count(self) -> int:
        return math.ceil(self.duration / self.dt)


PRESET_INTERVALS = {
    ScenarioKind.EARLY: ((0, 280),),  # 211 normal / 280 attack
    ScenarioKind.IMPULSE: ((192, 299),),  # 384 / 107
    ScenarioKind.INTERMITTENT: ((20, 120), (140, 260), (280, 380), (400, 491)),  # 80 / 411
    ScenarioKind.BASELINE: ((116, 232),),  # 116 / 116
}


def preset(name: str, seed: int = SEED) -> ScenarioSpec:
    try:
        kind = ScenarioKind(name.lower())
    except ValueError:
        names = ", ".join(k.value for k in ScenarioKind)
        raise ConfigError(f"unknown scenario {name!r}; choose one of {names}") from None
    duration = 232 if kind is ScenarioKind.BASELINE else SCENARIO_DURATION
    return ScenarioSpec(kind=kind, duration=duration, attack_intervals=PRESET_INTERVALS[kind], seed=seed)


# ── Address pools ─────────────────────────────────────────────


def _addresses(net: str, count: int, rng: np.random.Generator) -> list[str]:
    """``count`` distinct host addresses drawn from a network."""
    network = ipaddress.IPv4Network(net)
    hosts = network.num_addresses - 2
    if count > hosts:
        raise ConfigError(f"{net} has only {hosts} host addresses, asked for {count}")
    offsets = rng.choice(hosts, size=count, replace=False) + 1
    base = int(network.network_address)
    return [str(ipaddress.IPv4Address(base + int(o))) for o in offsets]


def _to_records(t_us, src, dst, ports) -> list[PacketRecord]:
    return [
        PacketRecord(int(t) / USEC, s, d, int(p))
        for t, s, d, p in zip(t_us, src, dst, ports)
    ]


# ── Generators ────────────────────────────────────────────────


def gen_normal(
    duration: float,
    rate: float,
    hosts: int,
    seed: int,
    dt: float = WINDOW_SECONDS,
    loss: float = 0.0,
) -> list[PacketRecord]:
    """Request/reply sessions among ``hosts`` addresses.

    ``rate`` counts packets in both directions: a Poisson(rate * duration)
    packet budget becomes budget // 2 requests at uniform times, each answered
    by its server inside the same window except for the share ``loss``.
    """
    if hosts < 2:
        raise ConfigError("normal traffic needs at least 2 hosts")
    if not 0 <= loss < 1:
        raise ConfigError(f"reply loss must be in [0, 1), got {loss}")
    host_rng, session_rng, time_rng, loss_rng = (
        np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(4)
    )
    addrs = _addresses(NORMAL_NET, hosts, host_rng)
    n_servers = max(1, hosts // 5)
    servers, clients = addrs[:n_servers], addrs[n_servers:]

    # Each client keeps one session: fixed server, service port and ephemeral port.
    session_server = session_rng.integers(0, n_servers, size=len(clients))
    session_service = session_rng.choice(SERVICE_PORTS, size=len(clients))
    session_ephemeral = session_rng.integers(49152, 65536, size=len(clients))

    duration_us = int(round(duration * USEC))
    dt_us = int(round(dt * USEC))
    n = time_rng.poisson(rate * duration) // 2
    req_t = np.sort(time_rng.integers(0, duration_us, size=n))
    who = time_rng.integers(0, len(clients), size=n)
    window_end = np.minimum((req_t // dt_us + 1) * dt_us, duration_us)
    room = np.minimum(window_end - req_t - 1, MAX_REPLY_DELAY_US)
    rep_t = req_t + (time_rng.random(n) * np.maximum(room, 0)).astype(np.int64)
    answered = loss_rng.random(n) >= loss

    src, dst, ports = [], [], []
    for c in who:
        src.append(clients[c])
        dst.append(servers[session_server[c]])
        ports.append(session_service[c])
    requests = _to_records(req_t, src, dst, ports)
    replies = _to_records(
        rep_t[answered],
        [d for d, ok in zip(dst, answered) if ok],
        [s for s, ok in zip(src, answered) if ok],
        [session_ephemeral[c] for c in who[answered]],
    )
    packets = sorted(requests + replies)
    logger.debug(
        "generated %d normal packets over %.0fs (%d unanswered)", len(packets), duration, n - len(replies)
    )
    return packets


def _flood(
    start_us: int,
    end_us: int,
    dt_us: int,
    rate: float,
    pool: list[str],
    targets: list[str],
    rng: np.random.Generator,
    ramp: int = 0,
) -> list[PacketRecord]:
    """At least one packet per window; the first ``ramp`` windows run at
    rate / 2**ramp, rate / 2**(ramp - 1), ... before the full rate."""
    times = []
    first = k = start_us // dt_us
    while k * dt_us < end_us:
        lo = max(k * dt_us, start_us)
        hi = min((k + 1) * dt_us, end_us)
        scale = 0.5 ** (ramp - (k - first)) if k - first < ramp else 1.0
        count = max(1, rng.poisson(scale * rate * (hi - lo) / USEC))
        times.append(rng.integers(lo, hi, size=count))
        k += 1
    t_us = np.sort(np.concatenate(times)) if times else np.zeros(0, dtype=np.int64)
    n = t_us.size
    src = [pool[i] for i in rng.integers(0, len(pool), size=n)]
    dst = [targets[i] for i in rng.integers(0, len(targets), size=n)]
    ports = rng.integers(1, 65536, size=n)
    return _to_records(t_us, src, dst, ports)


def _attack_pools(
    spoof_pool: int, victims: int, ss: np.random.SeedSequence,
) -> tuple[list[str], list[str]]:
    pool_rng, victim_rng = (np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(2))
    return _addresses(SPOOF_NET, spoof_pool, pool_rng), _addresses(VICTIM_NET, victims, victim_rng)


def gen_attack(
    duration: float,
    rate: float,
    spoof_pool: int,
    victims: int,
    seed: int,
    dt: float = WINDOW_SECONDS,
    ramp: int = 0,
) -> list[PacketRecord]:
    """Unidirectional flood from spoofed sources toward a few victims.

    Every window carries at least one packet.  With ``ramp`` > 0 the rate
    doubles window by window over the first ``ramp`` windows.  Sources are
    drawn from a fixed pool (disjoint from every other address pool) and are
    never answered.
    """
    if spoof_pool < 10 * victims:
        raise ConfigError("spoof pool must hold at least 10 addresses per victim")
    if ramp < 0:
        raise ConfigError(f"attack ramp must be >= 0 windows, got {ramp}")
    pool_ss, time_ss = np.random.SeedSequence(seed).spawn(2)
    pool, targets = _attack_pools(spoof_pool, victims, pool_ss)
    rng = np.random.Generator(np.random.PCG64(time_ss))
    duration_us, dt_us = int(round(duration * USEC)), int(round(dt * USEC))
    packets = sorted(_flood(0, duration_us, dt_us, rate, pool, targets, rng, ramp))
    logger.debug("generated %d attack packets over %.0fs", len(packets), duration)
    return packets


def window_labels(spec: ScenarioSpec) -> list[int]:
    """-1 for every window overlapping an attack interval, +1 otherwise."""
    labels = []
    for k in range(spec.window_count):
        lo, hi = k * spec.dt, (k + 1) * spec.dt
        hit = any(start < hi and lo < end for start, end in spec.attack_intervals)
        labels.append(-1 if hit else 1)
    return labels


def gen_scenario(spec: ScenarioSpec) -> tuple[list[PacketRecord], list[int]]:
    """Background sessions for the whole trace plus a flood inside each attack interval.

    All bursts share one spoof pool and victim set; each has its own arrival stream.
    """
    normal_ss, pool_ss, *burst_ss = np.random.SeedSequence(spec.seed).spawn(
        2 + len(spec.attack_intervals)
    )
    packets = gen_normal(
        spec.duration, spec.normal_rate, spec.normal_host_count,
        int(normal_ss.generate_state(1)[0]), dt=spec.dt, loss=spec.normal_loss,
    )
    if spec.attack_intervals:
        pool, targets = _attack_pools(spec.spoof_pool_size, spec.victim_count, pool_ss)
        dt_us = int(round(spec.dt * USEC))
        for (start, end), ss in zip(sorted(spec.attack_intervals), burst_ss):
            rng = np.random.Generator(np.random.PCG64(ss))
            packets += _flood(
                int(round(start * USEC)), int(round(end * USEC)), dt_us,
                spec.attack_rate, pool, targets, rng, spec.attack_ramp,
            )
    packets.sort()
    labels = window_labels(spec)
    logger.info(
        "scenario %s: %d packets, %d windows (%d normal, %d attack)",
        spec.kind.value, len(packets), len(labels), labels.count(1), labels.count(-1),
    )
    return packets, labels


# ── Files ─────────────────────────────────────────────────────


def save_labels(labels: list[int], out_path: Path) -> Path:
    """Write one ``window,label`` row per window."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("window", "label"))
        writer.writerows(enumerate(labels))
    return out_path


def load_labels(path: Path) -> list[int]:
    """Read a label file; windows must be numbered 0, 1, 2, ... without gaps."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"label file {path} not found")
    labels = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["window", "label"]:
            raise DataError(f"{path}: expected header window,label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                window, label = int(row[0]), int(row[1])
            except (ValueError, IndexError) as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
            if window != len(labels) or label not in (1, -1):
                raise DataError(f"{path}:{lineno}: expected window {len(labels)} labelled 1 or -1")
            labels.append(label)
    return labels


_SPEC_KEYS = {
    "KIND", "DURATION", "NORMAL_RATE", "ATTACK_RATE", "NORMAL_LOSS", "ATTACK_RAMP", "NORMAL_HOSTS",
    "SPOOF_POOL", "VICTIMS", "ATTACK_INTERVALS", "SEED", "WINDOW_SECONDS",
}


def load_spec(path: Path, seed: int | None = None) -> ScenarioSpec:
    """Read a KEY=VALUE scenario file; ATTACK_INTERVALS is ``start-end;start-end``."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file {path} not found")
    raw = {k.strip().upper(): (v or "").strip() for k, v in dotenv_values(path).items()}
    unknown = set(raw) - _SPEC_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown scenario keys {sorted(unknown)}")
    if "KIND" not in raw:
        raise ConfigError(f"{path}: KIND is required")
    try:
        intervals = tuple(
            tuple(float(x) for x in part.split("-"))
            for part in raw.get("ATTACK_INTERVALS", "").split(";") if part.strip()
        )
        if any(len(iv) != 2 for iv in intervals):
            raise ValueError("intervals are written start-end")
        return ScenarioSpec(
            kind=ScenarioKind(raw["KIND"].lower()),
            duration=float(raw.get("DURATION", SCENARIO_DURATION)),
            normal_rate=float(raw.get("NORMAL_RATE", NORMAL_RATE)),
            attack_rate=float(raw.get("ATTACK_RATE", ATTACK_RATE)),
            normal_loss=float(raw.get("NORMAL_LOSS", NORMAL_LOSS)),
            attack_ramp=int(raw.get("ATTACK_RAMP", ATTACK_RAMP)),
            normal_host_count=int(raw.get("NORMAL_HOSTS", NORMAL_HOSTS)),
            spoof_pool_size=int(raw.get("SPOOF_POOL", SPOOF_POOL)),
            victim_count=int(raw.get("VICTIMS", VICTIMS)),
            attack_intervals=intervals,
            seed=seed if seed is not None else int(raw.get("SEED", SEED)),
            dt=float(raw.get("WINDOW_SECONDS", WINDOW_SECONDS)),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{path}: {e}") from e
