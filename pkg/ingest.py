"""Read packet records from the canonical CSV format or from classic pcap captures."""

import csv
import ipaddress
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from errors import DataError, MalformedTraceError, TraceFormatError, UnsupportedVariantError
from flows import PacketRecord

logger = logging.getLogger(__name__)

CSV_HEADER = ("t", "src", "dst", "port")
MAX_MALFORMED_FRACTION = 0.01

# ── pcap constants ───────────────────────────────────────────
PCAP_GLOBAL_HEADER_LEN = 24
PCAP_RECORD_HEADER_LEN = 16
PCAP_MAGIC_USEC = 0xA1B2C3D4
PCAP_MAGIC_NSEC = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A
LINKTYPE_ETHERNET = 1
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_VLAN = 0x8100
IPPROTO_TCP = 6
IPPROTO_UDP = 17


class TraceFormat(str, Enum):
    CANONICAL_CSV = "csv"
    PCAP = "pcap"


@dataclass
class TraceSource:
    """Where records came from and why some were skipped."""

    path: Path
    format: TraceFormat
    total_records: int = 0
    non_ipv4: int = 0
    non_transport: int = 0
    fragments: int = 0
    malformed: int = 0
    row_errors: list[str] = field(default_factory=list, repr=False)

    @property
    def skipped(self) -> int:
        return self.non_ipv4 + self.non_transport + self.fragments + self.malformed


# ── Canonical CSV ─────────────────────────────────────────────


def _parse_row(row: list[str]) -> PacketRecord:
    if len(row) != 4:
        raise ValueError(f"expected 4 fields, got {len(row)}")
    t = float(row[0])
    src = str(ipaddress.IPv4Address(row[1].strip()))
    dst = str(ipaddress.IPv4Address(row[2].strip()))
    port = int(row[3])
    return PacketRecord(t, src, dst, port)


def read_csv(path: Path, source: TraceSource | None = None) -> list[PacketRecord]:
    """Parse a ``t,src,dst,port`` file; rows may be in any order, output is time-sorted.

    Malformed rows are skipped and reported with their line number; more than
    1% malformed rows fails the whole file.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"trace file {path} not found")
    source = source or TraceSource(path, TraceFormat.CANONICAL_CSV)

    packets = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise TraceFormatError(f"{path}: missing header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            source.total_records += 1
            try:
                packets.append(_parse_row(row))
            except ValueError as e:
                source.malformed += 1
                source.row_errors.append(f"{path}:{lineno}: {e}")
                logger.warning("%s:%d: skipping malformed row (%s)", path, lineno, e)

    if source.total_records and source.malformed / source.total_records > MAX_MALFORMED_FRACTION:
        raise MalformedTraceError(
            f"{path}: {source.malformed} of {source.total_records} rows are malformed",
            source.row_errors,
        )
    packets.sort(key=lambda p: p.t)
    return packets


def write_csv(packets: Iterable[PacketRecord], out_path: Path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(out_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for p in packets:
            writer.writerow((f"{p.t:.6f}", p.src, p.dst, p.port))
            count += 1
    logger.info("wrote %d packets to %s", count, out_path)
    return out_path


# ── Classic pcap ──────────────────────────────────────────────


def _byte_order(magic_bytes: bytes, path: Path) -> str:
    le = struct.unpack("<I", magic_bytes)[0]
    be = struct.unpack(">I", magic_bytes)[0]
    if le == PCAP_MAGIC_USEC:
        return "<"
    if be == PCAP_MAGIC_USEC:
        return ">"
    if PCAP_MAGIC_NSEC in (le, be):
        raise UnsupportedVariantError(f"{path}: nanosecond-resolution pcap is not supported")
    if le == PCAPNG_MAGIC:
        raise UnsupportedVariantError(f"{path}: pcapng is not supported; convert to classic pcap")
    raise TraceFormatError(f"{path}: not a pcap file (magic {magic_bytes.hex()})")


def _parse_frame(frame: bytes, source: TraceSource) -> tuple[str, str, int] | None:
    """(src, dst, dst_port) for an Ethernet/IPv4/TCP|UDP frame, else count the skip."""
    if len(frame) < 14:
        source.malformed += 1
        return None
    ethertype = struct.unpack_from("!H", frame, 12)[0]
    offset = 14
    if ethertype == ETHERTYPE_VLAN:
        if len(frame) < 18:
            source.malformed += 1
            return None
        ethertype = struct.unpack_from("!H", frame, 16)[0]
        offset = 18
    if ethertype != ETHERTYPE_IPV4:
        source.non_ipv4 += 1
        return None

    ip = frame[offset:]
    if len(ip) < 20 or ip[0] >> 4 != 4:
        source.malformed += 1
        return None
    ihl = (ip[0] & 0x0F) * 4
    if ihl < 20 or len(ip) < ihl:
        source.malformed += 1
        return None
    frag_offset = struct.unpack_from("!H", ip, 6)[0] & 0x1FFF
    protocol = ip[9]
    if protocol not in (IPPROTO_TCP, IPPROTO_UDP):
        source.non_transport += 1
        return None
    if frag_offset:
        source.fragments += 1
        return None
    if len(ip) < ihl + 4:
        source.malformed += 1
        return None
    src = str(ipaddress.IPv4Address(ip[12:16]))
    dst = str(ipaddress.IPv4Address(ip[16:20]))
    port = struct.unpack_from("!H", ip, ihl + 2)[0]
    return src, dst, port


def read_pcap(path: Path) -> tuple[list[PacketRecord], TraceSource]:
    """Decode a classic (microsecond) pcap capture of Ethernet frames.

    Timestamps are rebased so the earliest kept packet is at t = 0.  A
    truncated trailing record stops the read and counts as malformed.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"trace file {path} not found")
    source = TraceSource(path, TraceFormat.PCAP)

    with open(path, "rb") as f:
        header = f.read(PCAP_GLOBAL_HEADER_LEN)
        if len(header) < 4:
            raise TraceFormatError(f"{path}: file too short for a pcap header")
        order = _byte_order(header[:4], path)
        if len(header) < PCAP_GLOBAL_HEADER_LEN:
            raise TraceFormatError(f"{path}: truncated pcap global header")
        linktype = struct.unpack(order + "IHHiIII", header)[6]
        if linktype != LINKTYPE_ETHERNET:
            raise TraceFormatError(f"{path}: unsupported link type {linktype} (need Ethernet)")

        raw = []  # (t_us, src, dst, port)
        while True:
            rec = f.read(PCAP_RECORD_HEADER_LEN)
            if not rec:
                break
            source.total_records += 1
            if len(rec) < PCAP_RECORD_HEADER_LEN:
                source.malformed += 1
                break
            ts_sec, ts_usec, incl_len, _orig_len = struct.unpack(order + "IIII", rec)
            frame = f.read(incl_len)
            if len(frame) < incl_len:
                source.malformed += 1
                break
            parsed = _parse_frame(frame, source)
            if parsed is not None:
                raw.append((ts_sec * 1_000_000 + ts_usec, *parsed))

    if source.malformed:
        logger.warning("%s: %d malformed records", path, source.malformed)
    if not raw:
        return [], source
    base = min(r[0] for r in raw)
    packets = [PacketRecord((t - base) / 1_000_000, s, d, p) for t, s, d, p in raw]
    packets.sort(key=lambda p: p.t)
    logger.info(
        "%s: %d packets kept, %d skipped of %d records",
        path, len(packets), source.skipped, source.total_records,
    )
    return packets, source


# ── Dispatch ──────────────────────────────────────────────────


def read_trace(path: Path) -> tuple[list[PacketRecord], TraceSource]:
    """Sniff the file's first bytes and read it as pcap or canonical CSV."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"trace file {path} not found")
    with open(path, "rb") as f:
        head = f.read(4)
    if len(head) == 4:
        le, be = struct.unpack("<I", head)[0], struct.unpack(">I", head)[0]
        known = {PCAP_MAGIC_USEC, PCAP_MAGIC_NSEC, PCAPNG_MAGIC}
        if le in known or be in known:
            return read_pcap(path)
    source = TraceSource(path, TraceFormat.CANONICAL_CSV)
    return read_csv(path, source), source
