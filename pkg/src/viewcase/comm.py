"""Communication-interface data plane: packets, frames, health, failover.

Wire formats
------------

Packet header, 15 bytes, all fields big-endian::

    msg_id:4  seq_index:2  total_count:2  priority:1  payload_len:2  auth_tag:4

The authentication tag is a keyed FNV-1a 32-bit digest over
key || header-sans-tag || payload — an integrity check, not cryptography.

LINK_A frame::

    AA 55 | length:2 (header+payload) | header | payload | CRC-16:2

with CRC-16/CCITT-FALSE computed over length..payload.

LINK_B frame: 0x7E delimiters around the byte-stuffed body
(header | payload | CRC-16 over header+payload); 0x7E and 0x7D inside the
body are escaped as 0x7D followed by the byte XOR 0x20.

Reassembly is keyed by (src, msg_id): packets may arrive in any order and
duplicated; a completed key is remembered for one timeout window so late
duplicates do not rebuild the message. Entries that never complete are
reported by `scan_timeouts`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

# --- integrity primitives -----------------------------------------------------

FNV_OFFSET_BASIS = 0x811C9DC5
FNV_PRIME = 0x01000193


def auth_tag(key: bytes, data: bytes) -> int:
    """Keyed FNV-1a, 32-bit: digest of key || data."""
    h = FNV_OFFSET_BASIS
    for chunk in (key, data):  # constants inlined: this loop dominates framing cost
        for b in chunk:
            h = ((h ^ b) * 0x01000193) & 0xFFFFFFFF
    return h


_CRC_TABLE = []
for _byte in range(256):
    _crc = _byte << 8
    for _ in range(8):
        _crc = ((_crc << 1) ^ 0x1021) & 0xFFFF if _crc & 0x8000 else (_crc << 1) & 0xFFFF
    _CRC_TABLE.append(_crc)


def crc16(data: bytes, crc: int = 0xFFFF) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection)."""
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


# --- priorities ----------------------------------------------------------------

DEFAULT_PRIORITY = 100
DEFAULT_PRIORITIES: dict[str, int] = {
    "track_data": 200,
    "command": 180,
    "status": 140,
    "health": 120,
    "log": 40,
}


def classify_priority(
    data_type: str, table: dict[str, int] | None = None, default: int = DEFAULT_PRIORITY
) -> int:
    """Total lookup: configured types map through the table, the rest to default."""
    return (DEFAULT_PRIORITIES if table is None else table).get(data_type, default)


def data_type_for_priority(
    priority: int, table: dict[str, int] | None = None
) -> str:
    """Inverse of classify_priority; the table is injective by construction."""
    for name, value in (DEFAULT_PRIORITIES if table is None else table).items():
        if value == priority:
            return name
    return "unknown"


# --- packets -------------------------------------------------------------------

HEADER_LEN = 15
_HEADER = struct.Struct(">IHHBHI")
_HEADER_SANS_TAG = struct.Struct(">IHHBH")
MAX_TOTAL_COUNT = 0xFFFF


@dataclass(frozen=True)
class AppMessage:
    msg_id: int
    src: str
    dst: str
    data_type: str
    payload: bytes


@dataclass(frozen=True)
class Packet:
    msg_id: int
    seq_index: int
    total_count: int
    priority: int
    payload: bytes
    auth_tag: int

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    def header_sans_tag(self) -> bytes:
        return _HEADER_SANS_TAG.pack(
            self.msg_id, self.seq_index, self.total_count, self.priority, len(self.payload)
        )

    def to_bytes(self) -> bytes:
        return (
            _HEADER.pack(
                self.msg_id,
                self.seq_index,
                self.total_count,
                self.priority,
                len(self.payload),
                self.auth_tag,
            )
            + self.payload
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Packet":
        if len(data) < HEADER_LEN:
            raise ValueError("short packet")
        msg_id, seq, total, priority, payload_len, tag = _HEADER.unpack(data[:HEADER_LEN])
        payload = data[HEADER_LEN:]
        if payload_len != len(payload):
            raise ValueError("payload length mismatch")
        return cls(msg_id, seq, total, priority, payload, tag)


class MessageTooLarge(Exception):
    pass


def packetize(
    msg: AppMessage,
    mtu_payload: int,
    key: bytes,
    table: dict[str, int] | None = None,
) -> list[Packet]:
    """Split a message into tagged packets of at most mtu_payload bytes."""
    if mtu_payload < 1:
        raise ValueError("mtu_payload must be >= 1")
    total = max(1, -(-len(msg.payload) // mtu_payload))
    if total > MAX_TOTAL_COUNT:
        raise MessageTooLarge(
            f"{len(msg.payload)} bytes need {total} packets; limit is {MAX_TOTAL_COUNT}"
        )
    priority = classify_priority(msg.data_type, table)
    packets = []
    for i in range(total):
        chunk = msg.payload[i * mtu_payload : (i + 1) * mtu_payload]
        header = _HEADER_SANS_TAG.pack(msg.msg_id, i, total, priority, len(chunk))
        packets.append(
            Packet(msg.msg_id, i, total, priority, chunk, auth_tag(key, header + chunk))
        )
    return packets


def verify_packet(key: bytes, pkt: Packet) -> bool:
    return auth_tag(key, pkt.header_sans_tag() + pkt.payload) == pkt.auth_tag


# --- reassembly ------------------------------------------------------------------


class OutcomeKind(Enum):
    COMPLETE = "complete"
    PENDING = "pending"
    DUPLICATE = "duplicate"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ReassemblyOutcome:
    kind: OutcomeKind
    message: AppMessage | None = None
    reason: str | None = None  # "auth" | "timeout" | "inconsistent"
    key: tuple[str, int] | None = None


@dataclass
class _Entry:
    received: dict[int, bytes]
    total_count: int
    first_seen: int
    priority: int


@dataclass
class ReassemblyBuffer:
    owner: str = ""  # destination endpoint whose traffic this buffer holds
    entries: dict[tuple[str, int], _Entry] = field(default_factory=dict)
    completed: dict[tuple[str, int], int] = field(default_factory=dict)


def reassemble(
    buffer: ReassemblyBuffer,
    pkt: Packet,
    now: int,
    timeout: int,
    key: bytes,
    src: str = "?",
    table: dict[str, int] | None = None,
) -> ReassemblyOutcome:
    """Feed one packet; outcome tells the caller what happened.

    The tag is checked before any state changes, so unauthenticated
    packets can never create or grow an entry.
    """
    k = (src, pkt.msg_id)
    if not verify_packet(key, pkt):
        return ReassemblyOutcome(OutcomeKind.REJECTED, reason="auth", key=k)
    if pkt.total_count < 1 or pkt.seq_index >= pkt.total_count:
        return ReassemblyOutcome(OutcomeKind.REJECTED, reason="inconsistent", key=k)

    done_at = buffer.completed.get(k)
    if done_at is not None:
        if now - done_at < timeout:
            return ReassemblyOutcome(OutcomeKind.DUPLICATE, key=k)
        del buffer.completed[k]

    entry = buffer.entries.get(k)
    if entry is not None and now - entry.first_seen >= timeout:
        del buffer.entries[k]  # stale; scan_timeouts would have reported it
        entry = None

    if entry is None:
        entry = _Entry({pkt.seq_index: pkt.payload}, pkt.total_count, now, pkt.priority)
        buffer.entries[k] = entry
    else:
        if pkt.total_count != entry.total_count:
            return ReassemblyOutcome(OutcomeKind.REJECTED, reason="inconsistent", key=k)
        if pkt.seq_index in entry.received:
            return ReassemblyOutcome(OutcomeKind.DUPLICATE, key=k)
        entry.received[pkt.seq_index] = pkt.payload

    if len(entry.received) == entry.total_count:
        payload = b"".join(entry.received[i] for i in range(entry.total_count))
        del buffer.entries[k]
        buffer.completed[k] = now
        msg = AppMessage(
            pkt.msg_id, src, buffer.owner, data_type_for_priority(entry.priority, table), payload
        )
        return ReassemblyOutcome(OutcomeKind.COMPLETE, message=msg, key=k)
    return ReassemblyOutcome(OutcomeKind.PENDING, key=k)


def scan_timeouts(buffer: ReassemblyBuffer, now: int, timeout: int) -> list[ReassemblyOutcome]:
    """Expire incomplete entries (and stale completed-key memory)."""
    out = []
    for k in [k for k, e in buffer.entries.items() if now - e.first_seen >= timeout]:
        del buffer.entries[k]
        out.append(ReassemblyOutcome(OutcomeKind.REJECTED, reason="timeout", key=k))
    for k in [k for k, t in buffer.completed.items() if now - t >= timeout]:
        del buffer.completed[k]
    return out


# --- framing ---------------------------------------------------------------------


class LinkType(Enum):
    LINK_A = "LINK_A"
    LINK_B = "LINK_B"


class FrameCorrupt(Exception):
    pass


class UnknownLink(Exception):
    pass


LINK_A_SYNC = b"\xaa\x55"
_FLAG = 0x7E
_ESCAPE = 0x7D


def _resolve_link(link: LinkType | str) -> LinkType:
    if isinstance(link, LinkType):
        return link
    try:
        return LinkType[str(link)]
    except KeyError:
        raise UnknownLink(str(link)) from None


def convert_to_frame(pkt: Packet, link: LinkType | str) -> bytes:
    link = _resolve_link(link)
    body = pkt.to_bytes()
    if link is LinkType.LINK_A:
        length = struct.pack(">H", len(body))
        return LINK_A_SYNC + length + body + struct.pack(">H", crc16(length + body))
    inner = body + struct.pack(">H", crc16(body))
    stuffed = bytearray([_FLAG])
    for b in inner:
        if b in (_FLAG, _ESCAPE):
            stuffed += bytes((_ESCAPE, b ^ 0x20))
        else:
            stuffed.append(b)
    stuffed.append(_FLAG)
    return bytes(stuffed)


def convert_from_frame(data: bytes, link: LinkType | str) -> Packet:
    link = _resolve_link(link)
    if link is LinkType.LINK_A:
        if len(data) < 2 + 2 + HEADER_LEN + 2:
            raise FrameCorrupt("short frame")
        if data[:2] != LINK_A_SYNC:
            raise FrameCorrupt("bad sync")
        (length,) = struct.unpack(">H", data[2:4])
        if len(data) != 2 + 2 + length + 2:
            raise FrameCorrupt("length mismatch")
        (crc,) = struct.unpack(">H", data[-2:])
        if crc16(data[2:-2]) != crc:
            raise FrameCorrupt("checksum mismatch")
        body = data[4:-2]
    else:
        if len(data) < 2 or data[0] != _FLAG or data[-1] != _FLAG:
            raise FrameCorrupt("bad delimiters")
        raw = data[1:-1]
        if _FLAG in raw:
            raise FrameCorrupt("flag inside frame")
        inner = bytearray()
        i = 0
        while i < len(raw):
            b = raw[i]
            if b == _ESCAPE:
                if i + 1 >= len(raw):
                    raise FrameCorrupt("dangling escape")
                inner.append(raw[i + 1] ^ 0x20)
                i += 2
            else:
                inner.append(b)
                i += 1
        if len(inner) < HEADER_LEN + 2:
            raise FrameCorrupt("short frame")
        (crc,) = struct.unpack(">H", inner[-2:])
        if crc16(bytes(inner[:-2])) != crc:
            raise FrameCorrupt("checksum mismatch")
        body = bytes(inner[:-2])
    try:
        return Packet.from_bytes(body)
    except ValueError as exc:
        raise FrameCorrupt(str(exc)) from None


# --- health monitoring -------------------------------------------------------------


class HealthStatus(Enum):
    OK = "ok"
    LATE = "late"
    DEAD = "dead"


@dataclass
class HealthRecord:
    counter: int
    last_update: int
    last_scanned: int | None = None
    misses: int = 0
    status: HealthStatus = HealthStatus.OK


@dataclass(frozen=True)
class Alert:
    process: str
    status: HealthStatus
    at: int


@dataclass
class HealthTable:
    records: dict[str, HealthRecord] = field(default_factory=dict)

    def observe(self, process: str, counter: int, now: int) -> None:
        rec = self.records.get(process)
        if rec is None:
            self.records[process] = HealthRecord(counter, now)
        elif counter != rec.counter:
            rec.counter = counter
            rec.last_update = now

    def scan(self, now: int, dead_threshold: int) -> list[Alert]:
        alerts = []
        for process, rec in self.records.items():
            if rec.last_scanned is None or rec.counter != rec.last_scanned:
                rec.last_scanned = rec.counter
                rec.misses = 0
                if rec.status is HealthStatus.LATE:
                    rec.status = HealthStatus.OK  # silent recovery; dead stays dead
                continue
            rec.misses += 1
            if rec.status is HealthStatus.DEAD:
                continue
            if rec.misses >= dead_threshold:
                rec.status = HealthStatus.DEAD
                alerts.append(Alert(process, HealthStatus.DEAD, now))
            elif rec.status is HealthStatus.OK:
                rec.status = HealthStatus.LATE
                alerts.append(Alert(process, HealthStatus.LATE, now))
        return alerts


def heartbeat_scan(
    table: HealthTable, now: int, scan_period: int, dead_threshold: int
) -> list[Alert]:
    """Edge-triggered health pass: Late after one miss, Dead after dead_threshold."""
    if scan_period < 1:
        raise ValueError("scan_period must be positive")
    return table.scan(now, dead_threshold)


# --- failover ------------------------------------------------------------------------


@dataclass(frozen=True)
class TakeoverEvent:
    main: str
    standby: str
    detected_at: int
    active_at: int


def standby_takeover(world, main_id: str, standby_id: str, now: int, detected_at: int) -> TakeoverEvent:
    """Rebind the dead main's channel endpoints to the standby process."""
    from .statechart import ActorMessage  # local import avoids a cycle

    world.rebind_endpoints(main_id, standby_id, now)
    world.post_mailbox(
        standby_id, ActorMessage("TAKEOVER", main_id.encode(), 250), now
    )
    world.trace(now, standby_id, "-", "takeover", f"from {main_id}")
    event = TakeoverEvent(main_id, standby_id, detected_at, now)
    world.metrics.record_failover(main_id, standby_id, detected_at, now)
    return event


def build_failover(
    standby_map: dict[str, str],
    health_source: str = "ReportHealth",
    scan_period: int = 100,
    dead_threshold: int = 3,
    monitor_process: str | None = None,
    alert_channel: str | None = None,
):
    """Wire a heartbeat scan into the engine.

    Every scan reads the health segments into a HealthTable, raises
    edge-triggered alerts, takes over for dead mains listed in
    standby_map, and (when a monitor process is configured) sends one
    status summary through the alert channel regardless of alert count,
    so link traffic stays constant across runs.
    """
    from .engine import FailoverConfig
    from .statechart import ActorMessage

    table = HealthTable()

    def scan(world, now: int) -> None:
        for ch in world.channels.values():
            if ch.channel.source == health_source and hasattr(ch, "version"):
                table.observe(ch.channel.writer, ch.version, now)
        alerts = heartbeat_scan(table, now, scan_period, dead_threshold)
        for alert in alerts:
            world.trace(now, alert.process, "-", "alert", alert.status.value)
            if alert.status is HealthStatus.DEAD:
                standby = standby_map.get(alert.process)
                if (
                    standby
                    and standby in world.processes
                    and world.processes[standby].alive
                ):
                    standby_takeover(world, alert.process, standby, now, now)
        if (
            monitor_process
            and alert_channel
            and monitor_process in world.processes
            and world.processes[monitor_process].alive
        ):
            body = "|".join(f"{a.process}:{a.status.value}" for a in alerts).encode()
            world.channel_send(
                alert_channel,
                ActorMessage("EQUIP_STATUS", body, classify_priority("status")),
                now,
            )

    return FailoverConfig(scan_period=scan_period, scan_fn=scan)


# --- configuration ---------------------------------------------------------------------


@dataclass(frozen=True)
class CommConfig:
    mtu_payload: int = 1000
    reassembly_timeout: int = 3000
    scan_period: int = 100
    dead_threshold: int = 3
    auth_key: bytes = b"viewcase"
    default_priority: int = DEFAULT_PRIORITY
    priorities: tuple[tuple[str, int], ...] = tuple(DEFAULT_PRIORITIES.items())

    def priority_table(self) -> dict[str, int]:
        return dict(self.priorities)


DEFAULT_CONFIG = CommConfig()

_INT_KEYS = ("mtu_payload", "reassembly_timeout", "scan_period", "dead_threshold", "default_priority")


def parse_comm_config(text: str) -> CommConfig:
    """Parse `key = value` configuration lines (# comments allowed)."""
    values: dict[str, object] = {}
    priorities: dict[str, int] = dict(DEFAULT_PRIORITIES)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key == "auth_key":
                values[key] = value.encode()
            elif key.startswith("priority."):
                priorities[key[len("priority."):]] = int(value)
            else:
                raise KeyError
        except KeyError:
            raise ValueError(f"line {lineno}: unknown key {key!r}") from None
        except ValueError:
            raise ValueError(f"line {lineno}: {key} needs an integer, got {value!r}") from None
    return CommConfig(priorities=tuple(priorities.items()), **values)  # type: ignore[arg-type]


def render_comm_config(cfg: CommConfig) -> str:
    lines = [
        f"mtu_payload = {cfg.mtu_payload}",
        f"reassembly_timeout = {cfg.reassembly_timeout}",
        f"scan_period = {cfg.scan_period}",
        f"dead_threshold = {cfg.dead_threshold}",
        f"auth_key = {cfg.auth_key.decode()}",
        f"default_priority = {cfg.default_priority}",
    ]
    for name, value in cfg.priorities:
        lines.append(f"priority.{name} = {value}")
    return "\n".join(lines) + "\n"
