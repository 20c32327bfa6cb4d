"""Packet-event data model and its plain-text trace format.

A trace is one bidirectional TCP flow capture.  The file format is CSV:

    #capture=client,transfer=download,bytes=1000
    ts,dir,seq,ack,len,syn,fin,rst,ack_flag,win,sack_cnt
    0.000125,c2s,17,0,1448,0,0,0,1,65535,0

Timestamps are seconds relative to the first packet, written with at
least six fractional digits and enough precision to round-trip exactly.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass

from .errors import BadHeader, EmptyTrace, IoFailure, MalformedRow

SEQ_MOD = 1 << 32


class Direction(enum.Enum):
    CLIENT_TO_SERVER = "c2s"
    SERVER_TO_CLIENT = "s2c"


class CapturePoint(enum.Enum):
    CLIENT = "client"
    SERVER = "server"


class TransferDirection(enum.Enum):
    DOWNLOAD = "download"
    UPLOAD = "upload"


@dataclass(frozen=True, slots=True)
class PacketEvent:
    """One captured TCP packet."""

    ts: float
    dir: Direction
    seq: int
    ack: int
    payload_len: int
    syn: bool = False
    fin: bool = False
    rst: bool = False
    ack_flag: bool = False
    win: int = 0
    sack_cnt: int = 0

    def __post_init__(self):
        if self.ts < 0:
            raise ValueError(f"negative timestamp {self.ts}")
        if self.payload_len < 0:
            raise ValueError("negative payload_len")
        if not (0 <= self.seq < SEQ_MOD and 0 <= self.ack < SEQ_MOD):
            raise ValueError("seq/ack outside 32-bit range")
        if self.win < 0 or self.sack_cnt < 0:
            raise ValueError("negative win or sack_cnt")


@dataclass(frozen=True)
class TraceRecord:
    """An ordered bidirectional flow capture."""

    capture_point: CapturePoint
    direction_of_transfer: TransferDirection
    events: tuple[PacketEvent, ...]
    declared_transfer_bytes: int

    def __post_init__(self):
        if self.declared_transfer_bytes <= 0:
            raise ValueError("declared_transfer_bytes must be positive")

    def data_direction(self) -> Direction:
        """Direction the transferred payload travels."""
        if self.direction_of_transfer is TransferDirection.DOWNLOAD:
            return Direction.SERVER_TO_CLIENT
        return Direction.CLIENT_TO_SERVER

    def capture_outbound(self) -> Direction:
        """Direction of packets originating at the capture point."""
        if self.capture_point is CapturePoint.CLIENT:
            return Direction.CLIENT_TO_SERVER
        return Direction.SERVER_TO_CLIENT


@dataclass(frozen=True)
class TracePair:
    """The two captures collected for one diagnostic episode."""

    download: TraceRecord
    upload: TraceRecord

    def __post_init__(self):
        d, u = self.download, self.upload
        if d.capture_point is not CapturePoint.CLIENT or d.direction_of_transfer is not TransferDirection.DOWNLOAD:
            raise ValueError("download trace must be captured at the client")
        if u.capture_point is not CapturePoint.SERVER or u.direction_of_transfer is not TransferDirection.UPLOAD:
            raise ValueError("upload trace must be captured at the server")


_COLUMNS = ["ts", "dir", "seq", "ack", "len", "syn", "fin", "rst", "ack_flag", "win", "sack_cnt"]


def _parse_bool(s: str) -> bool:
    if s == "0":
        return False
    if s == "1":
        return True
    raise ValueError(f"boolean field must be 0 or 1, got {s!r}")


def _format_ts(ts: float) -> str:
    # Escalate precision until the decimal string parses back exactly.
    for digits in range(6, 18):
        s = f"{ts:.{digits}f}"
        if float(s) == ts:
            return s
    return repr(ts)


def read_trace(path) -> TraceRecord:
    """Parse a trace file; events are sorted by ts (stable on ties)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    if not lines or not lines[0].startswith("#"):
        raise BadHeader(f"{path}: missing metadata line")
    meta = {}
    for part in lines[0][1:].strip().split(","):
        if "=" not in part:
            raise BadHeader(f"{path}: bad metadata field {part!r}")
        key, value = part.split("=", 1)
        meta[key.strip()] = value.strip()
    for key in ("capture", "transfer", "bytes"):
        if key not in meta:
            raise BadHeader(f"{path}: metadata missing {key!r}")
    try:
        capture = CapturePoint(meta["capture"])
        transfer = TransferDirection(meta["transfer"])
        declared = int(meta["bytes"])
    except ValueError as exc:
        raise BadHeader(f"{path}: {exc}") from exc

    if len(lines) < 2 or [c.strip() for c in lines[1].split(",")] != _COLUMNS:
        raise BadHeader(f"{path}: missing or wrong column header")

    events = []
    for idx, row in enumerate(csv.reader(lines[2:]), start=1):
        if not row:
            continue  # trailing blank line
        if len(row) != len(_COLUMNS):
            raise MalformedRow(idx, f"expected {len(_COLUMNS)} columns, got {len(row)}")
        try:
            ev = PacketEvent(
                ts=float(row[0]),
                dir=Direction(row[1]),
                seq=int(row[2]),
                ack=int(row[3]),
                payload_len=int(row[4]),
                syn=_parse_bool(row[5]),
                fin=_parse_bool(row[6]),
                rst=_parse_bool(row[7]),
                ack_flag=_parse_bool(row[8]),
                win=int(row[9]),
                sack_cnt=int(row[10]),
            )
        except ValueError as exc:
            raise MalformedRow(idx, str(exc)) from exc
        if ev.payload_len > 0 and (ev.syn or ev.fin or ev.rst):
            warnings.warn(f"{path}: row {idx} carries payload on a syn/fin/rst packet")
        events.append(ev)
    if not events:
        raise EmptyTrace(f"{path}: no event rows")

    events.sort(key=lambda e: e.ts)  # stable: ties keep file order
    return TraceRecord(
        capture_point=capture,
        direction_of_transfer=transfer,
        events=tuple(events),
        declared_transfer_bytes=declared,
    )


def write_trace(trace: TraceRecord, path) -> None:
    """Write a trace; read_trace(write_trace(t)) reproduces t exactly."""
    if not trace.events:
        raise EmptyTrace("refusing to write a trace with no events")
    out = [
        f"#capture={trace.capture_point.value},transfer={trace.direction_of_transfer.value},"
        f"bytes={trace.declared_transfer_bytes}",
        ",".join(_COLUMNS),
    ]
    for e in trace.events:
        out.append(
            f"{_format_ts(e.ts)},{e.dir.value},{e.seq},{e.ack},{e.payload_len},"
            f"{int(e.syn)},{int(e.fin)},{int(e.rst)},{int(e.ack_flag)},{e.win},{e.sack_cnt}"
        )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(out) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def write_pair(pair: TracePair, down_path, up_path) -> None:
    write_trace(pair.download, down_path)
    write_trace(pair.upload, up_path)


def read_pair(down_path, up_path) -> TracePair:
    return TracePair(download=read_trace(down_path), upload=read_trace(up_path))
