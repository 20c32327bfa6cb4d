"""Connection-signature extraction.

Turns a pair of packet traces into a fixed-length feature vector using a
versioned catalog of per-trace statistics.  Statistics that are undefined
for a given trace (e.g. an RTT deviation with fewer than two samples)
are emitted as 0.0, with the definedness recorded separately so callers
can audit what the vector actually measured.

Catalog "v1" computes 37 statistics for each of the two traces (74
features).  All statistics use timestamps relative to the trace start,
so signatures are invariant under time shift.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CatalogMismatch, EmptyTrace
from .trace import Direction, TracePair, TraceRecord, TransferDirection

SEQ_MOD = 1 << 32
SMALL_SEGMENT_BYTES = 512  # "push-like" threshold


class Statistic(enum.Enum):
    ELAPSED_TIME = "elapsed_time"
    TOTAL_PACKETS_C2S = "total_packets_c2s"
    TOTAL_PACKETS_S2C = "total_packets_s2c"
    TOTAL_BYTES_C2S = "total_bytes_c2s"
    TOTAL_BYTES_S2C = "total_bytes_s2c"
    DATA_PACKETS_C2S = "data_packets_c2s"
    DATA_PACKETS_S2C = "data_packets_s2c"
    PURE_ACK_PACKETS_C2S = "pure_ack_packets_c2s"
    PURE_ACK_PACKETS_S2C = "pure_ack_packets_s2c"
    THROUGHPUT = "throughput"
    RETRANSMITTED_PACKETS = "retransmitted_packets"
    RETRANSMITTED_BYTES = "retransmitted_bytes"
    OUT_OF_ORDER_PACKETS = "out_of_order_packets"
    DUP_ACK_COUNT = "dup_ack_count"
    TRIPLE_DUP_ACK_EVENTS = "triple_dup_ack_events"
    SACK_BLOCKS_TOTAL = "sack_blocks_total"
    MAX_SACK_CNT = "max_sack_cnt"
    WIN_MIN = "win_min"
    WIN_MAX = "win_max"
    WIN_AVG = "win_avg"
    ZERO_WINDOW_COUNT = "zero_window_count"
    RTT_AVG = "rtt_avg"
    RTT_MIN = "rtt_min"
    RTT_MAX = "rtt_max"
    RTT_STDEV = "rtt_stdev"
    RTT_SAMPLES = "rtt_samples"
    IDLE_TIME_MAX = "idle_time_max"
    MEAN_SEGMENT_SIZE = "mean_segment_size"
    MAX_SEGMENT_SIZE = "max_segment_size"
    MIN_SEGMENT_SIZE = "min_segment_size"
    PUSH_LIKE_SMALL_SEGMENT_COUNT = "push_like_small_segment_count"
    SYN_COUNT = "syn_count"
    FIN_COUNT = "fin_count"
    RST_COUNT = "rst_count"
    INITIAL_WINDOW_BYTES = "initial_window_bytes"
    ACK_COMPRESSION_RATIO = "ack_compression_ratio"
    BYTES_PER_ACK = "bytes_per_ack"


STATISTICS_V1: tuple[Statistic, ...] = tuple(Statistic)


@dataclass(frozen=True)
class FeatureDef:
    name: str
    trace: TransferDirection
    statistic: Statistic


@dataclass(frozen=True)
class FeatureCatalog:
    version: str
    features: tuple[FeatureDef, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")

    @property
    def m(self) -> int:
        return len(self.features)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)


def default_catalog() -> FeatureCatalog:
    """Catalog v1: every Statistic for each trace, download block first."""
    defs = []
    for trace, prefix in ((TransferDirection.DOWNLOAD, "down"), (TransferDirection.UPLOAD, "up")):
        for stat in STATISTICS_V1:
            defs.append(FeatureDef(name=f"{prefix}_{stat.value}", trace=trace, statistic=stat))
    return FeatureCatalog(version="v1", features=tuple(defs))


@dataclass(frozen=True, eq=False)
class Signature:
    """Feature vector for one trace pair, optionally labeled."""

    values: np.ndarray
    label: int | None
    catalog_version: str


@dataclass(frozen=True)
class ExtractionDiagnostics:
    """Per-feature definedness for one extracted signature."""

    defined: tuple[bool, ...]
    feature_names: tuple[str, ...]

    def undefined_features(self) -> tuple[str, ...]:
        return tuple(n for n, d in zip(self.feature_names, self.defined) if not d)


class _SeqUnwrapper:
    """Extends 32-bit sequence values to a monotone-friendly integer line.

    Each new value is placed at the representative closest to the
    previous one, so wraparound is handled as long as consecutive values
    stay within half the sequence space.  Values are anchored at the raw
    first value, which keeps independently unwrapped streams (e.g. data
    seq and the acks covering them) in the same frame provided both
    start before the first wrap.
    """

    def __init__(self):
        self._last: int | None = None

    def unwrap(self, v: int) -> int:
        if self._last is None:
            self._last = v
            return v
        delta = (v - self._last) % SEQ_MOD
        if delta > SEQ_MOD // 2:
            delta -= SEQ_MOD
        self._last = self._last + delta
        return self._last


class _IntervalSet:
    """Disjoint sorted byte intervals with overlap accounting."""

    def __init__(self):
        self._starts: list[int] = []
        self._ends: list[int] = []
        self.max_end: int | None = None

    def add(self, s: int, e: int) -> int:
        """Merge [s, e); return the number of bytes already covered."""
        if e <= s:
            return 0
        i = bisect.bisect_right(self._starts, s) - 1
        if i >= 0 and self._ends[i] < s:
            i += 1
        elif i < 0:
            i = 0
        overlap = 0
        new_s, new_e = s, e
        j = i
        while j < len(self._starts) and self._starts[j] < e:
            overlap += max(0, min(e, self._ends[j]) - max(s, self._starts[j]))
            new_s = min(new_s, self._starts[j])
            new_e = max(new_e, self._ends[j])
            j += 1
        del self._starts[i:j]
        del self._ends[i:j]
        self._starts.insert(i, new_s)
        self._ends.insert(i, new_e)
        self.max_end = new_e if self.max_end is None else max(self.max_end, new_e)
        return overlap


@dataclass
class _RttMatcher:
    """First-transmission send -> covering-ack RTT sampling.

    Ranges that are ever retransmitted are discarded before they yield a
    sample (Karn's rule).  SYN and FIN consume one sequence unit each and
    participate, which is what gives receiver-side captures their
    handshake round-trip sample.
    """

    pending: list[list] = field(default_factory=list)  # [end, start, ts, valid]
    sent: _IntervalSet = field(default_factory=_IntervalSet)
    samples: list[float] = field(default_factory=list)

    def on_send(self, start: int, end: int, ts: float) -> None:
        overlap = self.sent.add(start, end)
        if overlap > 0:
            for entry in self.pending:
                if entry[1] < end and start < entry[0]:
                    entry[3] = False
            return
        self.pending.append([end, start, ts, True])

    def on_ack(self, ackval: int, ts: float) -> None:
        keep = []
        for entry in self.pending:
            if entry[0] <= ackval:
                if entry[3]:
                    self.samples.append(ts - entry[2])
            else:
                keep.append(entry)
        self.pending = keep


class _TraceAnalysis:
    """Single pass over one trace computing every catalog statistic."""

    def __init__(self, trace: TraceRecord):
        if not trace.events:
            raise EmptyTrace("cannot analyze a trace with no events")
        ev = trace.events
        data_dir = trace.data_direction()
        ack_dir = (
            Direction.CLIENT_TO_SERVER
            if data_dir is Direction.SERVER_TO_CLIENT
            else Direction.SERVER_TO_CLIENT
        )
        out_dir = trace.capture_outbound()
        in_dir = ack_dir if out_dir is data_dir else data_dir

        counts = {d: 0 for d in Direction}
        bytes_ = {d: 0 for d in Direction}
        data_pkts = {d: 0 for d in Direction}
        pure_acks = {d: 0 for d in Direction}
        seg_sizes: list[int] = []
        small_segments = 0
        syn = fin = rst = 0
        sack_total = 0
        max_sack = 0
        wins: list[int] = []
        zero_win = 0
        dup_acks = 0
        triple_events = 0
        retrans_pkts = 0
        retrans_bytes = 0
        ooo_pkts = 0

        data_seq = _SeqUnwrapper()
        data_cover = _IntervalSet()
        ackval_seq = _SeqUnwrapper()
        out_seq = _SeqUnwrapper()
        out_ack_seq = _SeqUnwrapper()
        rtt = _RttMatcher()

        prev_pure_ack: int | None = None
        dup_run = 0
        first_data_ack_ts: float | None = None
        first_data_start: int | None = None
        data_before: list[tuple[float, int]] = []  # (ts, payload) in data dir

        for e in ev:
            d = e.dir
            counts[d] += 1
            bytes_[d] += e.payload_len
            is_pure_ack = e.payload_len == 0 and e.ack_flag and not (e.syn or e.fin or e.rst)
            if e.payload_len > 0:
                data_pkts[d] += 1
            if is_pure_ack:
                pure_acks[d] += 1
            syn += e.syn
            fin += e.fin
            rst += e.rst
            sack_total += e.sack_cnt
            max_sack = max(max_sack, e.sack_cnt)

            if d is ack_dir:
                wins.append(e.win)
                if e.win == 0:
                    zero_win += 1
                if is_pure_ack:
                    if prev_pure_ack is not None and e.ack == prev_pure_ack:
                        dup_run += 1
                        dup_acks += 1
                        if dup_run == 3:
                            triple_events += 1
                    else:
                        dup_run = 0
                    prev_pure_ack = e.ack
                if e.ack_flag and first_data_ack_ts is None and first_data_start is not None:
                    if ackval_seq.unwrap(e.ack) > first_data_start:
                        first_data_ack_ts = e.ts

            if d is data_dir:
                if e.payload_len > 0:
                    seg_sizes.append(e.payload_len)
                    if e.payload_len < SMALL_SEGMENT_BYTES:
                        small_segments += 1
                    s = data_seq.unwrap(e.seq)
                    if first_data_start is None:
                        first_data_start = s
                    prev_max = data_cover.max_end
                    overlap = data_cover.add(s, s + e.payload_len)
                    if overlap > 0:
                        retrans_pkts += 1
                        retrans_bytes += overlap
                    elif prev_max is not None and s < prev_max:
                        ooo_pkts += 1
                    if first_data_ack_ts is None:
                        data_before.append((e.ts, e.payload_len))

            if d is out_dir:
                consumed = e.payload_len + (1 if e.syn else 0) + (1 if e.fin else 0)
                if consumed > 0:
                    s = out_seq.unwrap(e.seq)
                    rtt.on_send(s, s + consumed, e.ts)
            elif e.ack_flag:
                rtt.on_ack(out_ack_seq.unwrap(e.ack), e.ts)

        elapsed = ev[-1].ts - ev[0].ts
        idle_max = 0.0
        for a, b in zip(ev, ev[1:]):
            idle_max = max(idle_max, b.ts - a.ts)

        data_bytes = bytes_[data_dir]
        if first_data_ack_ts is None:
            initial_window = sum(p for _, p in data_before)
        else:
            initial_window = sum(p for ts, p in data_before if ts < first_data_ack_ts)

        samples = rtt.samples
        n_rtt = len(samples)
        rtt_avg = sum(samples) / n_rtt if n_rtt else 0.0
        rtt_stdev = 0.0
        if n_rtt >= 2:
            var = sum((x - rtt_avg) ** 2 for x in samples) / (n_rtt - 1)
            rtt_stdev = math.sqrt(var)

        v: dict[Statistic, float] = {}
        defined: dict[Statistic, bool] = {}

        def put(stat, value, ok=True):
            v[stat] = float(value)
            defined[stat] = bool(ok)

        put(Statistic.ELAPSED_TIME, elapsed, len(ev) >= 2)
        put(Statistic.TOTAL_PACKETS_C2S, counts[Direction.CLIENT_TO_SERVER])
        put(Statistic.TOTAL_PACKETS_S2C, counts[Direction.SERVER_TO_CLIENT])
        put(Statistic.TOTAL_BYTES_C2S, bytes_[Direction.CLIENT_TO_SERVER])
        put(Statistic.TOTAL_BYTES_S2C, bytes_[Direction.SERVER_TO_CLIENT])
        put(Statistic.DATA_PACKETS_C2S, data_pkts[Direction.CLIENT_TO_SERVER])
        put(Statistic.DATA_PACKETS_S2C, data_pkts[Direction.SERVER_TO_CLIENT])
        put(Statistic.PURE_ACK_PACKETS_C2S, pure_acks[Direction.CLIENT_TO_SERVER])
        put(Statistic.PURE_ACK_PACKETS_S2C, pure_acks[Direction.SERVER_TO_CLIENT])
        throughput = data_bytes / elapsed if elapsed > 0 else 0.0
        throughput_ok = elapsed > 0 and math.isfinite(throughput)
        if not throughput_ok:  # denormal elapsed can overflow the ratio
            throughput = 0.0
        put(Statistic.THROUGHPUT, throughput, throughput_ok)
        put(Statistic.RETRANSMITTED_PACKETS, retrans_pkts)
        put(Statistic.RETRANSMITTED_BYTES, retrans_bytes)
        put(Statistic.OUT_OF_ORDER_PACKETS, ooo_pkts)
        put(Statistic.DUP_ACK_COUNT, dup_acks)
        put(Statistic.TRIPLE_DUP_ACK_EVENTS, triple_events)
        put(Statistic.SACK_BLOCKS_TOTAL, sack_total)
        put(Statistic.MAX_SACK_CNT, max_sack)
        put(Statistic.WIN_MIN, min(wins) if wins else 0.0, bool(wins))
        put(Statistic.WIN_MAX, max(wins) if wins else 0.0, bool(wins))
        put(Statistic.WIN_AVG, sum(wins) / len(wins) if wins else 0.0, bool(wins))
        put(Statistic.ZERO_WINDOW_COUNT, zero_win, bool(wins))
        put(Statistic.RTT_AVG, rtt_avg, n_rtt >= 1)
        put(Statistic.RTT_MIN, min(samples) if samples else 0.0, n_rtt >= 1)
        put(Statistic.RTT_MAX, max(samples) if samples else 0.0, n_rtt >= 1)
        put(Statistic.RTT_STDEV, rtt_stdev, n_rtt >= 2)
        put(Statistic.RTT_SAMPLES, n_rtt)
        put(Statistic.IDLE_TIME_MAX, idle_max, len(ev) >= 2)
        put(Statistic.MEAN_SEGMENT_SIZE, sum(seg_sizes) / len(seg_sizes) if seg_sizes else 0.0, bool(seg_sizes))
        put(Statistic.MAX_SEGMENT_SIZE, max(seg_sizes) if seg_sizes else 0.0, bool(seg_sizes))
        put(Statistic.MIN_SEGMENT_SIZE, min(seg_sizes) if seg_sizes else 0.0, bool(seg_sizes))
        put(Statistic.PUSH_LIKE_SMALL_SEGMENT_COUNT, small_segments)
        put(Statistic.SYN_COUNT, syn)
        put(Statistic.FIN_COUNT, fin)
        put(Statistic.RST_COUNT, rst)
        put(Statistic.INITIAL_WINDOW_BYTES, initial_window, bool(seg_sizes))
        n_data = data_pkts[data_dir]
        n_acks = pure_acks[ack_dir]
        put(Statistic.ACK_COMPRESSION_RATIO, n_acks / n_data if n_data else 0.0, n_data > 0)
        put(Statistic.BYTES_PER_ACK, data_bytes / n_acks if n_acks else 0.0, n_acks > 0)

        self.values = v
        self.defined = defined


def compute_statistic(trace: TraceRecord, stat: Statistic) -> float:
    """One statistic of one trace; degenerate cases are defined to 0."""
    return _TraceAnalysis(trace).values[stat]


def extract_with_diagnostics(pair: TracePair, catalog: FeatureCatalog) -> tuple[Signature, ExtractionDiagnostics]:
    if not catalog.features:
        raise CatalogMismatch("catalog has no features")
    analyses = {
        TransferDirection.DOWNLOAD: _TraceAnalysis(pair.download),
        TransferDirection.UPLOAD: _TraceAnalysis(pair.upload),
    }
    values = np.empty(catalog.m, dtype=np.float64)
    defined = []
    for i, fdef in enumerate(catalog.features):
        a = analyses[fdef.trace]
        values[i] = a.values[fdef.statistic]
        defined.append(a.defined[fdef.statistic])
    if not np.all(np.isfinite(values)):
        bad = catalog.feature_names[int(np.flatnonzero(~np.isfinite(values))[0])]
        raise AssertionError(f"non-finite statistic escaped extraction: {bad}")
    sig = Signature(values=values, label=None, catalog_version=catalog.version)
    return sig, ExtractionDiagnostics(defined=tuple(defined), feature_names=catalog.feature_names)


def extract_signature(pair: TracePair, catalog: FeatureCatalog) -> Signature:
    """Deterministic feature vector for one trace pair (unlabeled)."""
    sig, _ = extract_with_diagnostics(pair, catalog)
    return sig
