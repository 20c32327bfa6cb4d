"""Desk-scale TCP-like flow simulator with fault injection.

This is a coarse behavioral model, not a protocol implementation.  Its
job is to make configured faults leave the artifacts a passive trace
analyzer can see: losses produce gaps, duplicate acks, selective-ack
blocks and retransmitted arrivals; small receive buffers cap the
advertised window; small send buffers cap the data in flight; extra
path delay inflates the handshake round trip and stretches the transfer.

Each simulated episode renders two captures, one per transfer, both
taken at the data-receiving endpoint: the download at the client, the
upload at the server.  Packets originating at the capture point are
recorded before the link can drop them; packets from the far side
appear only if they survive the link.

Capability signaling: the client's SYN carries one option block when
selective acknowledgment is enabled (echoed on the server's SYN-ACK,
as real stacks only acknowledge an offered option), and the handshake
ack carries one block when selective acknowledgment is on but
duplicate-extent reporting is off, standing in for the option bytes a
real handshake exposes.  Encoding the two settings on separate handshake packets keeps
the two faults separable in the aggregate block counts: each fault
moves the totals to its own side of the healthy baseline.  Gap-driven
blocks appear on acks only when negotiated; duplicate arrivals
additionally raise the block count when duplicate-extent reporting is
on.

All randomness is derived from explicit 64-bit seeds via splitmix64
(see rng.py).  Loss draws are keyed by (segment index, attempt) so a
higher loss rate drops a superset of packets for the same seed.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass

from .rng import SplitMix64, derive_seed, keyed_uniform
from .trace import (
    CapturePoint,
    Direction,
    PacketEvent,
    TracePair,
    TraceRecord,
    TransferDirection,
)

MSS = 1448
HEADER_BYTES = 40
SERVER_BUFFER = 262144
SERVER_SEND_BUFFER = 1 << 20
MIN_RTO = 0.2
INITIAL_RTO = 1.0
ACK_JITTER_MAX = 0.001
CWND_CAP = 1 << 22
MAX_SACK_BLOCKS = 3


class CwndProfile(enum.Enum):
    CUBICLIKE = "cubiclike"
    BICLIKE = "biclike"
    RENOLIKE = "renolike"


_INIT_CWND_MSS = {
    CwndProfile.CUBICLIKE: 10,
    CwndProfile.BICLIKE: 8,
    CwndProfile.RENOLIKE: 4,
}


@dataclass(frozen=True)
class LinkParams:
    bandwidth: float  # bits/s
    one_way_delay: float  # seconds
    loss_rate: float = 0.0
    reorder_rate: float = 0.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.one_way_delay < 0:
            raise ValueError("delay must be nonnegative")
        if not (0 <= self.loss_rate < 1 and 0 <= self.reorder_rate < 1):
            raise ValueError("loss_rate and reorder_rate must be in [0, 1)")


HEALTHY_LINK = LinkParams(bandwidth=80e6, one_way_delay=0.010)


@dataclass(frozen=True)
class ClientParams:
    sack_enabled: bool = True
    dsack_enabled: bool = True
    read_buffer: int = 262144
    write_buffer: int = 262144
    cwnd_growth_profile: CwndProfile = CwndProfile.CUBICLIKE
    seed: int = 0

    def __post_init__(self):
        if self.read_buffer <= 0 or self.write_buffer <= 0:
            raise ValueError("buffers must be positive")


HEALTHY_CLIENT_PARAMS = ClientParams()


@dataclass
class FlowStats:
    """Simulator-side ground truth for one transfer."""

    transfer_bytes: int = 0
    data_segments: int = 0
    sender_transmissions: int = 0
    sender_retransmissions: int = 0
    rto_events: int = 0
    fast_retransmits: int = 0
    dropped_data_packets: int = 0
    dropped_acks: int = 0
    duplicate_arrivals: int = 0
    acks_sent: int = 0
    delivered_bytes: int = 0


class _TransferSim:
    """One reliable transfer over one lossy pipe, captured at the receiver."""

    def __init__(self, link: LinkParams, client: ClientParams, transfer_bytes: int,
                 seed: int, transfer: TransferDirection):
        self.link = link
        self.client = client
        self.B = int(transfer_bytes)
        self.transfer = transfer
        self.down = transfer is TransferDirection.DOWNLOAD

        # Roles: the client initiates both transfers; data flows from the
        # server for a download and from the client for an upload.
        self.data_dir = Direction.SERVER_TO_CLIENT if self.down else Direction.CLIENT_TO_SERVER
        self.ack_dir = Direction.CLIENT_TO_SERVER if self.down else Direction.SERVER_TO_CLIENT
        self.profile = CwndProfile.CUBICLIKE if self.down else client.cwnd_growth_profile
        self.write_buffer = SERVER_SEND_BUFFER if self.down else client.write_buffer
        self.read_buffer = client.read_buffer if self.down else SERVER_BUFFER
        self.sender_rwnd = SERVER_BUFFER if self.down else client.read_buffer
        self.sack = client.sack_enabled
        self.dsack = client.dsack_enabled and client.sack_enabled
        self.syn_sack_cnt = 1 if self.sack else 0
        self.hs_ack_sack_cnt = 1 if (self.sack and not self.dsack) else 0

        label = transfer.value
        self.loss_seed = derive_seed(seed, label, "data-loss")
        self.ack_loss = SplitMix64(derive_seed(seed, label, "ack-loss"))
        self.reorder = SplitMix64(derive_seed(seed, label, "reorder"))
        role = "client-ack" if self.down else "server-ack"
        self.jitter = SplitMix64(derive_seed(client.seed, label, role))

        self.n_segs = (self.B + MSS - 1) // MSS
        self.stats = FlowStats(transfer_bytes=self.B, data_segments=self.n_segs)

        # sender state (offsets are payload bytes; FIN occupies offset B)
        self.snd_una = 0
        self.snd_nxt = 0
        self.next_seg = 0
        self.cwnd = float(_INIT_CWND_MSS[self.profile] * MSS)
        self.ssthresh = float(1 << 30)
        self.w_max = float(1 << 30)
        self.t_loss = 0.0
        self.peer_rwnd = self.read_buffer
        self.dupacks = 0
        self.in_recovery = False
        self.recovery_until = 0
        self.recovery_rexmits: set[int] = set()
        self.sacked: list[list[int]] = []  # payload-space intervals
        self.first_send: dict[int, float] = {}
        self.seg_retransmitted: set[int] = set()
        self.next_sample_seg = 0
        self.srtt: float | None = None
        self.rto = INITIAL_RTO
        self.backoff = 1
        self.timer_epoch = 0
        self.timer_active = False
        self.fin_sent = False
        self.fin_acked = False
        self.fin_attempts = 0
        self.attempts: dict[int, int] = {}

        # receiver state
        self.rcv_nxt = 0
        self.ooo: list[list[int]] = []  # [start, end, touched]
        self.touch = 0
        self.fin_rcvd = False
        self.last_ack_t = 0.0

        self.busy = {Direction.CLIENT_TO_SERVER: 0.0, Direction.SERVER_TO_CLIENT: 0.0}
        self.heap: list = []
        self.tick = itertools.count()
        self.captured: list[tuple] = []
        self.done_events = 0

    # -- wire helpers -------------------------------------------------

    def _ser(self, payload: int) -> float:
        return (payload + HEADER_BYTES) * 8.0 / self.link.bandwidth

    def _push(self, t: float, kind: str, payload) -> None:
        heapq.heappush(self.heap, (t, next(self.tick), kind, payload))

    def _seg_bounds(self, k: int) -> tuple[int, int]:
        return k * MSS, min((k + 1) * MSS, self.B)

    def _record(self, ts, direction, seq, ack, length, syn=0, fin=0, ackf=0, win=0, sack_cnt=0):
        self.captured.append((ts, direction, seq, ack, length, syn, fin, 0, ackf, win, sack_cnt))

    # -- sender -------------------------------------------------------

    def _transmit(self, k: int, attempt: int, now: float) -> None:
        s, e = self._seg_bounds(k)
        dep = max(now, self.busy[self.data_dir]) + self._ser(e - s)
        self.busy[self.data_dir] = dep
        self.stats.sender_transmissions += 1
        if attempt == 0:
            self.first_send.setdefault(k, now)
        if keyed_uniform(self.loss_seed, k, attempt) < self.link.loss_rate:
            self.stats.dropped_data_packets += 1
            return
        arrive = dep + self.link.one_way_delay
        if self.link.reorder_rate > 0 and self.reorder.uniform() < self.link.reorder_rate:
            arrive += 0.001 + 3.0 * self._ser(MSS)
        self._push(arrive, "data", (k, attempt))

    def _retransmit(self, k: int, now: float) -> None:
        # attempts are tracked per segment so loss draws stay keyed
        self.seg_retransmitted.add(k)
        self.stats.sender_retransmissions += 1
        attempt = self.attempts.get(k, 0) + 1
        self.attempts[k] = attempt
        self._transmit(k, attempt, now)

    def _send_fin(self, now: float) -> None:
        self.fin_sent = True
        dep = max(now, self.busy[self.data_dir]) + self._ser(0)
        self.busy[self.data_dir] = dep
        if keyed_uniform(self.loss_seed, self.n_segs, self.fin_attempts) < self.link.loss_rate:
            self.fin_attempts += 1
            self._arm_timer(now)
            return
        self.fin_attempts += 1
        self._push(dep + self.link.one_way_delay, "fin", None)
        self._arm_timer(now)

    def _arm_timer(self, now: float) -> None:
        self.timer_epoch += 1
        self.timer_active = True
        self._push(now + self.rto * self.backoff, "rto", self.timer_epoch)

    def _try_send(self, now: float) -> None:
        limit = min(self.cwnd, float(self.peer_rwnd), float(self.write_buffer))
        while self.next_seg < self.n_segs:
            s, e = self._seg_bounds(self.next_seg)
            if (self.snd_nxt - self.snd_una) + (e - s) > limit:
                break
            k = self.next_seg
            self.attempts[k] = 0
            self._transmit(k, 0, now)
            self.snd_nxt = e
            self.next_seg += 1
            if not self.timer_active:
                self._arm_timer(now)

    def _is_sacked(self, s: int, e: int) -> bool:
        for bs, be, *_ in self.sacked:
            if bs <= s and e <= be:
                return True
        return False

    def _high_sacked(self) -> int:
        return max((be for _, be in ((iv[0], iv[1]) for iv in self.sacked)), default=0)

    def _next_proven_hole(self) -> int | None:
        """First un-sacked segment strictly below the highest sacked byte.

        Segments above the sacked region are merely in flight, not lost;
        retransmitting them would be spurious.
        """
        high = self._high_sacked()
        k = self.snd_una // MSS
        while k < self.next_seg:
            s, e = self._seg_bounds(k)
            if e > high:
                return None
            if e > self.snd_una and not self._is_sacked(max(s, self.snd_una), e):
                if k not in self.recovery_rexmits:
                    return k
            k += 1
        return None

    def _retransmit_una_segment(self, now: float) -> None:
        k = self.snd_una // MSS
        if k < self.next_seg and k not in self.recovery_rexmits:
            self.recovery_rexmits.add(k)
            self._retransmit(k, now)

    def _enter_recovery(self, now: float) -> None:
        flight = max(self.snd_nxt - self.snd_una, MSS)
        self.ssthresh = max(flight / 2.0, 2.0 * MSS)
        self.w_max = self.cwnd
        self.cwnd = self.ssthresh
        self.t_loss = now
        self.in_recovery = True
        self.recovery_until = self.snd_nxt
        self.recovery_rexmits = set()
        self.stats.fast_retransmits += 1
        # the triple duplicate ack proves the cumulative-ack hole is lost
        self._retransmit_una_segment(now)

    def _grow_cwnd(self, bytes_acked: int, now: float) -> None:
        if self.cwnd < self.ssthresh:
            self.cwnd = min(self.cwnd + bytes_acked, CWND_CAP)
            return
        dt = now - self.t_loss
        base = MSS * MSS / self.cwnd
        if self.profile is CwndProfile.RENOLIKE:
            inc = base
        elif self.profile is CwndProfile.BICLIKE:
            if self.w_max > self.cwnd:
                inc = min((self.w_max - self.cwnd) / 2.0, 16.0 * MSS) * (MSS / self.cwnd)
            else:
                inc = base
        else:  # cubic-like: convex re-probe after a loss event
            inc = base * min(1.0 + 4.0 * dt * dt, 12.0)
        self.cwnd = min(self.cwnd + inc, CWND_CAP)

    def _sample_rtt(self, now: float) -> None:
        while self.next_sample_seg < self.next_seg:
            s, e = self._seg_bounds(self.next_sample_seg)
            if e > self.snd_una:
                break
            k = self.next_sample_seg
            if k not in self.seg_retransmitted and k in self.first_send:
                sample = now - self.first_send[k]
                self.srtt = sample if self.srtt is None else 0.875 * self.srtt + 0.125 * sample
                self.rto = max(MIN_RTO, 2.0 * self.srtt)
            self.next_sample_seg += 1

    def _on_ack(self, now: float, payload) -> None:
        a, blocks, rwnd = payload
        self.peer_rwnd = rwnd
        for bs, be in blocks:
            self._merge_sacked(bs, be)
        if a > self.snd_una:
            acked_payload = min(a, self.B) - min(self.snd_una, self.B)
            self.snd_una = a
            self.dupacks = 0
            self.backoff = 1
            self._sample_rtt(now)
            if self.in_recovery:
                if a >= self.recovery_until:
                    self.in_recovery = False
                else:
                    # partial ack: the new cumulative hole is proven lost
                    self._retransmit_una_segment(now)
            elif acked_payload > 0:
                self._grow_cwnd(acked_payload, now)
            if self.snd_una >= self.B and not self.fin_sent:
                self._send_fin(now)
            elif self.fin_sent and a >= self.B + 1:
                self.fin_acked = True
                self.timer_active = False
            elif self.snd_una < self.snd_nxt or (self.fin_sent and not self.fin_acked):
                self._arm_timer(now)
            else:
                self.timer_active = False
            self._try_send(now)
        elif a == self.snd_una and self.snd_una < self.B:
            self.dupacks += 1
            if self.dupacks == 3 and not self.in_recovery:
                self._enter_recovery(now)
            elif self.in_recovery and self.sack and blocks:
                hole = self._next_proven_hole()
                if hole is not None:
                    self.recovery_rexmits.add(hole)
                    self._retransmit(hole, now)
            self._try_send(now)

    def _merge_sacked(self, s: int, e: int) -> None:
        merged = [s, e]
        out = []
        for iv in self.sacked:
            if iv[1] < merged[0] or iv[0] > merged[1]:
                out.append(iv)
            else:
                merged[0] = min(merged[0], iv[0])
                merged[1] = max(merged[1], iv[1])
        out.append(merged)
        out.sort()
        self.sacked = out

    def _on_rto(self, now: float, epoch: int) -> None:
        if not self.timer_active or epoch != self.timer_epoch:
            return
        self.stats.rto_events += 1
        self.backoff = min(self.backoff * 2, 64)
        if self.fin_sent and not self.fin_acked and self.snd_una >= self.B:
            self._send_fin(now)
            return
        if self.snd_una < self.snd_nxt:
            self.w_max = self.cwnd
            self.ssthresh = max((self.snd_nxt - self.snd_una) / 2.0, 2.0 * MSS)
            self.cwnd = float(MSS)
            self.t_loss = now
            self.in_recovery = False
            self.recovery_rexmits = set()
            k = self.snd_una // MSS
            self._retransmit(k, now)
            self._arm_timer(now)
        else:
            self.timer_active = False

    # -- receiver -----------------------------------------------------

    def _covered_by_ooo(self, s: int, e: int) -> bool:
        for bs, be, _ in self.ooo:
            if bs <= s and e <= be:
                return True
        return False

    def _add_ooo(self, s: int, e: int) -> None:
        self.touch += 1
        merged = [s, e, self.touch]
        out = []
        for iv in self.ooo:
            if iv[1] < merged[0] or iv[0] > merged[1]:
                out.append(iv)
            else:
                merged[0] = min(merged[0], iv[0])
                merged[1] = max(merged[1], iv[1])
        out.append(merged)
        out.sort(key=lambda iv: iv[0])
        self.ooo = out

    def _absorb_ooo(self) -> None:
        changed = True
        while changed:
            changed = False
            for iv in list(self.ooo):
                if iv[0] <= self.rcv_nxt:
                    self.rcv_nxt = max(self.rcv_nxt, iv[1])
                    self.ooo.remove(iv)
                    changed = True

    def _ooo_bytes(self) -> int:
        return sum(be - bs for bs, be, _ in self.ooo)

    def _send_ack(self, now: float, dup_arrival: bool, fin_seen: bool = False) -> None:
        rwnd = max(0, self.read_buffer - self._ooo_bytes())
        blocks: list[tuple[int, int]] = []
        if self.sack and self.ooo:
            recent = sorted(self.ooo, key=lambda iv: -iv[2])[:MAX_SACK_BLOCKS]
            blocks = [(iv[0], iv[1]) for iv in recent]
        sack_cnt = len(blocks) + (1 if dup_arrival and self.dsack else 0)
        t = max(now + self.jitter.uniform() * ACK_JITTER_MAX, self.last_ack_t)
        self.last_ack_t = t
        ack_offset = self.rcv_nxt + (2 if fin_seen and self.rcv_nxt >= self.B else 1)
        self._record(
            t, self.ack_dir, seq=1, ack=ack_offset, length=0, ackf=1, win=rwnd, sack_cnt=sack_cnt
        )
        self.stats.acks_sent += 1
        dep = max(t, self.busy[self.ack_dir]) + self._ser(0)
        self.busy[self.ack_dir] = dep
        if self.ack_loss.uniform() < self.link.loss_rate:
            self.stats.dropped_acks += 1
            return
        offset = self.rcv_nxt + (1 if fin_seen and self.rcv_nxt >= self.B else 0)
        self._push(dep + self.link.one_way_delay, "ack", (offset, tuple(blocks), rwnd))

    def _on_data(self, now: float, payload) -> None:
        k, _attempt = payload
        s, e = self._seg_bounds(k)
        dup = e <= self.rcv_nxt or self._covered_by_ooo(s, e)
        if dup:
            self.stats.duplicate_arrivals += 1
        elif s <= self.rcv_nxt:
            self.rcv_nxt = max(self.rcv_nxt, e)
            self._absorb_ooo()
        else:
            self._add_ooo(s, e)
        self._record(
            now, self.data_dir, seq=1 + s, ack=1, length=e - s, ackf=1,
            win=self.sender_rwnd, sack_cnt=0,
        )
        self._send_ack(now, dup_arrival=dup)

    def _on_fin(self, now: float, _payload) -> None:
        self.fin_rcvd = True
        self._record(
            now, self.data_dir, seq=1 + self.B, ack=1, length=0, fin=1, ackf=1,
            win=self.sender_rwnd, sack_cnt=0,
        )
        self._send_ack(now, dup_arrival=False, fin_seen=True)

    # -- top level ----------------------------------------------------

    def run(self) -> tuple[TraceRecord, FlowStats]:
        ser0 = self._ser(0)
        owd = self.link.one_way_delay
        # Handshake (never lost): SYN, SYN-ACK, ACK.  The client SYN
        # carries the capability signal; the server answers with one block.
        syn_dep = self.busy[Direction.CLIENT_TO_SERVER] + ser0
        self.busy[Direction.CLIENT_TO_SERVER] = syn_dep
        syn_arr = syn_dep + owd
        synack_dep = max(syn_arr, self.busy[Direction.SERVER_TO_CLIENT]) + ser0
        self.busy[Direction.SERVER_TO_CLIENT] = synack_dep
        synack_arr = synack_dep + owd
        hs_ack_dep = max(synack_arr, self.busy[Direction.CLIENT_TO_SERVER]) + ser0
        self.busy[Direction.CLIENT_TO_SERVER] = hs_ack_dep
        hs_ack_arr = hs_ack_dep + owd

        c2s, s2c = Direction.CLIENT_TO_SERVER, Direction.SERVER_TO_CLIENT
        if self.down:
            # capture at the client: own packets at send time, far side on arrival
            self._record(0.0, c2s, 0, 0, 0, syn=1, win=self.client.read_buffer, sack_cnt=self.syn_sack_cnt)
            self._record(synack_arr, s2c, 0, 1, 0, syn=1, ackf=1, win=SERVER_BUFFER, sack_cnt=self.syn_sack_cnt)
            self._record(synack_arr, c2s, 1, 1, 0, ackf=1, win=self.client.read_buffer,
                         sack_cnt=self.hs_ack_sack_cnt)
            self.last_ack_t = synack_arr
            start = hs_ack_arr  # server may send once the handshake ack lands
        else:
            # capture at the server
            self._record(syn_arr, c2s, 0, 0, 0, syn=1, win=self.client.read_buffer, sack_cnt=self.syn_sack_cnt)
            self._record(syn_arr, s2c, 0, 1, 0, syn=1, ackf=1, win=SERVER_BUFFER, sack_cnt=self.syn_sack_cnt)
            self._record(hs_ack_arr, c2s, 1, 1, 0, ackf=1, win=self.client.read_buffer,
                         sack_cnt=self.hs_ack_sack_cnt)
            self.last_ack_t = syn_arr
            start = synack_arr  # client may send once the SYN-ACK lands

        self._try_send(start)

        limit = 400 * self.n_segs + 200_000
        while self.heap:
            now, _, kind, payload = heapq.heappop(self.heap)
            if kind == "data":
                self._on_data(now, payload)
            elif kind == "ack":
                self._on_ack(now, payload)
            elif kind == "fin":
                self._on_fin(now, payload)
            else:
                self._on_rto(now, payload)
            self.done_events += 1
            if self.done_events > limit:
                raise RuntimeError("simulator event budget exceeded; parameters degenerate")

        if self.rcv_nxt != self.B:
            raise RuntimeError(
                f"conservation violated: delivered {self.rcv_nxt} of {self.B} bytes"
            )
        self.stats.delivered_bytes = self.rcv_nxt

        t0 = min(ev[0] for ev in self.captured)
        self.captured.sort(key=lambda ev: ev[0])
        events = tuple(
            PacketEvent(
                ts=ev[0] - t0,
                dir=ev[1],
                seq=ev[2] % (1 << 32),
                ack=ev[3] % (1 << 32),
                payload_len=ev[4],
                syn=bool(ev[5]),
                fin=bool(ev[6]),
                rst=bool(ev[7]),
                ack_flag=bool(ev[8]),
                win=ev[9],
                sack_cnt=ev[10],
            )
            for ev in self.captured
        )
        record = TraceRecord(
            capture_point=CapturePoint.CLIENT if self.down else CapturePoint.SERVER,
            direction_of_transfer=self.transfer,
            events=events,
            declared_transfer_bytes=self.B,
        )
        return record, self.stats


def simulate_flow_with_stats(
    link: LinkParams, client: ClientParams, transfer_bytes: int, seed: int
) -> tuple[TracePair, dict[str, FlowStats]]:
    if transfer_bytes <= 0:
        raise ValueError("transfer_bytes must be positive")
    down, down_stats = _TransferSim(
        link, client, transfer_bytes, derive_seed(seed, "download"), TransferDirection.DOWNLOAD
    ).run()
    up, up_stats = _TransferSim(
        link, client, transfer_bytes, derive_seed(seed, "upload"), TransferDirection.UPLOAD
    ).run()
    return TracePair(download=down, upload=up), {"download": down_stats, "upload": up_stats}


def simulate_flow(link: LinkParams, client: ClientParams, transfer_bytes: int, seed: int) -> TracePair:
    """Deterministic synthetic trace pair for one episode."""
    pair, _ = simulate_flow_with_stats(link, client, transfer_bytes, seed)
    return pair
