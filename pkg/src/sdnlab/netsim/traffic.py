"""Traffic sources: AIMD TCP-like flows, constant-bit-rate streams and ping probes."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import MTU, Packet, Simulator

HEADER = 40
MSS = MTU - HEADER
ACK_SIZE = 64
PING_SIZE = 64
IPERF_BLOCK = 128 * 1024  # iperf3's default TCP write size, for bursty sources
PACED_BLOCK = MSS  # one segment per write: the sender is paced at its target rate
MAX_CWND = 512.0
INIT_SSTHRESH = 64.0
MIN_RTO = 0.2
MAX_RTO = 8.0
JITTER_S = 0.1


@dataclass(frozen=True)
class TrafficSpec:
    src_host: str
    dst_host: str
    protocol: str = "tcp_like"  # or "cbr"
    target_rate: float = 1.5e6  # bits/s of payload; ignored when greedy
    start_time: float = 0.0
    duration: float = 10.0
    connections: int = 1
    block_bytes: int = PACED_BLOCK
    packet_size: int = MTU
    greedy: bool = False

    def __post_init__(self):
        if self.protocol not in ("tcp_like", "cbr"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if not self.greedy and self.target_rate <= 0:
            raise ValueError("target_rate must be > 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.connections < 1:
            raise ValueError("connections must be >= 1")
        if self.greedy and self.protocol != "tcp_like":
            raise ValueError("only tcp_like flows can be greedy")

    @classmethod
    def from_dict(cls, d: dict) -> "TrafficSpec":
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class TcpFlow:
    """Simplified NewReno sender/receiver pair.

    Slow start up to ``ssthresh``, one segment per RTT afterwards, halving on
    three duplicate ACKs with fast retransmit, and a coarse retransmission
    timeout that falls back to go-back-N so a flow can never deadlock.
    Rate-limited flows are fed ``block_bytes`` at a time. The default of one
    segment per write paces the sender at its target rate; ``IPERF_BLOCK``
    reproduces iperf3's bursty 128 KB application writes instead.
    ``max_window`` caps the congestion window like a receive window would.
    """

    def __init__(self, sim: Simulator, flow_id, src_host: str, dst_host: str, start: float,
                 stop: float, rate: float | None = None, block_bytes: int = PACED_BLOCK,
                 max_window: float = MAX_CWND):
        self.sim = sim
        self.max_window = max_window
        self.flow_id = flow_id
        self.src_host = src_host
        self.dst_host = dst_host
        topo = sim.topo
        self.src_addr = topo.host(src_host).addr
        self.dst_addr = topo.host(dst_host).addr
        self.start_time = start
        self.stop_time = stop
        self.rate = rate
        self.block_bytes = block_bytes
        # sender
        self.backlog = 0 if rate else math.inf
        self.cwnd = 2.0
        self.ssthresh = INIT_SSTHRESH
        self.next_seq = 0
        self.high_water = 0
        self.snd_una = 0
        self.seg_len = {}
        self.dupacks = 0
        self.in_recovery = False
        self.recover = 0
        self.retransmits = 0
        self.bytes_acked = 0
        self.srtt = None
        self.rttvar = 0.0
        self.rto = 1.0
        self._rto_deadline = None
        self._rto_pending = False
        self.active = False
        # receiver
        self.rcv_next = 0
        self.ooo = {}
        self.delivered_bytes = 0
        self.delivery_bins = {}  # whole second -> payload bytes delivered in order
        sim.register(flow_id, self)
        sim.schedule(start, self._begin)

    # sender side

    def _begin(self, _a, _b):
        self.active = True
        if self.rate:
            self._write(None, None)
        else:
            self._try_send()
        self.sim.schedule(self.stop_time, self._end)

    def _write(self, _a, _b):
        if not self.active:
            return
        self.backlog += self.block_bytes
        self._try_send()
        self.sim.schedule(self.sim.now + self.block_bytes * 8 / self.rate, self._write)

    def _end(self, _a, _b):
        self.active = False
        self.backlog = 0

    def _try_send(self):
        while self.next_seq - self.snd_una < int(self.cwnd):
            seq = self.next_seq
            if seq < self.high_water:
                payload = self.seg_len[seq]
            elif self.backlog > 0:
                payload = MSS if self.backlog >= MSS else int(self.backlog)
                self.backlog -= payload
                self.seg_len[seq] = payload
            else:
                break
            self.next_seq += 1
            self._emit(seq, payload)

    def _emit(self, seq, payload):
        sim = self.sim
        if seq < self.high_water:
            self.retransmits += 1
        else:
            self.high_water = seq + 1
        pkt = Packet(sim.next_packet_id(), self.flow_id, self.src_addr, self.dst_addr,
                     payload + HEADER, sim.now, "data", seq, payload)
        pkt.echo = sim.now
        sim.send(self.src_host, pkt)
        if self._rto_deadline is None:
            self._arm()

    def _arm(self):
        self._rto_deadline = self.sim.now + self.rto
        if not self._rto_pending:
            self._rto_pending = True
            self.sim.schedule(self._rto_deadline, self._on_timer)

    def _on_timer(self, _a, _b):
        self._rto_pending = False
        deadline = self._rto_deadline
        if deadline is None:
            return
        if self.sim.now < deadline:
            self._rto_pending = True
            self.sim.schedule(deadline, self._on_timer)
            return
        self._rto_deadline = None
        if self.snd_una >= self.high_water:
            return
        self.ssthresh = max((self.next_seq - self.snd_una) / 2.0, 2.0)
        self.cwnd = 1.0
        self.in_recovery = False
        self.dupacks = 0
        self.next_seq = self.snd_una
        self.rto = min(self.rto * 2, MAX_RTO)
        self._try_send()

    def _on_ack(self, pkt):
        ack = pkt.ack
        now = self.sim.now
        if ack > self.snd_una:
            sample = now - pkt.echo
            if self.srtt is None:
                self.srtt = sample
                self.rttvar = sample / 2
            else:
                self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - sample)
                self.srtt = 0.875 * self.srtt + 0.125 * sample
            self.rto = min(max(self.srtt + 4 * self.rttvar, MIN_RTO), MAX_RTO)
            newly = ack - self.snd_una
            seg_len = self.seg_len
            for s in range(self.snd_una, ack):
                self.bytes_acked += seg_len.pop(s)
            self.snd_una = ack
            if self.next_seq < ack:
                self.next_seq = ack
            if self.in_recovery:
                if ack >= self.recover:
                    self.in_recovery = False
                    self.cwnd = self.ssthresh
                else:
                    # partial ACK: the next hole is lost too
                    self._emit(ack, seg_len[ack])
                    self.cwnd = max(self.cwnd - newly + 1, 1.0)
            elif self.cwnd < self.ssthresh:
                self.cwnd += newly
            else:
                self.cwnd += newly / self.cwnd
            if self.cwnd > self.max_window:
                self.cwnd = self.max_window
            self.dupacks = 0
            if self.snd_una < self.high_water:
                self._arm()
            else:
                self._rto_deadline = None
        elif ack == self.snd_una and self.snd_una < self.high_water:
            self.dupacks += 1
            if self.in_recovery:
                self.cwnd += 1
            elif self.dupacks == 3:
                flight = self.next_seq - self.snd_una
                self.ssthresh = max(flight / 2.0, 2.0)
                self.cwnd = self.ssthresh + 3
                self.in_recovery = True
                self.recover = self.next_seq
                self._emit(ack, self.seg_len[ack])
                self._arm()
        self._try_send()

    # receiver side

    def _on_data(self, pkt):
        seq = pkt.seq
        if seq == self.rcv_next:
            got = pkt.payload
            nxt = seq + 1
            ooo = self.ooo
            while nxt in ooo:
                got += ooo.pop(nxt)
                nxt += 1
            self.rcv_next = nxt
            self.delivered_bytes += got
            b = int(self.sim.now)
            self.delivery_bins[b] = self.delivery_bins.get(b, 0) + got
        elif seq > self.rcv_next:
            self.ooo[seq] = pkt.payload
        sim = self.sim
        ack = Packet(sim.next_packet_id(), self.flow_id, self.dst_addr, self.src_addr,
                     ACK_SIZE, sim.now, "ack")
        ack.ack = self.rcv_next
        ack.echo = pkt.echo
        sim.send(self.dst_host, ack)

    def receive(self, pkt, host_name):
        if pkt.kind == "data":
            self._on_data(pkt)
        else:
            self._on_ack(pkt)

    def goodput_between(self, t0: float, t1: float) -> float:
        """Payload bits per second delivered in order during whole seconds [t0, t1)."""
        lo, hi = int(t0), int(t1)
        total = sum(self.delivery_bins.get(s, 0) for s in range(lo, hi))
        return total * 8 / max(hi - lo, 1)


class CbrFlow:
    """Fixed-size packets at fixed spacing; optional per-packet tags ride along."""

    def __init__(self, sim: Simulator, flow_id, src_host: str, dst_host: str, start: float,
                 stop: float, rate: float, packet_size: int = MTU, kind: str = "data"):
        self.sim = sim
        self.flow_id = flow_id
        self.src_host = src_host
        self.dst_host = dst_host
        self.src_addr = sim.topo.host(src_host).addr
        self.dst_addr = sim.topo.host(dst_host).addr
        self.packet_size = packet_size
        self.kind = kind
        self.interval = packet_size * 8 / rate
        self.stop_time = stop
        self.received = []  # (arrival time, packet)
        sim.register(flow_id, self)
        sim.schedule(start, self._tick)

    def _tick(self, _a, _b):
        sim = self.sim
        if sim.now >= self.stop_time:
            return
        sim.send(self.src_host, Packet(sim.next_packet_id(), self.flow_id, self.src_addr,
                                       self.dst_addr, self.packet_size, sim.now, self.kind))
        sim.schedule(sim.now + self.interval, self._tick)

    def receive(self, pkt, host_name):
        self.received.append((self.sim.now, pkt))


class ScheduledStream:
    """Sends a precomputed list of ``(time, size, tag)`` packets; records arrivals by tag."""

    def __init__(self, sim: Simulator, flow_id, src_host: str, dst_host: str, schedule, kind="video"):
        self.sim = sim
        self.flow_id = flow_id
        self.src_host = src_host
        self.src_addr = sim.topo.host(src_host).addr
        self.dst_addr = sim.topo.host(dst_host).addr
        self.kind = kind
        self.arrived = []  # (arrival time, tag, size)
        sim.register(flow_id, self)
        for t, size, tag in schedule:
            sim.schedule(t, self._emit, size, tag)

    def _emit(self, size, tag):
        sim = self.sim
        pkt = Packet(sim.next_packet_id(), self.flow_id, self.src_addr, self.dst_addr,
                     size, sim.now, self.kind)
        pkt.tag = tag
        sim.send(self.src_host, pkt)

    def receive(self, pkt, host_name):
        self.arrived.append((self.sim.now, pkt.tag, pkt.size))


class PingSession:
    """ICMP-echo analog: one 64-byte request per probe, echoed back by the target host."""

    def __init__(self, sim: Simulator, flow_id, src_host: str, dst_host: str, count: int,
                 interval: float, start: float | None = None, timeout: float = 2.0):
        self.sim = sim
        self.flow_id = flow_id
        self.src_host = src_host
        self.dst_host = dst_host
        self.src_addr = sim.topo.host(src_host).addr
        self.dst_addr = sim.topo.host(dst_host).addr
        self.count = count
        self.timeout = timeout
        start = sim.now if start is None else start
        self.sent_at = [start + i * interval for i in range(count)]
        self.rtts = [None] * count
        sim.register(flow_id, self)
        for i, t in enumerate(self.sent_at):
            sim.schedule(t, self._request, i)

    @property
    def done_at(self) -> float:
        return (self.sent_at[-1] + self.timeout) if self.count else self.sim.now

    def _request(self, i, _b):
        sim = self.sim
        pkt = Packet(sim.next_packet_id(), self.flow_id, self.src_addr, self.dst_addr,
                     PING_SIZE, sim.now, "ping_req", i)
        sim.send(self.src_host, pkt)

    def receive(self, pkt, host_name):
        sim = self.sim
        if pkt.kind == "ping_req":
            rep = Packet(sim.next_packet_id(), self.flow_id, self.dst_addr, self.src_addr,
                         PING_SIZE, sim.now, "ping_rep", pkt.seq)
            sim.send(host_name, rep)
        else:
            rtt = sim.now - self.sent_at[pkt.seq]
            if rtt <= self.timeout:
                self.rtts[pkt.seq] = rtt

    def results(self) -> list:
        """Per-probe RTT in seconds, ``None`` for probes lost or past the timeout."""
        return list(self.rtts)
