"""Packet-level discrete-event engine: link ports, switch flow tables, host delivery."""

from __future__ import annotations

import csv
import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from heapq import heappop, heappush

from ..topology import Path, Topology

MTU = 1500
MIN_PACKET = 64
BIN_S = 0.1  # resolution of per-port load counters


class RuleConflict(Exception):
    pass


class StaleHandle(Exception):
    pass


class Packet:
    __slots__ = (
        "id", "flow_id", "src", "dst", "size", "created", "kind",
        "seq", "ack", "echo", "payload", "tag",
    )

    def __init__(self, pid, flow_id, src, dst, size, created, kind, seq=0, payload=0):
        if not MIN_PACKET <= size <= MTU:
            raise ValueError(f"packet size {size} outside [{MIN_PACKET}, {MTU}]")
        self.id = pid
        self.flow_id = flow_id
        self.src = src
        self.dst = dst
        self.size = size
        self.created = created
        self.kind = kind
        self.seq = seq
        self.ack = 0
        self.echo = 0.0
        self.payload = payload
        self.tag = None


class Port:
    """One direction of a link: FIFO tail-drop queue feeding a serializer.

    Departures are deterministic once a packet is admitted, so only the
    finish times of packets still in the system are kept.
    """

    __slots__ = ("src", "dst", "capacity", "delay", "qcap", "busy_until", "finish",
                 "offered_bits", "sent_bits", "drops", "bins")

    def __init__(self, src, dst, capacity, delay, qcap):
        self.src = src
        self.dst = dst
        self.capacity = capacity
        self.delay = delay
        self.qcap = qcap
        self.busy_until = 0.0
        self.finish = deque()
        self.offered_bits = 0
        self.sent_bits = 0
        self.drops = 0
        self.bins = {}

    def backlog(self, t):
        finish = self.finish
        while finish and finish[0] <= t:
            finish.popleft()
        return len(finish)

    def offered_between(self, t0, t1):
        lo = int(round(t0 / BIN_S))
        hi = int(round(t1 / BIN_S))
        bins = self.bins
        return sum(bins.get(i, 0) for i in range(lo, hi))


@dataclass
class FlowRule:
    switch: int
    match: tuple  # (src_addr, dst_addr)
    out_next_hop: object  # switch id, or host name on the last switch
    priority: int = 100
    idle_timeout: float = 0.0
    serial: int = field(default=0, compare=False)
    last_used: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.idle_timeout < 0:
            raise ValueError("idle_timeout must be >= 0")


@dataclass(frozen=True)
class RuleHandle:
    switch: int
    match: tuple
    priority: int
    serial: int


@dataclass
class FlowCounters:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    sent_bytes: int = 0
    delivered_bytes: int = 0


class Simulator:
    """Single-threaded event loop over a :class:`Topology`.

    ``seed`` only drives the start-time jitter of traffic sources; everything
    else is deterministic, with ties in event time broken by insertion order.
    """

    def __init__(self, topo: Topology, seed: int = 0, log_events: bool = False):
        self.topo = topo
        self.seed = seed
        self.rng = random.Random(seed)
        self.now = 0.0
        self._queue = []
        self._seq = itertools.count()
        self._pid = itertools.count(1)
        self._serial = itertools.count(1)
        self.ports = {}
        for link in topo.links.values():
            for u, v in ((link.a, link.b), (link.b, link.a)):
                self.ports[(u, v)] = Port(u, v, link.capacity_bps, link.delay_s, link.queue_pkts)
        self.host_by_addr = {}
        self.host_port = {}
        for h in topo.hosts.values():
            self.ports[(h.name, h.switch)] = Port(h.name, h.switch, h.capacity_bps, h.delay_s, h.queue_pkts)
            self.ports[(h.switch, h.name)] = Port(h.switch, h.name, h.capacity_bps, h.delay_s, h.queue_pkts)
            self.host_by_addr[h.addr] = h
            self.host_port[h.name] = self.ports[(h.name, h.switch)]
        self.tables = {sw: {} for sw in topo.nodes}  # switch -> match -> priority -> rule
        self._fib = {sw: {} for sw in topo.nodes}  # switch -> match -> best rule
        self.agents = {}
        self.counters = {}
        self.host_packets = {name: 0 for name in topo.hosts}
        self.no_rule_drops = 0
        self.captures = {}
        self.log = [] if log_events else None

    # --- event loop -----------------------------------------------------

    def schedule(self, t, fn, a=None, b=None):
        heappush(self._queue, (t, next(self._seq), fn, a, b))

    def run(self, until: float) -> None:
        queue = self._queue
        while queue and queue[0][0] <= until:
            t, _, fn, a, b = heappop(queue)
            self.now = t
            fn(a, b)
        if until > self.now:
            self.now = until

    def next_packet_id(self) -> int:
        return next(self._pid)

    def register(self, flow_id, agent) -> None:
        if flow_id in self.agents:
            raise ValueError(f"flow id {flow_id!r} already registered")
        self.agents[flow_id] = agent
        self.counters[flow_id] = FlowCounters()

    # --- data plane -----------------------------------------------------

    def send(self, host_name: str, pkt: Packet) -> None:
        t = self.now
        c = self.counters[pkt.flow_id]
        c.sent += 1
        c.sent_bytes += pkt.size
        self.host_packets[host_name] += 1
        cap = self.captures.get(host_name)
        if cap is not None:
            cap.append((t, pkt.src, pkt.dst, pkt.size, pkt.kind))
        if self.log is not None:
            self.log.append((t, "send", pkt.flow_id, host_name, pkt.id, pkt.size))
        self._transmit(self.host_port[host_name], pkt, t)

    def _transmit(self, port: Port, pkt: Packet, t: float) -> None:
        bits = pkt.size * 8
        port.offered_bits += bits
        b = int(t / BIN_S)
        port.bins[b] = port.bins.get(b, 0) + bits
        finish = port.finish
        while finish and finish[0] <= t:
            finish.popleft()
        if len(finish) > port.qcap:
            port.drops += 1
            self._drop(pkt, port.src, "queue")
            return
        start = port.busy_until if port.busy_until > t else t
        end = start + bits / port.capacity
        port.busy_until = end
        finish.append(end)
        port.sent_bits += bits
        dst = port.dst
        if dst.__class__ is int:
            self.schedule(end + port.delay, self._at_switch, dst, pkt)
        else:
            self.schedule(end + port.delay, self._at_host, dst, pkt)

    def _drop(self, pkt, node, reason):
        self.counters[pkt.flow_id].dropped += 1
        if self.log is not None:
            self.log.append((self.now, "drop_" + reason, pkt.flow_id, node, pkt.id, pkt.size))

    def _at_switch(self, sw, pkt):
        rule = self._fib[sw].get((pkt.src, pkt.dst))
        if rule is not None and rule.idle_timeout:
            if self.now - rule.last_used >= rule.idle_timeout:
                self._expire(rule)
                rule = self._fib[sw].get((pkt.src, pkt.dst))
        if rule is None:
            self.no_rule_drops += 1
            self._drop(pkt, sw, "norule")
            return
        rule.last_used = self.now
        if self.log is not None:
            self.log.append((self.now, "forward", pkt.flow_id, sw, pkt.id, pkt.size))
        self._transmit(self.ports[(sw, rule.out_next_hop)], pkt, self.now)

    def _at_host(self, name, pkt):
        host = self.topo.hosts[name]
        if host.addr != pkt.dst:
            self._drop(pkt, name, "misrouted")
            return
        c = self.counters[pkt.flow_id]
        c.delivered += 1
        c.delivered_bytes += pkt.size
        self.host_packets[name] += 1
        cap = self.captures.get(name)
        if cap is not None:
            cap.append((self.now, pkt.src, pkt.dst, pkt.size, pkt.kind))
        if self.log is not None:
            self.log.append((self.now, "recv", pkt.flow_id, name, pkt.id, pkt.size))
        self.agents[pkt.flow_id].receive(pkt, name)

    def in_flight(self) -> dict:
        """Packets admitted to a port but not yet arrived, per flow."""
        out = {}
        for _, _, fn, _, pkt in self._queue:
            if isinstance(pkt, Packet) and fn in (self._at_switch, self._at_host):
                out[pkt.flow_id] = out.get(pkt.flow_id, 0) + 1
        return out

    def capture(self, host_name: str) -> list:
        """Start recording every packet sent or received by ``host_name``."""
        self.topo.host(host_name)
        return self.captures.setdefault(host_name, [])

    # --- control plane --------------------------------------------------

    def add_rule(self, rule: FlowRule) -> RuleHandle:
        if rule.switch not in self.tables:
            raise KeyError(f"unknown switch {rule.switch}")
        slot = self.tables[rule.switch].setdefault(rule.match, {})
        if rule.priority in slot:
            raise RuleConflict(f"switch {rule.switch} already has {rule.match} at priority {rule.priority}")
        rule.serial = next(self._serial)
        rule.last_used = self.now
        slot[rule.priority] = rule
        self._refresh(rule.switch, rule.match)
        return RuleHandle(rule.switch, rule.match, rule.priority, rule.serial)

    def remove_rule(self, handle: RuleHandle) -> None:
        slot = self.tables.get(handle.switch, {}).get(handle.match)
        rule = slot.get(handle.priority) if slot else None
        if rule is None or rule.serial != handle.serial:
            raise StaleHandle(handle)
        del slot[handle.priority]
        if not slot:
            del self.tables[handle.switch][handle.match]
        self._refresh(handle.switch, handle.match)

    def has_rule(self, handle: RuleHandle) -> bool:
        slot = self.tables.get(handle.switch, {}).get(handle.match)
        rule = slot.get(handle.priority) if slot else None
        return rule is not None and rule.serial == handle.serial

    def _expire(self, rule):
        self.remove_rule(RuleHandle(rule.switch, rule.match, rule.priority, rule.serial))

    def _refresh(self, sw, match):
        slot = self.tables[sw].get(match)
        if slot:
            self._fib[sw][match] = slot[max(slot)]
        else:
            self._fib[sw].pop(match, None)

    def table_snapshot(self) -> dict:
        """Plain-data view of every installed rule, for comparisons and audits."""
        return {
            sw: {
                match: {p: (r.out_next_hop, r.idle_timeout) for p, r in sorted(slot.items())}
                for match, slot in sorted(entries.items())
            }
            for sw, entries in sorted(self.tables.items())
        }

    def route_of(self, src_addr: str, dst_addr: str) -> list:
        """Ports a packet from ``src_addr`` to ``dst_addr`` would traverse now."""
        host = self.host_by_addr[src_addr]
        ports = [self.host_port[host.name]]
        node = host.switch
        seen = set()
        while node.__class__ is int:
            if node in seen:
                raise RuntimeError(f"forwarding loop at switch {node}")
            seen.add(node)
            rule = self._fib[node].get((src_addr, dst_addr))
            if rule is None:
                return ports
            ports.append(self.ports[(node, rule.out_next_hop)])
            node = rule.out_next_hop
        return ports

    # --- export ---------------------------------------------------------

    def write_event_log(self, path) -> None:
        if self.log is None:
            raise RuntimeError("simulator was created with log_events=False")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "event", "flow_id", "node", "packet_id", "size"])
            for t, ev, fid, node, pid, size in self.log:
                w.writerow([repr(t), ev, fid, node, pid, size])


def install_path(sim: Simulator, path: Path, match: tuple, priority: int = 100,
                 idle_timeout: float = 0.0) -> list[RuleHandle]:
    """Push forward rules for ``match`` along ``path`` and reverse rules back.

    ``match`` is ``(src_addr, dst_addr)``; the source host must sit on the
    first switch of ``path`` and the destination host on the last.
    """
    src_addr, dst_addr = match
    src = sim.host_by_addr.get(src_addr)
    dst = sim.host_by_addr.get(dst_addr)
    if src is None or dst is None:
        raise KeyError(f"unknown host address in {match}")
    if not sim.topo.is_valid_path(path):
        raise ValueError(f"{path} is not a path of the topology")
    if src.switch != path.src or dst.switch != path.dst:
        raise ValueError(f"{path} does not join {src.name}@{src.switch} to {dst.name}@{dst.switch}")
    rules = []
    nodes = path.nodes
    for i, sw in enumerate(nodes):
        nxt = nodes[i + 1] if i + 1 < len(nodes) else dst.name
        rules.append(FlowRule(sw, (src_addr, dst_addr), nxt, priority, idle_timeout))
    back = nodes[::-1]
    for i, sw in enumerate(back):
        nxt = back[i + 1] if i + 1 < len(back) else src.name
        rules.append(FlowRule(sw, (dst_addr, src_addr), nxt, priority, idle_timeout))
    handles = []
    try:
        for rule in rules:
            handles.append(sim.add_rule(rule))
    except RuleConflict:
        for h in handles:
            sim.remove_rule(h)
        raise
    return handles


def remove_path(sim: Simulator, handles: list[RuleHandle]) -> None:
    if not handles:
        raise StaleHandle("no handles given")
    for h in handles:
        if not sim.has_rule(h):
            raise StaleHandle(h)
    for h in handles:
        sim.remove_rule(h)
