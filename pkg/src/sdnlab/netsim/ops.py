"""High-level measurement helpers layered on the event engine."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import FlowCounters, Simulator
from .traffic import JITTER_S, CbrFlow, PingSession, TcpFlow, TrafficSpec

# cpu proxy: fraction of one core per packet/s handled by a host
CPU_PER_PKT_S = 1e-4
CPU_USER_SHARE = 0.7
# receive window of the measuring host, in segments (about 46 KB)
PROBE_WINDOW = 32


def fresh_flow_id(sim: Simulator, prefix: str) -> str:
    # ids derived from the simulator's own registry keep runs reproducible
    n = sum(1 for k in sim.agents if str(k).startswith(prefix))
    fid = f"{prefix}{n}"
    while fid in sim.agents:
        n += 1
        fid = f"{prefix}{n}"
    return fid


def start_traffic(sim: Simulator, spec: TrafficSpec, flow_id: str | None = None) -> list:
    """Launch the flows of ``spec``; every connection gets its own seeded start jitter."""
    base = flow_id or fresh_flow_id(sim, f"{spec.src_host}>{spec.dst_host}#")
    agents = []
    for c in range(spec.connections):
        fid = base if spec.connections == 1 else f"{base}.{c}"
        start = spec.start_time + sim.rng.uniform(0.0, JITTER_S)
        stop = spec.start_time + spec.duration
        if spec.protocol == "cbr":
            rate = spec.target_rate / spec.connections
            agents.append(CbrFlow(sim, fid, spec.src_host, spec.dst_host, start, stop, rate,
                                  spec.packet_size))
        else:
            rate = None if spec.greedy else spec.target_rate / spec.connections
            agents.append(TcpFlow(sim, fid, spec.src_host, spec.dst_host, start, stop, rate,
                                  spec.block_bytes))
    return agents


@dataclass
class SimRun:
    seed: int
    end_time: float
    counters: dict = field(default_factory=dict)  # flow_id -> FlowCounters
    in_flight: dict = field(default_factory=dict)
    events: list | None = None
    retransmits: dict = field(default_factory=dict)

    def conserved(self, flow_id) -> bool:
        c: FlowCounters = self.counters[flow_id]
        return c.sent == c.delivered + c.dropped + self.in_flight.get(flow_id, 0)


def run(sim: Simulator, specs: list[TrafficSpec], until: float) -> SimRun:
    """Start ``specs`` and advance the clock to ``until``."""
    for spec in specs:
        start_traffic(sim, spec)
    sim.run(until)
    return snapshot(sim)


def snapshot(sim: Simulator) -> SimRun:
    return SimRun(
        seed=sim.seed,
        end_time=sim.now,
        counters={k: FlowCounters(**vars(v)) for k, v in sim.counters.items()},
        in_flight=sim.in_flight(),
        events=list(sim.log) if sim.log is not None else None,
        retransmits={k: a.retransmits for k, a in sim.agents.items() if isinstance(a, TcpFlow)},
    )


def start_ping(sim: Simulator, src_host: str, dst_host: str, count: int = 10,
               interval: float = 0.1, start: float | None = None, timeout: float = 2.0) -> PingSession:
    return PingSession(sim, fresh_flow_id(sim, "ping#"), src_host, dst_host, count, interval, start, timeout)


def ping(sim: Simulator, src_host: str, dst_host: str, count: int = 10,
         interval: float = 0.1, timeout: float = 2.0) -> list:
    """Blocking ping: runs the simulation until the last probe's timeout."""
    if count == 0:
        return []
    session = start_ping(sim, src_host, dst_host, count, interval, None, timeout)
    sim.run(session.done_at)
    return session.results()


@dataclass(frozen=True)
class ProbeResult:
    bits_per_second: float
    retransmits: int
    bu_ratio: float
    cpu_host_total: float
    cpu_remote_total: float
    start: float
    end: float

    def __iter__(self):
        yield self.bits_per_second
        yield self.retransmits
        yield self.bu_ratio


def path_utilization(sim: Simulator, src_addr: str, dst_addr: str, t0: float, t1: float) -> float:
    """Offered load of the busiest port on the installed route, as a fraction of its capacity."""
    if t1 <= t0:
        return 0.0
    best = 0.0
    for port in sim.route_of(src_addr, dst_addr):
        best = max(best, port.offered_between(t0, t1) / (port.capacity * (t1 - t0)))
    return min(best, 1.0)


def bandwidth_probe(sim: Simulator, src_host: str, dst_host: str, duration: float = 2.0,
                    lookback: float = 2.0, window: float = PROBE_WINDOW) -> ProbeResult:
    """iperf3-style greedy TCP probe from ``src_host`` to ``dst_host``.

    ``bu_ratio`` is the utilization of the route's bottleneck over the
    ``lookback`` seconds before the probe starts, so it reflects the load the
    probe has to compete with rather than the probe's own traffic. The probe
    is only limited by congestion control and a ``window``-segment receive
    window.
    """
    t0 = sim.now
    src_addr = sim.topo.host(src_host).addr
    dst_addr = sim.topo.host(dst_host).addr
    bu = path_utilization(sim, src_addr, dst_addr, max(t0 - lookback, 0.0), t0)
    before = dict(sim.host_packets)
    flow = TcpFlow(sim, fresh_flow_id(sim, "probe#"), src_host, dst_host, t0, t0 + duration,
                   max_window=window)
    sim.run(t0 + duration)
    bps = flow.delivered_bytes * 8 / duration

    def cpu(host):
        rate = (sim.host_packets[host] - before[host]) / duration
        return min(rate * CPU_PER_PKT_S, 1.0)

    return ProbeResult(bps, flow.retransmits, bu, cpu(src_host), cpu(dst_host), t0, t0 + duration)
