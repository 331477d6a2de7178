"""Deterministic packet-level SDN simulator."""

from .core import (
    MTU,
    FlowRule,
    Packet,
    RuleConflict,
    RuleHandle,
    Simulator,
    StaleHandle,
    install_path,
    remove_path,
)
from .ops import (
    ProbeResult,
    SimRun,
    bandwidth_probe,
    fresh_flow_id,
    path_utilization,
    ping,
    run,
    snapshot,
    start_ping,
    start_traffic,
)
from .traffic import CbrFlow, PingSession, ScheduledStream, TcpFlow, TrafficSpec

__all__ = [
    "MTU", "FlowRule", "Packet", "RuleConflict", "RuleHandle", "Simulator", "StaleHandle",
    "install_path", "remove_path", "ProbeResult", "SimRun", "bandwidth_probe", "fresh_flow_id",
    "path_utilization", "ping", "run", "snapshot", "start_ping", "start_traffic",
    "CbrFlow", "PingSession", "ScheduledStream", "TcpFlow", "TrafficSpec",
]
