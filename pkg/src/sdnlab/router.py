"""Classifier-driven path selection, the hop-count baseline, and their head-to-head comparison."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import telemetry
from .mlkit import FeatureMismatch, TrainedModel
from .netsim import Simulator, TcpFlow, fresh_flow_id, install_path, remove_path, start_ping
from .netsim.ops import PROBE_WINDOW
from .scenarios import (
    CLIENT,
    DRAIN_S,
    SERVER,
    WARMUP_S,
    ConfigError,
    ProbeSchedule,
    VideoProfile,
    base_topology,
    build_network,
    measure_path,
    parse_background,
    session_rate,
)
from .topology import Path, k_shortest_paths, shortest_path
from .vquality import VideoTransfer

TIE_BREAK = "predicted class, then P(high), then hop count, then node sequence"


@dataclass
class Candidate:
    path: Path
    record: telemetry.FeatureRecord | None = None
    predicted: int | None = None
    probability: float | None = None

    def sort_key(self):
        return (self.predicted, self.probability, self.path.hop_count, self.path.nodes)

    def to_dict(self) -> dict:
        return {
            "path": list(self.path.nodes),
            "hop_count": self.path.hop_count,
            "predicted": self.predicted,
            "probability_high": self.probability,
            "features": None if self.record is None else self.record.as_dict(),
        }


@dataclass
class RoutingDecision:
    strategy: str
    candidates: list
    chosen: Path
    handles: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("a decision needs at least one candidate")
        if self.chosen not in [c.path for c in self.candidates]:
            raise ValueError("chosen path is not among the candidates")

    def to_dict(self) -> dict:
        d = {"strategy": self.strategy, "chosen": list(self.chosen.nodes),
             "candidates": [c.to_dict() for c in self.candidates]}
        if self.strategy == "ai":
            d["tie_break"] = TIE_BREAK
        return d


def select(candidates) -> Candidate:
    """Lowest predicted class; ties by P(high), hop count, then node sequence."""
    return min(candidates, key=Candidate.sort_key)


def check_probe_view(model: TrainedModel) -> None:
    """Refuse models that need features only known after a transfer."""
    leaked = [n for n in model.feature_names if n not in telemetry.PROBE_VIEW]
    if leaked:
        raise FeatureMismatch(f"model uses post-transfer features {leaked}; "
                              "routing needs a probe-view model")


def _endpoints(sim: Simulator, client: str, server: str):
    cl, sv = sim.topo.host(client), sim.topo.host(server)
    return cl, sv, (cl.addr, sv.addr)


def probe_candidate(sim: Simulator, model: TrainedModel, path: Path, client: str, server: str,
                    schedule: ProbeSchedule, pilot_rate: float | None) -> Candidate:
    """Install ``path``, measure it, classify the probe-view record, then remove the rules."""
    _, _, match = _endpoints(sim, client, server)
    handles = install_path(sim, path, match)
    try:
        m = measure_path(sim, schedule, client, server, pilot_rate=pilot_rate)
    finally:
        remove_path(sim, handles)
    record = telemetry.assemble_record(m.ping_agg, m.probe, m.flow, None, path.hop_count, None)
    view = record.probe_view()
    p = float(model.predict_proba(view)[0])
    return Candidate(path, view, int(p >= model.threshold), p)


def route_ai(sim: Simulator, model: TrainedModel, client: str = CLIENT, server: str = SERVER,
             k: int = 5, schedule: ProbeSchedule = ProbeSchedule(),
             pilot_rate: float | None = None) -> RoutingDecision:
    """Probe each of the ``k`` shortest paths in turn and install the one predicted least loaded."""
    check_probe_view(model)
    cl, sv, match = _endpoints(sim, client, server)
    paths = k_shortest_paths(sim.topo, cl.switch, sv.switch, k)
    rate = session_rate() if pilot_rate is None else pilot_rate
    cands = [probe_candidate(sim, model, p, client, server, schedule, rate) for p in paths]
    best = select(cands)
    handles = install_path(sim, best.path, match)
    return RoutingDecision("ai", cands, best.path, handles)


def route_hop_count(sim: Simulator, client: str = CLIENT, server: str = SERVER) -> RoutingDecision:
    """Install the minimum-hop path regardless of load."""
    cl, sv, match = _endpoints(sim, client, server)
    path = shortest_path(sim.topo, cl.switch, sv.switch)
    handles = install_path(sim, path, match)
    return RoutingDecision("hop_count", [Candidate(path)], path, handles)


@dataclass(frozen=True)
class CompareConfig:
    """Background load plus the monitoring plan for a strategy comparison."""

    background: tuple = ()
    duration: float = 60.0
    k: int = 5
    seed: int = 0
    video: bool = True
    video_profile: VideoProfile = field(default_factory=VideoProfile)
    schedule: ProbeSchedule = field(default_factory=ProbeSchedule)
    topology: str | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("must be positive", "duration")
        if self.k < 1:
            raise ConfigError("must be >= 1", "k")

    @property
    def monitor_start(self) -> float:
        # same instant for both strategies, after the longest probing phase;
        # a whole second so the per-second throughput bins line up
        return float(math.ceil(WARMUP_S + self.k * self.schedule.span + 1.0))

    @classmethod
    def from_dict(cls, d: dict) -> "CompareConfig":
        if not isinstance(d, dict):
            raise ConfigError("top level must be an object")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        kw = dict(d)
        kw["background"] = tuple(parse_background(d.get("background", []), "background"))
        if "video_profile" in d:
            try:
                kw["video_profile"] = VideoProfile(**d["video_profile"])
            except TypeError as exc:
                raise ConfigError(str(exc), "video_profile") from None
        if "schedule" in d:
            kw["schedule"] = ProbeSchedule.from_dict(d["schedule"])
        for key, typ in (("duration", float), ("k", int), ("seed", int)):
            if key in d:
                try:
                    kw[key] = typ(d[key])
                except (TypeError, ValueError):
                    raise ConfigError(f"must be a number, got {d[key]!r}", key) from None
        cfg = cls(**kw)
        topo = base_topology(cfg.topology)
        for i, bg in enumerate(cfg.background):
            if not topo.is_valid_path(Path(bg.path)):
                raise ConfigError(f"{list(bg.path)} is not a path of the topology",
                                  f"background[{i}].path")
        return cfg


@dataclass
class StrategyRun:
    decision: RoutingDecision
    rtt_ms: list  # per second, None where the ping was lost
    throughput_bps: list
    quality: object | None  # vquality.QualityReport

    @property
    def mean_rtt_ms(self) -> float:
        vals = [v for v in self.rtt_ms if v is not None]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_throughput_bps(self) -> float:
        return float(np.mean(self.throughput_bps))

    def summary(self) -> dict:
        q = self.quality
        return {
            "chosen": list(self.decision.chosen.nodes),
            "mean_rtt_ms": self.mean_rtt_ms,
            "ping_loss_pct": 100.0 * sum(v is None for v in self.rtt_ms) / len(self.rtt_ms),
            "mean_throughput_bps": self.mean_throughput_bps,
            "psnr": None if q is None else q.psnr,
            "ssim": None if q is None else q.ssim,
            "quality": None if q is None else q.to_dict(),
        }


def run_strategy(cfg: CompareConfig, strategy: str, model: TrainedModel | None = None) -> StrategyRun:
    """One full simulation: warm up, route, then monitor the chosen path and stream the video."""
    sim, _ = build_network(base_topology(cfg.topology), cfg.background, cfg.seed)
    sim.run(WARMUP_S)
    if strategy == "ai":
        decision = route_ai(sim, model, k=cfg.k, schedule=cfg.schedule,
                            pilot_rate=session_rate(cfg.video_profile.original_bits))
    elif strategy == "hop_count":
        decision = route_hop_count(sim)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    t0 = cfg.monitor_start
    if sim.now > t0:
        raise RuntimeError("probing overran the monitoring start")
    seconds = int(math.ceil(cfg.duration))
    tx = None
    if cfg.video:
        video = cfg.video_profile.render(cfg.seed)
        tx = VideoTransfer(sim, video, SERVER, CLIENT, start=t0,
                           original_bits=cfg.video_profile.original_bits)
    pings = start_ping(sim, CLIENT, SERVER, seconds, 1.0, start=t0, timeout=2.0)
    monitor = TcpFlow(sim, fresh_flow_id(sim, "monitor#"), SERVER, CLIENT, t0, t0 + cfg.duration,
                      max_window=PROBE_WINDOW)
    end = max(t0 + cfg.duration, pings.done_at)
    if tx is not None:
        end = max(end, tx.end_time + DRAIN_S)
    sim.run(end)
    rtts = [None if r is None else r * 1000.0 for r in pings.results()]
    thr = [monitor.goodput_between(t0 + i, t0 + i + 1) for i in range(seconds)]
    quality = tx.finish()[1] if tx is not None else None
    return StrategyRun(decision, rtts, thr, quality)


@dataclass
class Comparison:
    config: CompareConfig
    baseline: StrategyRun
    ai: StrategyRun

    def summary(self) -> dict:
        b, a = self.baseline.summary(), self.ai.summary()
        out = {"scenario": self.config.name, "seed": self.config.seed,
               "baseline": b, "ai": a,
               "rtt_ratio_ai_over_baseline": a["mean_rtt_ms"] / b["mean_rtt_ms"],
               "throughput_ratio_ai_over_baseline": (a["mean_throughput_bps"] / b["mean_throughput_bps"]
                                                     if b["mean_throughput_bps"] else math.inf)}
        if a["psnr"] is not None:
            out["psnr_gain_db"] = a["psnr"] - b["psnr"]
            out["ssim_gain"] = a["ssim"] - b["ssim"]
        return out

    def write_series(self, path) -> None:
        def cell(v):
            return "" if v is None else repr(float(v))

        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "rtt_ms_baseline", "rtt_ms_ai", "throughput_bps_baseline",
                        "throughput_bps_ai"])
            rows = zip(self.baseline.rtt_ms, self.ai.rtt_ms, self.baseline.throughput_bps,
                       self.ai.throughput_bps)
            for t, (rb, ra, tb, ta) in enumerate(rows):
                w.writerow([t, cell(rb), cell(ra), cell(tb), cell(ta)])

    def write_audit(self, path) -> None:
        doc = {"baseline": self.baseline.decision.to_dict(), "ai": self.ai.decision.to_dict()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def compare_strategies(cfg: CompareConfig, model: TrainedModel) -> Comparison:
    """Run the hop-count baseline and the classifier router on identical seeded networks."""
    check_probe_view(model)
    return Comparison(cfg, run_strategy(cfg, "hop_count"), run_strategy(cfg, "ai", model))
