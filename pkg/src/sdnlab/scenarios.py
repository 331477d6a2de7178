"""Scenario configs, the probe schedule and single measurement episodes."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

from . import telemetry
from .netsim import (
    CbrFlow,
    Simulator,
    TrafficSpec,
    bandwidth_probe,
    fresh_flow_id,
    install_path,
    start_ping,
    start_traffic,
)
from .netsim.core import MTU
from .telemetry import FeatureRecord, FlowWindow, PacketTrace
from .topology import Host, Path, Topology, TopologyError, nsfnet
from .vquality import (
    DESK_FRAMES,
    DESK_HEIGHT,
    DESK_WIDTH,
    ORIGINAL_BITS,
    PAYLOAD,
    VIDEO_SECONDS,
    VideoTransfer,
    generate_video,
)

CLIENT = "client"
SERVER = "server"
WARMUP_S = 1.0
DRAIN_S = 2.0
FOREVER = 1e6

# (connections, per-connection rate) for each traffic level
LEVELS = {"low": (2, 1.5e6), "high": (4, 2.25e6)}
# source/destination addresses of the background pairs, in table order
TABLE_PAIRS = (("10.0.0.9", "10.0.0.4"), ("10.0.0.17", "10.0.0.15"),
               ("10.0.0.18", "10.0.0.16"), ("10.0.0.21", "10.0.0.19"))
# forced client-server path and the switch segment the background shares with it,
# oriented like the video (server side first)
SCENARIOS = {
    "s1": ((0, 3, 8, 9), (8, 3)),
    "s2": ((0, 1, 7, 10, 9), (10, 7, 1)),
    "s3": ((0, 2, 5, 13, 10, 9), (10, 13, 5, 2)),
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


def session_rate(original_bits: int = ORIGINAL_BITS, seconds: float = VIDEO_SECONDS) -> float:
    """Wire rate of the video stream, including datagram headers."""
    return original_bits / seconds * MTU / PAYLOAD


def derive_seed(*parts) -> int:
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


@dataclass(frozen=True)
class BackgroundFlow:
    """TCP background between two hosts attached at the ends of ``path``."""

    path: tuple
    rate: float
    src_addr: str | None = None
    dst_addr: str | None = None

    def to_dict(self) -> dict:
        d = {"path": list(self.path), "rate": self.rate}
        if self.src_addr:
            d.update(src_addr=self.src_addr, dst_addr=self.dst_addr)
        return d


def level_background(segment, level: str) -> tuple[BackgroundFlow, ...]:
    """Background pairs for ``level`` on the switch segment ``segment``."""
    if level not in LEVELS:
        raise ConfigError(f"unknown traffic level {level!r}", "level")
    n, rate = LEVELS[level]
    return tuple(BackgroundFlow(tuple(segment), rate, s, d) for s, d in TABLE_PAIRS[:n])


@dataclass(frozen=True)
class ProbeSchedule:
    """Per-path measurement timing, relative to the moment the session stream starts.

    The stream runs alone for ``lead`` seconds (the utilization look-back),
    then the bandwidth probe runs for ``probe_s`` while the ping burst starts
    ``ping_offset`` into it; the flow meter observes ``flow_window`` seconds
    from the start of the probe.
    """

    lead: float = 2.0
    probe_s: float = 2.0
    ping_count: int = 10
    ping_interval: float = 0.1
    ping_offset: float = 0.75
    ping_timeout: float = 2.0
    flow_window: float = 3.0
    probe_window: int = 32

    def __post_init__(self):
        for name in ("lead", "probe_s", "ping_interval", "flow_window", "ping_timeout"):
            if getattr(self, name) <= 0:
                raise ConfigError("must be positive", f"schedule.{name}")
        if self.ping_count < 1:
            raise ConfigError("must be >= 1", "schedule.ping_count")
        if self.ping_offset < 0:
            raise ConfigError("must be >= 0", "schedule.ping_offset")
        if self.probe_window < 1:
            raise ConfigError("must be >= 1", "schedule.probe_window")

    @property
    def span(self) -> float:
        pings_done = self.ping_offset + (self.ping_count - 1) * self.ping_interval + self.ping_timeout
        return self.lead + max(self.probe_s, self.flow_window, pings_done)

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeSchedule":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "schedule")
        return cls(**d)


@dataclass(frozen=True)
class VideoProfile:
    frames: int = DESK_FRAMES
    width: int = DESK_WIDTH
    height: int = DESK_HEIGHT
    original_bits: int = ORIGINAL_BITS

    def __post_init__(self):
        for name in ("frames", "width", "height", "original_bits"):
            if getattr(self, name) <= 0:
                raise ConfigError("must be positive", f"video_profile.{name}")

    def render(self, seed: int):
        return generate_video(seed, self.frames, self.width, self.height)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    level: str
    path: tuple
    background: tuple
    seed: int = 0
    repetitions: int = 145
    video: bool = True
    video_profile: VideoProfile = field(default_factory=VideoProfile)
    schedule: ProbeSchedule = field(default_factory=ProbeSchedule)
    topology: str | None = None

    @property
    def label(self) -> int:
        return telemetry.LABELS[self.level]

    @classmethod
    def preset(cls, scenario: str, level: str, **kw) -> "ScenarioConfig":
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}", "scenario")
        path, segment = SCENARIOS[scenario]
        return cls(scenario, level, path, level_background(segment, level), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = {"scenario", "level", "path", "background", "seed", "repetitions", "video",
                 "video_profile", "schedule", "topology"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        scenario = d.get("scenario", "custom")
        level = d.get("level")
        if level not in LEVELS:
            raise ConfigError(f"must be one of {sorted(LEVELS)}", "level")
        kw = {}
        try:
            if "seed" in d:
                kw["seed"] = int(d["seed"])
            if "repetitions" in d:
                kw["repetitions"] = int(d["repetitions"])
                if kw["repetitions"] < 1:
                    raise ConfigError("must be >= 1", "repetitions")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), "seed/repetitions") from None
        if "video" in d:
            kw["video"] = bool(d["video"])
        if "video_profile" in d:
            kw["video_profile"] = _build(VideoProfile, d["video_profile"], "video_profile")
        if "schedule" in d:
            kw["schedule"] = ProbeSchedule.from_dict(d["schedule"])
        if d.get("topology"):
            kw["topology"] = str(d["topology"])
        if scenario in SCENARIOS and "path" not in d and "background" not in d:
            cfg = cls.preset(scenario, level, **kw)
        else:
            if "path" not in d:
                raise ConfigError("required for custom scenarios", "path")
            path = tuple(int(n) for n in d["path"])
            bg = tuple(parse_background(d.get("background", []), "background"))
            cfg = cls(scenario, level, path, bg, **kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        topo = base_topology(self.topology)
        try:
            p = Path(self.path)
        except (TopologyError, ValueError) as exc:
            raise ConfigError(str(exc), "path") from None
        if not topo.is_valid_path(p):
            raise ConfigError(f"{list(self.path)} is not a path of the topology", "path")
        for i, bg in enumerate(self.background):
            if not topo.is_valid_path(Path(bg.path)):
                raise ConfigError(f"{list(bg.path)} is not a path of the topology",
                                  f"background[{i}].path")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "level": self.level, "path": list(self.path),
            "background": [b.to_dict() for b in self.background], "seed": self.seed,
            "repetitions": self.repetitions, "video": self.video,
            "video_profile": vars(self.video_profile).copy(),
            "schedule": vars(self.schedule).copy(), "topology": self.topology,
        }


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError("must be an object", where)
    unknown = set(d) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", where)
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(str(exc), where) from None


def parse_background(items, where: str) -> list[BackgroundFlow]:
    out = []
    if not isinstance(items, list):
        raise ConfigError("must be a list", where)
    for i, item in enumerate(items):
        here = f"{where}[{i}]"
        if not isinstance(item, dict):
            raise ConfigError("must be an object", here)
        if "level" in item:
            flows = level_background(item["path"], item["level"])
            out.extend(flows)
            continue
        try:
            rate = float(item["rate"])
            path = tuple(int(n) for n in item["path"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"needs numeric 'path' and 'rate' ({exc})", here) from None
        if rate <= 0:
            raise ConfigError("rate must be > 0", here)
        if len(path) < 1:
            raise ConfigError("path must name at least one switch", here)
        out.append(BackgroundFlow(path, rate, item.get("src_addr"), item.get("dst_addr")))
    return out


def base_topology(ref: str | None = None) -> Topology:
    if ref is None:
        return nsfnet()
    try:
        return Topology.load(ref)
    except (OSError, ValueError, KeyError, TopologyError) as exc:
        raise ConfigError(f"cannot load topology: {exc}", "topology") from None


def build_network(topo: Topology, background, seed: int) -> tuple[Simulator, list]:
    """Attach one host pair per background flow, install its path and start it at t=0."""
    hosts, pairs = [], []
    used = {h.addr for h in topo.hosts.values()}
    counter = 3
    for i, bg in enumerate(background):
        addrs = []
        for want in (bg.src_addr, bg.dst_addr):
            if want and want not in used:
                addr = want
            else:
                while f"10.0.0.{counter}" in used or any(
                        f"10.0.0.{counter}" in (b.src_addr, b.dst_addr) for b in background):
                    counter += 1
                addr = f"10.0.0.{counter}"
            used.add(addr)
            addrs.append(addr)
        src = Host(f"bg{i}s", bg.path[0], addrs[0])
        dst = Host(f"bg{i}d", bg.path[-1], addrs[1])
        hosts += [src, dst]
        pairs.append((src, dst, bg))
    topo = topo.with_hosts(*hosts)
    sim = Simulator(topo, seed)
    for src, dst, bg in pairs:
        install_path(sim, Path(bg.path), (src.addr, dst.addr))
        start_traffic(sim, TrafficSpec(src.name, dst.name, target_rate=bg.rate, duration=FOREVER))
    return sim, pairs


@dataclass
class Measurement:
    pings: list
    probe: object  # netsim.ProbeResult
    flow: dict

    @property
    def ping_agg(self):
        return telemetry.ping_aggregate(self.pings)


def measure_path(sim: Simulator, schedule: ProbeSchedule, client: str = CLIENT,
                 server: str = SERVER, pilot_rate: float | None = None,
                 start: float | None = None) -> Measurement:
    """Run the probe schedule over whatever client-server route is installed.

    With ``pilot_rate`` a constant-rate stream stands in for the session
    traffic during the schedule; otherwise the caller's own stream is
    assumed to have started at ``start``.
    """
    t0 = sim.now if start is None else start
    if pilot_rate:
        CbrFlow(sim, fresh_flow_id(sim, "pilot#"), server, client, t0, t0 + schedule.span,
                pilot_rate, MTU, "video")
    t_probe = t0 + schedule.lead
    sim.run(t_probe)
    own_capture = client not in sim.captures
    cap = sim.capture(client)
    mark = len(cap)
    pings = start_ping(sim, client, server, schedule.ping_count, schedule.ping_interval,
                       start=t_probe + schedule.ping_offset, timeout=schedule.ping_timeout)
    probe = bandwidth_probe(sim, server, client, schedule.probe_s, lookback=schedule.lead,
                            window=schedule.probe_window)
    sim.run(max(t0 + schedule.span, pings.done_at))
    trace = PacketTrace.from_capture(cap[mark:])
    if own_capture:
        del sim.captures[client]
    key = (sim.topo.host(client).addr, sim.topo.host(server).addr)
    flow = telemetry.flow_statistics(trace, FlowWindow(key, t_probe, t_probe + schedule.flow_window))
    return Measurement(pings.results(), probe, flow)


def run_episode(cfg: ScenarioConfig, rep: int) -> FeatureRecord:
    """One dataset row: forced path, background, probe schedule and (optionally) the video."""
    seed = derive_seed(cfg.seed, cfg.scenario, cfg.level, rep)
    sim, _ = build_network(base_topology(cfg.topology), cfg.background, seed)
    cl, sv = sim.topo.host(CLIENT), sim.topo.host(SERVER)
    install_path(sim, Path(cfg.path), (cl.addr, sv.addr))
    t0 = WARMUP_S
    tx = None
    if cfg.video:
        video = cfg.video_profile.render(cfg.seed)
        tx = VideoTransfer(sim, video, SERVER, CLIENT, start=t0,
                           original_bits=cfg.video_profile.original_bits)
        m = measure_path(sim, cfg.schedule, start=t0)
    else:
        sim.run(t0)
        m = measure_path(sim, cfg.schedule,
                         pilot_rate=session_rate(cfg.video_profile.original_bits))
    quality = None
    if tx is not None:
        sim.run(tx.end_time + DRAIN_S)
        _, quality = tx.finish()
    return telemetry.assemble_record(m.ping_agg, m.probe, m.flow, quality,
                                     len(cfg.path) - 1, cfg.label)


def expand_configs(doc: dict, seed: int | None = None) -> list[ScenarioConfig]:
    """Accept a single scenario, a ``runs`` list, or a ``scenarios`` x ``levels`` matrix."""
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    if "runs" in doc:
        items = doc["runs"]
        if not isinstance(items, list) or not items:
            raise ConfigError("must be a non-empty list", "runs")
    elif "scenarios" in doc:
        shared = {k: v for k, v in doc.items() if k not in ("scenarios", "levels")}
        levels = doc.get("levels", ["low", "high"])
        scen = doc["scenarios"]
        if not isinstance(scen, list) or not isinstance(levels, list):
            raise ConfigError("scenarios and levels must be lists", "scenarios")
        items = [dict(shared, scenario=s, level=lv) for s in scen for lv in levels]
    else:
        items = [doc]
    out = []
    for i, item in enumerate(items):
        if seed is not None:
            item = dict(item, seed=seed)
        try:
            out.append(ScenarioConfig.from_dict(item))
        except ConfigError as exc:
            where = f"runs[{i}]" + (f".{exc.field}" if exc.field else "")
            raise ConfigError(str(exc).split(": ", 1)[-1], where) from None
    return out


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: {exc.msg}", str(path)) from None
    except OSError as exc:
        raise ConfigError(str(exc), str(path)) from None


def packaged_scenario(name: str) -> FsPath:
    """Path of a config shipped in ``sdnlab/data/scenarios``."""
    return FsPath(__file__).parent / "data" / "scenarios" / f"{name}.json"


def with_overrides(cfg: ScenarioConfig, **kw) -> ScenarioConfig:
    return replace(cfg, **kw)


def episodes(configs) -> list[tuple[ScenarioConfig, int]]:
    return [(cfg, rep) for cfg in configs for rep in range(cfg.repetitions)]


def _run(job):
    cfg, rep = job
    return run_episode(cfg, rep)


def gen_data(configs, out_path, jobs: int = 1) -> list[FeatureRecord]:
    """Run every repetition of every config and write the rows in config order.

    Episodes are independent simulations, so ``jobs > 1`` farms them out to
    worker processes; the file is still written by this process alone, after
    all rows are in, through a temporary file and an atomic rename.
    """
    work = episodes(configs)
    if jobs > 1 and len(work) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            records = list(pool.map(_run, work, chunksize=4))
    else:
        records = [_run(job) for job in work]
    out_path = FsPath(out_path)
    tmp = out_path.with_name(out_path.name + ".tmp")
    telemetry.write_dataset(tmp, records)
    tmp.replace(out_path)
    return records
