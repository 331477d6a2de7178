"""Measurement records: ping/iperf aggregates, flow-meter statistics and the 49-column rows."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PING_FEATURES = ("average_rtt", "packet_loss")
IPERF_FEATURES = (
    "bits_per_second", "bu_ratio", "retransmits",
    "cpu_host_total", "cpu_host_user", "cpu_host_system",
    "cpu_remote_total", "cpu_remote_user", "cpu_remote_system",
)
DIRECTIONS = ("bidirectional", "src2dst", "dst2src")
FLOW_FEATURES = tuple(
    [f"{d}_{k}" for d in DIRECTIONS for k in ("duration_ms", "packets", "bytes")]
    + [f"{d}_{s}_ps" for d in DIRECTIONS for s in ("min", "mean", "stddev", "max")]
    + [f"{d}_{s}_piat_ms" for d in DIRECTIONS for s in ("min", "mean", "stddev", "max")]
)
OUTCOME_FEATURES = ("psnr", "ssim", "original_file_size", "file_size")
FEATURE_NAMES = PING_FEATURES + IPERF_FEATURES + FLOW_FEATURES + OUTCOME_FEATURES + ("hop_count",)
PROBE_VIEW = tuple(n for n in FEATURE_NAMES if n not in OUTCOME_FEATURES)
LABEL = "label"
LABELS = {"low": 0, "high": 1}

DEFAULT_IDLE_TIMEOUT = 15.0
CPU_USER_SHARE = 0.7

assert len(FLOW_FEATURES) == 33 and len(FEATURE_NAMES) == 49


class InsufficientProbes(ValueError):
    pass


class EmptyWindow(ValueError):
    pass


class InvalidComponent(ValueError):
    pass


def ping_aggregate(probes: Sequence) -> tuple[float, float]:
    """Mean RTT in ms over answered probes and the lost share in percent."""
    if not probes:
        raise InsufficientProbes("no probes")
    ok = [p for p in probes if p is not None]
    if not ok:
        raise InsufficientProbes("every probe was lost")
    return 1000.0 * sum(ok) / len(ok), 100.0 * (len(probes) - len(ok)) / len(probes)


@dataclass(frozen=True)
class PacketObs:
    t: float
    src: str
    dst: str
    size: int


class PacketTrace:
    """Timestamped packets seen at one observation point, in time order."""

    def __init__(self, packets: Iterable):
        obs = [p if isinstance(p, PacketObs) else PacketObs(*p[:4]) for p in packets]
        self.packets = sorted(obs, key=lambda p: p.t)

    @classmethod
    def from_capture(cls, capture) -> "PacketTrace":
        """Build from ``Simulator.capture`` tuples ``(t, src, dst, size, kind)``."""
        return cls(PacketObs(t, s, d, size) for t, s, d, size, _ in capture)

    def relabel(self, mapping: dict) -> "PacketTrace":
        return PacketTrace(
            PacketObs(p.t, mapping.get(p.src, p.src), mapping.get(p.dst, p.dst), p.size)
            for p in self.packets
        )

    def __len__(self):
        return len(self.packets)


@dataclass(frozen=True)
class FlowWindow:
    """``key`` is ``(src_addr, dst_addr)``; src2dst means packets from ``key[0]``."""

    key: tuple
    start: float
    end: float
    idle_timeout: float = DEFAULT_IDLE_TIMEOUT

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("window start must precede its end")
        if self.idle_timeout <= 0:
            raise ValueError("idle_timeout must be positive")


def _summary(values) -> tuple[float, float, float, float]:
    if len(values) == 0:
        return 0.0, 0.0, 0.0, 0.0
    a = np.asarray(values, dtype=float)
    return float(a.min()), float(a.mean()), float(a.std()), float(a.max())


def _direction_stats(times, sizes) -> dict:
    out = {}
    n = len(times)
    out["duration_ms"] = 1000.0 * (times[-1] - times[0]) if n else 0.0
    out["packets"] = float(n)
    out["bytes"] = float(sum(sizes))
    mn, mean, sd, mx = _summary(sizes)
    out.update(min_ps=mn, mean_ps=mean, stddev_ps=sd, max_ps=mx)
    gaps = np.diff(np.asarray(times, dtype=float)) * 1000.0 if n >= 2 else []
    mn, mean, sd, mx = _summary(gaps)
    out.update(min_piat_ms=mn, mean_piat_ms=mean, stddev_piat_ms=sd, max_piat_ms=mx)
    return out


def flow_segments(trace: PacketTrace, window: FlowWindow) -> list[list[PacketObs]]:
    """Packets of the window's address pair, split wherever the flow idles out."""
    a, b = window.key
    pair = {(a, b), (b, a)}
    pkts = [p for p in trace.packets if window.start <= p.t < window.end and (p.src, p.dst) in pair]
    segments = []
    for p in pkts:
        if segments and p.t - segments[-1][-1].t < window.idle_timeout:
            segments[-1].append(p)
        else:
            segments.append([p])
    return segments


def flow_statistics(trace: PacketTrace, window: FlowWindow) -> dict:
    """The 33 flow-meter features of the most recent flow inside ``window``."""
    segments = flow_segments(trace, window)
    if not segments:
        raise EmptyWindow(f"no packets for {window.key} in [{window.start}, {window.end})")
    pkts = segments[-1]
    src = window.key[0]
    fwd = [p for p in pkts if p.src == src]
    rev = [p for p in pkts if p.src != src]
    feats = {}
    for name, sel in zip(DIRECTIONS, (pkts, fwd, rev)):
        stats = _direction_stats([p.t for p in sel], [p.size for p in sel])
        for k, v in stats.items():
            feats[f"{name}_{k}"] = v
    return {k: feats[k] for k in FLOW_FEATURES}


class FeatureRecord:
    """One measurement row: 49 features in canonical order plus the traffic label.

    Absent features (outcomes unknown at probe time) are stored as ``None``.
    """

    __slots__ = ("values", "label")

    def __init__(self, values, label: int | None):
        if isinstance(values, dict):
            unknown = set(values) - set(FEATURE_NAMES)
            if unknown:
                raise InvalidComponent(f"unknown features {sorted(unknown)}")
            values = [values.get(n) for n in FEATURE_NAMES]
        values = tuple(None if v is None else float(v) for v in values)
        if len(values) != len(FEATURE_NAMES):
            raise InvalidComponent(f"expected {len(FEATURE_NAMES)} values, got {len(values)}")
        if label not in (0, 1, None):
            raise InvalidComponent(f"label must be 0 or 1, got {label!r}")
        self.values = values
        self.label = label
        self._check()

    def _check(self):
        v = self.as_dict()

        def bad(msg):
            raise InvalidComponent(msg)

        for n, x in v.items():
            if x is not None and math.isnan(x):
                bad(f"{n} is NaN")
        loss = v["packet_loss"]
        if loss is not None and not 0.0 <= loss <= 100.0:
            bad(f"packet_loss {loss} outside [0, 100]")
        bu = v["bu_ratio"]
        if bu is not None and not 0.0 <= bu <= 1.0:
            bad(f"bu_ratio {bu} outside [0, 1]")
        s = v["ssim"]
        if s is not None and not -1.0 <= s <= 1.0:
            bad(f"ssim {s} outside [-1, 1]")
        fs, ofs = v["file_size"], v["original_file_size"]
        if fs is not None and ofs is not None and fs > ofs:
            bad("file_size exceeds original_file_size")
        hc = v["hop_count"]
        if hc is not None and hc < 1:
            bad("hop_count must be >= 1")
        for d in DIRECTIONS:
            for kind in ("ps", "piat_ms"):
                mn, mean, sd, mx = (v[f"{d}_{s}_{kind}"] for s in ("min", "mean", "stddev", "max"))
                if sd < 0:
                    bad(f"{d}_stddev_{kind} negative")
                if not mn - 1e-9 <= mean <= mx + 1e-9:
                    bad(f"{d} {kind} triple not ordered")
        for n in ("average_rtt", "bits_per_second", "retransmits", "original_file_size", "file_size"):
            if v[n] is not None and v[n] < 0:
                bad(f"{n} negative")

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.values))

    def __getitem__(self, name):
        return self.values[FEATURE_NAMES.index(name)]

    @property
    def absent(self) -> tuple:
        return tuple(n for n, v in zip(FEATURE_NAMES, self.values) if v is None)

    def probe_view(self) -> "FeatureRecord":
        vals = [None if n in OUTCOME_FEATURES else v for n, v in zip(FEATURE_NAMES, self.values)]
        return FeatureRecord(vals, self.label)

    def __eq__(self, other):
        return isinstance(other, FeatureRecord) and (self.values, self.label) == (other.values, other.label)

    def __repr__(self):
        return f"FeatureRecord(label={self.label}, absent={len(self.absent)})"


def assemble_record(ping_agg, probe, flow_stats: dict, quality, hop_count: int,
                    label: int | None) -> FeatureRecord:
    """Combine one episode's components into a row.

    ``probe`` is a :class:`~sdnlab.netsim.ProbeResult`; ``quality`` a
    :class:`~sdnlab.vquality.QualityReport` or ``None`` for the probe view.
    """
    rtt, loss = ping_agg
    if rtt < 0 or not 0.0 <= loss <= 100.0:
        raise InvalidComponent(f"bad ping aggregate {ping_agg}")
    if probe.bits_per_second < 0 or probe.retransmits < 0:
        raise InvalidComponent("negative probe counters")
    if set(flow_stats) != set(FLOW_FEATURES):
        raise InvalidComponent("flow statistics must carry exactly the 33 flow features")
    if any(flow_stats[k] < 0 for k in FLOW_FEATURES):
        raise InvalidComponent("negative flow statistic")
    if hop_count < 1:
        raise InvalidComponent("hop_count must be >= 1")
    v = {
        "average_rtt": rtt,
        "packet_loss": loss,
        "bits_per_second": probe.bits_per_second,
        "bu_ratio": probe.bu_ratio,
        "retransmits": probe.retransmits,
    }
    for side, total in (("host", probe.cpu_host_total), ("remote", probe.cpu_remote_total)):
        if total < 0:
            raise InvalidComponent("negative cpu load")
        v[f"cpu_{side}_total"] = total
        v[f"cpu_{side}_user"] = CPU_USER_SHARE * total
        v[f"cpu_{side}_system"] = (1.0 - CPU_USER_SHARE) * total
    v.update(flow_stats)
    if quality is not None:
        if quality.received_bits < 0 or quality.original_bits < 0:
            raise InvalidComponent("negative file size")
        v.update(psnr=quality.psnr, ssim=quality.ssim,
                 original_file_size=quality.original_bits, file_size=quality.received_bits)
    v["hop_count"] = hop_count
    return FeatureRecord(v, label)


def _fmt(x) -> str:
    if x is None:
        return ""
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def write_dataset(path, records: Iterable[FeatureRecord]) -> int:
    """Write a header plus one row per record; absent values become empty cells."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_NAMES + (LABEL,))
        for r in records:
            w.writerow([_fmt(x) for x in r.values] + ["" if r.label is None else r.label])
            n += 1
    return n


def append_rows(path, records: Iterable[FeatureRecord]) -> None:
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in records:
            w.writerow([_fmt(x) for x in r.values] + ["" if r.label is None else r.label])


def read_dataset(path) -> list[FeatureRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = tuple(rows[0])
    if header != FEATURE_NAMES + (LABEL,):
        raise ValueError(f"{path}: header does not match the 49-feature schema")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{i}: expected {len(header)} cells, got {len(row)}")
        try:
            vals = [float(c) if c != "" else None for c in row[:-1]]
            label = int(row[-1]) if row[-1] != "" else None
        except ValueError as exc:
            raise ValueError(f"{path}:{i}: {exc}") from None
        out.append(FeatureRecord(vals, label))
    return out
