"""Synthetic video, transfer over the simulator with freeze-frame concealment, and PSNR/SSIM."""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .netsim.core import MTU, Simulator
from .netsim.ops import fresh_flow_id
from .netsim.traffic import ScheduledStream

MAX_PIXEL = 255.0
PSNR_CAP = 100.0
C1 = (0.01 * MAX_PIXEL) ** 2
C2 = (0.03 * MAX_PIXEL) ** 2

ORIGINAL_BITS = 39478308  # size of the reference clip, carried as stream metadata
VIDEO_SECONDS = 66.0
DESK_FRAMES = 3990
DESK_WIDTH = 96
DESK_HEIGHT = 54
UDP_OVERHEAD = 28
PAYLOAD = MTU - UDP_OVERHEAD
BLANK = 128  # shown until the first intact frame arrives


class ShapeError(ValueError):
    pass


def _pair(a, b):
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ShapeError("empty frame")
    return x, y


def _frames(obj):
    return obj.frames if isinstance(obj, FrameSequence) else obj


def mse(original, received) -> float:
    """Mean squared pixel difference of two equally sized frames."""
    x, y = _pair(original, received)
    return float(np.mean((x - y) ** 2))


def psnr_from_mse(value: float) -> float:
    if value < 0:
        raise ValueError("MSE cannot be negative")
    if value == 0:
        return PSNR_CAP
    return min(10.0 * math.log10(MAX_PIXEL ** 2 / value), PSNR_CAP)


def psnr(original, received) -> float:
    """PSNR in dB; for sequences the MSE is averaged over aligned frames first."""
    x, y = _pair(_frames(original), _frames(received))
    if x.ndim == 3:
        value = float(np.mean(np.mean((x - y) ** 2, axis=(1, 2))))
    else:
        value = float(np.mean((x - y) ** 2))
    return psnr_from_mse(value)


def _ssim_stats(x, y, axes):
    mx = x.mean(axis=axes)
    my = y.mean(axis=axes)
    vx = x.var(axis=axes)
    vy = y.var(axis=axes)
    if axes == (1, 2):
        cov = ((x - mx[:, None, None]) * (y - my[:, None, None])).mean(axis=axes)
    else:
        cov = ((x - mx) * (y - my)).mean()
    return ((2 * mx * my + C1) * (2 * cov + C2)) / ((mx ** 2 + my ** 2 + C1) * (vx + vy + C2))


def ssim(x, y) -> float:
    """Structural similarity from whole-frame statistics (population moments).

    For sequences, the mean of the per-frame values.
    """
    a, b = _pair(_frames(x), _frames(y))
    if a.ndim == 3:
        return float(np.mean(_ssim_stats(a, b, (1, 2))))
    return float(_ssim_stats(a, b, None))


@dataclass(frozen=True, eq=False)
class FrameSequence:
    frames: np.ndarray  # (count, height, width) uint8
    fps: float

    def __post_init__(self):
        f = self.frames
        if f.ndim != 3 or f.dtype != np.uint8:
            raise ShapeError("frames must be a (count, height, width) uint8 array")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    def __len__(self):
        return self.frames.shape[0]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def duration(self) -> float:
        return len(self) / self.fps

    @property
    def raw_bits(self) -> int:
        return self.frames.size * 8

    def __eq__(self, other):
        return (isinstance(other, FrameSequence) and self.fps == other.fps
                and np.array_equal(self.frames, other.frames))


@functools.lru_cache(maxsize=4)
def _render(seed: int, count: int, width: int, height: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    k = 5
    fx = rng.uniform(0.5, 2.5, k) * 2 * np.pi / width
    fy = rng.uniform(0.5, 2.0, k) * 2 * np.pi / height
    speed = rng.uniform(0.12, 0.35, k) * rng.choice([-1, 1], k)
    phase = rng.uniform(0, 2 * np.pi, k)
    amp = rng.uniform(15, 30, k)
    ys, xs = np.mgrid[0:height, 0:width]
    spatial = fx[:, None, None] * xs + fy[:, None, None] * ys  # (k, h, w)
    # sin(s + wt + p) = sin(s)cos(wt + p) + cos(s)sin(wt + p): one matrix product per clip
    basis = np.concatenate([np.sin(spatial), np.cos(spatial)]).reshape(2 * k, -1)
    t = np.arange(count)[:, None] * speed + phase
    weights = np.concatenate([amp * np.cos(t), amp * np.sin(t)], axis=1)
    img = 128.0 + weights @ basis
    out = np.clip(np.rint(img), 0, 255).astype(np.uint8).reshape(count, height, width)
    out.setflags(write=False)
    return out


def generate_video(seed: int = 0, frames: int = DESK_FRAMES, width: int = DESK_WIDTH,
                   height: int = DESK_HEIGHT, fps: float | None = None) -> FrameSequence:
    """Seeded clip of drifting low-frequency gratings.

    Neighbouring frames differ enough that a frozen frame has a visible,
    non-saturating error. ``fps`` defaults to ``frames`` spread over 66 s.
    """
    if frames <= 0 or width <= 0 or height <= 0:
        raise ValueError("frame count and size must be positive")
    fps = frames / VIDEO_SECONDS if fps is None else fps
    return FrameSequence(_render(int(seed), frames, width, height), float(fps))


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float
    frames_sent: int
    frames_received: int
    frames_corrupted: int
    frames_lost: int
    original_bits: int
    received_bits: int

    def to_dict(self) -> dict:
        return asdict(self)


def stream_plan(frame_count: int, original_bits: int, payload: int = PAYLOAD):
    """Packet payload sizes and, per frame, the packet index range carrying it."""
    total = math.ceil(original_bits / 8)
    n = math.ceil(total / payload)
    sizes = [payload] * (n - 1) + [total - payload * (n - 1)]
    edges = [total * i // frame_count for i in range(frame_count + 1)]
    spans = []
    for i in range(frame_count):
        lo, hi = edges[i], max(edges[i + 1], edges[i] + 1)
        spans.append((lo // payload, min((hi - 1) // payload, n - 1) + 1))
    return sizes, spans


class VideoTransfer:
    """Streams ``video`` as constant-bit-rate datagrams starting at ``start``.

    The stream rate is ``original_bits / video.duration``. Call
    :meth:`finish` once the simulator has run past :attr:`end_time`.
    """

    def __init__(self, sim: Simulator, video: FrameSequence, src_host: str, dst_host: str,
                 start: float | None = None, original_bits: int = ORIGINAL_BITS):
        self.sim = sim
        self.video = video
        self.original_bits = original_bits
        self.start = sim.now if start is None else start
        self.sizes, self.spans = stream_plan(len(video), original_bits)
        gap = video.duration / len(self.sizes)
        schedule = [(self.start + j * gap, max(s + UDP_OVERHEAD, 64), j) for j, s in enumerate(self.sizes)]
        self.end_time = self.start + video.duration
        self.stream = ScheduledStream(sim, fresh_flow_id(sim, "video#"), src_host, dst_host,
                                      schedule, kind="video")

    @property
    def rate_bps(self) -> float:
        return self.original_bits / self.video.duration

    def finish(self) -> tuple[FrameSequence, QualityReport]:
        got = np.zeros(len(self.sizes), dtype=bool)
        for _, tag, _ in self.stream.arrived:
            got[tag] = True
        orig = self.video.frames
        recv = np.empty_like(orig)
        intact = corrupted = lost = 0
        last = None
        for i, (lo, hi) in enumerate(self.spans):
            n_ok = int(got[lo:hi].sum())
            if n_ok == hi - lo:
                intact += 1
                last = i
                recv[i] = orig[i]
                continue
            if n_ok:
                corrupted += 1
            else:
                lost += 1
            recv[i] = orig[last] if last is not None else BLANK
        recv.setflags(write=False)
        received = FrameSequence(recv, self.video.fps)
        bad = [i for i in range(len(orig)) if not np.array_equal(recv[i], orig[i])]
        if bad:
            x = orig[bad].astype(np.float64)
            y = recv[bad].astype(np.float64)
            per_mse = np.mean((x - y) ** 2, axis=(1, 2))
            seq_psnr = psnr_from_mse(float(per_mse.sum() / len(orig)))
            seq_ssim = float((_ssim_stats(x, y, (1, 2)).sum() + len(orig) - len(bad)) / len(orig))
        else:
            seq_psnr, seq_ssim = PSNR_CAP, 1.0
        delivered = sum(s for s, ok in zip(self.sizes, got) if ok)
        received_bits = self.original_bits * delivered // sum(self.sizes)
        report = QualityReport(seq_psnr, seq_ssim, len(orig), intact, corrupted, lost,
                               self.original_bits, int(received_bits))
        return received, report


def transfer_video(sim: Simulator, video: FrameSequence, src_host: str, dst_host: str,
                   original_bits: int = ORIGINAL_BITS, drain: float = 2.0):
    """Stream ``video`` now, run the simulator until it has drained, and score it."""
    tx = VideoTransfer(sim, video, src_host, dst_host, original_bits=original_bits)
    sim.run(tx.end_time + drain)
    return tx.finish()


def write_pgm(path, frame) -> None:
    a = np.asarray(frame)
    if a.ndim != 2:
        raise ShapeError("a PGM holds one 2-D frame")
    a = np.clip(a, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii"))
        fh.write(a.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5" or int(fields[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(fields[1]), int(fields[2])
    pixels = data[pos + 1: pos + 1 + w * h]
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)
