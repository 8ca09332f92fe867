"""Deterministic discrete-event emulation of a UE -> core -> app-server path.

The emulated testbed has three capture taps (UE, CORE, APP). Uplink traffic
crosses an access link with a FIFO rate limiter (the bandwidth cap), then a
core link carrying the range-dependent added delay; downlink traffic takes
the reverse path without a rate cap (ACKs and small commands only). Every
packet is stamped at each tap with that node's local clock: true time plus
the node's offset plus piecewise-constant resync noise.

Identical :class:`EmulationRun` inputs produce bit-identical outputs.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .model import (
    ClockModel,
    CaptureRecord,
    Direction,
    Marker,
    NODES,
    NtpSample,
    ProcessingModel,
    Proto,
    Scenario,
    Tap,
    VideoConfig,
)

# Well-known flow ids used by the built-in generators.
CONTROL_FLOW = 0
VIDEO_FLOW = 1
BULK_FLOW = 2

DEFAULT_MSS = 1400
#: Payload carried by a frame-boundary delimiter segment.
BOUNDARY_SEGMENT_BYTES = 64
#: Payload of a control (ping) packet; control packets are treated as
#: negligible on the wire and bypass the rate limiter.
CTRL_PAYLOAD_BYTES = 64

#: Receiver ACK policy: acknowledge every second segment, always acknowledge
#: a frame's final segment, flush leftovers after a short delayed-ACK timer.
ACK_EVERY_SEGMENTS = 2
DELAYED_ACK_MS = 5.0

#: Retransmission (only when Scenario.retransmit): resend after one
#: measured-SRTT timeout, doubling per attempt, bounded retries.
INITIAL_TIMEOUT_MS = 1000.0
SRTT_GAIN = 0.125
MAX_RETRANSMITS = 5

#: Extra emulated time past the last scheduled emission for which clock
#: resync samples are generated; later events reuse the final sample.
CLOCK_TRACE_SLACK_S = 5.0


@dataclass(frozen=True)
class Workload:
    """Traffic mix for one run: control pings, a video stream, or a bulk
    saturation probe (video and bulk are mutually exclusive)."""

    ping_interval_ms: float = 100.0
    ping_count: int = 0
    video: VideoConfig | None = None
    video_duration_s: float = 0.0
    bulk_duration_s: float = 0.0
    bulk_offered_mbps: float | None = None  # None -> 2x the scenario cap

    def __post_init__(self):
        if self.ping_count < 0:
            raise ValueError("ping_count must be >= 0")
        if self.ping_count > 0 and self.ping_interval_ms <= 0:
            raise ValueError("ping_interval_ms must be > 0")
        has_video = self.video is not None and self.video_duration_s > 0
        has_bulk = self.bulk_duration_s > 0
        if self.video is not None and self.video_duration_s <= 0:
            raise ValueError("video_duration_s must be > 0 when video is configured")
        if has_video and has_bulk:
            raise ValueError("video and bulk probe are mutually exclusive")
        if not (self.ping_count > 0 or has_video or has_bulk):
            raise ValueError("workload enables no traffic generator")

    def horizon_s(self) -> float:
        """Last scheduled emission time implied by the generators."""
        t = 0.0
        if self.ping_count > 0:
            t = max(t, (self.ping_count - 1) * self.ping_interval_ms / 1000.0)
        if self.video is not None and self.video_duration_s > 0:
            t = max(t, self.video_duration_s)
        if self.bulk_duration_s > 0:
            t = max(t, self.bulk_duration_s)
        return t


@dataclass(frozen=True)
class EmulationRun:
    """Complete, reproducible description of one emulation."""

    scenario: Scenario
    workload: Workload
    clocks: ClockModel = ClockModel()
    processing: ProcessingModel = ProcessingModel()
    seed: int = 0
    mss: int = DEFAULT_MSS

    def __post_init__(self):
        if self.mss <= 0:
            raise ValueError("mss must be > 0")


@dataclass(frozen=True)
class SegmentPlan:
    """One stream segment scheduled for emission at the UE."""

    t_us: int
    seq: int
    payload_len: int
    marker: Marker
    frame_idx: int | None
    end_of_frame: bool


def gen_control_pings(interval_ms: float, count: int) -> list[int]:
    """Emission schedule (true microseconds) for ``count`` ping requests."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if interval_ms <= 0:
        raise ValueError("interval_ms must be > 0")
    return [round(k * interval_ms * 1000.0) for k in range(count)]


def _draw_frame_bytes(cfg: VideoConfig, rng: random.Random) -> int:
    if cfg.frame_size_cv == 0:
        return int(round(cfg.mean_frame_bytes))
    # Lognormal with the configured mean and coefficient of variation.
    sigma = math.sqrt(math.log(1.0 + cfg.frame_size_cv ** 2))
    mu = math.log(cfg.mean_frame_bytes) - sigma * sigma / 2.0
    return max(1, int(round(rng.lognormvariate(mu, sigma))))


def gen_video_stream(cfg: VideoConfig, duration_s: float, mss: int = DEFAULT_MSS,
                     rng: random.Random | None = None) -> list[SegmentPlan]:
    """Segment schedule for a boundary-delimited video stream.

    Each frame is one FRAME_BOUNDARY delimiter segment followed by
    ceil(bytes/mss) data segments, all sharing the frame's capture instant;
    a final delimiter at ``duration_s`` terminates the last frame.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be > 0")
    if mss <= 0:
        raise ValueError("mss must be > 0")
    rng = rng if rng is not None else random.Random(0)
    plans: list[SegmentPlan] = []
    n_frames = int(math.floor(duration_s * cfg.fps + 1e-9))
    seq = 0
    for k in range(n_frames):
        t = round(k / cfg.fps * 1e6)
        plans.append(SegmentPlan(t, seq, BOUNDARY_SEGMENT_BYTES, Marker.FRAME_BOUNDARY, k, False))
        seq += BOUNDARY_SEGMENT_BYTES
        size = _draw_frame_bytes(cfg, rng)
        remaining = size
        n_seg = math.ceil(size / mss)
        for i in range(n_seg):
            ln = min(mss, remaining)
            plans.append(SegmentPlan(t, seq, ln, Marker.NONE, k, i == n_seg - 1))
            seq += ln
            remaining -= ln
    plans.append(SegmentPlan(round(duration_s * 1e6), seq, BOUNDARY_SEGMENT_BYTES,
                             Marker.FRAME_BOUNDARY, None, False))
    return plans


def gen_bulk_probe(duration_s: float, mss: int = DEFAULT_MSS,
                   offered_mbps: float = 100.0) -> list[SegmentPlan]:
    """Back-to-back MSS segments offered at a constant rate for ``duration_s``."""
    if duration_s <= 0:
        raise ValueError("duration_s must be > 0")
    if offered_mbps <= 0 or math.isinf(offered_mbps):
        raise ValueError("offered_mbps must be finite and > 0")
    plans: list[SegmentPlan] = []
    step_us = mss * 8.0 / offered_mbps  # Mbit/s == bit/us
    t = 0.0
    seq = 0
    limit = duration_s * 1e6
    while t < limit:
        plans.append(SegmentPlan(round(t), seq, mss, Marker.NONE, None, False))
        seq += mss
        t += step_us
    return plans


def _ntp_trace(clocks: ClockModel, duration_s: float, rng: random.Random) -> list[NtpSample]:
    samples = []
    n = int(math.floor(duration_s / clocks.resync_interval_s + 1e-9)) + 1
    offsets = clocks.offsets_ms()
    sigmas = clocks.sigmas_ms()
    for k in range(n):
        t = k * clocks.resync_interval_s
        for node, theta, sigma in zip(NODES, offsets, sigmas):
            noise = rng.gauss(0.0, sigma) if sigma > 0 else 0.0
            samples.append(NtpSample(t, node, theta + noise))
    return samples


def sample_ntp_trace(clocks: ClockModel, duration_s: float,
                     rng: random.Random | None = None) -> list[NtpSample]:
    """Per-node offset samples, one per resync interval (incl. t=0).

    The most recent sample is also what the emulator applies as the node's
    clock error between resyncs, so the trace is exactly the error a capture
    stamp carries at that time.
    """
    if duration_s < clocks.resync_interval_s:
        raise ValueError("duration_s must be >= resync_interval_s")
    return _ntp_trace(clocks, duration_s, rng if rng is not None else random.Random(0))


@dataclass
class TruthPacket:
    """True (noise-free) per-tap times of one packet; None where never seen."""

    pid: int
    flow: int
    dir: Direction
    proto: Proto
    seq: int
    payload_len: int
    t_ue_us: int | None = None
    t_core_us: int | None = None
    t_app_us: int | None = None
    delivered: bool = False

    def owd_ms(self) -> float | None:
        if self.t_ue_us is None or self.t_app_us is None:
            return None
        delta = self.t_app_us - self.t_ue_us
        return (delta if self.dir is Direction.UPLINK else -delta) / 1000.0


@dataclass
class TruthFrame:
    """True timing of one video frame's data segments and its command reply."""

    frame_idx: int
    byte_len: int
    t_first_emit_us: int | None = None
    t_last_emit_us: int | None = None
    t_first_app_us: int | None = None
    t_last_app_us: int | None = None
    t_cmd_emit_us: int | None = None
    t_cmd_ue_us: int | None = None
    delivered: bool = False

    def owd_first_last_ms(self) -> float | None:
        if self.t_first_emit_us is None or self.t_last_app_us is None:
            return None
        return (self.t_last_app_us - self.t_first_emit_us) / 1000.0

    def owd_first_first_ms(self) -> float | None:
        if self.t_first_emit_us is None or self.t_first_app_us is None:
            return None
        return (self.t_first_app_us - self.t_first_emit_us) / 1000.0


@dataclass
class TruthLog:
    """Oracle-only ground truth; the analyzer never reads this."""

    packets: list[TruthPacket] = field(default_factory=list)
    frames: list[TruthFrame] = field(default_factory=list)

    def by_pid(self) -> dict[int, TruthPacket]:
        return {p.pid: p for p in self.packets}


def write_truth_file(path: str | Path, truth: TruthLog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in truth.packets:
            fh.write(json.dumps({
                "kind": "packet", "pid": p.pid, "flow": p.flow, "dir": p.dir.value,
                "proto": p.proto.value, "seq": p.seq, "len": p.payload_len,
                "t_ue_us": p.t_ue_us, "t_core_us": p.t_core_us, "t_app_us": p.t_app_us,
                "delivered": p.delivered,
            }, separators=(",", ":")))
            fh.write("\n")
        for f in truth.frames:
            fh.write(json.dumps({
                "kind": "frame", "frame_idx": f.frame_idx, "byte_len": f.byte_len,
                "t_first_emit_us": f.t_first_emit_us, "t_last_emit_us": f.t_last_emit_us,
                "t_first_app_us": f.t_first_app_us, "t_last_app_us": f.t_last_app_us,
                "t_cmd_emit_us": f.t_cmd_emit_us, "t_cmd_ue_us": f.t_cmd_ue_us,
                "delivered": f.delivered,
                "owd_first_last_ms": f.owd_first_last_ms(),
                "owd_first_first_ms": f.owd_first_first_ms(),
            }, separators=(",", ":")))
            fh.write("\n")


def read_truth_file(path: str | Path) -> TruthLog:
    truth = TruthLog()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            if d["kind"] == "packet":
                truth.packets.append(TruthPacket(
                    pid=d["pid"], flow=d["flow"], dir=Direction(d["dir"]),
                    proto=Proto(d["proto"]), seq=d["seq"], payload_len=d["len"],
                    t_ue_us=d["t_ue_us"], t_core_us=d["t_core_us"], t_app_us=d["t_app_us"],
                    delivered=d["delivered"]))
            else:
                truth.frames.append(TruthFrame(
                    frame_idx=d["frame_idx"], byte_len=d["byte_len"],
                    t_first_emit_us=d["t_first_emit_us"], t_last_emit_us=d["t_last_emit_us"],
                    t_first_app_us=d["t_first_app_us"], t_last_app_us=d["t_last_app_us"],
                    t_cmd_emit_us=d["t_cmd_emit_us"], t_cmd_ue_us=d["t_cmd_ue_us"],
                    delivered=d["delivered"]))
    return truth


@dataclass
class RunResult:
    """Captures at the three taps plus oracle data."""

    records: dict[Tap, list[CaptureRecord]]
    truth: TruthLog
    ntp: list[NtpSample]


@dataclass(frozen=True)
class _Pkt:
    pid: int
    flow: int
    dir: Direction
    proto: Proto
    seq: int
    ack: int
    payload_len: int
    marker: Marker
    frame_idx: int | None = None
    end_of_frame: bool = False
    retransmission: bool = False


class _ReceiveBuffer:
    """Tracks contiguously received bytes per flow (cumulative-ACK view)."""

    def __init__(self):
        self._ranges: list[list[int]] = []  # disjoint, sorted [start, end)

    def add(self, start: int, end: int) -> None:
        ranges = self._ranges
        new = [start, end]
        out = []
        placed = False
        for r in ranges:
            if r[1] < new[0]:
                out.append(r)
            elif new[1] < r[0]:
                if not placed:
                    out.append(new)
                    placed = True
                out.append(r)
            else:
                new = [min(r[0], new[0]), max(r[1], new[1])]
        if not placed:
            out.append(new)
        self._ranges = out

    def cumulative(self) -> int:
        if self._ranges and self._ranges[0][0] == 0:
            return self._ranges[0][1]
        return 0

    def covers(self, start: int, end: int) -> bool:
        return any(lo <= start and end <= hi for lo, hi in self._ranges)


class _Simulation:
    def __init__(self, run: EmulationRun):
        self.run = run
        self.scenario = run.scenario
        master = random.Random(run.seed)
        # Independent sub-streams so that e.g. frame sizes do not change when
        # only the scenario's delays change.
        self.rng_sizes = random.Random(master.getrandbits(64))
        self.rng_jitter_up = random.Random(master.getrandbits(64))
        self.rng_jitter_down = random.Random(master.getrandbits(64))
        self.rng_loss_up = random.Random(master.getrandbits(64))
        self.rng_loss_down = random.Random(master.getrandbits(64))
        self.rng_clock = random.Random(master.getrandbits(64))

        self.records: dict[Tap, list[CaptureRecord]] = {t: [] for t in NODES}
        self.truth = TruthLog()
        self._truth_by_pid: dict[int, TruthPacket] = {}
        self._truth_frames: dict[int, TruthFrame] = {}

        # At least one full resync interval so the trace always holds two or
        # more samples per node, enough for offset estimation.
        horizon_s = max(run.workload.horizon_s() + CLOCK_TRACE_SLACK_S,
                        run.clocks.resync_interval_s)
        self.ntp = _ntp_trace(run.clocks, horizon_s, self.rng_clock)
        self._resync_us = run.clocks.resync_interval_s * 1e6
        self._clock_err_ms: dict[Tap, list[float]] = {n: [] for n in NODES}
        for s in self.ntp:
            self._clock_err_ms[s.node].append(s.offset_ms)

        # Event queue: (true time us, insertion counter, callback).
        self._q: list[tuple[float, int, Callable[[float], None]]] = []
        self._counter = 0
        self._next_pid = 0

        # Link state.
        self._uplink_free_us = 0.0
        self._fifo_last: dict[tuple[str, int], float] = {}

        # Receiver / sender / processing state.
        self._rx: dict[int, _ReceiveBuffer] = {}
        self._ack_pending: dict[int, int] = {}
        self._ack_deadline: dict[int, float | None] = {}
        self._frames_awaiting: dict[int, list[tuple[int, int]]] = {}
        self._frames_enqueued: set[tuple[int, int]] = set()
        self._proc_free_us = 0.0
        self._dl_seq: dict[int, int] = {}
        self._sender_cum_ack: dict[int, int] = {}
        self._outstanding: dict[int, dict[int, tuple[float, bool]]] = {}
        self._srtt_ms: dict[int, float | None] = {}

        # Frame bookkeeping for the truth log: data-segment pid -> frame,
        # original (non-retransmitted) pids, and per-frame byte extents.
        self._pid_frame: dict[int, int] = {}
        self._original_pids: set[int] = set()
        self._frame_extent: dict[int, tuple[int, int]] = {}

        base = self.scenario
        self._base_up_us = base.base_owd_up * 1000.0
        self._base_down_us = base.base_owd_down * 1000.0
        self._added_us = base.added_owd * 1000.0
        self._cap = base.bandwidth_cap  # Mbit/s == bit/us

    # -- plumbing ---------------------------------------------------------

    def _schedule(self, t_us: float, fn: Callable[[float], None]) -> None:
        heapq.heappush(self._q, (t_us, self._counter, fn))
        self._counter += 1

    def _new_pid(self) -> int:
        pid = self._next_pid
        self._next_pid += 1
        return pid

    def _clock_err_us(self, node: Tap, t_us: float) -> float:
        errs = self._clock_err_ms[node]
        k = min(int(t_us // self._resync_us), len(errs) - 1) if errs else 0
        return errs[k] * 1000.0 if errs else 0.0

    def _stamp(self, node: Tap, t_us: float, pkt: _Pkt) -> None:
        local = round(t_us + self._clock_err_us(node, t_us))
        self.records[node].append(CaptureRecord(
            tap=node, t_us=local, flow=pkt.flow, dir=pkt.dir, proto=pkt.proto,
            seq=pkt.seq, ack=pkt.ack, payload_len=pkt.payload_len,
            marker=pkt.marker, pid=pkt.pid))
        tp = self._truth_by_pid[pkt.pid]
        true_us = round(t_us)
        if node is Tap.UE:
            tp.t_ue_us = true_us
        elif node is Tap.CORE:
            tp.t_core_us = true_us
        else:
            tp.t_app_us = true_us

    def _track(self, pkt: _Pkt) -> TruthPacket:
        tp = TruthPacket(pid=pkt.pid, flow=pkt.flow, dir=pkt.dir, proto=pkt.proto,
                         seq=pkt.seq, payload_len=pkt.payload_len)
        self._truth_by_pid[pkt.pid] = tp
        self.truth.packets.append(tp)
        return tp

    def _fifo(self, link: str, flow: int, t_us: float) -> float:
        key = (link, flow)
        t = max(t_us, self._fifo_last.get(key, 0.0))
        self._fifo_last[key] = t
        return t

    def _lost(self, rng: random.Random) -> bool:
        p = self.scenario.loss_prob
        if p <= 0.0:
            return False
        if p >= 1.0:
            return True
        return rng.random() < p

    def _jitter(self, rng: random.Random) -> float:
        std = self.scenario.jitter_std
        return rng.gauss(0.0, std) * 1000.0 if std > 0 else 0.0

    # -- uplink path ------------------------------------------------------

    def _emit_uplink(self, t_us: float, pkt: _Pkt) -> None:
        self._track(pkt)
        self._stamp(Tap.UE, t_us, pkt)
        if pkt.proto is Proto.STREAM:
            start = max(t_us, self._uplink_free_us)
            tx = 0.0 if math.isinf(self._cap) else pkt.payload_len * 8.0 / self._cap
            depart = start + tx
            self._uplink_free_us = depart
        else:
            depart = t_us
        if self.scenario.retransmit and pkt.proto is Proto.STREAM and pkt.payload_len > 0:
            self._arm_retransmit(t_us, pkt)
        if self._lost(self.rng_loss_up):
            return
        t_core = self._fifo("up_core", pkt.flow, depart + self._base_up_us + self._jitter(self.rng_jitter_up))
        self._schedule(t_core, lambda t, p=pkt: self._arrive_core_up(t, p))

    def _arrive_core_up(self, t_us: float, pkt: _Pkt) -> None:
        self._stamp(Tap.CORE, t_us, pkt)
        t_app = self._fifo("up_app", pkt.flow, t_us + self._added_us)
        self._schedule(t_app, lambda t, p=pkt: self._arrive_app(t, p))

    def _arrive_app(self, t_us: float, pkt: _Pkt) -> None:
        self._stamp(Tap.APP, t_us, pkt)
        self._truth_by_pid[pkt.pid].delivered = True
        if pkt.proto is Proto.CTRL:
            reply = _Pkt(pid=self._new_pid(), flow=pkt.flow, dir=Direction.DOWNLINK,
                         proto=Proto.CTRL, seq=0, ack=pkt.pid,
                         payload_len=pkt.payload_len, marker=Marker.NONE)
            self._emit_downlink(t_us, reply)
            return
        if pkt.payload_len > 0:
            self._receive_segment(t_us, pkt)

    # -- receiver ---------------------------------------------------------

    def _receive_segment(self, t_us: float, pkt: _Pkt) -> None:
        flow = pkt.flow
        buf = self._rx.setdefault(flow, _ReceiveBuffer())
        buf.add(pkt.seq, pkt.seq + pkt.payload_len)
        if (pkt.end_of_frame and pkt.frame_idx is not None
                and (flow, pkt.frame_idx) not in self._frames_enqueued):
            # retransmissions can deliver the closing segment twice; the
            # frame is still processed once
            self._frames_enqueued.add((flow, pkt.frame_idx))
            heapq.heappush(self._frames_awaiting.setdefault(flow, []),
                           (pkt.seq + pkt.payload_len, pkt.frame_idx))
        cum = buf.cumulative()
        waiting = self._frames_awaiting.get(flow)
        while waiting and waiting[0][0] <= cum:
            _, frame_idx = heapq.heappop(waiting)
            self._start_processing(t_us, flow, frame_idx)
        self._ack_pending[flow] = self._ack_pending.get(flow, 0) + 1
        if self._ack_pending[flow] >= ACK_EVERY_SEGMENTS or pkt.end_of_frame:
            self._flush_ack(t_us, flow)
        elif self._ack_deadline.get(flow) is None:
            deadline = t_us + DELAYED_ACK_MS * 1000.0
            self._ack_deadline[flow] = deadline
            self._schedule(deadline, lambda t, f=flow: self._ack_timer(t, f))

    def _ack_timer(self, t_us: float, flow: int) -> None:
        deadline = self._ack_deadline.get(flow)
        if deadline is not None and t_us >= deadline and self._ack_pending.get(flow, 0) > 0:
            self._flush_ack(t_us, flow)

    def _flush_ack(self, t_us: float, flow: int) -> None:
        self._ack_pending[flow] = 0
        self._ack_deadline[flow] = None
        ack = _Pkt(pid=self._new_pid(), flow=flow, dir=Direction.DOWNLINK,
                   proto=Proto.STREAM, seq=0, ack=self._rx[flow].cumulative(),
                   payload_len=0, marker=Marker.NONE)
        self._emit_downlink(t_us, ack)

    def _start_processing(self, t_us: float, flow: int, frame_idx: int) -> None:
        start = max(t_us, self._proc_free_us)
        end = start + self.run.processing.total_ms * 1000.0
        self._proc_free_us = end
        self._schedule(end, lambda t, f=flow, k=frame_idx: self._emit_command(t, f, k))

    def _emit_command(self, t_us: float, flow: int, frame_idx: int) -> None:
        seq = self._dl_seq.get(flow, 0)
        size = self.run.processing.response_bytes
        self._dl_seq[flow] = seq + size
        cmd = _Pkt(pid=self._new_pid(), flow=flow, dir=Direction.DOWNLINK,
                   proto=Proto.STREAM, seq=seq, ack=0, payload_len=size,
                   marker=Marker.NONE, frame_idx=frame_idx)
        tf = self._truth_frames.get(frame_idx)
        if tf is not None:
            tf.t_cmd_emit_us = round(t_us)
        self._emit_downlink(t_us, cmd)

    # -- downlink path ----------------------------------------------------

    def _emit_downlink(self, t_us: float, pkt: _Pkt) -> None:
        self._track(pkt)
        self._stamp(Tap.APP, t_us, pkt)
        t_core = self._fifo("down_core", pkt.flow, t_us + self._added_us)
        self._schedule(t_core, lambda t, p=pkt: self._arrive_core_down(t, p))

    def _arrive_core_down(self, t_us: float, pkt: _Pkt) -> None:
        self._stamp(Tap.CORE, t_us, pkt)
        if self._lost(self.rng_loss_down):
            return
        t_ue = self._fifo("down_ue", pkt.flow, t_us + self._base_down_us + self._jitter(self.rng_jitter_down))
        self._schedule(t_ue, lambda t, p=pkt: self._arrive_ue(t, p))

    def _arrive_ue(self, t_us: float, pkt: _Pkt) -> None:
        self._stamp(Tap.UE, t_us, pkt)
        self._truth_by_pid[pkt.pid].delivered = True
        if pkt.proto is Proto.STREAM and pkt.payload_len == 0 and pkt.ack > 0:
            self._sender_sees_ack(t_us, pkt.flow, pkt.ack)
        if pkt.proto is Proto.STREAM and pkt.payload_len > 0 and pkt.frame_idx is not None:
            tf = self._truth_frames.get(pkt.frame_idx)
            if tf is not None:
                tf.t_cmd_ue_us = round(t_us)

    # -- sender retransmission (Scenario.retransmit only) ------------------

    def _arm_retransmit(self, t_us: float, pkt: _Pkt) -> None:
        flow = pkt.flow
        end = pkt.seq + pkt.payload_len
        book = self._outstanding.setdefault(flow, {})
        book[end] = (t_us, pkt.retransmission or end in book)
        timeout = self._srtt_ms.get(flow) or INITIAL_TIMEOUT_MS
        self._schedule(t_us + timeout * 1000.0,
                       lambda t, p=pkt, a=1: self._retransmit_check(t, p, a))

    def _retransmit_check(self, t_us: float, pkt: _Pkt, attempt: int) -> None:
        flow = pkt.flow
        end = pkt.seq + pkt.payload_len
        if self._sender_cum_ack.get(flow, 0) >= end or attempt > MAX_RETRANSMITS:
            return
        clone = _Pkt(pid=self._new_pid(), flow=flow, dir=pkt.dir, proto=pkt.proto,
                     seq=pkt.seq, ack=0, payload_len=pkt.payload_len, marker=pkt.marker,
                     frame_idx=pkt.frame_idx, end_of_frame=pkt.end_of_frame,
                     retransmission=True)
        if pkt.pid in self._pid_frame:
            self._pid_frame[clone.pid] = self._pid_frame[pkt.pid]
        self._track(clone)
        self._stamp(Tap.UE, t_us, clone)
        start = max(t_us, self._uplink_free_us)
        tx = 0.0 if math.isinf(self._cap) else clone.payload_len * 8.0 / self._cap
        self._uplink_free_us = start + tx
        book = self._outstanding.setdefault(flow, {})
        book[end] = (t_us, True)
        if not self._lost(self.rng_loss_up):
            t_core = self._fifo("up_core", flow, start + tx + self._base_up_us + self._jitter(self.rng_jitter_up))
            self._schedule(t_core, lambda t, p=clone: self._arrive_core_up(t, p))
        timeout = (self._srtt_ms.get(flow) or INITIAL_TIMEOUT_MS) * (2 ** attempt)
        self._schedule(t_us + timeout * 1000.0,
                       lambda t, p=pkt, a=attempt + 1: self._retransmit_check(t, p, a))

    def _sender_sees_ack(self, t_us: float, flow: int, ack: int) -> None:
        self._sender_cum_ack[flow] = max(self._sender_cum_ack.get(flow, 0), ack)
        book = self._outstanding.get(flow)
        if not book:
            return
        for end in sorted(k for k in book if k <= ack):
            emitted_at, retransmitted = book.pop(end)
            if retransmitted:
                continue  # Karn: no timing from retransmitted ranges
            sample_ms = (t_us - emitted_at) / 1000.0
            prev = self._srtt_ms.get(flow)
            self._srtt_ms[flow] = sample_ms if prev is None else (1 - SRTT_GAIN) * prev + SRTT_GAIN * sample_ms

    # -- assembly ---------------------------------------------------------

    def _plan_uplink_stream(self, flow: int, plans: Iterable[SegmentPlan]) -> None:
        for plan in plans:
            pkt = _Pkt(pid=self._new_pid(), flow=flow, dir=Direction.UPLINK,
                       proto=Proto.STREAM, seq=plan.seq, ack=0,
                       payload_len=plan.payload_len, marker=plan.marker,
                       frame_idx=plan.frame_idx, end_of_frame=plan.end_of_frame)
            self._schedule(plan.t_us, lambda t, p=pkt: self._emit_uplink(t, p))
            if plan.frame_idx is not None and plan.marker is Marker.NONE:
                tf = self._truth_frames.get(plan.frame_idx)
                if tf is None:
                    tf = TruthFrame(frame_idx=plan.frame_idx, byte_len=0)
                    self._truth_frames[plan.frame_idx] = tf
                    self.truth.frames.append(tf)
                tf.byte_len += plan.payload_len
                self._pid_frame[pkt.pid] = plan.frame_idx
                self._original_pids.add(pkt.pid)
                start, end = self._frame_extent.get(plan.frame_idx, (plan.seq, plan.seq))
                self._frame_extent[plan.frame_idx] = (min(start, plan.seq),
                                                      max(end, plan.seq + plan.payload_len))

    def run_events(self) -> RunResult:
        w = self.run.workload
        if w.ping_count > 0:
            for t in gen_control_pings(w.ping_interval_ms, w.ping_count):
                pkt = _Pkt(pid=self._new_pid(), flow=CONTROL_FLOW, dir=Direction.UPLINK,
                           proto=Proto.CTRL, seq=0, ack=0,
                           payload_len=CTRL_PAYLOAD_BYTES, marker=Marker.NONE)
                self._schedule(t, lambda tt, p=pkt: self._emit_uplink(tt, p))
        if w.video is not None and w.video_duration_s > 0:
            plans = gen_video_stream(w.video, w.video_duration_s, self.run.mss, self.rng_sizes)
            self._plan_uplink_stream(VIDEO_FLOW, plans)
        if w.bulk_duration_s > 0:
            offered = w.bulk_offered_mbps
            if offered is None:
                cap = self.scenario.bandwidth_cap
                offered = 2.0 * cap if not math.isinf(cap) else 100.0
            plans = gen_bulk_probe(w.bulk_duration_s, self.run.mss, offered)
            self._plan_uplink_stream(BULK_FLOW, plans)

        while self._q:
            t, _, fn = heapq.heappop(self._q)
            fn(t)

        self._fill_frame_truth()
        return RunResult(records=self.records, truth=self.truth, ntp=self.ntp)

    def _fill_frame_truth(self) -> None:
        by_frame: dict[int, list[TruthPacket]] = {}
        for pid, frame_idx in self._pid_frame.items():
            tp = self._truth_by_pid.get(pid)
            if tp is not None:
                by_frame.setdefault(frame_idx, []).append(tp)
        for frame_idx, tf in self._truth_frames.items():
            pkts = by_frame.get(frame_idx, [])
            if not pkts:
                continue
            emits_t = [p.t_ue_us for p in pkts if p.pid in self._original_pids and p.t_ue_us is not None]
            if emits_t:
                tf.t_first_emit_us = min(emits_t)
                tf.t_last_emit_us = max(emits_t)
            # Delivered means the frame's full byte extent arrived at the app,
            # counting retransmitted copies.
            cover = _ReceiveBuffer()
            arrivals = []
            for p in pkts:
                if p.t_app_us is not None:
                    cover.add(p.seq, p.seq + p.payload_len)
                    arrivals.append(p.t_app_us)
            start, end = self._frame_extent[frame_idx]
            if arrivals and cover.covers(start, end):
                tf.t_first_app_us = min(arrivals)
                tf.t_last_app_us = max(arrivals)
                tf.delivered = True


def run(run_cfg: EmulationRun) -> RunResult:
    """Execute one emulation; see module docstring for the path model."""
    sim = _Simulation(run_cfg)
    return sim.run_events()
