"""Capture analysis: flow reassembly and raw latency-sample extraction.

Everything here is a pure function of capture records (plus the clock-offset
trace); ground-truth files are never consulted. Samples are milliseconds.
"""

from __future__ import annotations

import statistics
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .model import (
    CaptureRecord,
    Direction,
    FrameObservation,
    Marker,
    NODES,
    NtpSample,
    Proto,
    Tap,
)


class MatchMode(Enum):
    BY_PID = "BY_PID"
    BY_SEQ = "BY_SEQ"


class FrameEndpoints(Enum):
    """Which segment timestamps delimit a frame's one-way delay."""

    FIRST_TO_LAST = "FIRST_TO_LAST"
    FIRST_TO_FIRST = "FIRST_TO_FIRST"


class MalformedCaptureError(ValueError):
    """Capture contains conflicting stream segments."""


class InsufficientDataError(ValueError):
    """Not enough samples to estimate the requested quantity."""


@dataclass(frozen=True)
class AnalyzerConfig:
    alpha: float = 0.125
    match_mode: MatchMode = MatchMode.BY_PID
    owd_frame_endpoints: FrameEndpoints = FrameEndpoints.FIRST_TO_LAST

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")


@dataclass(frozen=True)
class SampleSet:
    """Latency samples (ms) plus the count of observations excluded on the way."""

    values_ms: tuple[float, ...]
    excluded: int = 0

    def __len__(self) -> int:
        return len(self.values_ms)


@dataclass(frozen=True)
class Segment:
    """One unique byte range of a reassembled stream; timing comes from the
    first capture record observed for that range."""

    seq: int
    payload_len: int
    record: CaptureRecord
    duplicate_pids: tuple[int, ...] = ()

    @property
    def end(self) -> int:
        return self.seq + self.payload_len


@dataclass
class StreamView:
    """Seq-ordered, de-duplicated view of one flow at one tap."""

    flow: int
    segments: list[Segment]
    gaps: list[tuple[int, int]]
    total_bytes: int


@dataclass
class FrameExtent:
    """Data segments strictly between two consecutive boundary markers."""

    index: int
    start: int
    end: int
    segments: list[Segment]
    complete: bool        # a closing boundary was observed
    contiguous: bool      # no byte gaps inside the extent

    @property
    def byte_len(self) -> int:
        return sum(s.payload_len for s in self.segments)


def reassemble(records: Sequence[CaptureRecord], flow: int,
               direction: Direction = Direction.UPLINK) -> StreamView:
    """Sort one flow's stream segments by seq, collapsing duplicates and
    reporting gaps. Conflicting overlaps raise MalformedCaptureError."""
    data = [r for r in records
            if r.proto is Proto.STREAM and r.flow == flow and r.dir is direction and r.payload_len > 0]
    by_seq: dict[int, Segment] = {}
    for rec in data:
        seg = by_seq.get(rec.seq)
        if seg is None:
            by_seq[rec.seq] = Segment(rec.seq, rec.payload_len, rec)
        elif seg.payload_len != rec.payload_len:
            raise MalformedCaptureError(
                f"flow {flow}: segments at seq {rec.seq} disagree on length "
                f"({seg.payload_len} vs {rec.payload_len})")
        else:
            by_seq[rec.seq] = Segment(seg.seq, seg.payload_len, seg.record,
                                      seg.duplicate_pids + (rec.pid,))
    segments = [by_seq[s] for s in sorted(by_seq)]
    gaps: list[tuple[int, int]] = []
    for prev, cur in zip(segments, segments[1:]):
        if cur.seq < prev.end:
            raise MalformedCaptureError(
                f"flow {flow}: segment [{cur.seq},{cur.end}) overlaps [{prev.seq},{prev.end})")
        if cur.seq > prev.end:
            gaps.append((prev.end, cur.seq))
    total = sum(s.payload_len for s in segments)
    return StreamView(flow=flow, segments=segments, gaps=gaps, total_bytes=total)


def segment_frames(view: StreamView) -> list[FrameExtent]:
    """Split a stream view at its boundary markers.

    Frame k holds the segments strictly between markers k and k+1; a trailing
    unterminated group is reported as an incomplete frame. Zero markers yield
    no frames.
    """
    frames: list[FrameExtent] = []
    current: list[Segment] | None = None
    idx = 0
    for seg in view.segments:
        if seg.record.marker is Marker.FRAME_BOUNDARY:
            if current is not None:
                frames.append(_make_extent(idx, current, complete=True))
                idx += 1
            current = []
        elif current is not None:
            current.append(seg)
        # data before the first marker belongs to no frame
    if current:
        frames.append(_make_extent(idx, current, complete=False))
    return frames


def _make_extent(idx: int, segs: list[Segment], complete: bool) -> FrameExtent:
    if not segs:
        return FrameExtent(index=idx, start=0, end=0, segments=[], complete=complete, contiguous=True)
    contiguous = all(b.seq == a.end for a, b in zip(segs, segs[1:]))
    return FrameExtent(index=idx, start=segs[0].seq, end=segs[-1].end,
                       segments=segs, complete=complete, contiguous=contiguous)


def rtt_control(ue_records: Sequence[CaptureRecord]) -> SampleSet:
    """Ping round-trip times at the UE tap; replies carry the request pid in
    their ack field, and both stamps share the UE clock so offsets cancel."""
    requests = [r for r in ue_records if r.proto is Proto.CTRL and r.dir is Direction.UPLINK]
    replies: dict[int, CaptureRecord] = {}
    for r in ue_records:
        if r.proto is Proto.CTRL and r.dir is Direction.DOWNLINK and r.ack not in replies:
            replies[r.ack] = r
    samples = []
    excluded = 0
    for req in requests:
        rep = replies.get(req.pid)
        if rep is None:
            excluded += 1
            continue
        samples.append((rep.t_us - req.t_us) / 1000.0)
    return SampleSet(tuple(samples), excluded)


def _is_pure_ack(r: CaptureRecord, flow: int) -> bool:
    return (r.proto is Proto.STREAM and r.dir is Direction.DOWNLINK
            and r.flow == flow and r.payload_len == 0 and r.ack > 0)


def _covering_acks(ue_records: Sequence[CaptureRecord], flow: int) -> tuple[list[int], list[CaptureRecord]]:
    """Strictly increasing cumulative ack values with the earliest record
    announcing each; suitable for bisect lookups."""
    values: list[int] = []
    recs: list[CaptureRecord] = []
    best = 0
    for r in ue_records:
        if _is_pure_ack(r, flow) and r.ack > best:
            best = r.ack
            values.append(r.ack)
            recs.append(r)
    return values, recs


def rtt_tcp(ue_records: Sequence[CaptureRecord], flow: int) -> SampleSet:
    """Per-segment RTT at the UE tap: first cumulative ACK covering the
    segment minus the segment's emission stamp. Segments never covered are
    excluded, as are retransmitted byte ranges (Karn's rule)."""
    data = [r for r in ue_records
            if r.proto is Proto.STREAM and r.dir is Direction.UPLINK
            and r.flow == flow and r.payload_len > 0]
    seen: dict[tuple[int, int], int] = {}
    for r in data:
        key = (r.seq, r.payload_len)
        seen[key] = seen.get(key, 0) + 1
    ack_values, ack_recs = _covering_acks(ue_records, flow)
    samples = []
    excluded = 0
    for r in data:
        key = (r.seq, r.payload_len)
        if seen[key] > 1:
            excluded += 1
            continue
        i = bisect_left(ack_values, r.seq + r.payload_len)
        if i == len(ack_values):
            excluded += 1
            continue
        samples.append((ack_recs[i].t_us - r.t_us) / 1000.0)
    return SampleSet(tuple(samples), excluded)


def srtt(samples: Sequence[float], alpha: float = 0.125) -> list[float]:
    """Exponentially smoothed RTT series: s_0 = r_0, s_k = (1-a)s_{k-1} + a r_k."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    out: list[float] = []
    current: float | None = None
    for r in samples:
        current = r if current is None else (1.0 - alpha) * current + alpha * r
        out.append(current)
    return out


@dataclass(frozen=True)
class OffsetEstimate:
    mean_ms: float
    std_ms: float
    count: int


def estimate_offsets(trace: Sequence[NtpSample]) -> dict[Tap, OffsetEstimate]:
    """Batch per-node offset estimate (sample mean) and noise std from an
    NTP offset trace. Requires at least two samples per node."""
    by_node: dict[Tap, list[float]] = {n: [] for n in NODES}
    for s in trace:
        by_node[s.node].append(s.offset_ms)
    out: dict[Tap, OffsetEstimate] = {}
    for node in NODES:
        vals = by_node[node]
        if len(vals) < 2:
            raise InsufficientDataError(f"need >= 2 offset samples for {node.value}, got {len(vals)}")
        out[node] = OffsetEstimate(statistics.fmean(vals), statistics.stdev(vals), len(vals))
    return out


def _offset_us(offsets: Mapping[Tap, float] | None, node: Tap) -> float:
    if not offsets:
        return 0.0
    return offsets.get(node, 0.0) * 1000.0


def owd_packet(ue_records: Sequence[CaptureRecord], app_records: Sequence[CaptureRecord],
               offsets: Mapping[Tap, float] | None = None,
               match_mode: MatchMode = MatchMode.BY_PID,
               direction: Direction = Direction.UPLINK) -> SampleSet:
    """Clock-corrected one-way delay per payload packet seen at both taps.

    ``offsets`` maps node to its estimated clock offset in ms. BY_SEQ matching
    (the fallback for captures without shared packet ids) keys on
    (flow, seq, payload_len) and therefore only considers stream segments.
    """
    def pool(records: Sequence[CaptureRecord]) -> list[CaptureRecord]:
        out = []
        for r in records:
            if r.dir is not direction or r.payload_len <= 0:
                continue
            if match_mode is MatchMode.BY_SEQ and r.proto is not Proto.STREAM:
                continue
            out.append(r)
        return out

    ue_pool = pool(ue_records)
    app_pool = pool(app_records)
    origin_pool, far_pool = (ue_pool, app_pool) if direction is Direction.UPLINK else (app_pool, ue_pool)

    if match_mode is MatchMode.BY_PID:
        def key(r: CaptureRecord):
            return r.pid
    else:
        def key(r: CaptureRecord):
            return (r.flow, r.seq, r.payload_len)

    far_by_key: dict = {}
    for r in far_pool:
        far_by_key.setdefault(key(r), r)

    off_ue = _offset_us(offsets, Tap.UE)
    off_app = _offset_us(offsets, Tap.APP)
    samples = []
    excluded = 0
    seen_keys: set = set()
    for r in origin_pool:
        k = key(r)
        if k in seen_keys:
            continue
        seen_keys.add(k)
        far = far_by_key.get(k)
        if far is None:
            excluded += 1
            continue
        if direction is Direction.UPLINK:
            delta_us = (far.t_us - off_app) - (r.t_us - off_ue)
        else:
            delta_us = (far.t_us - off_ue) - (r.t_us - off_app)
        samples.append(delta_us / 1000.0)
    return SampleSet(tuple(samples), excluded)


def _positions_by_pid(records: Sequence[CaptureRecord]) -> dict[int, int]:
    return {r.pid: i for i, r in enumerate(records)}


class _AckIndex:
    """Capture-ordered pure ACKs of one flow, searchable by capture position."""

    def __init__(self, ue_records: Sequence[CaptureRecord], flow: int):
        self.positions: list[int] = []
        self.records: list[CaptureRecord] = []
        for i, r in enumerate(ue_records):
            if _is_pure_ack(r, flow):
                self.positions.append(i)
                self.records.append(r)

    def covering_after(self, last_pos: int, end: int) -> CaptureRecord | None:
        """First ACK after capture position ``last_pos`` whose cumulative ack
        reaches ``end``."""
        for i in range(bisect_left(self.positions, last_pos + 1), len(self.records)):
            if self.records[i].ack >= end:
                return self.records[i]
        return None


def frame_latency(ue_records: Sequence[CaptureRecord], flow: int) -> SampleSet:
    """Per-frame service latency at the UE tap: from a frame's first data
    segment to the first subsequent ACK covering its final byte."""
    view = reassemble(ue_records, flow, Direction.UPLINK)
    frames = segment_frames(view)
    pos = _positions_by_pid(ue_records)
    acks = _AckIndex(ue_records, flow)
    samples = []
    excluded = 0
    for fr in frames:
        if not fr.complete or not fr.segments or not fr.contiguous:
            excluded += 1
            continue
        last_pos = max(pos[s.record.pid] for s in fr.segments)
        covering = acks.covering_after(last_pos, fr.end)
        if covering is None:
            excluded += 1
            continue
        samples.append((covering.t_us - fr.segments[0].record.t_us) / 1000.0)
    return SampleSet(tuple(samples), excluded)


def frame_owd(ue_records: Sequence[CaptureRecord], app_records: Sequence[CaptureRecord],
              offsets: Mapping[Tap, float] | None = None,
              endpoints: FrameEndpoints = FrameEndpoints.FIRST_TO_LAST,
              flow: int | None = None) -> SampleSet:
    """Clock-corrected uplink one-way delay of whole frames.

    FIRST_TO_LAST (default) runs from the frame's first segment leaving the
    UE to its last segment reaching the app, so serialization time is part of
    the sample and larger frames read slower. Frames not fully delivered are
    excluded.
    """
    if flow is None:
        flows = video_flows(ue_records)
        if not flows:
            return SampleSet((), 0)
        flow = flows[0]
    ue_frames = segment_frames(reassemble(ue_records, flow, Direction.UPLINK))
    app_frames = segment_frames(reassemble(app_records, flow, Direction.UPLINK))
    app_by_start = {f.start: f for f in app_frames if f.segments}
    off_ue = _offset_us(offsets, Tap.UE)
    off_app = _offset_us(offsets, Tap.APP)
    samples = []
    excluded = 0
    for fr in ue_frames:
        if not fr.complete or not fr.segments or not fr.contiguous:
            excluded += 1
            continue
        af = app_by_start.get(fr.start)
        if af is None or not af.contiguous or af.end != fr.end:
            excluded += 1
            continue
        t_ue = fr.segments[0].record.t_us - off_ue
        if endpoints is FrameEndpoints.FIRST_TO_LAST:
            t_app = af.segments[-1].record.t_us - off_app
        else:
            t_app = af.segments[0].record.t_us - off_app
        samples.append((t_app - t_ue) / 1000.0)
    return SampleSet(tuple(samples), excluded)


def observe_frames(ue_records: Sequence[CaptureRecord], app_records: Sequence[CaptureRecord],
                   flow: int, offsets: Mapping[Tap, float] | None = None) -> list[FrameObservation]:
    """Join per-frame timing across taps into FrameObservation values."""
    ue_frames = segment_frames(reassemble(ue_records, flow, Direction.UPLINK))
    app_frames = segment_frames(reassemble(app_records, flow, Direction.UPLINK))
    app_by_start = {f.start: f for f in app_frames if f.segments}
    pos = _positions_by_pid(ue_records)
    acks = _AckIndex(ue_records, flow)
    off_ue = _offset_us(offsets, Tap.UE)
    off_app = _offset_us(offsets, Tap.APP)
    out: list[FrameObservation] = []
    for fr in ue_frames:
        if not fr.segments:
            continue
        t_first_ue = fr.segments[0].record.t_us - off_ue
        t_last_ue = fr.segments[-1].record.t_us - off_ue
        t_ack = None
        if fr.complete and fr.contiguous:
            last_pos = max(pos[s.record.pid] for s in fr.segments)
            covering = acks.covering_after(last_pos, fr.end)
            if covering is not None:
                t_ack = float(covering.t_us - off_ue)
        af = app_by_start.get(fr.start)
        delivered = af is not None and af.contiguous and af.end == fr.end
        out.append(FrameObservation(
            frame_idx=fr.index,
            byte_len=fr.byte_len,
            t_first_ue=t_first_ue,
            t_last_ue=t_last_ue,
            t_ack_ue=t_ack,
            t_first_app=(af.segments[0].record.t_us - off_app) if delivered else None,
            t_last_app=(af.segments[-1].record.t_us - off_app) if delivered else None,
            complete=bool(fr.complete and fr.contiguous and delivered and t_ack is not None),
        ))
    return out


def stream_flows(records: Sequence[CaptureRecord]) -> list[int]:
    """Flow ids carrying uplink stream payload, in first-seen order."""
    seen: list[int] = []
    for r in records:
        if (r.proto is Proto.STREAM and r.dir is Direction.UPLINK
                and r.payload_len > 0 and r.flow not in seen):
            seen.append(r.flow)
    return seen


def video_flows(records: Sequence[CaptureRecord]) -> list[int]:
    """Stream flows that contain frame-boundary markers."""
    seen: list[int] = []
    for r in records:
        if r.marker is Marker.FRAME_BOUNDARY and r.flow not in seen:
            seen.append(r.flow)
    return seen


def measured_goodput_mbps(app_records: Sequence[CaptureRecord], flow: int,
                          warmup_s: float = 0.5) -> float | None:
    """Delivered uplink payload rate at the APP tap after a warm-up window."""
    arrivals = [(r.t_us, r.payload_len) for r in app_records
                if r.proto is Proto.STREAM and r.dir is Direction.UPLINK
                and r.flow == flow and r.payload_len > 0]
    if len(arrivals) < 2:
        return None
    t0 = arrivals[0][0] + warmup_s * 1e6
    window = [(t, ln) for t, ln in arrivals if t >= t0]
    if len(window) < 2:
        return None
    span_us = window[-1][0] - window[0][0]
    if span_us <= 0:
        return None
    payload_bits = sum(ln for _, ln in window[1:]) * 8.0
    return payload_bits / span_us  # bit/us == Mbit/s


def offered_rate_mbps(ue_records: Sequence[CaptureRecord]) -> float | None:
    """Uplink stream payload rate offered at the UE tap (demand estimate)."""
    emissions = [(r.t_us, r.payload_len) for r in ue_records
                 if r.proto is Proto.STREAM and r.dir is Direction.UPLINK and r.payload_len > 0]
    if len(emissions) < 2:
        return None
    span_us = emissions[-1][0] - emissions[0][0]
    if span_us <= 0:
        return None
    return sum(ln for _, ln in emissions) * 8.0 / span_us


@dataclass
class AnalysisResult:
    """Raw sample sets extracted from one capture set."""

    ctrl_rtt: SampleSet
    stream_rtt: SampleSet
    frame_latency: SampleSet
    owd_packet_up: SampleSet
    owd_frame_up: SampleSet
    owd_command_down: SampleSet
    offsets: dict[Tap, OffsetEstimate] | None
    sent_uplink: int
    delivered_uplink: int
    goodput_mbps: float | None
    offered_mbps: float | None
    frame_observations: list[FrameObservation] = field(default_factory=list)


def analyze_captures(ue_records: Sequence[CaptureRecord],
                     core_records: Sequence[CaptureRecord],
                     app_records: Sequence[CaptureRecord],
                     ntp_trace: Sequence[NtpSample] | None = None,
                     config: AnalyzerConfig | None = None) -> AnalysisResult:
    """Extract every sample class the KPI engine consumes from one capture set."""
    cfg = config or AnalyzerConfig()
    offsets_est = None
    offsets_ms: dict[Tap, float] | None = None
    if ntp_trace:
        offsets_est = estimate_offsets(ntp_trace)
        offsets_ms = {node: est.mean_ms for node, est in offsets_est.items()}

    ctrl = rtt_control(ue_records)

    stream_samples: list[float] = []
    stream_excluded = 0
    for flow in stream_flows(ue_records):
        ss = rtt_tcp(ue_records, flow)
        stream_samples.extend(ss.values_ms)
        stream_excluded += ss.excluded
    stream = SampleSet(tuple(stream_samples), stream_excluded)

    vflows = video_flows(ue_records)
    if vflows:
        flat = frame_latency(ue_records, vflows[0])
        fowd = frame_owd(ue_records, app_records, offsets_ms, cfg.owd_frame_endpoints, vflows[0])
        observations = observe_frames(ue_records, app_records, vflows[0], offsets_ms)
    else:
        flat = SampleSet((), 0)
        fowd = SampleSet((), 0)
        observations = []

    powd = owd_packet(ue_records, app_records, offsets_ms, cfg.match_mode, Direction.UPLINK)
    # Downlink OWD restricted to stream packets so it reads the app's command
    # replies rather than ping echoes.
    ue_stream = [r for r in ue_records if r.proto is Proto.STREAM]
    app_stream = [r for r in app_records if r.proto is Proto.STREAM]
    cmd_owd = owd_packet(ue_stream, app_stream, offsets_ms, cfg.match_mode, Direction.DOWNLINK)

    sent = sum(1 for r in ue_records if r.dir is Direction.UPLINK and r.payload_len > 0)
    delivered_pids = {r.pid for r in app_records if r.dir is Direction.UPLINK}
    delivered = sum(1 for r in ue_records
                    if r.dir is Direction.UPLINK and r.payload_len > 0 and r.pid in delivered_pids)

    goodput = None
    bulk_candidates = [f for f in stream_flows(ue_records) if f not in vflows]
    if bulk_candidates:
        goodput = measured_goodput_mbps(app_records, bulk_candidates[0])

    return AnalysisResult(
        ctrl_rtt=ctrl,
        stream_rtt=stream,
        frame_latency=flat,
        owd_packet_up=powd,
        owd_frame_up=fowd,
        owd_command_down=cmd_owd,
        offsets=offsets_est,
        sent_uplink=sent,
        delivered_uplink=delivered,
        goodput_mbps=goodput,
        offered_mbps=offered_rate_mbps(ue_records),
        frame_observations=observations,
    )
