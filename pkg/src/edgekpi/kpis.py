"""KPI computations: distributions, availability, reliability, clock-error
propagation, end-to-end service response time, velocity bounds and
throughput-demand verdicts, plus assembly of the full report."""

from __future__ import annotations

import csv
import json
import math
import statistics
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .analyzer import AnalysisResult, SampleSet, srtt
from .model import Tap


#: Default bandwidth caps (Mbit/s) a demand figure is judged against.
DEFAULT_CAPS_MBPS = (54.6, 32.2)


@dataclass(frozen=True)
class Ecdf:
    """Empirical CDF over latency samples.

    ``values`` are the sorted distinct sample values and ``cum_counts`` the
    number of samples at or below each, so percentiles resolve exactly as
    order statistics with no float comparisons.
    """

    values: tuple[float, ...]
    cum_counts: tuple[int, ...]
    n: int

    @property
    def probs(self) -> tuple[float, ...]:
        return tuple(c / self.n for c in self.cum_counts)

    def percentile(self, p: float) -> float:
        """Smallest sample value whose cumulative probability reaches ``p``,
        i.e. the ceil(p*n)-th order statistic."""
        if not 0.0 < p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        k = max(1, math.ceil(p * self.n - 1e-9))
        return self.values[bisect_left(self.cum_counts, k)]


def ecdf(samples: Sequence[float]) -> Ecdf:
    if not samples:
        raise ValueError("ecdf requires at least one sample")
    ordered = sorted(samples)
    values: list[float] = []
    counts: list[int] = []
    for i, v in enumerate(ordered, start=1):
        if values and v == values[-1]:
            counts[-1] = i
        else:
            values.append(v)
            counts.append(i)
    return Ecdf(tuple(values), tuple(counts), len(ordered))


def _quantile(ordered: Sequence[float], p: float) -> float:
    """Linear-interpolation quantile on pre-sorted data (position (n-1)*p)."""
    n = len(ordered)
    if n == 1:
        return ordered[0]
    pos = (n - 1) * p
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return ordered[lo] * (1.0 - frac) + ordered[hi] * frac


@dataclass(frozen=True)
class BoxplotStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple[float, ...]


def boxplot_stats(samples: Sequence[float]) -> BoxplotStats:
    """Tukey boxplot statistics: interpolated quartiles, whiskers at the most
    extreme points within 1.5*IQR of the quartile box."""
    if not samples:
        raise ValueError("boxplot_stats requires at least one sample")
    ordered = sorted(samples)
    q1 = _quantile(ordered, 0.25)
    med = _quantile(ordered, 0.50)
    q3 = _quantile(ordered, 0.75)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = [v for v in ordered if lo_fence <= v <= hi_fence]
    outliers = tuple(v for v in ordered if v < lo_fence or v > hi_fence)
    return BoxplotStats(
        minimum=ordered[0], q1=q1, median=med, q3=q3, maximum=ordered[-1],
        whisker_lo=inside[0], whisker_hi=inside[-1], outliers=outliers)


def availability(sent_count: int, delivered_count: int) -> float:
    """Delivered packets as a percentage of sent packets."""
    if sent_count <= 0:
        raise ValueError("sent_count must be > 0")
    if not 0 <= delivered_count <= sent_count:
        raise ValueError("delivered_count must be within [0, sent_count]")
    return 100.0 * delivered_count / sent_count


def reliability(samples: Sequence[float], bound_ms: float) -> float:
    """Fraction of samples delivered within the service time bound."""
    if not samples:
        raise ValueError("reliability requires at least one sample")
    return sum(1 for v in samples if v <= bound_ms) / len(samples)


def latency_at(samples: Sequence[float], p: float) -> float:
    """Latency at percentile ``p`` of the empirical CDF."""
    return ecdf(samples).percentile(p)


@dataclass(frozen=True)
class ErrorBudget:
    quadrature_ms: float
    linear_sum_ms: float


def propagate_error(sigma_a_ms: float, sigma_b_ms: float, sigma_c_ms: float) -> ErrorBudget:
    """Combined clock-offset error of the three nodes.

    ``quadrature_ms`` is the root-sum-of-squares of the per-node stds;
    ``linear_sum_ms`` is their plain sum, reported alongside as the
    conservative worst-case figure.
    """
    sigmas = (sigma_a_ms, sigma_b_ms, sigma_c_ms)
    if any(s < 0 for s in sigmas):
        raise ValueError("sigma values must be >= 0")
    return ErrorBudget(
        quadrature_ms=math.sqrt(sum(s * s for s in sigmas)),
        linear_sum_ms=sum(sigmas))


def e2e_srt(owd_up_ms: float, processing_ms: float, owd_down_ms: float) -> float:
    """End-to-end service response time: uplink frame delay + processing +
    downlink response delay."""
    if owd_up_ms < 0 or processing_ms < 0 or owd_down_ms < 0:
        raise ValueError("components must be >= 0")
    return owd_up_ms + processing_ms + owd_down_ms


def velocity(distance_m: float, e2e_srt_ms: float) -> float:
    """Maximum speed (km/h) at which a vehicle can still react within
    ``distance_m`` given the service response time."""
    if distance_m < 0:
        raise ValueError("distance_m must be >= 0")
    if e2e_srt_ms <= 0:
        raise ValueError("e2e_srt_ms must be > 0")
    return distance_m / (e2e_srt_ms / 1000.0) * 3.6


class CapVerdict(Enum):
    FITS = "FITS"
    EXCEEDS = "EXCEEDS"


@dataclass(frozen=True)
class ThroughputDemand:
    mbps: float
    verdicts: Mapping[float, CapVerdict]

    def fits(self, cap_mbps: float) -> bool:
        return self.verdicts[cap_mbps] is CapVerdict.FITS


def demanded_throughput(video_cfg, caps_mbps: Sequence[float] = DEFAULT_CAPS_MBPS) -> ThroughputDemand:
    """Bitrate a video configuration demands, judged against each cap."""
    mbps = video_cfg.mean_frame_bytes * 8.0 * video_cfg.fps / 1e6
    return throughput_verdicts(mbps, caps_mbps)


def throughput_verdicts(mbps: float, caps_mbps: Sequence[float] = DEFAULT_CAPS_MBPS) -> ThroughputDemand:
    verdicts = {cap: (CapVerdict.FITS if mbps <= cap else CapVerdict.EXCEEDS) for cap in caps_mbps}
    return ThroughputDemand(mbps=mbps, verdicts=verdicts)


def improvement_pct(baseline_ms: float, value_ms: float) -> float:
    """Relative latency reduction of ``value_ms`` against a baseline."""
    if baseline_ms <= 0:
        raise ValueError("baseline_ms must be > 0")
    return 100.0 * (baseline_ms - value_ms) / baseline_ms


# -- report assembly --------------------------------------------------------

#: Traffic classes a report covers, in emission order.
CLASS_CTRL = "CTRL"
CLASS_STREAM_PACKET = "STREAM-packet"
CLASS_STREAM_FRAME = "STREAM-frame"
LATENCY_CLASSES = (CLASS_CTRL, CLASS_STREAM_PACKET, CLASS_STREAM_FRAME)


@dataclass(frozen=True)
class ClassStats:
    """Distribution summary of one latency class."""

    count: int
    excluded: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    box: BoxplotStats
    dist: Ecdf
    srtt_series: tuple[float, ...]

    @property
    def srtt_final_ms(self) -> float:
        return self.srtt_series[-1]


@dataclass(frozen=True)
class OwdStats:
    """One-way delay summary with the propagated clock-error budget."""

    count: int
    excluded: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    sigma_quadrature_ms: float | None
    sigma_linear_ms: float | None


@dataclass(frozen=True)
class ReliabilityStats:
    percentile: float
    latency_at_percentile_ms: float
    bound_ms: float | None
    fraction_within_bound: float | None


@dataclass(frozen=True)
class ReportOptions:
    """Externally supplied knobs the captures cannot reveal."""

    processing_ms: float = 20.3
    owd_down_assumed_ms: float = 5.0
    distances_m: tuple[float, ...] = (1.0,)
    caps_mbps: tuple[float, ...] = DEFAULT_CAPS_MBPS
    reliability_percentile: float = 0.95
    reliability_bound_ms: float | None = None
    alpha: float = 0.125
    scenario_label: str = ""
    tech: str = ""
    range_band: str = ""


@dataclass
class KpiReport:
    """Complete KPI suite for one capture set; absent classes are None and
    listed in ``absent``."""

    options: ReportOptions
    classes: dict[str, ClassStats | None]
    owd_packet: OwdStats | None
    owd_frame: OwdStats | None
    owd_command_measured_ms: float | None
    availability_pct: float | None
    reliability: ReliabilityStats | None
    e2e_srt_mean_ms: float | None
    e2e_srt_p95_ms: float | None
    velocity_kmh: dict[float, float] | None
    demand: ThroughputDemand | None
    goodput_mbps: float | None
    offsets_ms: dict[str, float] | None
    offset_sigmas_ms: dict[str, float] | None
    sent_uplink: int = 0
    delivered_uplink: int = 0
    absent: tuple[str, ...] = ()


def _class_stats(samples: SampleSet, alpha: float) -> ClassStats | None:
    if not samples.values_ms:
        return None
    vals = samples.values_ms
    dist = ecdf(vals)
    return ClassStats(
        count=len(vals),
        excluded=samples.excluded,
        mean_ms=statistics.fmean(vals),
        median_ms=_quantile(sorted(vals), 0.5),
        p95_ms=dist.percentile(0.95),
        box=boxplot_stats(vals),
        dist=dist,
        srtt_series=tuple(srtt(vals, alpha)),
    )


def _owd_stats(samples: SampleSet, budget: ErrorBudget | None) -> OwdStats | None:
    if not samples.values_ms:
        return None
    vals = samples.values_ms
    return OwdStats(
        count=len(vals),
        excluded=samples.excluded,
        mean_ms=statistics.fmean(vals),
        median_ms=_quantile(sorted(vals), 0.5),
        p95_ms=latency_at(vals, 0.95),
        sigma_quadrature_ms=budget.quadrature_ms if budget else None,
        sigma_linear_ms=budget.linear_sum_ms if budget else None,
    )


def build_report(analysis: AnalysisResult, options: ReportOptions | None = None) -> KpiReport:
    """Assemble the full KPI report from analyzer output.

    The velocity bound follows the upper-95%-reliability method: the frame
    OWD at the reliability percentile feeds the service response time, which
    in turn bounds the vehicle speed for each configured distance.
    """
    opts = options or ReportOptions()
    budget = None
    offsets_ms = None
    sigmas_ms = None
    if analysis.offsets:
        est = analysis.offsets
        budget = propagate_error(est[Tap.UE].std_ms, est[Tap.CORE].std_ms, est[Tap.APP].std_ms)
        offsets_ms = {node.value: est[node].mean_ms for node in est}
        sigmas_ms = {node.value: est[node].std_ms for node in est}

    classes = {
        CLASS_CTRL: _class_stats(analysis.ctrl_rtt, opts.alpha),
        CLASS_STREAM_PACKET: _class_stats(analysis.stream_rtt, opts.alpha),
        CLASS_STREAM_FRAME: _class_stats(analysis.frame_latency, opts.alpha),
    }
    absent = tuple(name for name, stats in classes.items() if stats is None)

    owd_pkt = _owd_stats(analysis.owd_packet_up, budget)
    owd_frm = _owd_stats(analysis.owd_frame_up, budget)
    cmd_vals = analysis.owd_command_down.values_ms
    cmd_owd = statistics.fmean(cmd_vals) if cmd_vals else None

    avail = None
    if analysis.sent_uplink > 0:
        avail = availability(analysis.sent_uplink, analysis.delivered_uplink)

    rel = None
    srt_mean = None
    srt_p95 = None
    vel = None
    if owd_frm is not None:
        frame_vals = analysis.owd_frame_up.values_ms
        lat_p = latency_at(frame_vals, opts.reliability_percentile)
        frac = (reliability(frame_vals, opts.reliability_bound_ms)
                if opts.reliability_bound_ms is not None else None)
        rel = ReliabilityStats(opts.reliability_percentile, lat_p, opts.reliability_bound_ms, frac)
        srt_mean = e2e_srt(owd_frm.mean_ms, opts.processing_ms, opts.owd_down_assumed_ms)
        srt_p95 = e2e_srt(lat_p, opts.processing_ms, opts.owd_down_assumed_ms)
        vel = {d: velocity(d, srt_p95) for d in opts.distances_m}

    demand = None
    if analysis.offered_mbps is not None:
        demand = throughput_verdicts(analysis.offered_mbps, opts.caps_mbps)

    return KpiReport(
        options=opts,
        classes=classes,
        owd_packet=owd_pkt,
        owd_frame=owd_frm,
        owd_command_measured_ms=cmd_owd,
        availability_pct=avail,
        reliability=rel,
        e2e_srt_mean_ms=srt_mean,
        e2e_srt_p95_ms=srt_p95,
        velocity_kmh=vel,
        demand=demand,
        goodput_mbps=analysis.goodput_mbps,
        offsets_ms=offsets_ms,
        offset_sigmas_ms=sigmas_ms,
        sent_uplink=analysis.sent_uplink,
        delivered_uplink=analysis.delivered_uplink,
        absent=absent,
    )


REPORT_COLUMNS = ("scenario", "tech", "range", "class", "metric", "value", "unit", "sigma")


def report_rows(report: KpiReport) -> list[dict]:
    """Flatten a report into one row per KPI for the CSV/NDJSON outputs."""
    opts = report.options
    rows: list[dict] = []

    def add(cls: str, metric: str, value, unit: str, sigma=None):
        rows.append({
            "scenario": opts.scenario_label, "tech": opts.tech, "range": opts.range_band,
            "class": cls, "metric": metric,
            "value": value if value is not None else "",
            "unit": unit, "sigma": sigma if sigma is not None else "",
        })

    for cls in LATENCY_CLASSES:
        stats = report.classes.get(cls)
        if stats is None:
            add(cls, "latency", None, "ms")
            continue
        add(cls, "count", stats.count, "packets")
        add(cls, "excluded", stats.excluded, "packets")
        add(cls, "mean", round(stats.mean_ms, 6), "ms")
        add(cls, "median", round(stats.median_ms, 6), "ms")
        add(cls, "p95", round(stats.p95_ms, 6), "ms")
        add(cls, "srtt_final", round(stats.srtt_final_ms, 6), "ms")

    for name, owd in (("OWD-packet", report.owd_packet), ("OWD-frame", report.owd_frame)):
        if owd is None:
            add(name, "owd_up", None, "ms")
            continue
        add(name, "count", owd.count, "packets")
        add(name, "mean", round(owd.mean_ms, 6), "ms",
            sigma=round(owd.sigma_quadrature_ms, 6) if owd.sigma_quadrature_ms is not None else None)
        add(name, "median", round(owd.median_ms, 6), "ms")
        add(name, "p95", round(owd.p95_ms, 6), "ms")
        if owd.sigma_linear_ms is not None:
            add(name, "sigma_linear_sum", round(owd.sigma_linear_ms, 6), "ms")

    if report.owd_command_measured_ms is not None:
        add("OWD-command", "mean", round(report.owd_command_measured_ms, 6), "ms")
    add("OWD-command", "assumed_down", opts.owd_down_assumed_ms, "ms")

    add("overall", "availability", round(report.availability_pct, 6) if report.availability_pct is not None else None, "percent")
    if report.reliability is not None:
        rel = report.reliability
        add("OWD-frame", f"latency_at_p{int(rel.percentile * 100)}",
            round(rel.latency_at_percentile_ms, 6), "ms")
        if rel.fraction_within_bound is not None:
            add("OWD-frame", f"reliability_within_{rel.bound_ms}ms",
                round(rel.fraction_within_bound, 6), "fraction")
    add("overall", "e2e_srt_mean", round(report.e2e_srt_mean_ms, 6) if report.e2e_srt_mean_ms is not None else None, "ms")
    add("overall", "e2e_srt_p95", round(report.e2e_srt_p95_ms, 6) if report.e2e_srt_p95_ms is not None else None, "ms")
    if report.velocity_kmh:
        for d, v in sorted(report.velocity_kmh.items()):
            add("overall", f"velocity_ds_{d}m", round(v, 4), "km/h")
    if report.demand is not None:
        add("overall", "demanded_throughput", round(report.demand.mbps, 4), "Mbit/s")
        for cap, verdict in sorted(report.demand.verdicts.items()):
            add("overall", f"cap_{cap}", verdict.value, "verdict")
    if report.goodput_mbps is not None:
        add("overall", "goodput", round(report.goodput_mbps, 4), "Mbit/s")
    return rows


def write_report_csv(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_report_ndjson(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")))
            fh.write("\n")
