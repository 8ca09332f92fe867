"""Command-line entry point.

Subcommands: ``simulate`` (run one scenario and write captures), ``analyze``
(captures -> samples + KPI report), ``sweep`` (the five-scenario comparison),
``plot`` (SVG/ASCII charts) and ``selftest`` (oracle battery).

Exit codes: 0 success, 1 validation or usage error, 2 selftest oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .analyzer import (
    AnalyzerConfig,
    FrameEndpoints,
    InsufficientDataError,
    MalformedCaptureError,
    MatchMode,
    analyze_captures,
)
from .config import ConfigError, parse_config, write_manifest
from .emulator import EmulationRun, RunResult, run as run_emulation, write_truth_file
from .kpis import (
    ReportOptions,
    boxplot_stats,
    build_report,
    demanded_throughput,
    ecdf,
    report_rows,
    write_report_csv,
    write_report_ndjson,
)
from .model import (
    CaptureFormatError,
    Encoder,
    RangeBand,
    Resolution,
    Scenario,
    Tap,
    Tech,
    VideoConfig,
    read_capture_file,
    read_ntp_file,
    validate,
    write_capture_file,
    write_ntp_file,
)
from .plotting import (
    render_box_ascii,
    render_box_svg,
    render_cdf_ascii,
    render_cdf_svg,
    render_throughput_ascii,
    render_throughput_svg,
)
from .selftest import run_selftest

TAP_FILES = {Tap.UE: "ue.ndjson", Tap.CORE: "core.ndjson", Tap.APP: "app.ndjson"}
TRUTH_FILE = "truth.ndjson"
NTP_FILE = "ntp.ndjson"
SAMPLES_FILE = "samples.ndjson"
REPORT_CSV = "report.csv"
REPORT_NDJSON = "report.ndjson"
MANIFEST_FILE = "manifest.ini"

#: The five-scenario comparison. Every scenario runs with the same seed so
#: the generated workload (frame sizes, noise draws) is identical across
#: scenarios and median shifts isolate the path-delay differences exactly.
SWEEP_SCENARIOS = (
    ("5g_edge", Tech.FIVE_G, RangeBand.EDGE),
    ("5g_regional", Tech.FIVE_G, RangeBand.REGIONAL),
    ("5g_national", Tech.FIVE_G, RangeBand.NATIONAL),
    ("4g_regional", Tech.FOUR_G, RangeBand.REGIONAL),
    ("4g_national", Tech.FOUR_G, RangeBand.NATIONAL),
)

COMPARISON_FILE = "comparison.csv"
COMPARISON_COLUMNS = ("scenario", "tech", "range", "ctrl_median_ms", "stream_packet_median_ms",
                      "stream_frame_median_ms", "owd_frame_p95_ms", "e2e_srt_p95_ms", "velocity_kmh")


class CliError(Exception):
    """Fatal usage/validation problem; message goes to stderr, exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgekpi",
                     description="Deterministic network-path emulation and latency KPI analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one scenario and write capture files")
    p_sim.add_argument("--config", required=True, help="run configuration file")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--force", action="store_true", help="overwrite existing outputs")

    def add_analysis_flags(p):
        p.add_argument("--alpha", type=float, default=0.125, help="SRTT gain (0,1)")
        p.add_argument("--match", choices=("pid", "seq"), default="pid",
                       help="packet matching mode for OWD")
        p.add_argument("--frame-owd", choices=("first-last", "first-first"), default="first-last",
                       help="frame OWD endpoint convention")
        p.add_argument("--processing-ms", type=float, default=20.3,
                       help="application processing time used in the response-time KPI")
        p.add_argument("--owd-down-ms", type=float, default=5.0,
                       help="assumed downlink response OWD")
        p.add_argument("--distance-m", type=float, action="append", default=None,
                       help="reaction distance(s) for the velocity bound (repeatable)")
        p.add_argument("--reliability-p", type=float, default=0.95, help="reliability percentile")
        p.add_argument("--bound-ms", type=float, default=None,
                       help="service latency bound for the reliability fraction")

    p_an = sub.add_parser("analyze", help="extract samples and KPI report from captures")
    p_an.add_argument("--in", dest="indir", required=True, help="capture directory")
    add_analysis_flags(p_an)
    p_an.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p_sw = sub.add_parser("sweep", help="run the five-scenario comparison")
    p_sw.add_argument("--config", required=True, help="base configuration file")
    p_sw.add_argument("--seed", type=int, default=None, help="seed shared by all five scenarios")
    p_sw.add_argument("--out", required=True, help="output directory")
    add_analysis_flags(p_sw)
    p_sw.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p_pl = sub.add_parser("plot", help="render a chart from samples or a report")
    p_pl.add_argument("--kind", required=True, choices=("cdf", "box", "throughput"))
    p_pl.add_argument("--in", dest="infile", default=None,
                      help="samples.ndjson (cdf/box), sweep dir (box) or report.ndjson (throughput)")
    p_pl.add_argument("--out", required=True, help="output file")
    p_pl.add_argument("--ascii", action="store_true", help="plain-text rendering instead of SVG")
    p_pl.add_argument("--sample-class", default="OWD-frame", help="sample class to plot")
    p_pl.add_argument("--reliability", type=float, default=0.95,
                      help="reliability marker level for cdf plots")
    p_pl.add_argument("--defaults", action="store_true",
                      help="throughput: plot the built-in encoder/resolution demand table")

    sub.add_parser("selftest", help="run the built-in oracle battery")
    return parser


def _require_new(paths: list[Path], force: bool) -> None:
    if force:
        return
    existing = [str(p) for p in paths if p.exists()]
    if existing:
        raise CliError(f"refusing to overwrite existing output (use --force): {', '.join(existing)}")


def _write_run_outputs(result: RunResult, run_cfg: EmulationRun, outdir: Path, force: bool) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    targets = [outdir / name for name in (*TAP_FILES.values(), TRUTH_FILE, NTP_FILE, MANIFEST_FILE)]
    _require_new(targets, force)
    for tap, name in TAP_FILES.items():
        write_capture_file(outdir / name, result.records[tap])
    write_truth_file(outdir / TRUTH_FILE, result.truth)
    write_ntp_file(outdir / NTP_FILE, result.ntp)
    write_manifest(outdir / MANIFEST_FILE, run_cfg)


def cmd_simulate(args) -> int:
    parsed = parse_config(args.config)
    run_cfg = parsed.to_run(seed=args.seed)
    result = run_emulation(run_cfg)
    _write_run_outputs(result, run_cfg, Path(args.out), args.force)
    total = sum(len(r) for r in result.records.values())
    print(f"simulated {run_cfg.scenario.tech.value}/{run_cfg.scenario.range.value} "
          f"seed={run_cfg.seed}: {total} capture records -> {args.out}")
    return 0


def _read_captures(indir: Path) -> dict[Tap, list]:
    records = {}
    for tap, name in TAP_FILES.items():
        path = indir / name
        if not path.exists():
            raise CliError(f"missing capture file: {path}")
        records[tap] = read_capture_file(path)
        check = validate(records[tap])
        if not check.ok:
            raise CliError(f"{path}: invalid capture at record {check.index}: {check.error}")
    return records


def _write_samples(path: Path, analysis) -> None:
    classes = (
        ("CTRL", analysis.ctrl_rtt),
        ("STREAM-packet", analysis.stream_rtt),
        ("STREAM-frame", analysis.frame_latency),
        ("OWD-packet", analysis.owd_packet_up),
        ("OWD-frame", analysis.owd_frame_up),
        ("OWD-command", analysis.owd_command_down),
    )
    with open(path, "w", encoding="utf-8") as fh:
        for name, sample_set in classes:
            for idx, value in enumerate(sample_set.values_ms):
                fh.write(json.dumps({"class": name, "idx": idx, "value_ms": value},
                                    separators=(",", ":")))
                fh.write("\n")


def _analyze_dir(indir: Path, args, scenario_meta: tuple[str, str, str] = ("", "", "")) -> tuple:
    records = _read_captures(indir)
    ntp_path = indir / NTP_FILE
    ntp = read_ntp_file(ntp_path) if ntp_path.exists() else None
    cfg = AnalyzerConfig(
        alpha=args.alpha,
        match_mode=MatchMode.BY_PID if args.match == "pid" else MatchMode.BY_SEQ,
        owd_frame_endpoints=(FrameEndpoints.FIRST_TO_LAST if args.frame_owd == "first-last"
                             else FrameEndpoints.FIRST_TO_FIRST),
    )
    analysis = analyze_captures(records[Tap.UE], records[Tap.CORE], records[Tap.APP], ntp, cfg)
    label, tech, range_band = scenario_meta
    opts = ReportOptions(
        processing_ms=args.processing_ms,
        owd_down_assumed_ms=args.owd_down_ms,
        distances_m=tuple(args.distance_m) if args.distance_m else (1.0,),
        reliability_percentile=args.reliability_p,
        reliability_bound_ms=args.bound_ms,
        alpha=args.alpha,
        scenario_label=label,
        tech=tech,
        range_band=range_band,
    )
    report = build_report(analysis, opts)
    return analysis, report


def _scenario_meta_from_manifest(indir: Path) -> tuple[str, str, str]:
    manifest = indir / MANIFEST_FILE
    if not manifest.exists():
        return ("", "", "")
    try:
        parsed = parse_config(manifest)
    except ConfigError:
        return ("", "", "")
    s = parsed.scenario
    label = f"{'5g' if s.tech is Tech.FIVE_G else '4g'}_{s.range.value.lower()}"
    return (label, s.tech.value, s.range.value)


def cmd_analyze(args) -> int:
    indir = Path(args.indir)
    if not indir.is_dir():
        raise CliError(f"capture directory not found: {indir}")
    targets = [indir / name for name in (SAMPLES_FILE, REPORT_CSV, REPORT_NDJSON)]
    _require_new(targets, args.force)
    analysis, report = _analyze_dir(indir, args, _scenario_meta_from_manifest(indir))
    _write_samples(indir / SAMPLES_FILE, analysis)
    rows = report_rows(report)
    write_report_csv(indir / REPORT_CSV, rows)
    write_report_ndjson(indir / REPORT_NDJSON, rows)
    for name in report.absent:
        print(f"note: no {name} samples in this capture; KPIs marked absent")
    print(f"analyzed {indir}: wrote {SAMPLES_FILE}, {REPORT_CSV}, {REPORT_NDJSON}")
    return 0


def cmd_sweep(args) -> int:
    parsed = parse_config(args.config)
    base_seed = args.seed if args.seed is not None else (parsed.seed or 0)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _require_new([outdir / COMPARISON_FILE], args.force)
    raw = parsed.raw_scenario
    comparison = []
    for index, (label, tech, range_band) in enumerate(SWEEP_SCENARIOS):
        scenario = Scenario(
            tech=tech,
            range=range_band,
            base_owd_up=raw.get("base_owd_up"),
            base_owd_down=raw.get("base_owd_down"),
            jitter_std=parsed.scenario.jitter_std,
            loss_prob=parsed.scenario.loss_prob,
            bandwidth_cap=raw.get("bandwidth_cap"),
            retransmit=parsed.scenario.retransmit,
        )
        run_cfg = EmulationRun(scenario=scenario, workload=parsed.workload,
                               clocks=parsed.clocks, processing=parsed.processing,
                               seed=base_seed, mss=parsed.mss)
        result = run_emulation(run_cfg)
        scen_dir = outdir / label
        _write_run_outputs(result, run_cfg, scen_dir, args.force)
        analysis, report = _analyze_dir(scen_dir, args, (label, tech.value, range_band.value))
        _write_samples(scen_dir / SAMPLES_FILE, analysis)
        rows = report_rows(report)
        write_report_csv(scen_dir / REPORT_CSV, rows)
        write_report_ndjson(scen_dir / REPORT_NDJSON, rows)

        def med(cls):
            stats = report.classes.get(cls)
            return round(stats.median_ms, 6) if stats else ""

        comparison.append({
            "scenario": label, "tech": tech.value, "range": range_band.value,
            "ctrl_median_ms": med("CTRL"),
            "stream_packet_median_ms": med("STREAM-packet"),
            "stream_frame_median_ms": med("STREAM-frame"),
            "owd_frame_p95_ms": round(report.reliability.latency_at_percentile_ms, 6)
                                if report.reliability else "",
            "e2e_srt_p95_ms": round(report.e2e_srt_p95_ms, 6) if report.e2e_srt_p95_ms else "",
            "velocity_kmh": round(report.velocity_kmh[1.0], 4)
                            if report.velocity_kmh and 1.0 in report.velocity_kmh else "",
        })
        print(f"[{index + 1}/5] {label}: done")
    with open(outdir / COMPARISON_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=COMPARISON_COLUMNS)
        writer.writeheader()
        writer.writerows(comparison)
    print(f"sweep complete: {outdir / COMPARISON_FILE}")
    return 0


def _load_samples(path: Path) -> dict[str, list[float]]:
    if not path.exists():
        raise CliError(f"samples file not found: {path}")
    by_class: dict[str, list[float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                by_class.setdefault(d["class"], []).append(float(d["value_ms"]))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise CliError(f"{path} line {lineno}: bad sample record: {exc}")
    return by_class


def _pick_class(by_class: dict[str, list[float]], wanted: str) -> list[float]:
    if wanted in by_class and by_class[wanted]:
        return by_class[wanted]
    available = ", ".join(sorted(k for k, v in by_class.items() if v)) or "none"
    raise CliError(f"no samples of class {wanted!r} (available: {available})")


def cmd_plot(args) -> int:
    out = Path(args.out)
    if args.kind == "cdf":
        if not args.infile:
            raise CliError("--in is required for cdf plots")
        samples = _pick_class(_load_samples(Path(args.infile)), args.sample_class)
        dist = ecdf(samples)
        text = (render_cdf_ascii(dist, args.reliability) if args.ascii
                else render_cdf_svg(dist, args.reliability, f"{args.sample_class} CDF"))
    elif args.kind == "box":
        if not args.infile:
            raise CliError("--in is required for box plots")
        inpath = Path(args.infile)
        groups = []
        if inpath.is_dir():
            for sub in sorted(p for p in inpath.iterdir() if (p / SAMPLES_FILE).exists()):
                by_class = _load_samples(sub / SAMPLES_FILE)
                if args.sample_class in by_class and by_class[args.sample_class]:
                    groups.append((sub.name, boxplot_stats(by_class[args.sample_class])))
        else:
            by_class = _load_samples(inpath)
            for name in sorted(by_class):
                if by_class[name]:
                    groups.append((name, boxplot_stats(by_class[name])))
        if not groups:
            raise CliError("no samples found for box plot")
        text = render_box_ascii(groups) if args.ascii else render_box_svg(groups)
    else:  # throughput
        if args.defaults:
            bars = []
            for enc in Encoder:
                for res in Resolution:
                    demand = demanded_throughput(VideoConfig(encoder=enc, resolution=res))
                    bars.append((f"{res.name}-{enc.value}", demand.mbps))
        else:
            if not args.infile:
                raise CliError("--in (a report.ndjson) or --defaults is required for throughput plots")
            bars = []
            with open(args.infile, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    d = json.loads(line)
                    if d.get("metric") == "demanded_throughput":
                        label = d.get("scenario") or "demand"
                        bars.append((label, float(d["value"])))
            if not bars:
                raise CliError("report contains no demanded_throughput rows")
        text = render_throughput_ascii(bars) if args.ascii else render_throughput_svg(bars)
    out.write_text(text + "\n", encoding="utf-8")
    print(f"wrote {out}")
    return 0


def cmd_selftest(_args) -> int:
    results = run_selftest()
    failures = 0
    for check in results:
        status = "PASS" if check.ok else "FAIL"
        if not check.ok:
            failures += 1
        print(f"{status} {check.name}: {check.detail}")
    print(f"{len(results) - failures}/{len(results)} oracle checks passed")
    return 0 if failures == 0 else 2


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "analyze": cmd_analyze,
        "sweep": cmd_sweep,
        "plot": cmd_plot,
        "selftest": cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except (CliError, ConfigError, CaptureFormatError, MalformedCaptureError,
            InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
