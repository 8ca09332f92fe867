"""Run configuration: sectioned key=value files and the run manifest.

A config file has sections [scenario], [clocks], [video], [workload],
[processing] and optionally [run]; keys match the corresponding dataclass
field names. The manifest written next to simulation output is itself a
valid config with every applied default made explicit, so a run can be
reproduced from it alone.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .emulator import DEFAULT_MSS, EmulationRun, Workload
from .model import (
    ClockModel,
    Encoder,
    ProcessingModel,
    RangeBand,
    Resolution,
    Scenario,
    Tech,
    VideoConfig,
)


class ConfigError(ValueError):
    """A configuration file could not be parsed or validated."""


_TECH_ALIASES = {"FIVE_G": Tech.FIVE_G, "5G": Tech.FIVE_G, "FOUR_G": Tech.FOUR_G, "4G": Tech.FOUR_G}

_SECTIONS = {
    "scenario": {"tech", "range", "added_owd", "base_owd_up", "base_owd_down",
                 "jitter_std", "loss_prob", "bandwidth_cap", "retransmit"},
    "clocks": {"offset_ue_ms", "offset_core_ms", "offset_app_ms",
               "sigma_ue_ms", "sigma_core_ms", "sigma_app_ms", "resync_interval_s"},
    "video": {"encoder", "resolution", "fps", "mean_frame_bytes", "frame_size_cv", "duration_s"},
    "workload": {"ping_interval_ms", "ping_count", "mss", "bulk_duration_s", "bulk_offered_mbps"},
    "processing": {"total_ms", "stage_blob", "stage_detect", "stage_interpret",
                   "stage_command", "response_bytes"},
    "run": {"seed"},
}


def _enum_value(section: str, key: str, raw: str, mapping: dict):
    token = raw.strip().upper()
    if token not in mapping:
        raise ConfigError(f"[{section}] {key}: unknown value {raw!r} "
                          f"(expected one of {', '.join(sorted(mapping))})")
    return mapping[token]


def _float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: not a number: {raw!r}") from exc


def _int(section: str, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: not an integer: {raw!r}") from exc


def _bool(section: str, key: str, raw: str) -> bool:
    token = raw.strip().lower()
    if token in ("true", "yes", "on", "1"):
        return True
    if token in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"[{section}] {key}: not a boolean: {raw!r}")


@dataclass(frozen=True)
class ParsedConfig:
    scenario: Scenario
    workload: Workload
    clocks: ClockModel
    processing: ProcessingModel
    seed: int | None
    mss: int
    #: scenario values the file set explicitly (absent keys map to None);
    #: lets a sweep re-derive per-technology defaults the user did not pin.
    raw_scenario: dict = None  # type: ignore[assignment]

    def to_run(self, seed: int | None = None) -> EmulationRun:
        resolved = seed if seed is not None else self.seed
        if resolved is None:
            resolved = 0
        return EmulationRun(scenario=self.scenario, workload=self.workload,
                            clocks=self.clocks, processing=self.processing,
                            seed=resolved, mss=self.mss)


def parse_config(path: str | Path) -> ParsedConfig:
    """Parse and validate a run configuration file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"[{section}] unknown key {key!r}")

    def get(section: str, key: str) -> str | None:
        if parser.has_section(section) and key in parser[section]:
            return parser[section][key]
        return None

    if not parser.has_section("scenario"):
        raise ConfigError("missing required section [scenario]")
    tech = _enum_value("scenario", "tech", get("scenario", "tech") or "FIVE_G", _TECH_ALIASES)
    range_raw = get("scenario", "range") or "EDGE"
    range_band = _enum_value("scenario", "range", range_raw,
                             {r.value: r for r in RangeBand})

    def opt_float(section: str, key: str) -> float | None:
        raw = get(section, key)
        if raw is None:
            return None
        if raw.strip().lower() in ("inf", "infinity", "none", "unlimited"):
            return math.inf
        return _float(section, key, raw)

    try:
        scenario = Scenario(
            tech=tech,
            range=range_band,
            added_owd=opt_float("scenario", "added_owd"),
            base_owd_up=opt_float("scenario", "base_owd_up"),
            base_owd_down=opt_float("scenario", "base_owd_down"),
            jitter_std=_float("scenario", "jitter_std", get("scenario", "jitter_std") or "0"),
            loss_prob=_float("scenario", "loss_prob", get("scenario", "loss_prob") or "0"),
            bandwidth_cap=opt_float("scenario", "bandwidth_cap"),
            retransmit=_bool("scenario", "retransmit", get("scenario", "retransmit") or "false"),
        )
    except ValueError as exc:
        raise ConfigError(f"[scenario] {exc}") from exc

    clock_kwargs = {}
    for key in _SECTIONS["clocks"]:
        raw = get("clocks", key)
        if raw is not None:
            clock_kwargs[key] = _float("clocks", key, raw)
    try:
        clocks = ClockModel(**clock_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[clocks] {exc}") from exc

    video = None
    video_duration = 0.0
    if parser.has_section("video"):
        video_duration = _float("video", "duration_s", get("video", "duration_s") or "0")
        if video_duration > 0:
            mean_raw = get("video", "mean_frame_bytes")
            try:
                video = VideoConfig(
                    encoder=_enum_value("video", "encoder", get("video", "encoder") or "MJPEG",
                                        {e.value: e for e in Encoder}),
                    resolution=_enum_value("video", "resolution", get("video", "resolution") or "VGA",
                                           {r.name: r for r in Resolution}),
                    fps=_float("video", "fps", get("video", "fps") or "20"),
                    mean_frame_bytes=_int("video", "mean_frame_bytes", mean_raw) if mean_raw else None,
                    frame_size_cv=_float("video", "frame_size_cv", get("video", "frame_size_cv") or "0.1"),
                )
            except ValueError as exc:
                raise ConfigError(f"[video] {exc}") from exc

    mss = DEFAULT_MSS
    raw_mss = get("workload", "mss")
    if raw_mss is not None:
        mss = _int("workload", "mss", raw_mss)

    bulk_offered = opt_float("workload", "bulk_offered_mbps")
    try:
        workload = Workload(
            ping_interval_ms=_float("workload", "ping_interval_ms",
                                    get("workload", "ping_interval_ms") or "100"),
            ping_count=_int("workload", "ping_count", get("workload", "ping_count") or "0"),
            video=video,
            video_duration_s=video_duration,
            bulk_duration_s=_float("workload", "bulk_duration_s",
                                   get("workload", "bulk_duration_s") or "0"),
            bulk_offered_mbps=bulk_offered if bulk_offered is not None and not math.isinf(bulk_offered) else None,
        )
    except ValueError as exc:
        raise ConfigError(f"[workload] {exc}") from exc

    proc_kwargs = {}
    total_raw = get("processing", "total_ms")
    if total_raw is not None:
        proc_kwargs["total_ms"] = _float("processing", "total_ms", total_raw)
    resp_raw = get("processing", "response_bytes")
    if resp_raw is not None:
        proc_kwargs["response_bytes"] = _int("processing", "response_bytes", resp_raw)
    stage_keys = ("stage_blob", "stage_detect", "stage_interpret", "stage_command")
    stage_raws = [get("processing", k) for k in stage_keys]
    if any(r is not None for r in stage_raws):
        if any(r is None for r in stage_raws):
            raise ConfigError("[processing] all four stage fractions must be given together")
        proc_kwargs["stage_fractions"] = tuple(
            _float("processing", k, r) for k, r in zip(stage_keys, stage_raws))
    try:
        processing = ProcessingModel(**proc_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[processing] {exc}") from exc

    seed = None
    seed_raw = get("run", "seed")
    if seed_raw is not None:
        seed = _int("run", "seed", seed_raw)

    raw_scenario = {
        "base_owd_up": opt_float("scenario", "base_owd_up"),
        "base_owd_down": opt_float("scenario", "base_owd_down"),
        "bandwidth_cap": opt_float("scenario", "bandwidth_cap"),
    }

    return ParsedConfig(scenario=scenario, workload=workload, clocks=clocks,
                        processing=processing, seed=seed, mss=mss,
                        raw_scenario=raw_scenario)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def manifest_text(run: EmulationRun) -> str:
    """Render a run as config text with every default resolved."""
    s = run.scenario
    c = run.clocks
    p = run.processing
    w = run.workload
    lines = [
        "[scenario]",
        f"tech = {s.tech.value}",
        f"range = {s.range.value}",
        f"added_owd = {_fmt(s.added_owd)}",
        f"base_owd_up = {_fmt(s.base_owd_up)}",
        f"base_owd_down = {_fmt(s.base_owd_down)}",
        f"jitter_std = {_fmt(s.jitter_std)}",
        f"loss_prob = {_fmt(s.loss_prob)}",
        f"bandwidth_cap = {_fmt(s.bandwidth_cap)}",
        f"retransmit = {_fmt(s.retransmit)}",
        "",
        "[clocks]",
        f"offset_ue_ms = {_fmt(c.offset_ue_ms)}",
        f"offset_core_ms = {_fmt(c.offset_core_ms)}",
        f"offset_app_ms = {_fmt(c.offset_app_ms)}",
        f"sigma_ue_ms = {_fmt(c.sigma_ue_ms)}",
        f"sigma_core_ms = {_fmt(c.sigma_core_ms)}",
        f"sigma_app_ms = {_fmt(c.sigma_app_ms)}",
        f"resync_interval_s = {_fmt(c.resync_interval_s)}",
        "",
    ]
    if w.video is not None and w.video_duration_s > 0:
        v = w.video
        lines += [
            "[video]",
            f"encoder = {v.encoder.value}",
            f"resolution = {v.resolution.name}",
            f"fps = {_fmt(v.fps)}",
            f"mean_frame_bytes = {v.mean_frame_bytes}",
            f"frame_size_cv = {_fmt(v.frame_size_cv)}",
            f"duration_s = {_fmt(w.video_duration_s)}",
            "",
        ]
    lines += [
        "[workload]",
        f"ping_interval_ms = {_fmt(w.ping_interval_ms)}",
        f"ping_count = {w.ping_count}",
        f"mss = {run.mss}",
        f"bulk_duration_s = {_fmt(w.bulk_duration_s)}",
    ]
    if w.bulk_offered_mbps is not None:
        lines.append(f"bulk_offered_mbps = {_fmt(w.bulk_offered_mbps)}")
    lines += [
        "",
        "[processing]",
        f"total_ms = {_fmt(p.total_ms)}",
        f"stage_blob = {_fmt(p.stage_fractions[0])}",
        f"stage_detect = {_fmt(p.stage_fractions[1])}",
        f"stage_interpret = {_fmt(p.stage_fractions[2])}",
        f"stage_command = {_fmt(p.stage_fractions[3])}",
        f"response_bytes = {p.response_bytes}",
        "",
        "[run]",
        f"seed = {run.seed}",
        "",
    ]
    return "\n".join(lines)


def write_manifest(path: str | Path, run: EmulationRun) -> None:
    Path(path).write_text(manifest_text(run), encoding="utf-8")
