"""CLI subcommands: simulate, analyze, sweep, plot, selftest."""

import csv
import hashlib
import json
import re
from pathlib import Path

import pytest

from edgekpi.cli import main
from edgekpi.selftest import check_srtt_recurrence, run_selftest

CONFIG = """
[scenario]
tech = FIVE_G
range = EDGE
jitter_std = 0

[clocks]
sigma_ue_ms = 0
sigma_core_ms = 0
sigma_app_ms = 0

[video]
fps = 20
mean_frame_bytes = 14000
frame_size_cv = 0
duration_s = 1

[workload]
ping_interval_ms = 100
ping_count = 5
"""

PING_ONLY = """
[scenario]
tech = FIVE_G
range = EDGE

[workload]
ping_count = 5
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(CONFIG)
    return path


def digest_dir(outdir: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(outdir.iterdir()) if p.is_file()}


class TestSimulate:
    def test_writes_capture_set(self, tmp_path, config_path, capsys):
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(config_path), "--seed", "1",
                     "--out", str(out)]) == 0
        for name in ("ue.ndjson", "core.ndjson", "app.ndjson", "truth.ndjson",
                     "ntp.ndjson", "manifest.ini"):
            assert (out / name).exists(), name

    def test_identical_seed_identical_bytes(self, tmp_path, config_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(config_path), "--seed", "7", "--out", str(out1)])
        main(["simulate", "--config", str(config_path), "--seed", "7", "--out", str(out2)])
        assert digest_dir(out1) == digest_dir(out2)

    def test_refuses_overwrite_without_force(self, tmp_path, config_path, capsys):
        out = tmp_path / "out"
        main(["simulate", "--config", str(config_path), "--seed", "1", "--out", str(out)])
        assert main(["simulate", "--config", str(config_path), "--seed", "1",
                     "--out", str(out)]) == 1
        assert "overwrite" in capsys.readouterr().err
        assert main(["simulate", "--config", str(config_path), "--seed", "1",
                     "--out", str(out), "--force"]) == 0

    def test_invalid_scenario_rejected(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[scenario]\ntech = 4G\nrange = EDGE\n\n[workload]\nping_count = 1\n")
        assert main(["simulate", "--config", str(bad), "--seed", "1",
                     "--out", str(tmp_path / "x")]) == 1
        assert "EDGE" in capsys.readouterr().err

    def test_unparseable_config_reports_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[scenario\ntech = 5G\n")
        assert main(["simulate", "--config", str(bad), "--seed", "1",
                     "--out", str(tmp_path / "x")]) == 1
        assert "line" in capsys.readouterr().err.lower()


class TestAnalyze:
    @pytest.fixture
    def capture_dir(self, tmp_path, config_path):
        out = tmp_path / "out"
        main(["simulate", "--config", str(config_path), "--seed", "3", "--out", str(out)])
        return out

    def test_simulate_then_analyze(self, capture_dir):
        assert main(["analyze", "--in", str(capture_dir)]) == 0
        for name in ("samples.ndjson", "report.csv", "report.ndjson"):
            assert (capture_dir / name).exists()
        classes = {json.loads(line)["class"]
                   for line in (capture_dir / "samples.ndjson").read_text().splitlines()}
        assert {"CTRL", "STREAM-packet", "STREAM-frame", "OWD-packet", "OWD-frame"} <= classes

    def test_never_reads_truth(self, capture_dir):
        (capture_dir / "truth.ndjson").unlink()
        assert main(["analyze", "--in", str(capture_dir)]) == 0

    def test_missing_tap_file_names_it(self, capture_dir, capsys):
        (capture_dir / "core.ndjson").unlink()
        assert main(["analyze", "--in", str(capture_dir)]) == 1
        assert "core.ndjson" in capsys.readouterr().err

    def test_corrupt_line_reports_line_number(self, capture_dir, capsys):
        ue = capture_dir / "ue.ndjson"
        lines = ue.read_text().splitlines()
        lines[2] = '{"tap": "UE", "broken": true}'
        ue.write_text("\n".join(lines) + "\n")
        assert main(["analyze", "--in", str(capture_dir)]) == 1
        assert "line 3" in capsys.readouterr().err

    def test_no_ctrl_traffic_marks_absent(self, tmp_path, capsys):
        cfg = tmp_path / "v.ini"
        cfg.write_text(CONFIG.replace("ping_count = 5", "ping_count = 0"))
        out = tmp_path / "out"
        main(["simulate", "--config", str(cfg), "--seed", "4", "--out", str(out)])
        assert main(["analyze", "--in", str(out)]) == 0
        assert "CTRL" in capsys.readouterr().out
        rows = list(csv.DictReader(open(out / "report.csv")))
        ctrl_rows = [r for r in rows if r["class"] == "CTRL"]
        assert ctrl_rows[0]["value"] == ""

    def test_analysis_pure_function_of_captures(self, capture_dir, tmp_path):
        main(["analyze", "--in", str(capture_dir)])
        first = (capture_dir / "report.csv").read_bytes()
        for name in ("samples.ndjson", "report.csv", "report.ndjson"):
            (capture_dir / name).unlink()
        main(["analyze", "--in", str(capture_dir)])
        assert (capture_dir / "report.csv").read_bytes() == first

    def test_refuses_overwrite(self, capture_dir, capsys):
        assert main(["analyze", "--in", str(capture_dir)]) == 0
        assert main(["analyze", "--in", str(capture_dir)]) == 1
        assert main(["analyze", "--in", str(capture_dir), "--force"]) == 0


class TestSweep:
    @pytest.fixture
    def sweep_dir(self, tmp_path, config_path):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(config_path), "--seed", "5",
                     "--out", str(out)]) == 0
        return out

    def test_five_scenario_rows(self, sweep_dir):
        rows = list(csv.DictReader(open(sweep_dir / "comparison.csv")))
        assert len(rows) == 5
        assert [r["scenario"] for r in rows] == [
            "5g_edge", "5g_regional", "5g_national", "4g_regional", "4g_national"]

    def test_velocity_column_populated(self, sweep_dir):
        rows = list(csv.DictReader(open(sweep_dir / "comparison.csv")))
        velocities = [float(r["velocity_kmh"]) for r in rows]
        assert all(v > 0 for v in velocities)
        # faster scenarios allow higher speeds
        assert velocities == sorted(velocities, reverse=True)

    def test_velocity_derived_from_p95_response_time(self, sweep_dir):
        # v = distance / response time for 1 m: 3600 / t_ms, with the response
        # time built from the frame OWD at the 95th percentile
        for row in csv.DictReader(open(sweep_dir / "comparison.csv")):
            srt = float(row["e2e_srt_p95_ms"])
            assert srt == pytest.approx(float(row["owd_frame_p95_ms"]) + 20.3 + 5.0, abs=1e-4)
            assert float(row["velocity_kmh"]) == pytest.approx(3600.0 / srt, abs=1e-3)

    def test_median_ordering_within_each_tech(self, sweep_dir):
        rows = {r["scenario"]: r for r in csv.DictReader(open(sweep_dir / "comparison.csv"))}
        for cls in ("ctrl_median_ms", "stream_packet_median_ms", "stream_frame_median_ms"):
            assert (float(rows["5g_edge"][cls]) < float(rows["5g_regional"][cls])
                    < float(rows["5g_national"][cls]))
            assert float(rows["4g_regional"][cls]) < float(rows["4g_national"][cls])

    def test_per_scenario_outputs_written(self, sweep_dir):
        for label in ("5g_edge", "4g_national"):
            for name in ("ue.ndjson", "report.csv", "samples.ndjson", "manifest.ini"):
                assert (sweep_dir / label / name).exists()


class TestPlot:
    @pytest.fixture
    def analyzed_dir(self, tmp_path, config_path):
        out = tmp_path / "out"
        main(["simulate", "--config", str(config_path), "--seed", "6", "--out", str(out)])
        main(["analyze", "--in", str(out)])
        return out

    def test_cdf_polyline_monotone_and_complete(self, analyzed_dir, tmp_path):
        out = tmp_path / "cdf.svg"
        assert main(["plot", "--kind", "cdf", "--in", str(analyzed_dir / "samples.ndjson"),
                     "--out", str(out)]) == 0
        svg = out.read_text()
        match = re.search(r'<polyline points="([^"]+)"', svg)
        assert match
        points = [tuple(map(float, p.split(","))) for p in match.group(1).split()]
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        assert xs == sorted(xs)                  # monotone in x
        assert all(b <= a + 1e-6 for a, b in zip(ys, ys[1:]))  # non-decreasing probability
        assert "reliability 95%" in svg

    def test_cdf_ascii(self, analyzed_dir, tmp_path):
        out = tmp_path / "cdf.txt"
        assert main(["plot", "--kind", "cdf", "--in", str(analyzed_dir / "samples.ndjson"),
                     "--out", str(out), "--ascii"]) == 0
        text = out.read_text()
        assert "*" in text and "reliability" in text

    def test_box_single_scenario(self, analyzed_dir, tmp_path):
        out = tmp_path / "box.svg"
        assert main(["plot", "--kind", "box", "--in", str(analyzed_dir / "samples.ndjson"),
                     "--out", str(out)]) == 0
        svg = out.read_text()
        assert svg.count("<rect") >= 2  # background + at least one box

    def test_throughput_threshold_lines(self, tmp_path):
        out = tmp_path / "tp.svg"
        assert main(["plot", "--kind", "throughput", "--defaults", "--out", str(out)]) == 0
        svg = out.read_text()
        assert "32.2 Mbit/s" in svg and "54.6 Mbit/s" in svg
        assert len(re.findall(r'stroke="crimson"', svg)) == 2
        assert svg.count("<rect") == 7  # background + six encoder/resolution bars

    def test_throughput_from_report(self, analyzed_dir, tmp_path):
        out = tmp_path / "tp2.svg"
        assert main(["plot", "--kind", "throughput",
                     "--in", str(analyzed_dir / "report.ndjson"), "--out", str(out)]) == 0
        assert "32.2 Mbit/s" in out.read_text()

    def test_unknown_kind_usage_error(self, analyzed_dir, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["plot", "--kind", "pie", "--in", str(analyzed_dir / "samples.ndjson"),
                  "--out", str(tmp_path / "x.svg")])
        assert exc.value.code == 1

    def test_missing_class_reports_available(self, analyzed_dir, tmp_path, capsys):
        assert main(["plot", "--kind", "cdf", "--in", str(analyzed_dir / "samples.ndjson"),
                     "--sample-class", "NOPE", "--out", str(tmp_path / "x.svg")]) == 1
        assert "available" in capsys.readouterr().err


class TestSelftest:
    def test_pristine_build_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 5
        assert "FAIL" not in out

    def test_misconfigured_alpha_detected(self):
        # negative control: a wrong smoothing gain must trip the oracle
        assert check_srtt_recurrence(alpha=0.5).ok is False
        assert check_srtt_recurrence(alpha=0.125).ok is True

    def test_exit_code_two_on_oracle_failure(self, monkeypatch, capsys):
        import edgekpi.cli as cli_mod
        from edgekpi.selftest import CheckResult

        monkeypatch.setattr(cli_mod, "run_selftest",
                            lambda: [CheckResult("rigged", False, "injected failure")])
        assert main(["selftest"]) == 2
        assert "FAIL rigged" in capsys.readouterr().out

    def test_all_results_reported(self):
        results = run_selftest()
        assert [r.name for r in results] == [
            "delay-recovery", "srtt-recurrence", "percentile-order-statistics",
            "error-propagation", "velocity-roundtrip"]
        assert all(r.ok for r in results)


class TestUsage:
    def test_no_command_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_unknown_command_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1
