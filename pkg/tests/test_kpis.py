"""KPI math: distributions, availability/reliability, error propagation,
service response time, velocity, throughput demand and report assembly."""

import math
import random

import pytest

from conftest import ping_run, video_run
from edgekpi import emulator
from edgekpi.analyzer import analyze_captures
from edgekpi.kpis import (
    CapVerdict,
    ReportOptions,
    availability,
    boxplot_stats,
    build_report,
    demanded_throughput,
    e2e_srt,
    ecdf,
    improvement_pct,
    latency_at,
    propagate_error,
    reliability,
    report_rows,
    throughput_verdicts,
    velocity,
    write_report_csv,
    write_report_ndjson,
)
from edgekpi.model import Encoder, Resolution, Tap, VideoConfig
from edgekpi.selftest import brute_force_percentile


class TestEcdf:
    def test_single_sample_step(self):
        dist = ecdf([5.0])
        assert dist.values == (5.0,)
        assert dist.probs == (1.0,)
        assert dist.percentile(0.95) == 5.0

    def test_order_statistic_on_1_to_100(self):
        dist = ecdf(list(range(1, 101)))
        assert dist.percentile(0.95) == 95
        assert dist.percentile(1.0) == 100
        assert dist.percentile(0.01) == 1

    def test_duplicates_merge(self):
        dist = ecdf([1.0, 1.0, 2.0])
        assert dist.values == (1.0, 2.0)
        assert dist.cum_counts == (2, 3)
        probs = dist.probs
        assert all(b > a for a, b in zip(probs, probs[1:]))
        assert probs[-1] == 1.0

    def test_percentile_monotone_in_p(self):
        rng = random.Random(12)
        for _ in range(20):
            samples = [rng.uniform(0, 50) for _ in range(rng.randint(1, 200))]
            dist = ecdf(samples)
            grid = [i / 100 for i in range(1, 101)]
            values = [dist.percentile(p) for p in grid]
            assert all(b >= a for a, b in zip(values, values[1:]))

    def test_matches_brute_force_everywhere(self):
        rng = random.Random(13)
        for _ in range(50):
            samples = [rng.uniform(0, 100) for _ in range(rng.randint(1, 300))]
            dist = ecdf(samples)
            for p in (0.05, 0.33, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0):
                assert dist.percentile(p) == brute_force_percentile(samples, p)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ecdf([])

    def test_p_range(self):
        dist = ecdf([1.0])
        with pytest.raises(ValueError):
            dist.percentile(0.0)
        with pytest.raises(ValueError):
            dist.percentile(1.1)


class TestBoxplot:
    def test_constant_samples(self):
        stats = boxplot_stats([3.0, 3.0, 3.0])
        assert (stats.minimum, stats.q1, stats.median, stats.q3, stats.maximum) == (3, 3, 3, 3, 3)
        assert stats.outliers == ()

    def test_outlier_flagged(self):
        stats = boxplot_stats([1, 2, 3, 4, 100])
        # quartiles by linear interpolation: q1=2, q3=4, fences at [-1, 7]
        assert stats.q1 == 2 and stats.q3 == 4
        assert stats.outliers == (100,)
        assert stats.whisker_hi == 4
        assert stats.maximum == 100

    def test_even_count_median_interpolates(self):
        assert boxplot_stats([1, 2, 3, 4]).median == 2.5

    def test_whiskers_within_fences(self):
        rng = random.Random(14)
        samples = [rng.gauss(10, 2) for _ in range(500)]
        stats = boxplot_stats(samples)
        iqr = stats.q3 - stats.q1
        assert stats.whisker_lo >= stats.q1 - 1.5 * iqr
        assert stats.whisker_hi <= stats.q3 + 1.5 * iqr
        for v in stats.outliers:
            assert v < stats.q1 - 1.5 * iqr or v > stats.q3 + 1.5 * iqr

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            boxplot_stats([])


class TestAvailability:
    def test_full_delivery(self):
        assert availability(1000, 1000) == 100.0

    def test_partial(self):
        assert availability(1000, 990) == 99.0

    def test_none_delivered(self):
        assert availability(1, 0) == 0.0

    def test_all_n(self):
        for n in (1, 7, 1000):
            assert availability(n, n) == 100.0

    def test_validation(self):
        with pytest.raises(ValueError):
            availability(0, 0)
        with pytest.raises(ValueError):
            availability(10, 11)
        with pytest.raises(ValueError):
            availability(10, -1)


class TestReliability:
    def test_all_within_bound(self):
        assert reliability([10.0] * 8, 20.0) == 1.0

    def test_counting(self):
        assert reliability(list(range(1, 101)), 50) == 0.50

    def test_latency_at_order_statistic(self):
        assert latency_at(list(range(1, 101)), 0.95) == 95

    def test_monotone_in_bound(self):
        rng = random.Random(15)
        samples = [rng.uniform(0, 100) for _ in range(200)]
        fractions = [reliability(samples, b) for b in range(0, 110, 5)]
        assert all(b >= a for a, b in zip(fractions, fractions[1:]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            reliability([], 1.0)


class TestPropagateError:
    def test_zero(self):
        budget = propagate_error(0, 0, 0)
        assert budget.quadrature_ms == 0.0
        assert budget.linear_sum_ms == 0.0

    def test_measured_node_sigmas(self):
        budget = propagate_error(0.387, 0.317, 0.117)
        assert budget.quadrature_ms == pytest.approx(0.5138, abs=0.0005)
        assert budget.linear_sum_ms == pytest.approx(0.821, abs=1e-9)

    def test_quadrature_never_exceeds_linear_sum(self):
        rng = random.Random(16)
        for _ in range(100):
            sigmas = [rng.uniform(0, 2) for _ in range(3)]
            budget = propagate_error(*sigmas)
            assert budget.quadrature_ms <= budget.linear_sum_ms + 1e-12

    def test_equality_iff_single_nonzero(self):
        budget = propagate_error(0.5, 0, 0)
        assert budget.quadrature_ms == pytest.approx(budget.linear_sum_ms)
        budget = propagate_error(0.5, 0.1, 0)
        assert budget.quadrature_ms < budget.linear_sum_ms

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            propagate_error(-0.1, 0, 0)


class TestE2eSrt:
    def test_reference_sum(self):
        assert e2e_srt(61.7, 20.3, 5.0) == pytest.approx(87.0, abs=1e-9)

    def test_zero(self):
        assert e2e_srt(0, 0, 0) == 0.0

    def test_plain_sum(self):
        assert e2e_srt(10, 20.3, 5) == pytest.approx(35.3)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            e2e_srt(-1, 0, 0)


class TestVelocity:
    def test_zero_distance(self):
        assert velocity(0.0, 50.0) == 0.0

    @pytest.mark.parametrize("srt_ms,expected", [
        (89.31, 40.31), (91.30, 39.43), (95.49, 37.70), (102.30, 35.19), (104.32, 34.51)])
    def test_reference_speed_table(self, srt_ms, expected):
        assert velocity(1.0, srt_ms) == pytest.approx(expected, abs=0.01)

    def test_monotone_decreasing_in_each_component(self):
        base = velocity(1.0, e2e_srt(10, 20, 5))
        assert velocity(1.0, e2e_srt(11, 20, 5)) < base
        assert velocity(1.0, e2e_srt(10, 21, 5)) < base
        assert velocity(1.0, e2e_srt(10, 20, 6)) < base

    def test_validation(self):
        with pytest.raises(ValueError):
            velocity(1.0, 0.0)
        with pytest.raises(ValueError):
            velocity(-1.0, 10.0)


class TestDemandedThroughput:
    def test_small_stream_fits_both(self):
        demand = demanded_throughput(VideoConfig(fps=20, mean_frame_bytes=14_000))
        assert demand.mbps == pytest.approx(2.24)
        assert demand.fits(54.6) and demand.fits(32.2)

    def test_d1_mjpeg_exceeds_4g(self):
        demand = demanded_throughput(VideoConfig(encoder=Encoder.MJPEG, resolution=Resolution.D1))
        assert demand.mbps == pytest.approx(35.2)
        assert demand.verdicts[32.2] is CapVerdict.EXCEEDS
        assert demand.verdicts[54.6] is CapVerdict.FITS

    def test_hd_mjpeg_exceeds_4g_fits_5g(self):
        demand = demanded_throughput(VideoConfig(encoder=Encoder.MJPEG, resolution=Resolution.HD))
        assert demand.mbps == pytest.approx(54.4)
        assert demand.verdicts[32.2] is CapVerdict.EXCEEDS
        assert demand.verdicts[54.6] is CapVerdict.FITS

    def test_raw_rate_verdicts(self):
        demand = throughput_verdicts(60.0)
        assert demand.verdicts[54.6] is CapVerdict.EXCEEDS


class TestImprovementPct:
    def test_no_change(self):
        assert improvement_pct(100, 100) == 0.0

    def test_two_thirds_reduction(self):
        assert improvement_pct(100, 34) == pytest.approx(66.0)

    def test_partial_reduction(self):
        assert improvement_pct(50, 38.5) == pytest.approx(23.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            improvement_pct(0, 1)


class TestBuildReport:
    def _report(self, run_cfg, **opt_kwargs):
        result = emulator.run(run_cfg)
        analysis = analyze_captures(result.records[Tap.UE], result.records[Tap.CORE],
                                    result.records[Tap.APP], result.ntp)
        return analysis, build_report(analysis, ReportOptions(**opt_kwargs))

    def test_video_run_produces_full_report(self):
        analysis, report = self._report(video_run(duration_s=1.0, cv=0.1, seed=41, pings=10))
        assert report.absent == ()
        assert report.availability_pct == 100.0
        assert report.owd_frame is not None
        assert report.e2e_srt_p95_ms is not None
        assert report.velocity_kmh and 1.0 in report.velocity_kmh
        assert report.demand is not None

    def test_report_fields_equal_direct_operations(self):
        analysis, report = self._report(video_run(duration_s=1.0, cv=0.1, seed=42))
        frame_vals = analysis.owd_frame_up.values_ms
        assert report.reliability.latency_at_percentile_ms == latency_at(frame_vals, 0.95)
        assert report.e2e_srt_p95_ms == pytest.approx(
            e2e_srt(latency_at(frame_vals, 0.95), 20.3, 5.0))
        assert report.velocity_kmh[1.0] == pytest.approx(
            velocity(1.0, report.e2e_srt_p95_ms))
        assert report.availability_pct == availability(analysis.sent_uplink,
                                                       analysis.delivered_uplink)

    def test_missing_video_marks_frame_kpis_absent(self):
        analysis, report = self._report(ping_run(count=5))
        assert "STREAM-frame" in report.absent
        assert "STREAM-packet" in report.absent
        assert report.classes["CTRL"] is not None
        assert report.owd_frame is None
        assert report.e2e_srt_p95_ms is None
        rows = report_rows(report)
        empty = [r for r in rows if r["class"] == "STREAM-frame"]
        assert empty and empty[0]["value"] == ""

    def test_sigma_attached_to_owd_means(self):
        analysis, report = self._report(video_run(duration_s=0.5, cv=0.1, seed=43,
                                                  clocks=None))
        # perfect clocks still estimate sigma (zero) from the trace
        assert report.owd_packet.sigma_quadrature_ms == pytest.approx(0.0)
        assert report.owd_packet.sigma_linear_ms == pytest.approx(0.0)

    def test_reliability_bound_fraction(self):
        analysis, report = self._report(video_run(duration_s=1.0, cv=0.1, seed=44),
                                        reliability_bound_ms=10_000.0)
        assert report.reliability.fraction_within_bound == 1.0

    def test_report_files_round_trip(self, tmp_path):
        _, report = self._report(video_run(duration_s=0.5, cv=0.1, seed=45))
        rows = report_rows(report)
        write_report_csv(tmp_path / "report.csv", rows)
        write_report_ndjson(tmp_path / "report.ndjson", rows)
        csv_lines = (tmp_path / "report.csv").read_text().strip().splitlines()
        ndjson_lines = (tmp_path / "report.ndjson").read_text().strip().splitlines()
        assert len(csv_lines) == len(rows) + 1  # header
        assert len(ndjson_lines) == len(rows)
        assert csv_lines[0] == "scenario,tech,range,class,metric,value,unit,sigma"
