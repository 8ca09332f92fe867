"""Domain types, capture validation and the NDJSON wire format."""

import random

import pytest

from conftest import rec
from edgekpi.model import (
    ADDED_OWD_MS,
    CaptureFormatError,
    CaptureRecord,
    ClockModel,
    Direction,
    Encoder,
    FrameObservation,
    Marker,
    NtpSample,
    ProcessingModel,
    Proto,
    RangeBand,
    Resolution,
    Scenario,
    Tap,
    Tech,
    VideoConfig,
    default_mean_frame_bytes,
    read_capture_file,
    read_ntp_file,
    record_from_json,
    record_to_json,
    validate,
    write_capture_file,
    write_ntp_file,
)


def random_record(rng: random.Random) -> CaptureRecord:
    return CaptureRecord(
        tap=rng.choice(list(Tap)),
        t_us=rng.randrange(0, 10**12),
        flow=rng.randrange(0, 8),
        dir=rng.choice(list(Direction)),
        proto=rng.choice(list(Proto)),
        seq=rng.randrange(0, 10**9),
        ack=rng.randrange(0, 10**9),
        payload_len=rng.randrange(1, 65536),
        marker=rng.choice(list(Marker)),
        pid=rng.randrange(0, 10**9),
    )


class TestNdjsonRoundTrip:
    def test_random_records_round_trip(self):
        rng = random.Random(99)
        for _ in range(300):
            record = random_record(rng)
            assert record_from_json(record_to_json(record)) == record

    def test_file_round_trip(self, tmp_path):
        rng = random.Random(7)
        records = [random_record(rng) for _ in range(50)]
        path = tmp_path / "ue.ndjson"
        write_capture_file(path, records)
        assert read_capture_file(path) == records

    def test_field_names_and_enum_spelling(self):
        line = record_to_json(rec(tap=Tap.CORE, dir=Direction.DOWNLINK, proto=Proto.CTRL,
                                  marker=Marker.FRAME_BOUNDARY, payload_len=9, pid=5))
        assert '"tap":"CORE"' in line
        assert '"dir":"DOWNLINK"' in line
        assert '"proto":"CTRL"' in line
        assert '"marker":"FRAME_BOUNDARY"' in line
        assert '"len":9' in line
        assert '"pid":5' in line

    def test_bad_json_reports_line_number(self, tmp_path):
        path = tmp_path / "ue.ndjson"
        path.write_text(record_to_json(rec()) + "\n{broken\n")
        with pytest.raises(CaptureFormatError, match="line 2"):
            read_capture_file(path)

    def test_missing_field_rejected(self):
        with pytest.raises(CaptureFormatError):
            record_from_json('{"tap":"UE"}')

    def test_unknown_enum_rejected(self):
        line = record_to_json(rec()).replace('"UPLINK"', '"SIDEWAYS"')
        with pytest.raises(CaptureFormatError):
            record_from_json(line)

    def test_ntp_file_round_trip(self, tmp_path):
        samples = [NtpSample(0.0, Tap.UE, 0.25), NtpSample(10.0, Tap.APP, -0.5)]
        path = tmp_path / "ntp.ndjson"
        write_ntp_file(path, samples)
        assert read_ntp_file(path) == samples


class TestValidate:
    def test_empty_stream_valid(self):
        assert validate([]).ok

    def test_single_record_valid(self):
        assert validate([rec()]).ok

    def test_duplicate_pid_same_tap(self):
        result = validate([rec(pid=1, seq=0), rec(pid=1, seq=100)])
        assert not result.ok
        assert result.index == 1
        assert "duplicate pid" in result.error

    def test_same_pid_on_other_tap_is_fine(self):
        assert validate([rec(pid=1, tap=Tap.UE), rec(pid=1, tap=Tap.APP)]).ok

    def test_negative_payload(self):
        result = validate([rec(payload_len=-1)])
        assert not result.ok and result.index == 0
        assert "payload" in result.error

    def test_boundary_requires_payload(self):
        result = validate([rec(marker=Marker.FRAME_BOUNDARY, payload_len=0)])
        assert not result.ok

    def test_seq_regression_at_origin(self):
        records = [rec(seq=1000, payload_len=100), rec(seq=0, payload_len=100)]
        result = validate(records)
        assert not result.ok and result.index == 1
        assert "regression" in result.error

    def test_seq_regression_only_checked_at_origin_tap(self):
        # Downlink records at the UE are arrivals, not emissions.
        records = [rec(dir=Direction.DOWNLINK, seq=1000), rec(dir=Direction.DOWNLINK, seq=0)]
        assert validate(records).ok

    def test_acks_do_not_trip_seq_ordering(self):
        records = [rec(seq=500, payload_len=100),
                   rec(seq=0, payload_len=0, ack=600),
                   rec(seq=600, payload_len=100)]
        assert validate(records).ok


class TestScenario:
    @pytest.mark.parametrize("range_band,expected", [
        (RangeBand.EDGE, 0.0), (RangeBand.REGIONAL, 2.0), (RangeBand.NATIONAL, 4.0)])
    def test_added_owd_fixed_map(self, range_band, expected):
        tech = Tech.FIVE_G
        assert Scenario(tech=tech, range=range_band).added_owd == expected
        assert ADDED_OWD_MS[range_band] == expected

    def test_edge_requires_5g(self):
        with pytest.raises(ValueError, match="EDGE"):
            Scenario(tech=Tech.FOUR_G, range=RangeBand.EDGE)

    def test_added_owd_contradiction_rejected(self):
        with pytest.raises(ValueError, match="added_owd"):
            Scenario(tech=Tech.FIVE_G, range=RangeBand.REGIONAL, added_owd=3.0)
        # explicit but consistent is fine
        assert Scenario(tech=Tech.FIVE_G, range=RangeBand.REGIONAL, added_owd=2.0).added_owd == 2.0

    def test_bandwidth_cap_defaults(self):
        assert Scenario(tech=Tech.FIVE_G, range=RangeBand.EDGE).bandwidth_cap == 54.6
        assert Scenario(tech=Tech.FOUR_G, range=RangeBand.REGIONAL).bandwidth_cap == 32.2

    def test_base_owd_defaults_by_tech(self):
        s5 = Scenario(tech=Tech.FIVE_G, range=RangeBand.EDGE)
        s4 = Scenario(tech=Tech.FOUR_G, range=RangeBand.NATIONAL)
        assert (s5.base_owd_up, s5.base_owd_down) == (8.0, 4.0)
        assert (s4.base_owd_up, s4.base_owd_down) == (20.0, 10.0)

    def test_loss_prob_range(self):
        with pytest.raises(ValueError):
            Scenario(tech=Tech.FIVE_G, range=RangeBand.EDGE, loss_prob=1.5)

    def test_negative_jitter_rejected(self):
        with pytest.raises(ValueError):
            Scenario(tech=Tech.FIVE_G, range=RangeBand.EDGE, jitter_std=-1)


class TestVideoConfig:
    @pytest.mark.parametrize("encoder,resolution,expected", [
        (Encoder.MJPEG, Resolution.VGA, 120_000),
        (Encoder.MJPEG, Resolution.D1, 220_000),
        (Encoder.MJPEG, Resolution.HD, 340_000),
        (Encoder.H264, Resolution.VGA, 30_000),
        (Encoder.H264, Resolution.D1, 55_000),
        (Encoder.H264, Resolution.HD, 85_000),
    ])
    def test_default_frame_bytes(self, encoder, resolution, expected):
        assert default_mean_frame_bytes(encoder, resolution) == expected
        assert VideoConfig(encoder=encoder, resolution=resolution).mean_frame_bytes == expected

    def test_resolution_pixel_counts(self):
        assert (Resolution.VGA.width, Resolution.VGA.height) == (640, 480)
        assert (Resolution.D1.width, Resolution.D1.height) == (720, 576)
        assert (Resolution.HD.width, Resolution.HD.height) == (1280, 720)

    def test_validation(self):
        with pytest.raises(ValueError):
            VideoConfig(fps=0)
        with pytest.raises(ValueError):
            VideoConfig(frame_size_cv=-0.1)
        with pytest.raises(ValueError):
            VideoConfig(mean_frame_bytes=0)


class TestProcessingModel:
    def test_defaults(self):
        p = ProcessingModel()
        assert p.total_ms == 20.3
        assert sum(p.stage_fractions) == pytest.approx(1.0)

    def test_fraction_sum_enforced_at_construction(self):
        with pytest.raises(ValueError, match="sum to 1"):
            ProcessingModel(stage_fractions=(0.25, 0.25, 0.25, 0.2))

    def test_fraction_sum_tolerance(self):
        ProcessingModel(stage_fractions=(0.25, 0.6, 0.1, 0.05 + 5e-10))
        with pytest.raises(ValueError):
            ProcessingModel(stage_fractions=(0.25, 0.6, 0.1, 0.05 + 5e-9))

    def test_negative_fraction_rejected(self):
        with pytest.raises(ValueError):
            ProcessingModel(stage_fractions=(1.2, -0.2, 0.0, 0.0))

    def test_stage_ms_split(self):
        p = ProcessingModel(total_ms=20.0, stage_fractions=(0.5, 0.25, 0.15, 0.1))
        assert p.stage_ms() == (10.0, 5.0, 3.0, 2.0)


class TestClockModel:
    def test_default_noise_profile(self):
        c = ClockModel()
        assert c.sigmas_ms() == (0.387, 0.317, 0.117)
        assert c.resync_interval_s == 10.0

    def test_perfect(self):
        c = ClockModel.perfect()
        assert c.offsets_ms() == (0.0, 0.0, 0.0)
        assert c.sigmas_ms() == (0.0, 0.0, 0.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            ClockModel(sigma_ue_ms=-0.1)
        with pytest.raises(ValueError):
            ClockModel(resync_interval_s=0)


def test_frame_observation_ordering_enforced():
    with pytest.raises(ValueError):
        FrameObservation(frame_idx=0, byte_len=10, t_first_ue=100.0, t_last_ue=50.0,
                         t_ack_ue=None, t_first_app=None, t_last_app=None, complete=False)
