import io
import json
import random

import pytest

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.trace import (
    TraceFormatError, load_trace, parse_trace, replay_iter, serialize_trace, validate_trace,
)


def _lines(*records):
    return [json.dumps(r) + "\n" for r in records]


SAMPLE = _lines(
    {"t": 0.0, "kind": "gps", "lat": 22.4, "lon": 114.2},
    {"t": 0.0, "kind": "imu", "accel": [0.0, 0.0, 9.81]},
    {"t": 1.0, "kind": "frame", "frame_id": "f1", "objects": ["Cup", "desk"]},
    {"t": 1.0, "kind": "audio", "vad": True, "transcript": "hello there"},
    {"t": 2.5, "kind": "annotation", "tools": [{"name": "GetDateTime", "args": {}}]},
)


class TestParseTrace:
    """Test cases for trace parsing."""

    def test_parse_keeps_file_order_and_duration(self):
        """Events come back in file order and duration is the last timestamp."""
        trace = parse_trace(SAMPLE)

        assert [e.kind for e in trace.events] == ["gps", "imu", "frame", "audio", "annotation"]
        assert trace.duration_s == 2.5
        assert trace.annotations()[0].payload.window_s == 5.0
        assert len(trace.frames()) == 1

    def test_parse_reads_byte_streams(self):
        """A binary stream parses like its text lines."""
        data = "".join(SAMPLE).encode("utf-8")
        trace = parse_trace(io.BytesIO(data))

        assert len(trace.events) == 5

    def test_default_window_applies_to_annotations(self):
        """Annotations without window_s take the configured default."""
        trace = parse_trace(SAMPLE, default_window_s=8.0)

        assert trace.annotations()[0].payload.window_s == 8.0

    def test_unsorted_trace_rejected_with_line(self):
        """Out-of-order timestamps are a format error naming the line."""
        lines = _lines({"t": 2.0, "kind": "gps", "lat": 0, "lon": 0},
                       {"t": 1.0, "kind": "gps", "lat": 0, "lon": 0})
        with pytest.raises(TraceFormatError) as exc:
            parse_trace(lines)

        assert exc.value.line == 2
        assert "unsorted" in str(exc.value)

    def test_malformed_json_rejected(self):
        """Non-JSON lines are a format error."""
        with pytest.raises(TraceFormatError, match="malformed line 1"):
            parse_trace(["{not json\n"])

    def test_unknown_kind_rejected(self):
        """Unknown kinds are a format error."""
        with pytest.raises(TraceFormatError):
            parse_trace(_lines({"t": 0, "kind": "lidar"}))

    def test_missing_keys_rejected(self):
        """Records without t or kind are rejected."""
        with pytest.raises(TraceFormatError):
            parse_trace(_lines({"kind": "gps", "lat": 0, "lon": 0}))

    def test_imu_needs_exactly_one_form(self):
        """IMU records carry accel or motion_state, never both."""
        with pytest.raises(TraceFormatError):
            parse_trace(_lines({"t": 0, "kind": "imu", "accel": [0, 0, 9.8], "motion_state": "static"}))

    def test_empty_trace_rejected(self):
        """A file with no events is not a trace."""
        with pytest.raises(TraceFormatError, match="empty"):
            parse_trace(["\n", "  \n"])

    def test_non_utf8_rejected(self):
        """Undecodable bytes are a format error."""
        with pytest.raises(TraceFormatError, match="UTF-8"):
            parse_trace(io.BytesIO(b"\xff\xfe\n"))

    @pytest.mark.parametrize("raw_t", ["Infinity", "-Infinity", "NaN", "1e999"])
    def test_non_finite_time_rejected(self, raw_t):
        """Timestamps must be finite numbers."""
        line = '{"t": %s, "kind": "gps", "lat": 0, "lon": 0}\n' % raw_t
        with pytest.raises(TraceFormatError, match="line 1"):
            parse_trace([line])

    @pytest.mark.parametrize("line", [
        '{"t": 0, "kind": "annotation", "window_s": Infinity}\n',
        '{"t": 0, "kind": "gps", "lat": NaN, "lon": 0}\n',
        '{"t": 0, "kind": "imu", "accel": [0, 0, Infinity]}\n',
    ])
    def test_non_finite_payload_fields_rejected(self, line):
        """Payload numbers must be finite too."""
        with pytest.raises(TraceFormatError):
            parse_trace([line])

    def test_serialize_parses_back_equal(self):
        """Serialized traces parse back to an equal trace."""
        trace = parse_trace(SAMPLE)
        again = parse_trace(io.StringIO(serialize_trace(trace)))

        assert again == trace

    def test_load_trace_from_disk(self, tmp_path):
        """load_trace reads the same events as parse_trace."""
        path = tmp_path / "trace.jsonl"
        path.write_text("".join(SAMPLE), encoding="utf-8")

        assert load_trace(path) == parse_trace(SAMPLE)

    def test_replay_yields_each_event_once_in_order(self):
        """Replay order is timestamp order, file order among ties."""
        trace = parse_trace(SAMPLE)
        replayed = list(replay_iter(trace))

        assert replayed == list(trace.events)
        assert [e.t for e in replayed] == sorted(e.t for e in replayed)


class TestValidateTrace:
    """Test cases for trace validation reports."""

    def test_valid_trace(self):
        """A clean trace validates with counts per modality."""
        report = validate_trace(parse_trace(SAMPLE))

        assert report.ok
        assert report.counts["frame"] == 1
        assert report.counts["annotation"] == 1
        assert report.annotation_count == 1
        assert report.violations == []

    def test_duplicate_frame_ids_reported(self):
        """Duplicate frame ids are violations, not exceptions."""
        trace = parse_trace(_lines(
            {"t": 0, "kind": "frame", "frame_id": "a", "objects": ["x"]},
            {"t": 1, "kind": "frame", "frame_id": "a", "objects": ["y"]},
        ))
        report = validate_trace(trace)

        assert not report.ok
        assert any("duplicate frame_id" in v for v in report.violations)

    def test_transcript_without_voice_activity_reported(self):
        """A transcript on a silent audio record is a violation."""
        trace = parse_trace(_lines({"t": 0, "kind": "audio", "vad": False, "transcript": "hi"}))
        report = validate_trace(trace)

        assert not report.ok
        assert any("transcript without voice activity" in v for v in report.violations)

    def test_frame_without_content_reported(self):
        """Frames need an image reference or object labels."""
        trace = parse_trace(_lines({"t": 0, "kind": "frame", "frame_id": "a"}))

        assert not validate_trace(trace).ok

    def test_annotation_need_false_reported(self):
        """Annotations mark moments of need only."""
        trace = parse_trace(_lines({"t": 0, "kind": "annotation", "need": False}))

        assert not validate_trace(trace).ok

    def test_zero_window_annotation_reported(self):
        """Annotation windows must be positive."""
        trace = parse_trace(_lines({"t": 0, "kind": "annotation", "window_s": 0}))
        report = validate_trace(trace)

        assert not report.ok
        assert any("window_s must be > 0" in v for v in report.violations)

    def test_random_traces(self):
        """Clean random traces validate; one bad window always yields a violation."""
        rng = random.Random(42)
        for _ in range(100):
            times = sorted(round(rng.uniform(0, 300), 1) for _ in range(rng.randint(1, 30)))
            records = []
            for i, t in enumerate(times):
                kind = rng.choice(["gps", "imu", "frame", "audio", "annotation"])
                record = {"t": t, "kind": kind}
                if kind == "gps":
                    record.update(lat=rng.uniform(-90, 90), lon=rng.uniform(-180, 180))
                elif kind == "imu":
                    record["accel"] = [rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(9.81, 1)]
                elif kind == "frame":
                    record.update(frame_id=f"f{i}", objects=rng.sample(["cup", "desk", "tree"], 2))
                elif kind == "audio":
                    record["vad"] = rng.random() < 0.5
                else:
                    record["window_s"] = rng.uniform(0.5, 10)
                records.append(record)
            report = validate_trace(parse_trace(_lines(*records)))

            assert report.ok
            assert sum(report.counts.values()) == len(records)

            bad = dict(records[-1], kind="annotation", window_s=rng.choice([0, -1.5]))
            for key in ("lat", "lon", "accel", "frame_id", "objects", "vad"):
                bad.pop(key, None)
            report = validate_trace(parse_trace(_lines(*records[:-1], bad)))
            assert any("window_s must be > 0" in v for v in report.violations)

    def test_gaps_above_threshold_listed(self):
        """Gaps per modality longer than the threshold are listed, annotations excluded."""
        trace = parse_trace(_lines(
            {"t": 0, "kind": "gps", "lat": 0, "lon": 0},
            {"t": 3, "kind": "annotation"},
            {"t": 20, "kind": "annotation"},
            {"t": 30, "kind": "gps", "lat": 0, "lon": 0},
        ))
        report = validate_trace(trace, gap_threshold_s=5.0)

        assert report.ok
        assert [(g.kind, g.start_t, g.end_t) for g in report.gaps] == [("gps", 0.0, 30.0)]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
