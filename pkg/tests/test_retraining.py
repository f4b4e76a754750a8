import json
import threading

import pytest

from sentinel.etd.detector import score_event, train_model
from sentinel.etd.gaussian import TrainingError
from sentinel.events import parse_timestamp
from sentinel.harness import Scenario, gen_etd_stream, gen_normal_rows
from sentinel.retraining import (
    CorruptArtifactError,
    ModelRegistry,
    NoModelError,
    RetrainConfig,
    ScheduleError,
    ScheduleSpec,
    load_artifact,
    load_current,
    persist_artifact,
    retrain,
    schedule_retrain,
    select_window,
    swap_model,
)

T0 = parse_timestamp("2025-06-01T00:00:00Z")


def _timed(rows, start=T0, spacing=60.0):
    return [(start.add_seconds(i * spacing), row) for i, row in enumerate(rows)]


class TestSelectWindow:
    def test_all_too_old_aborts(self):
        rows = _timed(gen_normal_rows(10, 0), start=T0.add_seconds(-90 * 86400))
        with pytest.raises(TrainingError):
            select_window(rows, T0, 30)

    def test_boundary_included(self):
        row = gen_normal_rows(1, 0)[0]
        boundary = T0.add_seconds(-30 * 86400)
        assert select_window([(boundary, row)], T0, 30) == [(boundary, row)]

    def test_matches_filter_oracle(self):
        rows = _timed(gen_normal_rows(2160, 1), start=T0.add_seconds(-90 * 86400),
                      spacing=3600.0)
        got = select_window(rows, T0, 30)
        start = T0.add_seconds(-30 * 86400)
        want = sorted([p for p in rows if start <= p[0] <= T0], key=lambda p: p[0])
        assert got == want


class TestRetrain:
    def test_stationary_data_accepted(self):
        rows = _timed(gen_normal_rows(3000, seed=2))
        artifact, report = retrain(rows, RetrainConfig(quantile=0.99), trained_at=T0)
        assert report.accepted
        assert report.holdout_flag_rate <= 0.02
        assert report.train_size == 2400 and report.holdout_size == 600

    def test_drifted_holdout_rejected(self):
        normal = gen_normal_rows(2400, seed=3)
        drifted, _ = gen_etd_stream(Scenario(seed=4, n_rows=600, anomaly_rate=0.0,
                                             drift_shift_sigma=6.0))
        # drift applies to the second half of that stream; keep only drifted rows
        drifted = drifted[300:]
        rows = _timed(normal + drifted)
        cfg = RetrainConfig(quantile=0.99, holdout_fraction=0.1)
        artifact, report = retrain(rows, cfg, trained_at=T0)
        assert not report.accepted
        assert report.holdout_flag_rate > cfg.max_holdout_flag_rate

    def test_empty_holdout_is_error(self):
        rows = _timed(gen_normal_rows(3, seed=5))
        with pytest.raises(TrainingError):
            retrain(rows, RetrainConfig(holdout_fraction=0.01))


class TestPersistence:
    def test_roundtrip_bit_equal_scores(self, tmp_path):
        artifact = train_model(gen_normal_rows(500, 6), trained_at=T0)
        path = persist_artifact(artifact, tmp_path)
        back = load_artifact(path)
        probe, _ = gen_etd_stream(Scenario(seed=7, n_rows=100, anomaly_rate=0.05))
        for row in probe:
            assert score_event(back, row).mahalanobis == score_event(artifact, row).mahalanobis
            assert score_event(back, row).iforest == score_event(artifact, row).iforest

    def test_corrupted_file_rejected(self, tmp_path):
        artifact = train_model(gen_normal_rows(200, 8), trained_at=T0)
        path = persist_artifact(artifact, tmp_path)
        data = path.read_text().replace(artifact.version, "deadbeefdeadbeef-0")
        path.write_text(data)
        with pytest.raises(CorruptArtifactError):
            load_artifact(path)

    def test_current_points_at_newest(self, tmp_path):
        a = train_model(gen_normal_rows(200, 9), trained_at=T0)
        b = train_model(gen_normal_rows(200, 10), trained_at=T0.add_seconds(60))
        persist_artifact(a, tmp_path)
        persist_artifact(b, tmp_path)
        assert (tmp_path / "current").read_text() == b.version
        assert load_current(tmp_path).version == b.version


class TestRegistry:
    def test_empty_registry_errors(self):
        with pytest.raises(NoModelError):
            ModelRegistry().get()

    def test_swap_idempotent(self):
        artifact = train_model(gen_normal_rows(200, 11), trained_at=T0)
        reg = ModelRegistry(artifact)
        swap_model(reg, artifact)
        assert reg.get() is artifact

    def test_concurrent_scoring_never_sees_mixed_state(self):
        old = train_model(gen_normal_rows(300, 12), trained_at=T0)
        new = train_model(gen_normal_rows(300, 13), trained_at=T0.add_seconds(60))
        reg = ModelRegistry(old)
        row = gen_normal_rows(1, 14)[0]
        versions = []
        errors = []
        barrier = threading.Barrier(9)

        def score_many():
            barrier.wait()
            for _ in range(1250):
                try:
                    artifact = reg.get()
                    score_event(artifact, row)
                    versions.append(artifact.version)
                except Exception as exc:  # pragma: no cover
                    errors.append(exc)

        def swapper():
            barrier.wait()
            reg.swap(new)

        threads = [threading.Thread(target=score_many) for _ in range(8)]
        threads.append(threading.Thread(target=swapper))
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert len(versions) == 10_000
        assert set(versions) <= {old.version, new.version}
        assert reg.get().version == new.version


class FakeClock:
    def __init__(self, start):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, secs):
        self.now = self.now.add_seconds(secs)


class TestSchedule:
    def test_weekly_three_triggers_in_three_weeks(self):
        clock = FakeClock(parse_timestamp("2025-06-01T00:00:00Z"))  # a Sunday
        end = parse_timestamp("2025-06-22T00:00:00Z")
        gen = schedule_retrain("0 3 * * 1", clock=clock,
                               stop=lambda: clock() >= end,
                               sleep=lambda s: clock.advance(s))
        fired = list(gen)
        assert [f.isoformat() for f in fired] == [
            "2025-06-02T03:00:00Z", "2025-06-09T03:00:00Z", "2025-06-16T03:00:00Z"]
        assert all(f.instant.weekday() == 0 and f.instant.hour == 3 for f in fired)

    def test_missed_ticks_coalesce(self):
        clock = FakeClock(parse_timestamp("2025-06-01T00:00:00Z"))
        gen = schedule_retrain("every 3600s", clock=clock,
                               sleep=lambda s: clock.advance(s))
        first = next(gen)
        assert first == parse_timestamp("2025-06-01T01:00:00Z")
        clock.advance(5 * 3600)  # process asleep across several ticks
        second = next(gen)  # exactly one catch-up trigger
        # the backlog never accumulates: the next fire is rescheduled from
        # the wake time, so the third trigger lands at 07:00, not 03:00
        third = next(gen)
        assert third == parse_timestamp("2025-06-01T07:00:00Z")

    @pytest.mark.parametrize("spec", ["61 * * * *", "* * *", "a b c d e", "every -5s"])
    def test_malformed_spec_rejected(self, spec):
        with pytest.raises(ScheduleError):
            ScheduleSpec.parse(spec)

    def test_interval_parse_units(self):
        assert ScheduleSpec.parse("every 2h").interval_secs == 7200
        assert ScheduleSpec.parse("every 1d").interval_secs == 86400
