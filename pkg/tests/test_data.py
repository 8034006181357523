import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixrocket.data import (
    RawSession,
    Trial,
    TrialDataset,
    load_dataset,
    load_raw_session,
    save_dataset,
    save_raw_session,
)
from fixrocket.errors import (
    DataError,
    FormatError,
    IncompatibilityError,
    IntegrityError,
    SchemaError,
    SequencingError,
)

from conftest import make_dataset, make_trial, raw_session_io, raw_session_text


class TestRawSessionParsing:
    def test_well_formed_file_preserves_onset_count(self):
        session = load_raw_session(
            raw_session_io(n=6600, onsets=tuple(range(500, 6500, 500)))
        )
        assert session.target_onsets.size == 12
        assert session.n_samples == 6600

    def test_duration_reported_in_summary(self):
        session = load_raw_session(raw_session_io(n=6600))
        assert session.duration_s == pytest.approx(22.0)
        assert "22.0 s" in session.summary()

    def test_missing_event_column_is_schema_error(self):
        text = raw_session_text().replace(",event", ",evt")
        with pytest.raises(SchemaError):
            load_raw_session(io.StringIO(text))

    def test_malformed_header_is_format_error(self):
        with pytest.raises(FormatError):
            load_raw_session(io.StringIO("#something-else\n"))

    def test_missing_metadata_key_is_format_error(self):
        text = raw_session_text().replace("distance_cm=60,", "").replace(
            ",distance_cm=60", ""
        )
        with pytest.raises(FormatError):
            load_raw_session(io.StringIO(text))

    def test_non_monotonic_time_is_sequencing_error(self):
        lines = raw_session_text(n=10).splitlines()
        lines[5], lines[6] = lines[6], lines[5]
        with pytest.raises(SequencingError):
            load_raw_session(io.StringIO("\n".join(lines) + "\n"))

    def test_row_count_preserved(self):
        session = load_raw_session(raw_session_io(n=777))
        assert session.n_samples == 777

    def test_round_trip_through_writer(self):
        session = load_raw_session(raw_session_io(n=600, onsets=(100, 580)))
        buf = io.StringIO()
        save_raw_session(session, buf)
        again = load_raw_session(io.StringIO(buf.getvalue()))
        np.testing.assert_array_equal(session.left_gaze, again.left_gaze)
        np.testing.assert_array_equal(session.target_onsets, again.target_onsets)
        assert again.condition == session.condition


class TestRawSessionInvariants:
    def test_onsets_must_increase(self):
        rng = np.random.default_rng(0)
        with pytest.raises(SequencingError):
            RawSession(
                subject_id="a",
                condition="HC",
                task="pro",
                sample_rate=300.0,
                left_gaze=rng.standard_normal((500, 2)),
                right_gaze=rng.standard_normal((500, 2)),
                target_onsets=np.array([100, 100]),
            )

    def test_minimum_length_enforced(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DataError):
            RawSession(
                subject_id="a",
                condition="HC",
                task="pro",
                sample_rate=300.0,
                left_gaze=rng.standard_normal((100, 2)),
                right_gaze=rng.standard_normal((100, 2)),
                target_onsets=np.array([50]),
            )

    def test_label_pools_pd_conditions(self):
        rng = np.random.default_rng(0)
        for condition, label in (("PD_ON", "PD"), ("PD_OFF", "PD"), ("HC", "HC")):
            s = RawSession(
                subject_id="a",
                condition=condition,
                task="anti",
                sample_rate=300.0,
                left_gaze=rng.standard_normal((500, 2)),
                right_gaze=rng.standard_normal((500, 2)),
                target_onsets=np.array([450]),
            )
            assert s.label == label


class TestTrialInvariants:
    def test_shape_enforced(self, rng):
        with pytest.raises(DataError):
            Trial(
                channels=rng.standard_normal((4, 439)),
                subject_id="a",
                condition="HC",
                task="pro",
                session_id="a-s0",
                trial_index=0,
            )

    def test_non_finite_rejected(self, rng):
        bad = rng.standard_normal((4, 440))
        bad[2, 17] = np.nan
        with pytest.raises(DataError):
            Trial(
                channels=bad,
                subject_id="a",
                condition="HC",
                task="pro",
                session_id="a-s0",
                trial_index=0,
            )

    def test_subject_cannot_mix_classes(self, rng):
        t1 = make_trial(rng, subject_id="x001", condition="HC")
        t2 = make_trial(rng, subject_id="x001", condition="PD_ON")
        with pytest.raises(DataError):
            TrialDataset(trials=(t1, t2))

    def test_subject_index_covers_every_trial_once(self, toy_dataset):
        seen = [i for idx in toy_dataset.subject_index.values() for i in idx]
        assert sorted(seen) == list(range(len(toy_dataset)))


class TestDatasetPersistence:
    def test_round_trip_bit_exact(self, toy_dataset):
        buf = io.StringIO()
        save_dataset(toy_dataset, buf)
        again = load_dataset(io.StringIO(buf.getvalue()))
        assert len(again) == len(toy_dataset)
        for a, b in zip(toy_dataset.trials, again.trials):
            np.testing.assert_array_equal(a.channels, b.channels)
            assert (a.subject_id, a.condition, a.task, a.session_id, a.trial_index) \
                == (b.subject_id, b.condition, b.task, b.session_id, b.trial_index)

    def test_empty_dataset_round_trips(self):
        empty = TrialDataset(trials=())
        buf = io.StringIO()
        save_dataset(empty, buf)
        again = load_dataset(io.StringIO(buf.getvalue()))
        assert len(again) == 0

    def test_unknown_schema_version_rejected(self, toy_dataset):
        buf = io.StringIO()
        save_dataset(toy_dataset, buf)
        text = buf.getvalue().replace("schema_version=1", "schema_version=99")
        with pytest.raises(IncompatibilityError):
            load_dataset(io.StringIO(text))

    def test_truncated_file_is_integrity_error(self, toy_dataset):
        buf = io.StringIO()
        save_dataset(toy_dataset, buf)
        lines = buf.getvalue().splitlines()
        truncated = "\n".join(lines[:-2]) + "\n"
        with pytest.raises(IntegrityError):
            load_dataset(io.StringIO(truncated))

    def test_preprocessing_parameters_survive(self):
        ds = make_dataset(cutoff_hz=20.0, filter_order=8)
        buf = io.StringIO()
        save_dataset(ds, buf)
        again = load_dataset(io.StringIO(buf.getvalue()))
        assert again.cutoff_hz == 20.0
        assert again.filter_order == 8

    @settings(max_examples=20, deadline=None)
    @given(
        n_subjects=st.integers(min_value=1, max_value=3),
        n_trials=st.integers(min_value=1, max_value=3),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_round_trip_property(self, n_subjects, n_trials, seed):
        ds = make_dataset(
            n_subjects_per_class=n_subjects, trials_per_subject=n_trials, seed=seed
        )
        buf = io.StringIO()
        save_dataset(ds, buf)
        again = load_dataset(io.StringIO(buf.getvalue()))
        for a, b in zip(ds.trials, again.trials):
            np.testing.assert_array_equal(a.channels, b.channels)
