"""Rating ingestion: discretization, rater math, CSV parsing, manifests."""

import json

import numpy as np
import pytest

from engagekit.errors import (
    AlignmentError,
    DataError,
    DegenerateInputError,
    ParseError,
    ValueRangeError,
)
from engagekit.ingest import (
    ContinuousEngagementSeries,
    DatasetManifest,
    EngagementLevel,
    LabeledSequence,
    LabeledSequenceSet,
    RaterSeries,
    SessionFiles,
    average_raters,
    build_labeled_dataset,
    discretize_engagement,
    icc_absolute_agreement,
    level_fractions,
    load_dataset,
    load_embedding_table,
    load_gallery,
    load_manifest,
    load_rating_table,
    merge_session_ratings,
    save_dataset,
)
from engagekit.tracklets import Sequence

from .oracles import discretize_reference, icc_two_way_average


def make_sequence(student="s1", session="x", second=0, modality="attention", fill=0.5):
    return Sequence(
        student_id=student,
        session_id=session,
        second_index=second,
        modality=modality,
        frames=np.full((24, 3), fill),
    )


class TestDiscretize:
    def test_band_edges(self):
        # low band is closed above, medium half-open, high reaches 2.0
        assert discretize_engagement(-2.0) == EngagementLevel.LOW
        assert discretize_engagement(0.35) == EngagementLevel.LOW
        assert discretize_engagement(0.350001) == EngagementLevel.MEDIUM
        assert discretize_engagement(0.65) == EngagementLevel.MEDIUM
        assert discretize_engagement(0.650001) == EngagementLevel.HIGH
        assert discretize_engagement(2.0) == EngagementLevel.HIGH

    def test_interior_points(self):
        assert discretize_engagement(-0.7) == EngagementLevel.LOW
        assert discretize_engagement(0.5) == EngagementLevel.MEDIUM
        assert discretize_engagement(1.4) == EngagementLevel.HIGH

    def test_out_of_range(self):
        with pytest.raises(ValueRangeError):
            discretize_engagement(2.0001)
        with pytest.raises(ValueRangeError):
            discretize_engagement(-2.1)
        with pytest.raises(ValueRangeError):
            discretize_engagement(float("nan"))

    def test_against_reference(self, rng):
        for v in rng.uniform(-2, 2, size=300):
            assert int(discretize_engagement(v)) == discretize_reference(v)

    def test_custom_thresholds(self):
        assert discretize_engagement(0.0, (-0.5, 0.5)) == EngagementLevel.MEDIUM
        with pytest.raises(DataError):
            discretize_engagement(0.0, (0.5, 0.5))


class TestLevels:
    def test_labels(self):
        assert EngagementLevel.LOW.label == "low"
        assert EngagementLevel.from_label("HIGH") == EngagementLevel.HIGH
        with pytest.raises(ValueRangeError):
            EngagementLevel.from_label("extreme")

    def test_int_values(self):
        assert [int(lv) for lv in EngagementLevel] == [0, 1, 2]


class TestAverageRaters:
    def test_mean(self):
        a = RaterSeries("a", {0: 1.0, 1: -1.0})
        b = RaterSeries("b", {0: 0.0, 1: 1.0})
        merged = average_raters(a, b)
        assert merged.values == {0: 0.5, 1: 0.0}

    def test_misaligned_seconds(self):
        a = RaterSeries("a", {0: 1.0, 2: 0.0})
        b = RaterSeries("b", {0: 0.0, 3: 0.0})
        with pytest.raises(AlignmentError, match=r"\[2\]"):
            average_raters(a, b)

    def test_value_range_enforced_at_construction(self):
        with pytest.raises(ValueRangeError):
            RaterSeries("a", {0: 2.5})
        with pytest.raises(DataError):
            RaterSeries("a", {-1: 0.0})


class TestIcc:
    def test_matches_anova_oracle(self, rng):
        for _ in range(25):
            n = int(rng.integers(3, 40))
            x = rng.uniform(-2, 2, size=(n, 2))
            a = RaterSeries("a", {i: float(x[i, 0]) for i in range(n)})
            b = RaterSeries("b", {i: float(x[i, 1]) for i in range(n)})
            want = icc_two_way_average(x)
            got = icc_absolute_agreement(a, b)
            assert got == pytest.approx(np.clip(want, -1, 1), abs=1e-12)

    def test_perfect_agreement(self):
        vals = {0: -1.0, 1: 0.2, 2: 1.5, 3: 0.9}
        a = RaterSeries("a", dict(vals))
        b = RaterSeries("b", dict(vals))
        assert icc_absolute_agreement(a, b) == pytest.approx(1.0)

    def test_uses_shared_seconds_only(self):
        a = RaterSeries("a", {0: -1.0, 1: 0.2, 2: 1.5, 9: 2.0})
        b = RaterSeries("b", {0: -1.0, 1: 0.2, 2: 1.5, 7: -2.0})
        assert icc_absolute_agreement(a, b) == pytest.approx(1.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateInputError):
            icc_absolute_agreement(
                RaterSeries("a", {0: 1.0}), RaterSeries("b", {0: 1.0})
            )
        with pytest.raises(DegenerateInputError):
            icc_absolute_agreement(
                RaterSeries("a", {0: 1.0, 1: 1.0}),
                RaterSeries("b", {0: 1.0, 1: 1.0}),
            )


class TestManifest:
    def write(self, tmp_path, payload):
        p = tmp_path / "manifest.json"
        p.write_text(json.dumps(payload))
        return p

    def base_payload(self):
        return {
            "modality_dims": {"attention": 2},
            "sessions": [
                {
                    "session_id": "s",
                    "embeddings": {"cam": "e.csv"},
                    "ratings": {"r1": "a.csv", "r2": "b.csv"},
                }
            ],
        }

    def test_minimal(self, tmp_path):
        m = load_manifest(self.write(tmp_path, self.base_payload()))
        assert m.modality_dims == {"attention": 2}
        assert m.fps == 24
        assert m.thresholds == (0.35, 0.65)
        assert m.sessions[0].embeddings["cam"] == tmp_path / "e.csv"

    def test_unknown_key_rejected(self, tmp_path):
        payload = self.base_payload()
        payload["freq"] = 30
        with pytest.raises(ParseError, match="unknown keys"):
            load_manifest(self.write(tmp_path, payload))

    def test_unknown_session_key_rejected(self, tmp_path):
        payload = self.base_payload()
        payload["sessions"][0]["extra"] = 1
        with pytest.raises(ParseError, match="unknown keys"):
            load_manifest(self.write(tmp_path, payload))

    def test_wrong_fps_rejected(self, tmp_path):
        payload = self.base_payload()
        payload["fps"] = 30
        with pytest.raises(DataError, match="fps"):
            load_manifest(self.write(tmp_path, payload))

    def test_one_rater_rejected(self, tmp_path):
        payload = self.base_payload()
        payload["sessions"][0]["ratings"] = {"r1": "a.csv"}
        with pytest.raises((ParseError, DataError)):
            load_manifest(self.write(tmp_path, payload))

    def test_bad_thresholds(self, tmp_path):
        payload = self.base_payload()
        payload["thresholds"] = [0.8, 0.2]
        with pytest.raises(DataError):
            load_manifest(self.write(tmp_path, payload))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_manifest(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "manifest.json"
        p.write_text("{nope")
        with pytest.raises(ParseError):
            load_manifest(p)


def table_manifest(dims=None, identity_dim=None):
    return DatasetManifest(
        modality_dims=dims or {"attention": 2, "affect": 3},
        sessions=[
            SessionFiles(session_id="s", embeddings={}, ratings={})
        ],
        identity_dim=identity_dim,
    )


class TestEmbeddingTable:
    HEADER = "session_id,student_id,camera_id,frame_index,modality,d0,d1,d2\n"

    def test_parses_rows(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(
            self.HEADER
            + "x,stu,cam,0,attention,1.0,2.0,\n"
            + "x,stu,cam,0,affect,0.1,0.2,0.3\n"
        )
        rows = load_embedding_table(p, table_manifest())
        assert len(rows) == 2
        att = [r for r in rows if r.modality == "attention"][0]
        assert att.vector.tolist() == [1.0, 2.0]
        aff = [r for r in rows if r.modality == "affect"][0]
        assert aff.vector.tolist() == [0.1, 0.2, 0.3]

    def test_trailing_cells_must_be_empty(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(self.HEADER + "x,stu,cam,0,attention,1.0,2.0,9.9\n")
        with pytest.raises(ParseError, match="must be empty"):
            load_embedding_table(p, table_manifest())

    def test_unknown_modality(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(self.HEADER + "x,stu,cam,0,gaze,1.0,2.0,\n")
        with pytest.raises(ParseError, match="unknown modality"):
            load_embedding_table(p, table_manifest())

    def test_non_contiguous_columns(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(
            "session_id,student_id,camera_id,frame_index,modality,d0,d2\n"
            "x,stu,cam,0,attention,1.0,2.0\n"
        )
        with pytest.raises(ParseError, match="non-contiguous"):
            load_embedding_table(p, table_manifest())

    def test_identity_columns_rejected(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(
            "session_id,student_id,camera_id,frame_index,modality,d0,d1,d2,id_d0\n"
            "x,stu,cam,0,attention,1,2,,0.5\n"
        )
        with pytest.raises(ParseError, match="id_d"):
            load_embedding_table(p, table_manifest())

    def test_bad_number(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(self.HEADER + "x,stu,cam,0,attention,one,2.0,\n")
        with pytest.raises(ParseError, match="row 2"):
            load_embedding_table(p, table_manifest())

    def test_negative_frame(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(self.HEADER + "x,stu,cam,-3,attention,1.0,2.0,\n")
        with pytest.raises(ParseError, match="negative"):
            load_embedding_table(p, table_manifest())


class TestRatingTable:
    def test_parses(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(
            "session_id,student_id,rater_id,second,value\n"
            "x,stu,r1,0,0.5\n"
            "x,stu,r1,1,-1.25\n"
        )
        table = load_rating_table(p)
        series = table[("x", "stu")]["r1"]
        assert series.values == {0: 0.5, 1: -1.25}

    def test_duplicate_second(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(
            "session_id,student_id,rater_id,second,value\n"
            "x,stu,r1,0,0.5\nx,stu,r1,0,0.6\n"
        )
        with pytest.raises(ParseError, match="duplicate"):
            load_rating_table(p)

    def test_header_must_match(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("session_id,student_id,second,value\nx,stu,0,0.5\n")
        with pytest.raises(ParseError, match="header"):
            load_rating_table(p)

    def test_out_of_range_value(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(
            "session_id,student_id,rater_id,second,value\nx,stu,r1,0,3.5\n"
        )
        with pytest.raises((ParseError, ValueRangeError)):
            load_rating_table(p)


class TestMergeRatings:
    def table(self, rater, values):
        return {("x", "stu"): {rater: RaterSeries(rater, values)}}

    def test_two_raters_merge(self):
        merged = merge_session_ratings(
            [self.table("a", {0: 1.0}), self.table("b", {0: 0.0})]
        )
        assert merged["stu"]["x"].values == {0: 0.5}

    def test_rater_twice_rejected(self):
        with pytest.raises(ParseError, match="twice"):
            merge_session_ratings(
                [self.table("a", {0: 1.0}), self.table("a", {0: 0.0})]
            )

    def test_single_rater_rejected(self):
        with pytest.raises(DataError, match="exactly two"):
            merge_session_ratings([self.table("a", {0: 1.0})])

    def test_three_raters_rejected(self):
        with pytest.raises(DataError, match="exactly two"):
            merge_session_ratings(
                [
                    self.table("a", {0: 1.0}),
                    self.table("b", {0: 0.0}),
                    self.table("c", {0: 0.5}),
                ]
            )


class TestGallery:
    def test_load(self, tmp_path):
        p = tmp_path / "g.json"
        p.write_text(json.dumps({"stu": [[1.0, 0.0], [0.0, 1.0]]}))
        entries = load_gallery(p, 2)
        assert entries[0].student_id == "stu"
        assert len(entries[0].query_vectors) == 2

    def test_wrong_dim(self, tmp_path):
        p = tmp_path / "g.json"
        p.write_text(json.dumps({"stu": [[1.0, 0.0, 0.0]]}))
        with pytest.raises((ParseError, DataError)):
            load_gallery(p, 2)


class TestLabeledDataset:
    def test_duplicate_key_rejected(self):
        entry = LabeledSequence(make_sequence(), EngagementLevel.LOW)
        with pytest.raises(DataError, match="duplicate"):
            LabeledSequenceSet(entries=[entry, entry])

    def test_filter_and_accessors(self):
        entries = [
            LabeledSequence(make_sequence("s1", modality="attention"), EngagementLevel.LOW),
            LabeledSequence(make_sequence("s1", modality="affect"), EngagementLevel.LOW),
            LabeledSequence(make_sequence("s2", modality="attention"), EngagementLevel.HIGH),
        ]
        ds = LabeledSequenceSet(entries=entries)
        assert ds.students() == ["s1", "s2"]
        assert ds.modalities() == ["affect", "attention"]
        att = ds.filter(modality="attention")
        assert len(att) == 2
        assert att.frames_tensor().shape == (2, 24, 3)
        assert att.labels().tolist() == [0, 2]

    def test_frames_tensor_needs_single_modality(self):
        ds = LabeledSequenceSet(
            entries=[
                LabeledSequence(make_sequence(modality="attention"), EngagementLevel.LOW),
                LabeledSequence(make_sequence(modality="affect"), EngagementLevel.LOW),
            ]
        )
        with pytest.raises(DataError, match="single modality"):
            ds.frames_tensor()

    def test_level_fractions(self):
        ds = LabeledSequenceSet(
            entries=[
                LabeledSequence(make_sequence(second=0), EngagementLevel.LOW),
                LabeledSequence(make_sequence(second=1), EngagementLevel.LOW),
                LabeledSequence(make_sequence(second=2), EngagementLevel.HIGH),
                LabeledSequence(make_sequence(second=3), EngagementLevel.MEDIUM),
            ]
        )
        assert level_fractions(ds).tolist() == [0.5, 0.25, 0.25]


class TestBuildLabeledDataset:
    def test_labels_attach_and_incomplete_drop(self):
        sequences = [make_sequence(second=0), make_sequence(second=1)]
        continuous = {"s1": {"x": ContinuousEngagementSeries(values={0: 0.9})}}
        manifest = table_manifest(dims={"attention": 3})
        ds, report = build_labeled_dataset(manifest, sequences, continuous)
        assert len(ds) == 1
        assert ds.entries[0].level == EngagementLevel.HIGH
        assert report.total == 2 and report.kept == 1 and report.dropped == 1
        assert report.dropped_keys[0][2] == 1


class TestDatasetRoundTrip:
    def test_save_load(self, tmp_path, small_synthetic):
        ds = small_synthetic.dataset
        path = tmp_path / "data.npz"
        save_dataset(path, ds)
        loaded = load_dataset(path)
        assert len(loaded) == len(ds)
        for a, b in zip(loaded.entries, ds.entries):
            assert a.key == b.key
            assert a.level == b.level
            assert np.array_equal(a.sequence.frames, b.sequence.frames)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "nope.npz")
