import json
from pathlib import Path

import numpy as np
import pytest

from langtrack.dataio import (
    DatasetError,
    MergeSource,
    MotParseError,
    ValidationError,
    compute_stats,
    discover_sequences,
    emit_mot,
    group_by_frame,
    load_detections,
    load_eval_units,
    load_expressions,
    load_ground_truth,
    load_manifest,
    merge_datasets,
    parse_mot,
    result_path,
    write_expressions,
    write_manifest,
    write_mot,
    ExpressionAnnotation,
    SequenceManifest,
)
from langtrack.geometry import BBox


def write_sequence(root: Path, seq: str, tracks: dict, expressions=None,
                   scenario="synthetic", frames=None):
    """tracks: gt id -> list of (frame, x, y, w, h)."""
    seq_dir = root / seq
    seq_dir.mkdir(parents=True)
    lines = []
    max_frame = 1
    for tid, boxes in sorted(tracks.items()):
        for frame, x, y, w, h in boxes:
            lines.append(f"{frame},{tid},{x},{y},{w},{h},1,-1,-1,-1")
            max_frame = max(max_frame, frame)
    (seq_dir / "gt.txt").write_text("".join(l + "\n" for l in sorted(
        lines, key=lambda l: (int(l.split(",")[0]), int(l.split(",")[1])))))
    if expressions is None:
        expressions = [ExpressionAnnotation("e000", "every target", tuple(sorted(tracks)))]
    write_expressions(seq, expressions, seq_dir / "expressions.json")
    write_manifest(
        SequenceManifest(seq, scenario, frames or max_frame, (640, 480), "test"),
        seq_dir / "manifest.json",
    )
    return seq_dir


class TestParseMot:
    def test_direct_field_mapping(self):
        rows = parse_mot(["1,2,100,200,50,80,0.9,-1,-1,-1"])
        assert len(rows) == 1
        r = rows[0]
        assert (r.frame, r.track_id, r.conf) == (1, 2, 0.9)
        assert r.box == BBox(100, 200, 50, 80)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.txt"
        p.write_text("")
        assert parse_mot(p) == []

    def test_non_numeric_names_line(self):
        with pytest.raises(MotParseError) as exc:
            parse_mot(["1,2,abc,200,50,80,0.9"])
        assert exc.value.line_no == 1
        assert "line 1" in str(exc.value)

    def test_error_line_number_counts_all_lines(self):
        with pytest.raises(MotParseError) as exc:
            parse_mot(["1,1,0,0,5,5,1", "2,1,0,0,5,5"])
        assert exc.value.line_no == 2

    def test_frame_below_one(self):
        with pytest.raises(MotParseError):
            parse_mot(["0,1,0,0,5,5,1"])

    def test_seven_fields_enough(self):
        (row,) = parse_mot(["3,-1,1,2,3,4,0.5"])
        assert row.extra == (-1.0, -1.0, -1.0)

    def test_group_by_frame_preserves_order(self):
        rows = parse_mot(["1,5,0,0,5,5,1", "1,2,9,9,5,5,1", "2,1,0,0,5,5,1"])
        grouped = group_by_frame(rows)
        assert [r.track_id for r in grouped[1]] == [5, 2]


class TestEmitMot:
    def test_empty_trackset(self):
        assert emit_mot({}) == ""

    def test_roundtrip_random_tracksets(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            trackset = {}
            for frame in range(1, int(rng.integers(2, 8))):
                entries = []
                for tid in range(1, int(rng.integers(1, 5))):
                    x, y = rng.uniform(0, 500, 2)
                    w, h = rng.uniform(1, 80, 2)
                    entries.append((tid, BBox(float(x), float(y), float(w), float(h))))
                trackset[frame] = entries
            text = emit_mot(trackset)
            rows = parse_mot(text.splitlines())
            rebuilt = {}
            for r in rows:
                rebuilt.setdefault(r.frame, []).append((r.track_id, r.box))
            assert rebuilt == {f: v for f, v in trackset.items() if v}

    def test_byte_stable(self):
        trackset = {1: [(1, BBox(0.5, 1.25, 10, 10))], 2: [(1, BBox(1, 2, 10, 10))]}
        assert emit_mot(trackset) == emit_mot(dict(reversed(list(trackset.items()))))

    def test_sorted_by_frame_then_id(self):
        trackset = {2: [(3, BBox(0, 0, 1, 1)), (1, BBox(0, 0, 1, 1))],
                    1: [(7, BBox(0, 0, 1, 1))]}
        lines = emit_mot(trackset).splitlines()
        keys = [tuple(int(v) for v in l.split(",")[:2]) for l in lines]
        assert keys == sorted(keys)

    def test_rejects_nonpositive_ids(self):
        with pytest.raises(ValueError):
            emit_mot({1: [(0, BBox(0, 0, 1, 1))]})

    def test_conf_field_is_one(self):
        line = emit_mot({1: [(1, BBox(0, 0, 1, 1))]}).strip()
        assert line.split(",")[6] == "1"


class TestDetectionsFile:
    def test_text_score_channel(self, tmp_path):
        p = tmp_path / "det.txt"
        p.write_text("1,-1,10,10,20,20,0.9,0.7,-1,-1\n1,-1,50,50,20,20,0.8,-1,-1,-1\n")
        dets = load_detections(p)
        assert dets[1][0].text_score == 0.7
        assert dets[1][1].text_score is None

    def test_ground_truth_requires_positive_ids(self, tmp_path):
        p = tmp_path / "gt.txt"
        p.write_text("1,-1,10,10,20,20,1,-1,-1,-1\n")
        with pytest.raises(ValidationError):
            load_ground_truth(p)

    def test_unnormalized_confidences_clamped(self, tmp_path):
        # detectors in the wild emit unbounded scores; only order matters
        p = tmp_path / "det.txt"
        p.write_text("1,-1,10,10,20,20,2.35,-1,-1,-1\n1,-1,50,50,20,20,-0.4,-1,-1,-1\n")
        dets = load_detections(p)
        assert dets[1][0].conf == 1.0
        assert dets[1][1].conf == 0.0


class TestExpressions:
    def test_two_tracks_load(self, tmp_path):
        p = tmp_path / "e.json"
        write_expressions("s", [ExpressionAnnotation("e000", "red car", (1, 2))], p)
        (expr,) = load_expressions(p)
        assert expr.track_ids == (1, 2)

    def test_many_to_many_allowed(self, tmp_path):
        p = tmp_path / "e.json"
        write_expressions("s", [
            ExpressionAnnotation("e000", "red car", (1, 2)),
            ExpressionAnnotation("e001", "moving car", (2, 3)),
        ], p)
        a, b = load_expressions(p, known_track_ids={1, 2, 3})
        assert 2 in a.track_ids and 2 in b.track_ids

    def test_unknown_track_id_rejected(self, tmp_path):
        p = tmp_path / "e.json"
        write_expressions("s", [ExpressionAnnotation("e000", "ghost", (999,))], p)
        with pytest.raises(ValidationError, match="999"):
            load_expressions(p, known_track_ids={1, 2})

    def test_duplicate_expression_id_rejected(self, tmp_path):
        p = tmp_path / "e.json"
        p.write_text(json.dumps({
            "sequence": "s",
            "expressions": [
                {"id": "e000", "text": "a", "track_ids": [1]},
                {"id": "e000", "text": "b", "track_ids": [2]},
            ],
        }))
        with pytest.raises(ValidationError, match="duplicate"):
            load_expressions(p)

    def test_empty_track_ids_rejected(self, tmp_path):
        p = tmp_path / "e.json"
        p.write_text(json.dumps({
            "sequence": "s",
            "expressions": [{"id": "e000", "text": "a", "track_ids": []}],
        }))
        with pytest.raises(ValidationError):
            load_expressions(p)


class TestStats:
    def test_track_counts(self, tmp_path):
        root = tmp_path / "data"
        write_sequence(root, "s1", {t: [(f, 0, 0, 5, 5) for f in (1, 2)] for t in (1, 2, 3)})
        write_sequence(root, "s2", {t: [(1, 0, 0, 5, 5)] for t in (1, 2, 3, 4, 5)})
        stats = compute_stats(root)
        assert stats.videos == 2
        assert stats.tracks == 8
        assert stats.min_tracks == 3 and stats.max_tracks == 5
        assert stats.avg_tracks == pytest.approx(4.0)
        assert stats.boxes == 11

    def test_vocabulary(self, tmp_path):
        root = tmp_path / "data"
        write_sequence(root, "s1", {1: [(1, 0, 0, 5, 5)], 2: [(1, 10, 10, 5, 5)]},
                       expressions=[
                           ExpressionAnnotation("e000", "Red car.", (1,)),
                           ExpressionAnnotation("e001", "red bus", (2,)),
                       ])
        stats = compute_stats(root)
        assert stats.vocabulary == 3  # {red, car, bus}

    def test_novel_vocabulary_against_reference(self, tmp_path):
        train = tmp_path / "train"
        test = tmp_path / "test"
        write_sequence(train, "s1", {1: [(1, 0, 0, 5, 5)]},
                       expressions=[ExpressionAnnotation("e000", "red car", (1,))])
        write_sequence(test, "s1", {1: [(1, 0, 0, 5, 5)]},
                       expressions=[ExpressionAnnotation("e000", "red drone flying", (1,))])
        stats = compute_stats(test, reference_root=train)
        assert stats.novel_vocabulary == 2  # drone, flying

    def test_empty_dataset(self, tmp_path):
        root = tmp_path / "data"
        root.mkdir()
        stats = compute_stats(root)
        assert stats.videos == 0 and stats.avg_tracks == 0.0

    def test_partial_stats_refused(self, tmp_path):
        root = tmp_path / "data"
        write_sequence(root, "s1", {1: [(1, 0, 0, 5, 5)]})
        broken = root / "s2"
        broken.mkdir()
        (broken / "manifest.json").write_text("{}")
        with pytest.raises(DatasetError, match="s2"):
            compute_stats(root)


class TestMerge:
    def make_sources(self, tmp_path):
        src_a = tmp_path / "a"
        src_b = tmp_path / "b"
        write_sequence(src_a, "seq1", {1: [(1, 0, 0, 5, 5)]}, scenario="drone")
        write_sequence(src_b, "seq1", {1: [(1, 0, 0, 5, 5)], 2: [(1, 9, 9, 5, 5)]},
                       scenario="daily-life")
        return src_a, src_b

    def test_two_sources_prefixed(self, tmp_path):
        src_a, src_b = self.make_sources(tmp_path)
        out = tmp_path / "merged"
        stats = merge_datasets(
            [MergeSource("alpha", src_a), MergeSource("beta", src_b, scenario="sports-broadcasting")],
            out,
        )
        assert discover_sequences(out) == ["alpha-seq1", "beta-seq1"]
        assert stats.videos == 2
        m = load_manifest(out / "beta-seq1" / "manifest.json")
        assert m.scenario == "sports-broadcasting"
        assert m.source_dataset == "beta"

    def test_idempotent_byte_identical(self, tmp_path):
        src_a, src_b = self.make_sources(tmp_path)
        out = tmp_path / "merged"
        sources = [MergeSource("alpha", src_a), MergeSource("beta", src_b)]
        merge_datasets(sources, out)
        snapshot = {p: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        merge_datasets(sources, out)
        again = {p: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        assert snapshot == again

    def test_collision_rejected(self, tmp_path):
        src_a, _ = self.make_sources(tmp_path)
        with pytest.raises(DatasetError, match="collision"):
            merge_datasets(
                [MergeSource("x", src_a), MergeSource("x", src_a)],
                tmp_path / "out",
            )

    def test_merged_stats_video_sum(self, tmp_path):
        src_a, src_b = self.make_sources(tmp_path)
        out = tmp_path / "merged"
        stats = merge_datasets([MergeSource("a", src_a), MergeSource("b", src_b)], out)
        sum_videos = compute_stats(src_a).videos + compute_stats(src_b).videos
        assert stats.videos == sum_videos

    def test_detection_files_copied_verbatim(self, tmp_path):
        src_a, _ = self.make_sources(tmp_path)
        det_dir = src_a / "seq1" / "detections"
        det_dir.mkdir()
        payload = "1,-1,10,10,20,20,0.875,-1,-1,-1\n"
        (det_dir / "e000.txt").write_text(payload)
        out = tmp_path / "merged"
        merge_datasets([MergeSource("alpha", src_a)], out)
        copied = out / "alpha-seq1" / "detections" / "e000.txt"
        assert copied.read_text() == payload


class TestEvalUnits:
    def test_units_and_missing_results(self, tmp_path):
        root = tmp_path / "data"
        write_sequence(root, "s1", {1: [(1, 0, 0, 5, 5), (2, 1, 0, 5, 5)],
                                    2: [(1, 50, 50, 5, 5)]},
                       expressions=[
                           ExpressionAnnotation("e000", "all", (1, 2)),
                           ExpressionAnnotation("e001", "one", (1,)),
                       ])
        results = tmp_path / "results"
        rp = result_path(results, "s1", "e000")
        rp.parent.mkdir(parents=True)
        write_mot({1: [(1, BBox(0, 0, 5, 5))]}, rp)
        units, warnings = load_eval_units(root, results)
        assert len(units) == 2
        assert len(warnings) == 1 and "e001" in warnings[0]
        by_expr = {u.expression_id: u for u in units}
        assert by_expr["e001"].pred == {}
        # unit gt restricted to the expression's tracks
        assert all(tid == 1 for entries in by_expr["e001"].gt.values()
                   for tid, _ in entries)
        assert by_expr["e001"].scenario == "synthetic"
