"""On-disk formats: MOT text files, expression annotations, manifests, stats.

Dataset layout (one directory per sequence under a dataset root):

    <root>/<sequence_id>/manifest.json
    <root>/<sequence_id>/gt.txt                      MOT ground truth
    <root>/<sequence_id>/expressions.json            expression -> track ids
    <root>/<sequence_id>/detections/<expr_id>.txt    MOT detections per expression

Tracker results live outside the dataset as <results>/<sequence_id>/<expr_id>.txt.

The MOT text format is ASCII lines ``frame,id,x,y,w,h,conf,x3,y3,z3`` with a
``.`` decimal separator. Emission is byte-deterministic and parse/emit are
exact inverses on valid data. Detection files may carry a text-match score in
the x3 field (negative means absent).
"""
from __future__ import annotations

import json
import math
import shutil
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .geometry import BBox
from .metrics import EvalUnit
from .tracker import Detection, TrackSet

__all__ = [
    "MotParseError",
    "ValidationError",
    "DatasetError",
    "MotRow",
    "parse_mot",
    "group_by_frame",
    "load_detections",
    "load_ground_truth",
    "emit_mot",
    "write_mot",
    "ExpressionAnnotation",
    "load_expressions",
    "write_expressions",
    "SequenceManifest",
    "load_manifest",
    "write_manifest",
    "discover_sequences",
    "DatasetStats",
    "compute_stats",
    "MergeSource",
    "merge_datasets",
    "result_path",
    "load_eval_units",
]

SCENARIOS = ("surveillance", "autonomous-driving", "sports-broadcasting", "drone", "daily-life")


class MotParseError(ValueError):
    """Malformed MOT line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(ValueError):
    pass


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class MotRow:
    frame: int
    track_id: int
    box: BBox
    conf: float
    extra: Tuple[float, float, float] = (-1.0, -1.0, -1.0)


def _parse_number(raw: str, line_no: int, what: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise MotParseError(line_no, f"non-numeric {what}: {raw!r}") from None
    if not math.isfinite(v):
        raise MotParseError(line_no, f"non-finite {what}: {raw!r}")
    return v


def _parse_int(raw: str, line_no: int, what: str) -> int:
    v = _parse_number(raw, line_no, what)
    if v != int(v):
        raise MotParseError(line_no, f"{what} must be an integer: {raw!r}")
    return int(v)


def parse_mot(source: Path | str | Iterable[str]) -> List[MotRow]:
    """Parse MOT text into rows, preserving file order.

    Lines need at least 7 comma-separated fields (frame, id, x, y, w, h,
    conf); up to three trailing fields are kept verbatim, missing ones
    default to -1. Blank lines are ignored. Frame numbers start at 1;
    id -1 marks raw detections.
    """
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text().splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]
    rows: List[MotRow] = []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) < 7:
            raise MotParseError(line_no, f"expected at least 7 fields, got {len(parts)}")
        if len(parts) > 10:
            raise MotParseError(line_no, f"expected at most 10 fields, got {len(parts)}")
        frame = _parse_int(parts[0], line_no, "frame")
        if frame < 1:
            raise MotParseError(line_no, f"frame must be >= 1, got {frame}")
        track_id = _parse_int(parts[1], line_no, "id")
        x = _parse_number(parts[2], line_no, "x")
        y = _parse_number(parts[3], line_no, "y")
        w = _parse_number(parts[4], line_no, "w")
        h = _parse_number(parts[5], line_no, "h")
        conf = _parse_number(parts[6], line_no, "conf")
        extra = [-1.0, -1.0, -1.0]
        for k, raw in enumerate(parts[7:10]):
            extra[k] = _parse_number(raw, line_no, f"field {8 + k}")
        try:
            box = BBox(x, y, w, h)
        except ValueError as exc:
            raise MotParseError(line_no, str(exc)) from None
        rows.append(MotRow(frame, track_id, box, conf, tuple(extra)))
    return rows


def group_by_frame(rows: Sequence[MotRow]) -> Dict[int, List[MotRow]]:
    """Group rows by frame, keeping the original order within each frame."""
    out: Dict[int, List[MotRow]] = {}
    for row in rows:
        out.setdefault(row.frame, []).append(row)
    return out


def load_detections(path: Path | str) -> Dict[int, List[Detection]]:
    """Read a detection file; the x3 field, when non-negative, is the
    text-match score.

    Confidences are clamped into [0, 1]: detectors in the wild emit
    unnormalized scores, and thresholding downstream only needs order on the
    unit interval.
    """
    out: Dict[int, List[Detection]] = {}
    for row in parse_mot(path):
        text_score = row.extra[0] if row.extra[0] >= 0 else None
        if text_score is not None:
            text_score = min(text_score, 1.0)
        det = Detection(frame=row.frame, box=row.box, conf=min(max(row.conf, 0.0), 1.0),
                        text_score=text_score)
        out.setdefault(row.frame, []).append(det)
    return out


def load_ground_truth(path: Path | str) -> Dict[int, List[Tuple[int, BBox]]]:
    """Read a ground-truth file as per-frame (track_id, box) lists."""
    out: Dict[int, List[Tuple[int, BBox]]] = {}
    for row in parse_mot(path):
        if row.track_id < 1:
            raise ValidationError(f"ground truth track ids must be positive, got {row.track_id}")
        out.setdefault(row.frame, []).append((row.track_id, row.box))
    return out


def _fmt_num(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def emit_mot(trackset: TrackSet) -> str:
    """Serialize tracker output: ascending (frame, id), conf fixed at 1.

    Values are written in shortest exact form, so parse(emit(t)) == t.
    """
    lines = []
    for frame in sorted(trackset):
        for tid, box in sorted(trackset[frame], key=lambda e: e[0]):
            if tid < 1:
                raise ValueError(f"track ids must be positive, got {tid}")
            lines.append(
                f"{frame},{tid},{_fmt_num(box.x)},{_fmt_num(box.y)},"
                f"{_fmt_num(box.w)},{_fmt_num(box.h)},1,-1,-1,-1"
            )
    return "".join(line + "\n" for line in lines)


def write_mot(trackset: TrackSet, path: Path | str) -> None:
    Path(path).write_text(emit_mot(trackset))


# ---------------------------------------------------------------------------
# Expressions and manifests


@dataclass(frozen=True)
class ExpressionAnnotation:
    expression_id: str
    text: str
    track_ids: Tuple[int, ...]


def load_expressions(
    path: Path | str,
    known_track_ids: Optional[Set[int]] = None,
) -> List[ExpressionAnnotation]:
    """Load and validate one sequence's expression annotations.

    Track/expression relationships are many-to-many: a track id may appear
    under several expressions. When ``known_track_ids`` is given, every
    referenced id must exist in it.
    """
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or "expressions" not in data:
        raise ValidationError(f"{path}: expected an object with an 'expressions' list")
    seen: Set[str] = set()
    out: List[ExpressionAnnotation] = []
    for entry in data["expressions"]:
        eid = str(entry.get("id", ""))
        text = entry.get("text", "")
        track_ids = entry.get("track_ids", [])
        if not eid:
            raise ValidationError(f"{path}: expression with empty id")
        if eid in seen:
            raise ValidationError(f"{path}: duplicate expression id {eid!r}")
        seen.add(eid)
        if not track_ids:
            raise ValidationError(f"{path}: expression {eid!r} has no track ids")
        if len(set(track_ids)) != len(track_ids):
            raise ValidationError(f"{path}: expression {eid!r} repeats a track id")
        if known_track_ids is not None:
            missing = sorted(set(track_ids) - known_track_ids)
            if missing:
                raise ValidationError(
                    f"{path}: expression {eid!r} references unknown track ids {missing}"
                )
        out.append(ExpressionAnnotation(eid, str(text), tuple(int(t) for t in track_ids)))
    return out


def write_expressions(
    sequence_id: str, expressions: Sequence[ExpressionAnnotation], path: Path | str
) -> None:
    payload = {
        "sequence": sequence_id,
        "expressions": [
            {"id": e.expression_id, "text": e.text, "track_ids": list(e.track_ids)}
            for e in expressions
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class SequenceManifest:
    sequence_id: str
    scenario: str
    frame_count: int
    image_size: Optional[Tuple[int, int]] = None
    source_dataset: str = ""

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise ValidationError(f"frame_count must be >= 1, got {self.frame_count}")
        if not self.scenario:
            raise ValidationError("scenario tag must be non-empty")


def load_manifest(path: Path | str) -> SequenceManifest:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: manifest must be a JSON object")
    missing = [k for k in ("sequence_id", "scenario", "frame_count") if k not in data]
    if missing:
        raise ValidationError(f"{path}: manifest missing fields {missing}")
    size = data.get("image_size")
    return SequenceManifest(
        sequence_id=str(data["sequence_id"]),
        scenario=str(data["scenario"]),
        frame_count=int(data["frame_count"]),
        image_size=tuple(size) if size else None,
        source_dataset=str(data.get("source_dataset", "")),
    )


def write_manifest(manifest: SequenceManifest, path: Path | str) -> None:
    payload = {
        "sequence_id": manifest.sequence_id,
        "scenario": manifest.scenario,
        "frame_count": manifest.frame_count,
        "image_size": list(manifest.image_size) if manifest.image_size else None,
        "source_dataset": manifest.source_dataset,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def discover_sequences(root: Path | str) -> List[str]:
    """Sequence ids under a dataset root, sorted for reproducibility."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    return sorted(p.name for p in root.iterdir() if (p / "manifest.json").is_file())


# ---------------------------------------------------------------------------
# Statistics


@dataclass(frozen=True)
class DatasetStats:
    videos: int
    frames: int
    boxes: int
    tracks: int
    min_tracks: float
    avg_tracks: float
    max_tracks: float
    vocabulary: int
    novel_vocabulary: Optional[int] = None


def _tokens(text: str) -> Set[str]:
    out = set()
    for raw in text.lower().split():
        token = raw.strip(string.punctuation)
        if token:
            out.add(token)
    return out


def _sequence_vocabulary(root: Path, seq: str) -> Set[str]:
    vocab: Set[str] = set()
    for expr in load_expressions(root / seq / "expressions.json"):
        vocab |= _tokens(expr.text)
    return vocab


def compute_stats(root: Path | str, reference_root: Optional[Path | str] = None) -> DatasetStats:
    """Dataset-level counts and vocabulary size.

    Refuses partial statistics: any unreadable sequence fails the whole call,
    with every broken sequence named. ``reference_root`` enables the novel
    vocabulary count (tokens absent from the reference split).
    """
    root = Path(root)
    sequences = discover_sequences(root)
    frames = boxes = tracks = 0
    per_video_tracks: List[int] = []
    vocab: Set[str] = set()
    broken: List[str] = []
    for seq in sequences:
        try:
            manifest = load_manifest(root / seq / "manifest.json")
            gt = load_ground_truth(root / seq / "gt.txt")
            gt_ids = {tid for entries in gt.values() for tid, _ in entries}
            load_expressions(root / seq / "expressions.json", known_track_ids=gt_ids)
            vocab |= _sequence_vocabulary(root, seq)
        except (OSError, ValueError) as exc:
            broken.append(f"{seq}: {exc}")
            continue
        frames += manifest.frame_count
        boxes += sum(len(v) for v in gt.values())
        tracks += len(gt_ids)
        per_video_tracks.append(len(gt_ids))
    if broken:
        raise DatasetError("unreadable sequences: " + "; ".join(broken))
    novel: Optional[int] = None
    if reference_root is not None:
        ref_vocab: Set[str] = set()
        ref_root = Path(reference_root)
        for seq in discover_sequences(ref_root):
            ref_vocab |= _sequence_vocabulary(ref_root, seq)
        novel = len(vocab - ref_vocab)
    return DatasetStats(
        videos=len(sequences),
        frames=frames,
        boxes=boxes,
        tracks=tracks,
        min_tracks=float(min(per_video_tracks)) if per_video_tracks else 0.0,
        avg_tracks=tracks / len(sequences) if sequences else 0.0,
        max_tracks=float(max(per_video_tracks)) if per_video_tracks else 0.0,
        vocabulary=len(vocab),
        novel_vocabulary=novel,
    )


# ---------------------------------------------------------------------------
# Dataset merging


@dataclass(frozen=True)
class MergeSource:
    name: str
    root: Path
    scenario: Optional[str] = None


def merge_datasets(sources: Sequence[MergeSource], out_root: Path | str) -> DatasetStats:
    """Copy several dataset roots into one layout with globally unique ids.

    Sequences are renamed ``<source>-<original>``; manifests are rewritten
    with the source's scenario tag. Deterministic, so re-running the merge
    reproduces the output tree byte for byte.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    seen: Set[str] = set()
    for src in sources:
        for seq in discover_sequences(src.root):
            new_id = f"{src.name}-{seq}"
            if new_id in seen:
                raise DatasetError(f"sequence id collision after renaming: {new_id}")
            seen.add(new_id)
            src_dir = Path(src.root) / seq
            dst_dir = out_root / new_id
            dst_dir.mkdir(parents=True, exist_ok=True)
            manifest = load_manifest(src_dir / "manifest.json")
            write_manifest(
                SequenceManifest(
                    sequence_id=new_id,
                    scenario=src.scenario or manifest.scenario,
                    frame_count=manifest.frame_count,
                    image_size=manifest.image_size,
                    source_dataset=src.name,
                ),
                dst_dir / "manifest.json",
            )
            shutil.copyfile(src_dir / "gt.txt", dst_dir / "gt.txt")
            expressions = load_expressions(src_dir / "expressions.json")
            write_expressions(new_id, expressions, dst_dir / "expressions.json")
            det_dir = src_dir / "detections"
            if det_dir.is_dir():
                (dst_dir / "detections").mkdir(exist_ok=True)
                for det_file in sorted(det_dir.glob("*.txt")):
                    shutil.copyfile(det_file, dst_dir / "detections" / det_file.name)
    stats = compute_stats(out_root)
    payload = {
        "videos": stats.videos,
        "frames": stats.frames,
        "boxes": stats.boxes,
        "tracks": stats.tracks,
        "min_tracks": stats.min_tracks,
        "avg_tracks": stats.avg_tracks,
        "max_tracks": stats.max_tracks,
        "vocabulary": stats.vocabulary,
    }
    (out_root / "stats.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return stats


# ---------------------------------------------------------------------------
# Evaluation units


def result_path(results_root: Path | str, sequence_id: str, expression_id: str) -> Path:
    return Path(results_root) / sequence_id / f"{expression_id}.txt"


def load_eval_units(
    gt_root: Path | str,
    results_root: Path | str,
) -> Tuple[List[EvalUnit], List[str]]:
    """Build one evaluation unit per (sequence, expression).

    The unit's ground truth is the union of tracks annotated with the
    expression. Missing result files score as empty predictions; each one is
    reported in the returned warning list.
    """
    gt_root = Path(gt_root)
    units: List[EvalUnit] = []
    warnings: List[str] = []
    for seq in discover_sequences(gt_root):
        manifest = load_manifest(gt_root / seq / "manifest.json")
        gt = load_ground_truth(gt_root / seq / "gt.txt")
        gt_ids = {tid for entries in gt.values() for tid, _ in entries}
        for expr in load_expressions(gt_root / seq / "expressions.json", known_track_ids=gt_ids):
            wanted = set(expr.track_ids)
            unit_gt = {}
            for frame, entries in gt.items():
                kept = [(tid, box) for tid, box in entries if tid in wanted]
                if kept:
                    unit_gt[frame] = kept
            rpath = result_path(results_root, seq, expr.expression_id)
            if rpath.is_file():
                pred_rows = parse_mot(rpath)
                pred: Dict[int, List[Tuple[int, BBox]]] = {}
                for row in pred_rows:
                    pred.setdefault(row.frame, []).append((row.track_id, row.box))
            else:
                warnings.append(f"missing result file {rpath}, scoring as empty")
                pred = {}
            units.append(
                EvalUnit(
                    sequence_id=seq,
                    expression_id=expr.expression_id,
                    gt=unit_gt,
                    pred=pred,
                    scenario=manifest.scenario,
                )
            )
    return units, warnings
