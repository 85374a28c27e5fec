"""Seeded synthetic scenarios: ground truth, noisy detections, expressions.

Targets follow constant-velocity trajectories with boundary reflection (or a
sinusoidally drifting heading with ``curved=True``, which breaks the
constant-velocity assumption on purpose). Detections are ground truth plus
Gaussian jitter, thinned by dropout and occlusion windows, plus uniformly
placed false positives. Everything is a deterministic function of the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataio import (
    ExpressionAnnotation,
    SequenceManifest,
    _fmt_num,
    emit_mot,
    write_expressions,
    write_manifest,
)
from .geometry import BBox
from .tracker import Detection, TrackSet

__all__ = ["Occlusion", "ConfDip", "SimConfig", "SimResult", "generate", "write_scenario"]


@dataclass(frozen=True)
class Occlusion:
    """Target invisible for ``length`` frames starting at ``start`` (1-based)."""

    target: int
    start: int
    length: int


@dataclass(frozen=True)
class ConfDip:
    """Detector confidence for one target drops to ``low`` inside a window."""

    target: int
    start: int
    length: int
    low: float


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    num_targets: int = 5
    num_frames: int = 100
    image_size: Tuple[int, int] = (1280, 720)
    speed_range: Tuple[float, float] = (0.5, 2.5)
    det_noise_std: float = 0.0
    dropout_prob: float = 0.0
    false_pos_rate: float = 0.0
    occlusions: Tuple[Occlusion, ...] = ()
    conf_constant: float = 0.9
    conf_dips: Tuple[ConfDip, ...] = ()
    curved: bool = False

    def __post_init__(self) -> None:
        if self.num_frames < 1:
            raise ValueError(f"num_frames must be >= 1, got {self.num_frames}")
        if self.num_targets < 0:
            raise ValueError(f"num_targets must be >= 0, got {self.num_targets}")
        if not (0.0 <= self.dropout_prob <= 1.0):
            raise ValueError(f"dropout_prob must be in [0, 1], got {self.dropout_prob}")
        if not (0.0 <= self.conf_constant <= 1.0):
            raise ValueError(f"conf_constant must be in [0, 1], got {self.conf_constant}")
        if self.false_pos_rate < 0:
            raise ValueError(f"false_pos_rate must be >= 0, got {self.false_pos_rate}")
        if self.det_noise_std < 0:
            raise ValueError(f"det_noise_std must be >= 0, got {self.det_noise_std}")


@dataclass
class SimResult:
    config: SimConfig
    sequence_id: str
    gt: TrackSet
    detections: Dict[str, Dict[int, List[Detection]]]
    expressions: List[ExpressionAnnotation]
    manifest: SequenceManifest
    # detection -> source target id (0 for false positives), per expression,
    # parallel to the detection lists; used by oracle tests
    detection_labels: Dict[str, Dict[int, List[int]]] = field(default_factory=dict)


_SIZE_RANGE = (24.0, 56.0)
_FP_SIZE_RANGE = (15.0, 60.0)
_CURVE_AMPLITUDE = 0.8
_CURVE_PERIOD = 40.0


def _make_expressions(num_targets: int) -> List[ExpressionAnnotation]:
    if num_targets == 0:
        return []
    all_ids = tuple(range(1, num_targets + 1))
    out = [ExpressionAnnotation("e000", "every synthetic target in the scene", all_ids)]
    if num_targets >= 2:
        half = (num_targets + 1) // 2
        out.append(
            ExpressionAnnotation(
                "e001", "the targets of the leading group", all_ids[:half]
            )
        )
    return out


def generate(cfg: SimConfig, sequence_id: Optional[str] = None,
             scenario: str = "synthetic") -> SimResult:
    """Build one synthetic sequence; byte-identical for equal inputs."""
    rng = np.random.default_rng(cfg.seed)
    seq_id = sequence_id or f"synth-{cfg.seed:04d}"
    width, height = cfg.image_size

    sizes = rng.uniform(_SIZE_RANGE[0], _SIZE_RANGE[1], size=(cfg.num_targets, 2))
    speeds = rng.uniform(cfg.speed_range[0], cfg.speed_range[1], size=cfg.num_targets)
    headings = rng.uniform(0.0, 2.0 * math.pi, size=cfg.num_targets)
    centers = np.empty((cfg.num_targets, 2))
    for i in range(cfg.num_targets):
        mx, my = sizes[i, 0] / 2 + 2, sizes[i, 1] / 2 + 2
        centers[i, 0] = rng.uniform(mx, width - mx)
        centers[i, 1] = rng.uniform(my, height - my)
    velocities = np.stack([speeds * np.cos(headings), speeds * np.sin(headings)], axis=1)

    occluded = {(o.target, f) for o in cfg.occlusions
                for f in range(o.start, o.start + o.length)}
    dips = {(d.target, f): d.low for d in cfg.conf_dips
            for f in range(d.start, d.start + d.length)}

    gt: TrackSet = {}
    per_frame_dets: Dict[int, List[Tuple[int, Detection]]] = {}
    pos = centers.copy()
    vel = velocities.copy()
    for frame in range(1, cfg.num_frames + 1):
        gt_entries: List[Tuple[int, BBox]] = []
        det_entries: List[Tuple[int, Detection]] = []
        if cfg.curved:
            # incremental heading rotation; composes with reflections below
            dphi = _CURVE_AMPLITUDE * (
                math.sin(2.0 * math.pi * frame / _CURVE_PERIOD)
                - math.sin(2.0 * math.pi * (frame - 1) / _CURVE_PERIOD)
            )
            c, s = math.cos(dphi), math.sin(dphi)
            vel = vel @ np.array([[c, s], [-s, c]])
        for i in range(cfg.num_targets):
            tid = i + 1
            w, h = sizes[i]
            pos[i] += vel[i]
            # reflect so the full box stays inside the image
            for axis, limit, half in ((0, width, w / 2), (1, height, h / 2)):
                if pos[i, axis] < half:
                    pos[i, axis] = 2 * half - pos[i, axis]
                    vel[i, axis] = -vel[i, axis]
                elif pos[i, axis] > limit - half:
                    pos[i, axis] = 2 * (limit - half) - pos[i, axis]
                    vel[i, axis] = -vel[i, axis]
            cx, cy = pos[i]
            gt_entries.append((tid, BBox(cx - w / 2, cy - h / 2, w, h)))

            jitter = rng.normal(0.0, 1.0, size=4) * cfg.det_noise_std
            drop_u = rng.uniform()
            if (tid, frame) in occluded or drop_u < cfg.dropout_prob:
                continue
            dw = max(w + jitter[2], 1.0)
            dh = max(h + jitter[3], 1.0)
            dcx, dcy = cx + jitter[0], cy + jitter[1]
            conf = dips.get((tid, frame), cfg.conf_constant)
            det_entries.append(
                (tid, Detection(frame=frame,
                                box=BBox(dcx - dw / 2, dcy - dh / 2, dw, dh),
                                conf=conf))
            )

        n_fp = int(rng.poisson(cfg.false_pos_rate)) if cfg.false_pos_rate > 0 else 0
        for _ in range(n_fp):
            fw = rng.uniform(*_FP_SIZE_RANGE)
            fh = rng.uniform(*_FP_SIZE_RANGE)
            fx = rng.uniform(0.0, max(width - fw, 1.0))
            fy = rng.uniform(0.0, max(height - fh, 1.0))
            fconf = rng.uniform(0.5, 1.0)
            det_entries.append(
                (0, Detection(frame=frame, box=BBox(fx, fy, fw, fh), conf=fconf))
            )
        gt[frame] = gt_entries
        per_frame_dets[frame] = det_entries

    expressions = _make_expressions(cfg.num_targets)
    detections: Dict[str, Dict[int, List[Detection]]] = {}
    labels: Dict[str, Dict[int, List[int]]] = {}
    for expr in expressions:
        wanted = set(expr.track_ids)
        by_frame: Dict[int, List[Detection]] = {}
        lab_by_frame: Dict[int, List[int]] = {}
        for frame, entries in per_frame_dets.items():
            kept = [(src, det) for src, det in entries if src == 0 or src in wanted]
            if kept:
                by_frame[frame] = [det for _, det in kept]
                lab_by_frame[frame] = [src for src, _ in kept]
        detections[expr.expression_id] = by_frame
        labels[expr.expression_id] = lab_by_frame

    manifest = SequenceManifest(
        sequence_id=seq_id,
        scenario=scenario,
        frame_count=cfg.num_frames,
        image_size=cfg.image_size,
        source_dataset="synthetic",
    )
    return SimResult(
        config=cfg,
        sequence_id=seq_id,
        gt=gt,
        detections=detections,
        expressions=expressions,
        manifest=manifest,
        detection_labels=labels,
    )


def detections_to_mot(dets_by_frame: Dict[int, List[Detection]]) -> str:
    """Detection lines in file order: frame ascending, list order preserved."""
    lines = []
    for frame in sorted(dets_by_frame):
        for d in dets_by_frame[frame]:
            ts = _fmt_num(d.text_score) if d.text_score is not None else "-1"
            lines.append(
                f"{frame},-1,{_fmt_num(d.box.x)},{_fmt_num(d.box.y)},"
                f"{_fmt_num(d.box.w)},{_fmt_num(d.box.h)},{_fmt_num(d.conf)},{ts},-1,-1"
            )
    return "".join(line + "\n" for line in lines)


def write_scenario(result: SimResult, root: Path | str) -> Path:
    """Write the dataset layout for one generated sequence; returns its dir."""
    seq_dir = Path(root) / result.sequence_id
    det_dir = seq_dir / "detections"
    det_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(result.manifest, seq_dir / "manifest.json")
    (seq_dir / "gt.txt").write_text(emit_mot(result.gt))
    write_expressions(result.sequence_id, result.expressions, seq_dir / "expressions.json")
    for eid, dets in result.detections.items():
        (det_dir / f"{eid}.txt").write_text(detections_to_mot(dets))
    return seq_dir
