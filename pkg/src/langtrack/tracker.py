"""Per-frame tracking loop over text-grounded detections.

Detections below the score threshold are discarded (or, under the byte
strategy, deferred to a second low-confidence pass); surviving detections are
associated to Kalman-predicted tracks and drive track lifecycle: tentative
tracks confirm after a hit streak, unmatched tracks go lost and are preserved
for ``max_age`` frames awaiting re-detection, then removed.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .association import (
    Assignment,
    combine_costs,
    iou_cost,
    ocm_cost,
    solve_assignment,
)
from .geometry import BBox, StateBox, from_state, to_state
from .motion import KalmanState, kf_init, kf_predict, kf_update, oru_reupdate, state_to_box

__all__ = [
    "Detection",
    "Track",
    "TrackStatus",
    "TrackerConfig",
    "MultiObjectTracker",
    "AssociationOutcome",
    "associate_sort",
    "associate_byte",
    "associate_ocsort",
    "run",
    "TrackSet",
]

# frame -> [(track_id, box), ...] for every confirmed track updated that frame
TrackSet = Dict[int, List[Tuple[int, BBox]]]

STRATEGIES = ("sort", "byte", "ocsort")
SCORE_FUSIONS = ("min", "product", "text_only")


@dataclass(frozen=True)
class Detection:
    """One detector output: frame index, box, confidence, optional text-match score."""

    frame: int
    box: BBox
    conf: float
    text_score: Optional[float] = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.conf <= 1.0):
            raise ValueError(f"conf must be in [0, 1], got {self.conf}")
        if self.text_score is not None and not (0.0 <= self.text_score <= 1.0):
            raise ValueError(f"text_score must be in [0, 1], got {self.text_score}")


class TrackStatus(Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    LOST = "lost"
    REMOVED = "removed"


@dataclass
class TrackerConfig:
    """Tracker knobs; defaults follow the SORT-family conventions.

    ``tau`` is the score threshold below which detections are discarded
    (0.5 by default), ``max_age`` the number of frames a lost track is
    preserved awaiting reappearance (30 by default). ``oru_enabled=None``
    resolves to True exactly for the ocsort strategy.
    """

    tau: float = 0.5
    tau_low: float = 0.1
    max_age: int = 30
    min_hits: int = 3
    iou_gate: float = 0.3
    strategy: str = "ocsort"
    ocm_weight: float = 0.2
    delta_t: int = 3
    oru_enabled: Optional[bool] = None
    ocr_enabled: bool = False
    score_fusion: str = "min"

    def __post_init__(self) -> None:
        if not (0.0 <= self.tau <= 1.0 and 0.0 <= self.tau_low <= 1.0):
            raise ValueError("tau and tau_low must be in [0, 1]")
        if self.tau_low > self.tau:
            raise ValueError(f"tau_low ({self.tau_low}) must not exceed tau ({self.tau})")
        if self.max_age < 1:
            raise ValueError(f"max_age must be >= 1, got {self.max_age}")
        if self.min_hits < 1:
            raise ValueError(f"min_hits must be >= 1, got {self.min_hits}")
        if not (0.0 <= self.iou_gate <= 1.0):
            raise ValueError(f"iou_gate must be in [0, 1], got {self.iou_gate}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.delta_t < 1:
            raise ValueError(f"delta_t must be >= 1, got {self.delta_t}")
        if self.ocm_weight < 0:
            raise ValueError(f"ocm_weight must be >= 0, got {self.ocm_weight}")
        if self.score_fusion not in SCORE_FUSIONS:
            raise ValueError(
                f"unknown score_fusion {self.score_fusion!r}, expected one of {SCORE_FUSIONS}"
            )

    @property
    def oru_active(self) -> bool:
        if self.oru_enabled is None:
            return self.strategy == "ocsort"
        return self.oru_enabled

    def effective_score(self, det: Detection) -> float:
        """Fuse detector confidence with the text-match score when present."""
        if det.text_score is None:
            return det.conf
        if self.score_fusion == "min":
            return min(det.conf, det.text_score)
        if self.score_fusion == "product":
            return det.conf * det.text_score
        return det.text_score


@dataclass
class Track:
    """Lifecycle state of one tracked identity.

    Confirmation is sticky: once a track has confirmed (hit streak reached
    ``min_hits``, or any hit in the opening frames of the sequence), losing
    it only downgrades it to lost, and a re-match restores confirmed output
    immediately rather than re-earning the streak.
    """

    id: int
    kstate: KalmanState
    state_at_update: KalmanState
    last_obs: StateBox
    last_obs_frame: int
    status: TrackStatus = TrackStatus.TENTATIVE
    obs_history: List[Tuple[int, StateBox]] = field(default_factory=list)
    time_since_update: int = 0
    hit_streak: int = 1
    hits: int = 1
    ever_confirmed: bool = False

    def observation_at(self, frame: int) -> Optional[StateBox]:
        for f, obs in reversed(self.obs_history):
            if f == frame:
                return obs
            if f < frame:
                break
        return None

    def momentum_pair(self, delta_t: int) -> Optional[Tuple[StateBox, StateBox]]:
        """(older, newest) observation pair spanning up to ``delta_t`` frames.

        Falls back to the nearest older observation when the exact offset was
        a missed frame; None when the track has a single observation.
        """
        if len(self.obs_history) < 2:
            return None
        for dt in range(delta_t, 0, -1):
            older = self.observation_at(self.last_obs_frame - dt)
            if older is not None:
                return older, self.last_obs
        return self.obs_history[-2][1], self.last_obs

    def predicted_box(self) -> BBox:
        return state_to_box(self.kstate)

    def last_observed_box(self) -> BBox:
        return from_state(self.last_obs)


@dataclass
class AssociationOutcome:
    """Matches from all passes of one strategy, plus spawn candidates.

    ``matched`` pairs a track index with the detection that updates it;
    ``spawns`` are high-score detections left unmatched (low-score ones never
    spawn); ``unmatched_tracks`` indexes tracks that got nothing this frame.
    """

    matched: List[Tuple[int, Detection]]
    spawns: List[Detection]
    unmatched_tracks: List[int]


def _anchor_boxes(tracks: Sequence[Track], observation_centric: bool) -> List[BBox]:
    """Association anchors: the coasted prediction, except that lost tracks
    anchor on their last observed box under the observation-centric strategy."""
    boxes = []
    for t in tracks:
        if observation_centric and t.time_since_update > 1:
            boxes.append(t.last_observed_box())
        else:
            boxes.append(t.predicted_box())
    return boxes


def _solve(tracks_boxes: List[BBox], dets: Sequence[Detection], gate: float,
           extra=None) -> Assignment:
    cm = iou_cost(tracks_boxes, [d.box for d in dets], gate)
    if extra is not None:
        cm = combine_costs(cm, extra)
    return solve_assignment(cm)


def associate_sort(tracks: Sequence[Track], high: Sequence[Detection],
                   low: Sequence[Detection], config: TrackerConfig) -> AssociationOutcome:
    """Single IoU-gated pass over high-score detections."""
    a = _solve(_anchor_boxes(tracks, False), high, config.iou_gate)
    return AssociationOutcome(
        matched=[(ti, high[di]) for ti, di in a.matches],
        spawns=[high[di] for di in a.unmatched_detections],
        unmatched_tracks=list(a.unmatched_tracks),
    )


def associate_byte(tracks: Sequence[Track], high: Sequence[Detection],
                   low: Sequence[Detection], config: TrackerConfig) -> AssociationOutcome:
    """Two-threshold association: high-score pass, then a low-score rescue
    pass over the remaining tracks. Low-score detections never spawn tracks."""
    first = _solve(_anchor_boxes(tracks, False), high, config.iou_gate)
    matched = [(ti, high[di]) for ti, di in first.matches]
    remaining = list(first.unmatched_tracks)
    if remaining and low:
        rem_boxes = _anchor_boxes([tracks[i] for i in remaining], False)
        second = _solve(rem_boxes, low, config.iou_gate)
        matched.extend((remaining[ri], low[di]) for ri, di in second.matches)
        remaining = [remaining[ri] for ri in second.unmatched_tracks]
    return AssociationOutcome(
        matched=matched,
        spawns=[high[di] for di in first.unmatched_detections],
        unmatched_tracks=remaining,
    )


def associate_ocsort(tracks: Sequence[Track], high: Sequence[Detection],
                     low: Sequence[Detection], config: TrackerConfig) -> AssociationOutcome:
    """IoU plus observation-momentum pass; lost tracks anchor on their last
    observed box. Optionally a recovery pass re-checks unmatched pairs on
    last observations alone."""
    anchors = _anchor_boxes(tracks, True)
    extra = None
    if high and tracks and config.ocm_weight > 0:
        pairs = [t.momentum_pair(config.delta_t) for t in tracks]
        extra = ocm_cost(pairs, [d.box for d in high], config.ocm_weight)
    first = _solve(anchors, high, config.iou_gate, extra)
    matched = [(ti, high[di]) for ti, di in first.matches]
    remaining = list(first.unmatched_tracks)
    spawn_idx = list(first.unmatched_detections)
    if config.ocr_enabled and remaining and spawn_idx:
        rem_boxes = [tracks[i].last_observed_box() for i in remaining]
        second = _solve(rem_boxes, [high[di] for di in spawn_idx], config.iou_gate)
        matched.extend((remaining[ri], high[spawn_idx[di]]) for ri, di in second.matches)
        remaining = [remaining[ri] for ri in second.unmatched_tracks]
        spawn_idx = [spawn_idx[di] for di in second.unmatched_detections]
    return AssociationOutcome(
        matched=matched,
        spawns=[high[di] for di in spawn_idx],
        unmatched_tracks=remaining,
    )


_ASSOCIATORS = {
    "sort": associate_sort,
    "byte": associate_byte,
    "ocsort": associate_ocsort,
}


class MultiObjectTracker:
    """Online tracker: call :meth:`step` once per frame in increasing order.

    Configuration follows the scikit-learn parameter protocol (flat keyword
    parameters, ``get_params`` / ``set_params``), so the tracker drops into
    parameter sweeps unchanged. ``set_params`` resets tracking state.
    """

    def __init__(self, config: Optional[TrackerConfig] = None, **params) -> None:
        base = config if config is not None else TrackerConfig()
        self.config = replace(base, **params) if params else base
        self.reset()

    def reset(self) -> None:
        self.tracks: List[Track] = []
        self._next_id = 1
        self._steps = 0
        self._last_frame = 0

    def get_params(self, deep: bool = True) -> dict:
        return {f.name: getattr(self.config, f.name) for f in fields(TrackerConfig)}

    def set_params(self, **params) -> "MultiObjectTracker":
        self.config = replace(self.config, **params)
        self.reset()
        return self

    def step(self, frame: int, detections: Sequence[Detection]) -> List[Tuple[int, BBox]]:
        """Process one frame; returns (track_id, box) for every confirmed
        track updated this frame."""
        if frame <= self._last_frame:
            raise ValueError(
                f"frame indices must be strictly increasing, got {frame} after {self._last_frame}"
            )
        for d in detections:
            if d.frame != frame:
                raise ValueError(f"detection carries frame {d.frame}, expected {frame}")
        self._last_frame = frame
        self._steps += 1
        cfg = self.config

        high: List[Detection] = []
        low: List[Detection] = []
        for d in detections:
            score = cfg.effective_score(d)
            if score >= cfg.tau:
                high.append(d)
            elif cfg.strategy == "byte" and score >= cfg.tau_low:
                low.append(d)

        for t in self.tracks:
            t.kstate = kf_predict(t.kstate)
            if t.time_since_update > 0:
                t.hit_streak = 0
            t.time_since_update += 1

        outcome = _ASSOCIATORS[cfg.strategy](self.tracks, high, low, cfg)

        for ti, det in outcome.matched:
            self._update_track(self.tracks[ti], frame, det)

        for det in outcome.spawns:
            self._spawn_track(frame, det)

        outputs: List[Tuple[int, BBox]] = []
        survivors: List[Track] = []
        for t in self.tracks:
            t.status = self._derive_status(t)
            if t.status is TrackStatus.CONFIRMED and t.time_since_update == 0:
                # report the filtered posterior, not the raw detection: it
                # averages out observation noise
                outputs.append((t.id, state_to_box(t.kstate)))
            if t.status is not TrackStatus.REMOVED:
                survivors.append(t)
        self.tracks = survivors
        return outputs

    def _derive_status(self, t: Track) -> TrackStatus:
        if t.time_since_update > self.config.max_age:
            return TrackStatus.REMOVED
        if t.time_since_update > 0:
            return TrackStatus.LOST
        if (
            t.ever_confirmed
            or t.hit_streak >= self.config.min_hits
            or self._steps <= self.config.min_hits
        ):
            t.ever_confirmed = True
            return TrackStatus.CONFIRMED
        return TrackStatus.TENTATIVE

    def _update_track(self, t: Track, frame: int, det: Detection) -> None:
        obs = to_state(det.box)
        gap = t.time_since_update
        if gap > 1 and self.config.oru_active:
            t.kstate = oru_reupdate(t.state_at_update, t.last_obs, obs, gap)
        else:
            t.kstate = kf_update(t.kstate, obs)
        t.state_at_update = t.kstate
        t.last_obs = obs
        t.last_obs_frame = frame
        t.obs_history.append((frame, obs))
        t.time_since_update = 0
        t.hit_streak += 1
        t.hits += 1

    def _spawn_track(self, frame: int, det: Detection) -> None:
        obs = to_state(det.box)
        kstate = kf_init(obs)
        t = Track(
            id=self._next_id,
            kstate=kstate,
            state_at_update=kstate,
            last_obs=obs,
            last_obs_frame=frame,
            obs_history=[(frame, obs)],
        )
        self._next_id += 1
        t.status = self._derive_status(t)
        self.tracks.append(t)


def run(
    detections_by_frame: Mapping[int, Sequence[Detection]],
    config: Optional[TrackerConfig] = None,
    num_frames: Optional[int] = None,
) -> TrackSet:
    """Track a whole sequence; a pure function of (detections, config).

    Frames absent from the mapping are processed as empty. Track ids are
    assigned in frame order, then detection order within the frame.
    """
    for key in detections_by_frame:
        if not isinstance(key, int) or isinstance(key, bool) or key < 1:
            raise ValueError(f"malformed frame grouping: bad frame key {key!r}")
    last = max(detections_by_frame, default=0)
    n = num_frames if num_frames is not None else last
    if n < last:
        raise ValueError(f"num_frames={n} is below the last detection frame {last}")
    tracker = MultiObjectTracker(config)
    out: TrackSet = {}
    for frame in range(1, n + 1):
        out[frame] = tracker.step(frame, detections_by_frame.get(frame, ()))
    return out
