"""Association cost matrices and optimal assignment between tracks and detections.

Costs combine box overlap (1 - IoU) with an observation-momentum term that
penalizes candidates inconsistent with a track's recently observed motion
direction. Assignment maximizes the number of permitted matches first and
minimizes total cost among those, which is what enumerating permutations of
the permitted pairs yields.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BBox, StateBox, boxes_to_array, iou_matrix

__all__ = [
    "CostMatrix",
    "Assignment",
    "iou_cost",
    "ocm_cost",
    "combine_costs",
    "solve_assignment",
]

# Displacements shorter than this carry no usable direction.
MIN_DISPLACEMENT = 1e-6


@dataclass
class CostMatrix:
    """Pairwise track-by-detection costs with a mask of gated-out pairs."""

    cost: np.ndarray
    forbidden: np.ndarray

    def __post_init__(self) -> None:
        self.cost = np.asarray(self.cost, dtype=np.float64)
        self.forbidden = np.asarray(self.forbidden, dtype=bool)
        if self.cost.shape != self.forbidden.shape:
            raise ValueError(
                f"cost {self.cost.shape} and forbidden {self.forbidden.shape} shapes differ"
            )
        if self.cost.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {self.cost.shape}")
        if not np.all(np.isfinite(self.cost[~self.forbidden])):
            raise ValueError("non-finite cost on a permitted pair")

    @property
    def rows(self) -> int:
        return self.cost.shape[0]

    @property
    def cols(self) -> int:
        return self.cost.shape[1]


@dataclass
class Assignment:
    """Result of one assignment pass, indices into the input lists."""

    matches: list[tuple[int, int]]
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def iou_cost(tracks: Sequence[BBox], dets: Sequence[BBox], gate: float = 0.3) -> CostMatrix:
    """Overlap cost 1 - IoU; pairs with IoU below ``gate`` are forbidden."""
    if not 0.0 <= gate <= 1.0:
        raise ValueError(f"gate must be in [0, 1], got {gate}")
    overlap = iou_matrix(boxes_to_array(tracks), boxes_to_array(dets))
    return CostMatrix(cost=1.0 - overlap, forbidden=overlap < gate)


def ocm_cost(
    track_history: Sequence[Optional[tuple[StateBox, StateBox]]],
    dets: Sequence[BBox],
    weight: float = 0.2,
) -> np.ndarray:
    """Direction-consistency cost from observed momentum.

    Each track contributes a pair of observations (older, newer); the track
    direction is newer - older in center coordinates, the candidate direction
    is detection center - newer. The entry is ``weight * |angle difference|``
    in [0, weight*pi]. Rows for tracks without two observations, and entries
    where either displacement is shorter than ``MIN_DISPLACEMENT``, are zero.
    """
    n, m = len(track_history), len(dets)
    if n == 0 or m == 0 or weight == 0:
        return np.zeros((n, m), dtype=np.float64)
    det_centers = np.array([b.center for b in dets], dtype=np.float64).reshape(-1, 2)
    older = np.zeros((n, 2))
    newer = np.zeros((n, 2))
    valid = np.zeros(n, dtype=bool)
    for i, pair in enumerate(track_history):
        if pair is None:
            continue
        older[i] = (pair[0].cx, pair[0].cy)
        newer[i] = (pair[1].cx, pair[1].cy)
        valid[i] = True
    track_d = newer - older
    valid &= np.hypot(track_d[:, 0], track_d[:, 1]) >= MIN_DISPLACEMENT
    if not valid.any():
        return np.zeros((n, m), dtype=np.float64)
    theta_track = np.arctan2(track_d[:, 1], track_d[:, 0])
    cand = det_centers[None, :, :] - newer[:, None, :]
    mag = np.hypot(cand[..., 0], cand[..., 1])
    theta_cand = np.arctan2(cand[..., 1], cand[..., 0])
    diff = np.abs(theta_cand - theta_track[:, None])
    diff = np.minimum(diff, 2.0 * np.pi - diff)
    np.multiply(weight, diff, out=diff)
    diff[mag < MIN_DISPLACEMENT] = 0.0
    diff[~valid, :] = 0.0
    return diff


def combine_costs(base: CostMatrix, extra: np.ndarray) -> CostMatrix:
    """Elementwise sum of an extra cost term onto a gated matrix."""
    extra = np.asarray(extra, dtype=np.float64)
    if extra.shape != base.cost.shape:
        raise ValueError(f"extra term shape {extra.shape} != cost shape {base.cost.shape}")
    return CostMatrix(cost=base.cost + extra, forbidden=base.forbidden.copy())


def solve_assignment(m: CostMatrix) -> Assignment:
    """Minimum-cost assignment over permitted pairs.

    Among matchings of maximum permitted cardinality, returns one of minimum
    total cost (equal to the exhaustive-enumeration optimum). Rows and columns
    with no permitted pair are excluded up front and reported unmatched. The
    result is deterministic for a given matrix; matches are sorted by row
    index, then column index.
    """
    rows, cols = m.rows, m.cols
    permitted = ~m.forbidden
    row_ok = np.flatnonzero(permitted.any(axis=1))
    col_ok = np.flatnonzero(permitted.any(axis=0))
    if row_ok.size == 0 or col_ok.size == 0:
        return Assignment([], list(range(rows)), list(range(cols)))

    sub = m.cost[np.ix_(row_ok, col_ok)].copy()
    sub_forbidden = m.forbidden[np.ix_(row_ok, col_ok)]
    # A penalty large enough that using a forbidden pair can never beat any
    # rearrangement of permitted ones, so cardinality is maximized first.
    span = float(np.abs(sub[~sub_forbidden]).max(initial=0.0))
    penalty = (min(sub.shape) + 1) * (2.0 * span + 1.0)
    sub[sub_forbidden] = penalty

    ri, ci = linear_sum_assignment(sub)
    matches = sorted(
        (int(row_ok[r]), int(col_ok[c]))
        for r, c in zip(ri, ci)
        if not sub_forbidden[r, c]
    )
    matched_rows = {r for r, _ in matches}
    matched_cols = {c for _, c in matches}
    return Assignment(
        matches=matches,
        unmatched_tracks=[i for i in range(rows) if i not in matched_rows],
        unmatched_detections=[j for j in range(cols) if j not in matched_cols],
    )
