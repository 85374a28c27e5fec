"""Tracking evaluation over (sequence, expression) units.

Three metric families are computed per unit and pooled by summing counts
(never by averaging per-unit scores):

* HOTA family — per-frame optimal matching at 19 overlap thresholds, with a
  prior pass that estimates trajectory-pair affinities so matching prefers
  temporally consistent pairs; geometric mean of detection and association
  accuracy, averaged over thresholds.
* CLEAR — per-frame matching at IoU 0.5 with previous-frame continuity,
  yielding MOTA with FN/FP/ID-switch counts.
* Identity — a single global bipartite matching between whole trajectories,
  yielding IDP/IDR/IDF1.

Accumulators namespace track ids by unit, so merging accumulators from
different units is plain elementwise addition and is exactly associative
(per-threshold localization sums are kept as exact rationals).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BBox, boxes_to_array, iou_matrix

__all__ = [
    "ALPHAS",
    "CLEAR_IOU",
    "EvalUnit",
    "HotaAccumulator",
    "ClearCounts",
    "IdentityCounts",
    "UnitAccumulator",
    "MetricReport",
    "match_frame",
    "accumulate_hota",
    "compute_hota",
    "compute_clear",
    "compute_identity",
    "evaluate_unit",
    "aggregate",
    "render_table",
    "report_records",
]

# Overlap thresholds 0.05, 0.10, ..., 0.95 for the HOTA family; fixed so that
# reports stay comparable across runs.
ALPHAS: Tuple[float, ...] = tuple(k * 0.05 for k in range(1, 20))
N_ALPHA = len(ALPHAS)
CLEAR_IOU = 0.5

# Slack absorbing float dust when comparing IoU values against thresholds.
_THRESH_EPS = 1e-9
# Weight of the IoU tie-break on top of pair affinity in per-frame matching.
_IOU_TIEBREAK = 1e-3

FrameBoxes = Mapping[int, Sequence[Tuple[int, BBox]]]

METRIC_COLUMNS = ("HOTA", "AssA", "DetA", "LocA", "MOTA", "FN", "FP", "IDs", "IDR", "IDP", "IDF1")


@dataclass
class EvalUnit:
    """Ground truth and predictions for one (sequence, expression) pair."""

    sequence_id: str
    expression_id: str
    gt: FrameBoxes
    pred: FrameBoxes
    scenario: str = "unknown"

    def __post_init__(self) -> None:
        for side, data in (("gt", self.gt), ("pred", self.pred)):
            for frame, entries in data.items():
                ids = [tid for tid, _ in entries]
                if len(ids) != len(set(ids)):
                    raise ValueError(
                        f"duplicate track id in {side} of frame {frame} "
                        f"({self.sequence_id}/{self.expression_id})"
                    )

    @property
    def key(self) -> Tuple[str, str]:
        return (self.sequence_id, self.expression_id)


@dataclass
class _FrameData:
    frame: int
    gt_ids: List[int]
    pred_ids: List[int]
    sim: np.ndarray  # gt x pred IoU


def _frame_table(unit: EvalUnit) -> List[_FrameData]:
    """Per-frame id lists and IoU matrices over the unit's full frame range.

    Input order within a frame is preserved, which keeps every downstream
    matching invariant under relabeling of track ids.
    """
    frames_present = set(unit.gt) | set(unit.pred)
    if not frames_present:
        return []
    table = []
    for frame in range(min(frames_present), max(frames_present) + 1):
        gt_entries = unit.gt.get(frame, ())
        pred_entries = unit.pred.get(frame, ())
        gt_boxes = boxes_to_array(b for _, b in gt_entries)
        pred_boxes = boxes_to_array(b for _, b in pred_entries)
        table.append(
            _FrameData(
                frame=frame,
                gt_ids=[tid for tid, _ in gt_entries],
                pred_ids=[tid for tid, _ in pred_entries],
                sim=iou_matrix(gt_boxes, pred_boxes),
            )
        )
    return table


def _max_count_matching(eligible: np.ndarray, score: np.ndarray) -> List[Tuple[int, int]]:
    """Matching over eligible pairs: maximum cardinality first, then maximum
    total score. Returns row-sorted (row, col) pairs."""
    if eligible.size == 0 or not eligible.any():
        return []
    # Any match is worth more than every achievable score sum, so cardinality
    # dominates; scores only break ties among maximum matchings.
    big = 10.0 * (min(eligible.shape) + 1)
    value = np.where(eligible, big + score, 0.0)
    rows, cols = linear_sum_assignment(value, maximize=True)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if eligible[r, c])


def match_frame(
    gt_boxes: Sequence[BBox],
    pred_boxes: Sequence[BBox],
    alpha: float,
    affinity: Optional[np.ndarray] = None,
) -> List[Tuple[int, int]]:
    """Optimal per-frame matching among pairs with IoU >= alpha.

    Maximizes match count, then the summed prior-association affinity with
    the pair IoU as a small tie-break. With no affinity given, only the IoU
    tie-break applies.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    sim = iou_matrix(boxes_to_array(gt_boxes), boxes_to_array(pred_boxes))
    if affinity is None:
        affinity = np.zeros_like(sim)
    return _max_count_matching(sim >= alpha - _THRESH_EPS, affinity + _IOU_TIEBREAK * sim)


# ---------------------------------------------------------------------------
# HOTA


@dataclass
class HotaAccumulator:
    """Per-threshold match counts, mergeable across units by addition.

    Keys are (sequence, expression, track id) triples, so accumulators from
    different units never collide. ``loc_sum`` keeps the summed IoU of true
    positives as exact rationals, making merges associative bit-for-bit.
    """

    tp: np.ndarray = field(default_factory=lambda: np.zeros(N_ALPHA, dtype=np.int64))
    fn: np.ndarray = field(default_factory=lambda: np.zeros(N_ALPHA, dtype=np.int64))
    fp: np.ndarray = field(default_factory=lambda: np.zeros(N_ALPHA, dtype=np.int64))
    loc_sum: List[Fraction] = field(default_factory=lambda: [Fraction(0)] * N_ALPHA)
    pair_tp: Dict[Tuple[Hashable, Hashable], np.ndarray] = field(default_factory=dict)
    gt_count: Dict[Hashable, int] = field(default_factory=dict)
    pred_count: Dict[Hashable, int] = field(default_factory=dict)

    def merge(self, other: "HotaAccumulator") -> "HotaAccumulator":
        out = HotaAccumulator(
            tp=self.tp + other.tp,
            fn=self.fn + other.fn,
            fp=self.fp + other.fp,
            loc_sum=[a + b for a, b in zip(self.loc_sum, other.loc_sum)],
            pair_tp={k: v.copy() for k, v in self.pair_tp.items()},
            gt_count=dict(self.gt_count),
            pred_count=dict(self.pred_count),
        )
        for k, v in other.pair_tp.items():
            if k in out.pair_tp:
                out.pair_tp[k] = out.pair_tp[k] + v
            else:
                out.pair_tp[k] = v.copy()
        for dst, src in ((out.gt_count, other.gt_count), (out.pred_count, other.pred_count)):
            for k, v in src.items():
                dst[k] = dst.get(k, 0) + v
        return out


def accumulate_hota(unit: EvalUnit, table: Optional[List[_FrameData]] = None) -> HotaAccumulator:
    if table is None:
        table = _frame_table(unit)
    acc = HotaAccumulator()
    key = unit.key

    # Pass 1: soft alignment between trajectories, accumulated without any
    # matching; this estimates how consistently a (gt, pred) pair co-occurs.
    potential: Dict[Tuple[int, int], float] = {}
    gt_count: Dict[int, int] = {}
    pred_count: Dict[int, int] = {}
    for fd in table:
        for g in fd.gt_ids:
            gt_count[g] = gt_count.get(g, 0) + 1
        for p in fd.pred_ids:
            pred_count[p] = pred_count.get(p, 0) + 1
        if fd.sim.size == 0:
            continue
        denom = fd.sim.sum(axis=1, keepdims=True) + fd.sim.sum(axis=0, keepdims=True) - fd.sim
        soft = np.zeros_like(fd.sim)
        np.divide(fd.sim, denom, out=soft, where=denom > _THRESH_EPS)
        for i, g in enumerate(fd.gt_ids):
            for j, p in enumerate(fd.pred_ids):
                if soft[i, j] > 0:
                    potential[(g, p)] = potential.get((g, p), 0.0) + soft[i, j]

    def prior_affinity(g: int, p: int) -> float:
        pot = potential.get((g, p), 0.0)
        return pot / (gt_count[g] + pred_count[p] - pot)

    # Pass 2: per frame and per threshold, optimal matching that maximizes
    # match count and prefers pairs with high prior affinity.
    loc_float = [0.0] * N_ALPHA
    for fd in table:
        n_gt, n_pred = len(fd.gt_ids), len(fd.pred_ids)
        if n_gt == 0 and n_pred == 0:
            continue
        if fd.sim.size:
            affinity = np.array(
                [[prior_affinity(g, p) for p in fd.pred_ids] for g in fd.gt_ids]
            )
            score = affinity + _IOU_TIEBREAK * fd.sim
        by_mask: Dict[bytes, List[Tuple[int, int]]] = {}
        for a, alpha in enumerate(ALPHAS):
            if fd.sim.size == 0:
                pairs: List[Tuple[int, int]] = []
            else:
                mask = fd.sim >= alpha - _THRESH_EPS
                mkey = mask.tobytes()
                if mkey not in by_mask:
                    by_mask[mkey] = _max_count_matching(mask, score)
                pairs = by_mask[mkey]
            acc.tp[a] += len(pairs)
            acc.fn[a] += n_gt - len(pairs)
            acc.fp[a] += n_pred - len(pairs)
            for i, j in pairs:
                pk = (key + (fd.gt_ids[i],), key + (fd.pred_ids[j],))
                if pk not in acc.pair_tp:
                    acc.pair_tp[pk] = np.zeros(N_ALPHA, dtype=np.int64)
                acc.pair_tp[pk][a] += 1
                loc_float[a] += fd.sim[i, j]

    acc.loc_sum = [Fraction(x) for x in loc_float]
    acc.gt_count = {key + (g,): c for g, c in gt_count.items()}
    acc.pred_count = {key + (p,): c for p, c in pred_count.items()}
    return acc


def compute_hota(source: HotaAccumulator | EvalUnit) -> Tuple[float, float, float, float]:
    """(HOTA, DetA, AssA, LocA) from an accumulator or a single unit.

    Per threshold: DetA = TP/(TP+FN+FP); each true positive carries an
    association score TPA/(TPA+FNA+FPA) over its trajectory pair, and AssA is
    their mean; HOTA is sqrt(DetA * AssA). Final values average the 19
    thresholds. A unit with no boxes on either side scores 0.
    """
    acc = source if isinstance(source, HotaAccumulator) else accumulate_hota(source)
    deta = np.zeros(N_ALPHA)
    assa = np.zeros(N_ALPHA)
    hota = np.zeros(N_ALPHA)
    loca = np.zeros(N_ALPHA)
    for a in range(N_ALPHA):
        tp, fn, fp = int(acc.tp[a]), int(acc.fn[a]), int(acc.fp[a])
        denom = tp + fn + fp
        deta[a] = tp / denom if denom else 0.0
        if tp:
            # fsum makes the reduction independent of dict ordering, so id
            # relabeling cannot perturb the result.
            total_a = math.fsum(
                int(v[a])
                * (int(v[a]) / (acc.gt_count[gk] + acc.pred_count[pk] - int(v[a])))
                for (gk, pk), v in acc.pair_tp.items()
                if v[a]
            )
            assa[a] = total_a / tp
            loca[a] = float(acc.loc_sum[a]) / tp
        hota[a] = math.sqrt(deta[a] * assa[a])
    n = float(N_ALPHA)
    return (
        math.fsum(hota) / n,
        math.fsum(deta) / n,
        math.fsum(assa) / n,
        math.fsum(loca) / n,
    )


# ---------------------------------------------------------------------------
# CLEAR


@dataclass
class ClearCounts:
    fn: int = 0
    fp: int = 0
    ids: int = 0
    num_gt: int = 0

    def merge(self, other: "ClearCounts") -> "ClearCounts":
        return ClearCounts(
            self.fn + other.fn, self.fp + other.fp,
            self.ids + other.ids, self.num_gt + other.num_gt,
        )


def accumulate_clear(unit: EvalUnit, table: Optional[List[_FrameData]] = None) -> ClearCounts:
    """Per-frame matching at IoU >= 0.5 with continuity: a pair matched in
    the previous frame is kept while still above threshold, the remaining
    entities are matched optimally. A switch is counted when a ground-truth
    track's matched prediction id differs from its last known one."""
    if table is None:
        table = _frame_table(unit)
    counts = ClearCounts()
    last_match: Dict[int, int] = {}
    prev_pairs: Dict[int, int] = {}
    for fd in table:
        counts.num_gt += len(fd.gt_ids)
        eligible = fd.sim >= CLEAR_IOU - _THRESH_EPS
        matched: Dict[int, int] = {}
        used_cols = set()
        if fd.sim.size:
            pred_index = {p: j for j, p in enumerate(fd.pred_ids)}
            for i, g in enumerate(fd.gt_ids):
                p = prev_pairs.get(g)
                if p is None or p not in pred_index:
                    continue
                j = pred_index[p]
                if eligible[i, j] and j not in used_cols:
                    matched[i] = j
                    used_cols.add(j)
            free_rows = [i for i in range(len(fd.gt_ids)) if i not in matched]
            free_cols = [j for j in range(len(fd.pred_ids)) if j not in used_cols]
            if free_rows and free_cols:
                sub_el = eligible[np.ix_(free_rows, free_cols)]
                sub_sim = fd.sim[np.ix_(free_rows, free_cols)]
                for ri, ci in _max_count_matching(sub_el, sub_sim):
                    matched[free_rows[ri]] = free_cols[ci]
        counts.fn += len(fd.gt_ids) - len(matched)
        counts.fp += len(fd.pred_ids) - len(matched)
        new_pairs: Dict[int, int] = {}
        for i, j in sorted(matched.items()):
            g, p = fd.gt_ids[i], fd.pred_ids[j]
            if g in last_match and last_match[g] != p:
                counts.ids += 1
            last_match[g] = p
            new_pairs[g] = p
        prev_pairs = new_pairs
    return counts


def compute_clear(unit: EvalUnit) -> Tuple[float, int, int, int]:
    """(MOTA, FN, FP, IDs); MOTA is NaN when the unit has no ground truth."""
    counts = accumulate_clear(unit)
    return (_mota_value(counts), counts.fn, counts.fp, counts.ids)


def _mota_value(counts: ClearCounts) -> float:
    if counts.num_gt == 0:
        return math.nan
    return 1.0 - (counts.fn + counts.fp + counts.ids) / counts.num_gt


# ---------------------------------------------------------------------------
# Identity


@dataclass
class IdentityCounts:
    idtp: int = 0
    num_gt: int = 0
    num_pred: int = 0

    def merge(self, other: "IdentityCounts") -> "IdentityCounts":
        return IdentityCounts(
            self.idtp + other.idtp,
            self.num_gt + other.num_gt,
            self.num_pred + other.num_pred,
        )


def accumulate_identity(unit: EvalUnit, table: Optional[List[_FrameData]] = None) -> IdentityCounts:
    """Global min-cost matching between whole trajectories; the cost of a
    pair is the number of box-frames where they disagree at IoU 0.5."""
    if table is None:
        table = _frame_table(unit)
    gt_len: Dict[int, int] = {}
    pred_len: Dict[int, int] = {}
    overlap: Dict[Tuple[int, int], int] = {}
    for fd in table:
        for g in fd.gt_ids:
            gt_len[g] = gt_len.get(g, 0) + 1
        for p in fd.pred_ids:
            pred_len[p] = pred_len.get(p, 0) + 1
        if fd.sim.size == 0:
            continue
        eligible = fd.sim >= CLEAR_IOU - _THRESH_EPS
        for i, g in enumerate(fd.gt_ids):
            for j, p in enumerate(fd.pred_ids):
                if eligible[i, j]:
                    overlap[(g, p)] = overlap.get((g, p), 0) + 1

    num_gt = sum(gt_len.values())
    num_pred = sum(pred_len.values())
    if not gt_len or not pred_len:
        return IdentityCounts(0, num_gt, num_pred)

    gt_ids = list(gt_len)      # first-appearance order: stable under relabeling
    pred_ids = list(pred_len)
    ng, np_ = len(gt_ids), len(pred_ids)
    inf = num_gt + num_pred + 1
    cost = np.full((ng + np_, np_ + ng), float(inf))
    for i, g in enumerate(gt_ids):
        for j, p in enumerate(pred_ids):
            cost[i, j] = gt_len[g] + pred_len[p] - 2 * overlap.get((g, p), 0)
        cost[i, np_ + i] = gt_len[g]
    for j, p in enumerate(pred_ids):
        cost[ng + j, j] = pred_len[p]
    cost[ng:, np_:] = 0.0

    rows, cols = linear_sum_assignment(cost)
    idtp = sum(
        overlap.get((gt_ids[r], pred_ids[c]), 0)
        for r, c in zip(rows, cols)
        if r < ng and c < np_
    )
    return IdentityCounts(idtp, num_gt, num_pred)


def compute_identity(unit: EvalUnit) -> Tuple[float, float, float]:
    """(IDP, IDR, IDF1); NaN when the unit has no ground truth."""
    counts = accumulate_identity(unit)
    return _identity_values(counts)


def _identity_values(counts: IdentityCounts) -> Tuple[float, float, float]:
    if counts.num_gt == 0:
        return (math.nan, math.nan, math.nan)
    idfp = counts.num_pred - counts.idtp
    idfn = counts.num_gt - counts.idtp
    idp = counts.idtp / counts.num_pred if counts.num_pred else 0.0
    idr = counts.idtp / counts.num_gt
    idf1 = 2 * counts.idtp / (2 * counts.idtp + idfp + idfn)
    return (idp, idr, idf1)


# ---------------------------------------------------------------------------
# Reports and pooling


@dataclass
class UnitAccumulator:
    """All mergeable counts for one or more units."""

    hota: HotaAccumulator
    clear: ClearCounts
    identity: IdentityCounts

    @classmethod
    def from_unit(cls, unit: EvalUnit) -> "UnitAccumulator":
        table = _frame_table(unit)
        return cls(
            hota=accumulate_hota(unit, table),
            clear=accumulate_clear(unit, table),
            identity=accumulate_identity(unit, table),
        )

    def merge(self, other: "UnitAccumulator") -> "UnitAccumulator":
        return UnitAccumulator(
            hota=self.hota.merge(other.hota),
            clear=self.clear.merge(other.clear),
            identity=self.identity.merge(other.identity),
        )


@dataclass(frozen=True)
class MetricReport:
    """The eleven reported values, ratio metrics in [0, 1]."""

    hota: float
    assa: float
    deta: float
    loca: float
    mota: float
    fn: int
    fp: int
    ids: int
    idr: float
    idp: float
    idf1: float

    def column_values(self) -> Tuple:
        return (
            self.hota, self.assa, self.deta, self.loca, self.mota,
            self.fn, self.fp, self.ids, self.idr, self.idp, self.idf1,
        )


def report_from_accumulator(acc: UnitAccumulator) -> MetricReport:
    hota, deta, assa, loca = compute_hota(acc.hota)
    idp, idr, idf1 = _identity_values(acc.identity)
    return MetricReport(
        hota=hota, assa=assa, deta=deta, loca=loca,
        mota=_mota_value(acc.clear),
        fn=acc.clear.fn, fp=acc.clear.fp, ids=acc.clear.ids,
        idr=idr, idp=idp, idf1=idf1,
    )


def evaluate_unit(unit: EvalUnit) -> MetricReport:
    return report_from_accumulator(UnitAccumulator.from_unit(unit))


@dataclass(frozen=True)
class ReportRow:
    label: str
    report: MetricReport
    num_units: int


def aggregate(
    units: Sequence[EvalUnit],
    per_scenario: bool = False,
    accumulators: Optional[Sequence[UnitAccumulator]] = None,
) -> List[ReportRow]:
    """Pool counts across units: an overall row, plus one row per scenario
    when requested. Units are merged in sorted (sequence, expression) order
    so results are reproducible regardless of input order."""
    if not units:
        raise ValueError("cannot aggregate an empty unit set")
    if accumulators is None:
        accumulators = [UnitAccumulator.from_unit(u) for u in units]
    order = sorted(range(len(units)), key=lambda i: units[i].key)

    def pooled(indices: List[int]) -> UnitAccumulator:
        acc = accumulators[indices[0]]
        for i in indices[1:]:
            acc = acc.merge(accumulators[i])
        return acc

    rows = [ReportRow("overall", report_from_accumulator(pooled(order)), len(units))]
    if per_scenario:
        scenarios = sorted({u.scenario for u in units})
        for sc in scenarios:
            idx = [i for i in order if units[i].scenario == sc]
            rows.append(ReportRow(sc, report_from_accumulator(pooled(idx)), len(idx)))
    return rows


def _fmt_ratio(v: float) -> str:
    return "n/a" if math.isnan(v) else f"{100.0 * v:.2f}"


def render_table(rows: Sequence[ReportRow], columns: Optional[Sequence[str]] = None) -> str:
    """Plain-text table with the published column set and ordering; ratio
    metrics are percentages. ``columns`` may restrict to a subset (the
    published order is kept regardless of the subset's order)."""
    wanted = set(METRIC_COLUMNS if columns is None else columns)
    cols = [c for c in METRIC_COLUMNS if c in wanted]
    label_w = max(12, max(len(r.label) for r in rows) + 2)
    header = f"{'Group':<{label_w}}" + "".join(f"{c:>9}" for c in cols)
    lines = [header]
    for r in rows:
        by_col = dict(zip(METRIC_COLUMNS, r.report.column_values()))
        cells = []
        for col in cols:
            v = by_col[col]
            if col in ("FN", "FP", "IDs"):
                cells.append(f"{int(v):>9d}")
            else:
                cells.append(f"{_fmt_ratio(float(v)):>9}")
        lines.append(f"{r.label:<{label_w}}" + "".join(cells))
    return "\n".join(lines)


def report_records(rows: Sequence[ReportRow]) -> List[dict]:
    """Machine-readable rows; ratios stay in [0, 1], NaN becomes null."""
    records = []
    for r in rows:
        rec: dict = {"group": r.label, "units": r.num_units}
        for col, v in zip(METRIC_COLUMNS, r.report.column_values()):
            if col in ("FN", "FP", "IDs"):
                rec[col] = int(v)
            else:
                rec[col] = None if math.isnan(float(v)) else float(v)
        records.append(rec)
    return records
