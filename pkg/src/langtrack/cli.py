"""Command-line entry point: track / eval / stats / merge / simulate.

Options resolve with layered precedence: built-in defaults, then a JSON
config file (``--config`` or ``$LANGTRACK_CONFIG``), then command-line flags.
Every run logs the fully resolved configuration and the package version, so
results are attributable. Exit codes: 0 success, 1 internal error, 2 usage
or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from . import __version__
from . import dataio, metrics, simulate
from .tracker import TrackerConfig, run as run_tracker

log = logging.getLogger("langtrack")


class UsageError(Exception):
    """Bad input or missing files: reported with exit code 2."""


# Per-command defaults, overridable by config file and flags.
TRACK_DEFAULTS = {
    "strategy": "ocsort",
    "tau": 0.5,
    "tau_low": 0.1,
    "max_age": 30,
    "min_hits": 3,
    "iou_gate": 0.3,
    "ocm_weight": 0.2,
    "delta_t": 3,
    "oru": "auto",
    "ocr": False,
    "score_fusion": "min",
    "jobs": 0,  # 0 -> number of processors
}

EVAL_DEFAULTS = {
    "metrics": "hota,clear,identity",
    "per_scenario": False,
}

_METRIC_FAMILIES = {
    "hota": ("HOTA", "AssA", "DetA", "LocA"),
    "clear": ("MOTA", "FN", "FP", "IDs"),
    "identity": ("IDR", "IDP", "IDF1"),
}


def _load_config_file(explicit: Optional[str]) -> dict:
    path = explicit or os.environ.get("LANGTRACK_CONFIG")
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {p} must hold a JSON object")
    return data


def _resolve(defaults: dict, file_cfg: dict, args: argparse.Namespace) -> dict:
    resolved = dict(defaults)
    for key in defaults:
        if key in file_cfg:
            resolved[key] = file_cfg[key]
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
    return resolved


def _log_run(command: str, resolved: dict) -> None:
    log.info("langtrack %s %s config=%s", __version__, command,
             json.dumps(resolved, sort_keys=True, default=str))


def _tracker_config(opts: dict) -> TrackerConfig:
    oru = {"auto": None, "on": True, "off": False}[str(opts["oru"])]
    return TrackerConfig(
        tau=float(opts["tau"]),
        tau_low=float(opts["tau_low"]),
        max_age=int(opts["max_age"]),
        min_hits=int(opts["min_hits"]),
        iou_gate=float(opts["iou_gate"]),
        strategy=str(opts["strategy"]),
        ocm_weight=float(opts["ocm_weight"]),
        delta_t=int(opts["delta_t"]),
        oru_enabled=oru,
        ocr_enabled=bool(opts["ocr"]),
        score_fusion=str(opts["score_fusion"]),
    )


# ---------------------------------------------------------------------------
# track


def _discover_track_units(det_root: Path, expr_path: Path) -> List[Tuple[str, str, Path, Optional[int]]]:
    """(sequence, expression, detection file, frame count) per unit."""
    units: List[Tuple[str, str, Path, Optional[int]]] = []

    def det_file(seq: str, eid: str) -> Path:
        flat = det_root / seq / f"{eid}.txt"
        if flat.is_file():
            return flat
        nested = det_root / seq / "detections" / f"{eid}.txt"
        if nested.is_file():
            return nested
        raise UsageError(f"missing detections for ({seq}, {eid}): {flat} or {nested}")

    if expr_path.is_file():
        data = json.loads(expr_path.read_text())
        seq = str(data.get("sequence", expr_path.parent.name))
        frames = None
        manifest_path = expr_path.parent / "manifest.json"
        if manifest_path.is_file():
            frames = dataio.load_manifest(manifest_path).frame_count
        for expr in dataio.load_expressions(expr_path):
            units.append((seq, expr.expression_id, det_file(seq, expr.expression_id), frames))
    elif expr_path.is_dir():
        for seq in dataio.discover_sequences(expr_path):
            manifest = dataio.load_manifest(expr_path / seq / "manifest.json")
            for expr in dataio.load_expressions(expr_path / seq / "expressions.json"):
                units.append(
                    (seq, expr.expression_id, det_file(seq, expr.expression_id),
                     manifest.frame_count)
                )
    else:
        raise UsageError(f"--expressions path not found: {expr_path}")
    if not units:
        raise UsageError(f"no (sequence, expression) units found under {expr_path}")
    return units


def _track_one(task: Tuple[str, str, str, Optional[int], dict, str]) -> str:
    seq, eid, det_file, frames, opts, out_root = task
    dets = dataio.load_detections(det_file)
    trackset = run_tracker(dets, _tracker_config(opts), num_frames=frames)
    out_path = dataio.result_path(out_root, seq, eid)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_mot(trackset, out_path)
    return f"{seq}/{eid}"


def cmd_track(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    opts = _resolve(TRACK_DEFAULTS, file_cfg, args)
    _log_run("track", opts)
    _tracker_config(opts)  # validate before spawning any work
    if not args.detections or not args.out or not args.expressions:
        raise UsageError("track requires --detections, --expressions and --out")
    det_root = Path(args.detections)
    if not det_root.is_dir():
        raise UsageError(f"--detections directory not found: {det_root}")
    units = _discover_track_units(det_root, Path(args.expressions))
    tasks = [(seq, eid, str(det), frames, opts, args.out) for seq, eid, det, frames in units]
    jobs = int(opts["jobs"]) or (os.cpu_count() or 1)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_track_one, tasks))
    else:
        done = [_track_one(t) for t in tasks]
    log.info("tracked %d units into %s", len(done), args.out)
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    opts = _resolve(EVAL_DEFAULTS, file_cfg, args)
    _log_run("eval", opts)
    if not args.gt or not args.results:
        raise UsageError("eval requires --gt and --results")
    if not Path(args.gt).is_dir():
        raise UsageError(f"--gt directory not found: {args.gt}")
    families = [m.strip() for m in str(opts["metrics"]).split(",") if m.strip()]
    unknown = [m for m in families if m not in _METRIC_FAMILIES]
    if unknown:
        raise UsageError(f"unknown metric families: {unknown}")
    columns = [c for fam in ("hota", "clear", "identity") if fam in families
               for c in _METRIC_FAMILIES[fam]]
    units, warnings = dataio.load_eval_units(args.gt, args.results)
    for w in warnings:
        log.warning("%s", w)
    if not units:
        raise UsageError(f"no evaluation units under {args.gt}")
    rows = metrics.aggregate(units, per_scenario=bool(opts["per_scenario"]))
    print(metrics.render_table(rows, columns=columns))
    if args.json:
        records = metrics.report_records(rows)
        Path(args.json).write_text(json.dumps(records, indent=2, sort_keys=True) + "\n")
        log.info("wrote %s", args.json)
    return 0


# ---------------------------------------------------------------------------
# stats / merge / simulate


def cmd_stats(args: argparse.Namespace) -> int:
    _log_run("stats", {"root": args.root, "reference": args.reference})
    if not args.root or not Path(args.root).is_dir():
        raise UsageError(f"--root directory not found: {args.root}")
    stats = dataio.compute_stats(args.root, args.reference)
    headers = ["Videos", "Frames", "Boxes", "Tracks",
               "Min.Tracks", "Avg.Tracks", "Max.Tracks", "Vocab."]
    values = [stats.videos, stats.frames, stats.boxes, stats.tracks,
              f"{stats.min_tracks:.1f}", f"{stats.avg_tracks:.1f}",
              f"{stats.max_tracks:.1f}", stats.vocabulary]
    if stats.novel_vocabulary is not None:
        headers.append("Novel.Vocab")
        values.append(stats.novel_vocabulary)
    print("".join(f"{h:>12}" for h in headers))
    print("".join(f"{v:>12}" for v in values))
    if args.json:
        payload = {h: (v if isinstance(v, (int, float)) else float(v)) for h, v in zip(headers, values)}
        Path(args.json).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


def _parse_source(spec: str) -> dataio.MergeSource:
    if "=" not in spec:
        raise UsageError(f"--source must look like NAME=PATH[:SCENARIO], got {spec!r}")
    name, rest = spec.split("=", 1)
    scenario = None
    path = rest
    if ":" in rest:
        path, scenario = rest.rsplit(":", 1)
    if not name or not path:
        raise UsageError(f"--source must look like NAME=PATH[:SCENARIO], got {spec!r}")
    root = Path(path)
    if not root.is_dir():
        raise UsageError(f"source root not found: {root}")
    return dataio.MergeSource(name=name, root=root, scenario=scenario)


def cmd_merge(args: argparse.Namespace) -> int:
    _log_run("merge", {"sources": args.source, "out": args.out})
    if not args.source:
        raise UsageError("merge requires at least one --source NAME=PATH[:SCENARIO]")
    if not args.out:
        raise UsageError("merge requires --out")
    sources = [_parse_source(s) for s in args.source]
    stats = dataio.merge_datasets(sources, args.out)
    log.info("merged %d videos, %d boxes into %s", stats.videos, stats.boxes, args.out)
    print(f"merged {stats.videos} sequences into {args.out}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    resolved = {
        "seed": args.seed, "targets": args.targets, "frames": args.frames,
        "width": args.width, "height": args.height, "noise_std": args.noise_std,
        "dropout": args.dropout, "false_pos_rate": args.false_pos_rate,
        "curved": args.curved, "out": args.out,
    }
    _log_run("simulate", resolved)
    if not args.out:
        raise UsageError("simulate requires --out")
    occlusions = tuple(_parse_triplet(s, "occlusion") for s in (args.occlusion or []))
    dips = tuple(_parse_dip(s) for s in (args.conf_dip or []))
    cfg = simulate.SimConfig(
        seed=args.seed,
        num_targets=args.targets,
        num_frames=args.frames,
        image_size=(args.width, args.height),
        speed_range=(args.speed_min, args.speed_max),
        det_noise_std=args.noise_std,
        dropout_prob=args.dropout,
        false_pos_rate=args.false_pos_rate,
        occlusions=occlusions,
        conf_constant=args.conf,
        conf_dips=dips,
        curved=args.curved,
    )
    result = simulate.generate(cfg, sequence_id=args.sequence_id, scenario=args.scenario)
    seq_dir = simulate.write_scenario(result, args.out)
    log.info("wrote synthetic sequence %s", seq_dir)
    print(seq_dir)
    return 0


def _parse_triplet(spec: str, what: str) -> simulate.Occlusion:
    try:
        t, s, l = (int(v) for v in spec.split(":"))
        return simulate.Occlusion(t, s, l)
    except ValueError:
        raise UsageError(f"--{what} must look like TARGET:START:LENGTH, got {spec!r}") from None


def _parse_dip(spec: str) -> simulate.ConfDip:
    try:
        t, s, l, low = spec.split(":")
        return simulate.ConfDip(int(t), int(s), int(l), float(low))
    except ValueError:
        raise UsageError(f"--conf-dip must look like TARGET:START:LENGTH:LOW, got {spec!r}") from None


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langtrack",
        description="Language-guided multi-object tracking toolkit",
    )
    parser.add_argument("--version", action="version", version=f"langtrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run the tracker over per-unit detection files")
    p.add_argument("--detections", required=True, help="detections root (or dataset root)")
    p.add_argument("--expressions", required=True,
                   help="expressions.json for one sequence, or a dataset root")
    p.add_argument("--out", required=True, help="results root to write")
    p.add_argument("--strategy", choices=("sort", "byte", "ocsort"))
    p.add_argument("--tau", type=float, help="score threshold (default 0.5)")
    p.add_argument("--tau-low", dest="tau_low", type=float)
    p.add_argument("--max-age", dest="max_age", type=int)
    p.add_argument("--min-hits", dest="min_hits", type=int)
    p.add_argument("--iou-gate", dest="iou_gate", type=float)
    p.add_argument("--ocm-weight", dest="ocm_weight", type=float)
    p.add_argument("--delta-t", dest="delta_t", type=int)
    p.add_argument("--oru", choices=("auto", "on", "off"))
    p.add_argument("--ocr", action="store_const", const=True, default=None,
                   help="enable the last-observation recovery pass")
    p.add_argument("--score-fusion", dest="score_fusion", choices=("min", "product", "text_only"))
    p.add_argument("--jobs", type=int, help="parallel units (default: number of processors)")
    p.add_argument("--config", help="JSON config file (or $LANGTRACK_CONFIG)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score results against ground truth")
    p.add_argument("--gt", required=True, help="dataset root with ground truth")
    p.add_argument("--results", required=True, help="results root to score")
    p.add_argument("--metrics", help="comma list of hota,clear,identity (default all)")
    p.add_argument("--per-scenario", dest="per_scenario", action="store_const", const=True,
                   default=None, help="add one row per scenario")
    p.add_argument("--json", help="also write rows to this JSON file")
    p.add_argument("--config", help="JSON config file (or $LANGTRACK_CONFIG)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--root", required=True)
    p.add_argument("--reference", help="reference split for the novel-vocabulary count")
    p.add_argument("--json", help="also write stats to this JSON file")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("merge", help="merge dataset roots into one layout")
    p.add_argument("--source", action="append", metavar="NAME=PATH[:SCENARIO]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("simulate", help="generate a synthetic benchmark sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--targets", type=int, default=5)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=720)
    p.add_argument("--speed-min", dest="speed_min", type=float, default=0.5)
    p.add_argument("--speed-max", dest="speed_max", type=float, default=2.5)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=0.0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--false-pos-rate", dest="false_pos_rate", type=float, default=0.0)
    p.add_argument("--occlusion", action="append", metavar="TARGET:START:LENGTH")
    p.add_argument("--conf", type=float, default=0.9)
    p.add_argument("--conf-dip", dest="conf_dip", action="append",
                   metavar="TARGET:START:LENGTH:LOW")
    p.add_argument("--curved", action="store_true")
    p.add_argument("--sequence-id", dest="sequence_id")
    p.add_argument("--scenario", default="synthetic")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return 2
    except (dataio.MotParseError, dataio.ValidationError, dataio.DatasetError) as exc:
        log.error("%s", exc)
        return 2
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2
    except Exception:  # pragma: no cover - internal failure path
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
