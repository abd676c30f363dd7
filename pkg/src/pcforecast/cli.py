"""Command-line surface: index, rangemap, forecast, eval-spf, eval-e2e, scaling.

All commands are deterministic given their inputs, flags, and seed; reports
go to files, human-readable diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation, forecasters, manifest as manifest_mod, metrics, rangemap
from .clouds import PointCloud, PointCloudSequence, load_scan, save_scan
from .forecasters import FORECASTERS, ForecastRequest, IcpParams
from .manifest import load_manifest, load_correspondences, write_manifest
from .rangemap import SphericalGrid
from .trajectories import load_trajectories

CLOUD_FORMATS = ("kitti_bin", "ply_ascii")


def _eprint(*args) -> None:
    print(*args, file=sys.stderr)


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _grid_from_args(args) -> SphericalGrid:
    return SphericalGrid(
        height=args.height, width=args.width,
        phi_min=math.radians(args.phi_min_deg),
        phi_max=math.radians(args.phi_max_deg),
        theta_min=math.radians(args.theta_min_deg),
        theta_max=math.radians(args.theta_max_deg),
    )


def _add_grid_flags(parser) -> None:
    parser.add_argument("--height", type=int, default=120)
    parser.add_argument("--width", type=int, default=1024)
    parser.add_argument("--phi-min-deg", type=float, default=-30.0)
    parser.add_argument("--phi-max-deg", type=float, default=10.0)
    parser.add_argument("--theta-min-deg", type=float, default=0.0)
    parser.add_argument("--theta-max-deg", type=float, default=360.0)


def frames_for_duration(seconds: float, frame_period: float) -> int:
    """Number of frames spanning a duration at the dataset frame period."""
    count = round(seconds / frame_period)
    if count < 1 or abs(count * frame_period - seconds) > 1e-9:
        raise ValueError(
            f"duration {seconds}s is not a whole number of {frame_period}s frames"
        )
    return count


def _resolve_window(args, frame_period: float) -> tuple[int, int]:
    past = args.past
    horizon = args.horizon
    if args.past_seconds is not None:
        past = frames_for_duration(args.past_seconds, frame_period)
    if args.horizon_seconds is not None:
        horizon = frames_for_duration(args.horizon_seconds, frame_period)
    if past is None or horizon is None:
        raise ValueError("need --past/--horizon (frames) or the *-seconds variants")
    return past, horizon


# ---------------------------------------------------------------- index

def cmd_index(args) -> int:
    root = Path(args.scans)
    sequences = {}
    for seq_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        scans = sorted(seq_dir.glob(args.pattern))
        if not scans:
            continue
        sequences[seq_dir.name] = tuple(
            manifest_mod.FrameRecord(i, scan) for i, scan in enumerate(scans)
        )
    if not sequences:
        _eprint(f"error: no scans matching {args.pattern!r} under {root}")
        return 1
    mani = manifest_mod.DatasetManifest(args.frame_period, sequences)
    write_manifest(mani, args.out)
    _eprint(f"indexed {sum(len(v) for v in sequences.values())} scans in "
            f"{len(sequences)} sequences -> {args.out}")
    return 0


# ---------------------------------------------------------------- rangemap

def cmd_rangemap(args) -> int:
    if args.action == "encode":
        grid = _grid_from_args(args)
        cloud = load_scan(args.infile, args.cloud_format)
        in_fov = int(rangemap.fov_mask(cloud, grid).sum()) if len(cloud) else 0
        encoded = rangemap.encode(cloud, grid)
        rangemap.write_rangemap(encoded, args.outfile)
        _eprint(f"encoded {len(cloud)} points -> {args.outfile}")
        _eprint(f"occupancy: {encoded.occupancy():.4f} "
                f"({int(encoded.mask.sum())} of {encoded.mask.size} bins)")
        _eprint(f"dropped points: {len(cloud) - in_fov}")
    else:
        decoded_map = rangemap.read_rangemap(args.infile)
        cloud = rangemap.decode(decoded_map)
        if len(cloud) == 0:
            _eprint("warning: all bins are masked out; decoded cloud is empty")
        save_scan(cloud, args.outfile, args.cloud_format)
        _eprint(f"decoded {len(cloud)} points -> {args.outfile}")
        _eprint(f"occupancy: {decoded_map.occupancy():.4f}")
    return 0


# ---------------------------------------------------------------- forecast

def _windows(records, past: int, horizon: int, stride: int):
    """Start offsets of every window with enough past and future frames."""
    total = len(records)
    return range(0, total - past - horizon + 1, stride)


def cmd_forecast(args) -> int:
    mani = load_manifest(args.manifest)
    past, horizon = _resolve_window(args, mani.frame_period)
    records = mani.frames(args.seq)
    starts = list(_windows(records, past, horizon, args.stride))
    if not starts:
        _eprint(f"error: sequence {args.seq!r} has {len(records)} frames; "
                f"needs at least {past + horizon} for past={past} horizon={horizon}")
        return 1
    if args.first_window_only:
        starts = starts[:1]

    out_root = Path(args.out)
    icp_params = IcpParams(max_iter=args.icp_max_iter, tol=args.icp_tol,
                           max_corr_dist=args.icp_max_corr_dist)
    for method in args.method:
        if method not in FORECASTERS:
            _eprint(f"error: unknown method {method!r}; "
                    f"choose from {sorted(FORECASTERS)}")
            return 1
        method_dir = out_root / args.seq / method
        method_dir.mkdir(parents=True, exist_ok=True)
        sidecar = {"method": method, "past": past, "horizon": horizon,
                   "stride": args.stride, "windows": {}}
        for start in starts:
            window = records[start:start + past]
            anchor = window[-1].index
            sequence = PointCloudSequence(
                tuple(load_scan(r.scan_path) for r in window),
                mani.frame_period, start_index=window[0].index)
            poses = tuple(r.ego_pose for r in window)
            if method == "ego_warp" and any(p is None for p in poses):
                _eprint(f"error: method ego_warp needs ego poses for every past "
                        f"frame of sequence {args.seq!r}")
                return 1
            request = ForecastRequest(
                sequence, horizon,
                ego_poses=poses if method == "ego_warp" else None)
            if method == "icp_warp":
                result = forecasters.forecast_icp_warp(request, icp_params)
            else:
                result = FORECASTERS[method](request)
            window_dir = method_dir / f"{anchor:06d}"
            window_dir.mkdir(exist_ok=True)
            for k, frame in enumerate(result.frames, start=1):
                save_scan(frame, window_dir / f"{anchor + k:06d}.bin")
            sidecar["windows"][f"{anchor:06d}"] = {
                "anchor": anchor,
                "predicted": [anchor + k for k in range(1, horizon + 1)],
                "frames": [dict(d) for d in result.diagnostics],
                **({"info": result.method_info} if result.method_info else {}),
            }
        _write_json(method_dir / "diagnostics.json", sidecar)
        _eprint(f"{method}: wrote {len(starts)} window(s) under {method_dir}")
    return 0


# ---------------------------------------------------------------- eval-spf

def _frame_metrics(gt_path, pred_path, emd_sample_count, seed):
    gt = load_scan(gt_path)
    pred = load_scan(pred_path)
    config = metrics.MetricConfig(emd_sample_count, seed)
    emd_value = metrics.emd(pred, gt, config)
    return {
        "cd": metrics.chamfer(pred, gt),
        "cd_normalized": metrics.chamfer(pred, gt, normalized=True),
        "emd": emd_value,
        "emd_sum": emd_value * emd_sample_count,
    }


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values)


def _collect_forecast_jobs(mani, forecast_root: Path):
    """Yield (method, seq, window, frame index, gt path, pred path) jobs."""
    jobs = []
    for seq_dir in sorted(p for p in forecast_root.iterdir() if p.is_dir()):
        seq_id = seq_dir.name
        for method_dir in sorted(p for p in seq_dir.iterdir() if p.is_dir()):
            for window_dir in sorted(p for p in method_dir.iterdir() if p.is_dir()):
                for pred_path in sorted(window_dir.glob("*.bin")):
                    index = int(pred_path.stem)
                    record = mani.frame(seq_id, index)
                    jobs.append((method_dir.name, seq_id, window_dir.name,
                                 index, record.scan_path, pred_path))
    return jobs


def cmd_eval_spf(args) -> int:
    mani = load_manifest(args.manifest)
    forecast_root = Path(args.forecasts)
    jobs = _collect_forecast_jobs(mani, forecast_root)
    if not jobs:
        _eprint(f"error: no forecast frames found under {forecast_root}")
        return 1

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            computed = list(pool.map(
                _frame_metrics,
                [j[4] for j in jobs], [j[5] for j in jobs],
                [args.emd_samples] * len(jobs), [args.seed] * len(jobs)))
    else:
        computed = [_frame_metrics(j[4], j[5], args.emd_samples, args.seed)
                    for j in jobs]

    methods: dict = {}
    for (method, seq_id, window, index, _, _), values in zip(jobs, computed):
        frames = (methods.setdefault(method, {})
                  .setdefault(seq_id, {})
                  .setdefault(window, {}))
        frames[str(index)] = values

    if args.ppfe:
        _attach_ppfe(mani, methods, forecast_root)

    report = {
        "metric_config": {"emd_sample_count": args.emd_samples,
                          "seed": args.seed},
        "aggregation": "frame mean within window, then mean over windows",
        "methods": {},
    }
    for method, seqs in sorted(methods.items()):
        seq_reports = {}
        for seq_id, windows in sorted(seqs.items()):
            window_means = {}
            for window, frames in sorted(windows.items()):
                window_means[window] = {
                    key: _mean(f[key] for f in frames.values())
                    for key in next(iter(frames.values()))
                }
            seq_mean = {key: _mean(w[key] for w in window_means.values())
                        for key in next(iter(window_means.values()))}
            seq_reports[seq_id] = {"windows": {w: {"frames": windows[w],
                                                   "mean": m}
                                               for w, m in window_means.items()},
                                   "mean": seq_mean}
        method_mean = {key: _mean(s["mean"][key] for s in seq_reports.values())
                       for key in next(iter(seq_reports.values()))["mean"]}
        report["methods"][method] = {"sequences": seq_reports,
                                     "mean": method_mean}
    _write_json(args.out, report)
    for method, body in sorted(report["methods"].items()):
        _eprint(f"{method}: " + ", ".join(
            f"{k}={v:.6g}" for k, v in sorted(body["mean"].items())))
    return 0


def _attach_ppfe(mani, methods: dict, forecast_root: Path) -> None:
    """Add per-frame flow error where correspondence chains are available.

    Warping forecasters keep the point order of the anchor frame, so
    prediction index i corresponds to anchor-frame point i; ground-truth
    flow comes from composing the per-frame correspondence files."""
    for method, seqs in methods.items():
        for seq_id, windows in seqs.items():
            for window, frames in windows.items():
                anchor = int(window)
                for index in sorted(int(t) for t in frames):
                    chain = _correspondence_chain(mani, seq_id, anchor, index)
                    pred = load_scan(forecast_root / seq_id / method / window
                                     / f"{index:06d}.bin")
                    gt = load_scan(mani.frame(seq_id, index).scan_path)
                    frames[str(index)]["ppfe"] = metrics.ppfe(
                        pred, gt, sorted(chain.items()))


def _correspondence_chain(mani, seq_id, anchor, index):
    """Compose per-frame correspondence files into anchor->index point pairs.

    The file attached to frame t maps point indices of frame t to frame t+1;
    points that lose their correspondence along the way are dropped."""
    chain = None
    for t in range(anchor, index):
        record = mani.frame(seq_id, t)
        if record.corr_path is None:
            raise manifest_mod.ManifestError(
                f"sequence {seq_id!r}: frame {t} has no correspondence file; "
                f"cannot compute flow error for frames {anchor}..{index}"
            )
        hop = dict(load_correspondences(record.corr_path))
        if chain is None:
            chain = hop
        else:
            chain = {src: hop[dst] for src, dst in chain.items() if dst in hop}
    return chain


# ---------------------------------------------------------------- eval-e2e

def _parse_named_paths(entries):
    out = {}
    for entry in entries:
        name, _, path = entry.partition("=")
        if not path:
            raise ValueError(f"expected NAME=PATH, got {entry!r}")
        if name in out:
            raise ValueError(f"duplicate method name {name!r}")
        out[name] = Path(path)
    return out


def cmd_eval_e2e(args) -> int:
    try:
        pred_paths = _parse_named_paths(args.pred)
    except ValueError as exc:
        _eprint(f"error: {exc}")
        return 1
    gt = load_trajectories(args.gt, role="ground_truth", horizon=args.horizon)
    grid = evaluation.RecallGrid(args.recall_samples)
    curves = {}
    for name, path in pred_paths.items():
        pred = load_trajectories(path, role="predicted", horizon=gt.horizon)
        costs = evaluation.pairwise_costs(pred, gt)
        curves[name] = evaluation.recall_curve(costs, evaluation.assign(costs), grid)
    comparison = evaluation.aade_afde(curves, grid)

    report = {
        "grid": {"L": grid.samples},
        "matching": {"space": "future", "cost": "ade"},
        "common_recall_ceiling": comparison.common_recall_ceiling,
        "recall_set_size": comparison.recall_set_size,
        "methods": {},
    }
    for name, score in sorted(comparison.scores.items()):
        curve = curves[name]
        report["methods"][name] = {
            "aade": score.aade,
            "afde": score.afde,
            "max_recall": score.max_recall,
            "unrankable": score.unrankable,
            "curve": [{"recall": s.recall, "ade": s.ade, "fde": s.fde,
                       "threshold": s.threshold} for s in curve.samples],
        }
        if score.unrankable:
            _eprint(f"warning: method {name!r} cannot reach the smallest grid "
                    f"recall (max recall {score.max_recall:.4g}); unrankable")
    _write_json(args.out, report)
    for name, score in sorted(comparison.scores.items()):
        if not score.unrankable:
            _eprint(f"{name}: AADE={score.aade:.6g} AFDE={score.afde:.6g} "
                    f"max_recall={score.max_recall:.4g}")
    return 0


# ---------------------------------------------------------------- scaling

def cmd_scaling(args) -> int:
    mani = load_manifest(args.manifest)
    fractions = sorted({float(f) for f in args.fractions.split(",")})
    if any(not 0.0 < f <= 1.0 for f in fractions):
        _eprint("error: fractions must lie in (0, 1)]")
        return 1
    past, horizon = _resolve_window(args, mani.frame_period)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    try:
        collected = _parse_collected_reports(args.collect)
    except ValueError as exc:
        _eprint(f"error: {exc}")
        return 1

    # one seeded shuffle; every fraction takes a prefix so subsets nest
    rng = np.random.default_rng(args.seed)
    order = list(mani.sequence_ids)
    rng.shuffle(order)

    rows = []
    for fraction in fractions:
        count = max(1, math.ceil(fraction * len(order)))
        chosen = sorted(order[:count])
        subset = manifest_mod.DatasetManifest(
            mani.frame_period, {s: mani.sequences[s] for s in chosen})
        label = f"{fraction:.4f}".rstrip("0").rstrip(".").replace(".", "p")
        subset_path = out_root / f"subset_{label}.json"
        write_manifest(subset, subset_path)
        n_samples = sum(
            len(list(_windows(subset.sequences[s], past, horizon, args.stride)))
            for s in chosen)
        if collected:
            if fraction not in collected:
                _eprint(f"error: --collect given but no report for "
                        f"fraction {fraction}")
                return 1
            cd, emd_val = collected[fraction]
        else:
            cd, emd_val = _scaling_eval(args, subset, chosen, past, horizon,
                                        out_root, label)
        rows.append((len(chosen), n_samples, cd, emd_val))
        _eprint(f"fraction {fraction}: {len(chosen)} sequences, "
                f"{n_samples} training windows, cd={cd:.6g}, emd={emd_val:.6g}")

    curve_path = out_root / "curve.csv"
    with curve_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_sequences", "n_samples", "cd", "emd"])
        for row in rows:
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    _eprint(f"wrote {curve_path}")
    return 0


def _parse_collected_reports(entries):
    """Parse --collect FRACTION=REPORT pairs into {fraction: (cd, emd)}.

    Reports are eval-spf outputs for models trained on the matching subset;
    the first method's aggregate mean is used."""
    collected = {}
    for entry in entries or []:
        fraction_text, _, path = entry.partition("=")
        if not path:
            raise ValueError(f"expected FRACTION=REPORT, got {entry!r}")
        report = json.loads(Path(path).read_text(encoding="utf-8"))
        methods = report.get("methods", {})
        if len(methods) != 1:
            raise ValueError(
                f"{path}: expected exactly one method in the report, "
                f"found {sorted(methods)}")
        mean = next(iter(methods.values()))["mean"]
        collected[float(fraction_text)] = (mean["cd"], mean["emd"])
    return collected


def _scaling_eval(args, subset, chosen, past, horizon, out_root, label):
    """Evaluate the baseline on the evaluation manifest (harness self-test:
    non-learned baselines ignore the training subset, so the curve is flat)."""
    eval_mani = load_manifest(args.eval_manifest) if args.eval_manifest \
        else load_manifest(args.manifest)
    config = metrics.MetricConfig(args.emd_samples, args.seed)
    cds, emds = [], []
    for seq_id in eval_mani.sequence_ids:
        records = eval_mani.frames(seq_id)
        starts = list(_windows(records, past, horizon, args.stride))
        if args.first_window_only:
            starts = starts[:1]
        for start in starts:
            window = records[start:start + past]
            sequence = PointCloudSequence(
                tuple(load_scan(r.scan_path) for r in window),
                eval_mani.frame_period, start_index=window[0].index)
            request = ForecastRequest(sequence, horizon)
            result = FORECASTERS[args.method](request)
            anchor = window[-1].index
            for k, frame in enumerate(result.frames, start=1):
                gt = load_scan(eval_mani.frame(seq_id, anchor + k).scan_path)
                cds.append(metrics.chamfer(frame, gt))
                emds.append(metrics.emd(frame, gt, config))
    return _mean(cds), _mean(emds)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcforecast",
        description="Point-cloud sequence forecasting toolkit",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with default values for any flag")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a manifest from a scan directory tree")
    p.add_argument("--scans", required=True, help="root with one directory per sequence")
    p.add_argument("--frame-period", type=float, required=True)
    p.add_argument("--pattern", default="*.bin")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("rangemap", help="convert between scans and SPFR range maps")
    p.add_argument("action", choices=("encode", "decode"))
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--cloud-format", choices=CLOUD_FORMATS, default="kitti_bin")
    _add_grid_flags(p)
    p.set_defaults(func=cmd_rangemap)

    p = sub.add_parser("forecast", help="run baseline forecasters over a sequence")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seq", required=True)
    p.add_argument("--method", action="append", required=True,
                   help=f"one of {sorted(FORECASTERS)}; repeatable")
    p.add_argument("--past", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--past-seconds", type=float, default=None)
    p.add_argument("--horizon-seconds", type=float, default=None)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--first-window-only", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--icp-max-iter", type=int, default=50)
    p.add_argument("--icp-tol", type=float, default=1e-6)
    p.add_argument("--icp-max-corr-dist", type=float, default=2.0)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("eval-spf", help="CD/EMD evaluation of forecast directories")
    p.add_argument("--manifest", required=True)
    p.add_argument("--forecasts", required=True)
    p.add_argument("--emd-samples", type=int, default=1024)
    p.add_argument("--ppfe", action="store_true",
                   help="also report flow error (needs correspondence files)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_spf)

    p = sub.add_parser("eval-e2e", help="matched ADE/FDE-over-recall evaluation")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--recall-samples", type=int, default=40,
                   help="grid size L; spacing is 1/L")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_e2e)

    p = sub.add_parser("scaling", help="seeded nested training subsets + flat-curve self-test")
    p.add_argument("--manifest", required=True)
    p.add_argument("--eval-manifest", default=None)
    p.add_argument("--fractions", required=True, help="comma-separated, e.g. 0.25,0.5,1.0")
    p.add_argument("--method", choices=sorted(FORECASTERS), default="identity")
    p.add_argument("--past", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--past-seconds", type=float, default=None)
    p.add_argument("--horizon-seconds", type=float, default=None)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--first-window-only", action="store_true")
    p.add_argument("--emd-samples", type=int, default=1024)
    p.add_argument("--collect", action="append", metavar="FRACTION=REPORT",
                   help="use CD/EMD from existing eval-spf reports (one per "
                        "fraction) instead of running the baseline")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scaling)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    # apply --config values as defaults before the real parse
    peek, _ = parser.parse_known_args(argv)
    if peek.config is not None:
        defaults = json.loads(Path(peek.config).read_text(encoding="utf-8"))
        for action in parser._subparsers._group_actions:
            for sub in action.choices.values():
                known = {a.dest for a in sub._actions}
                sub.set_defaults(**{k: v for k, v in defaults.items() if k in known})
        parser.set_defaults(**{k: v for k, v in defaults.items()
                               if k in {"seed", "jobs"}})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        _eprint(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
