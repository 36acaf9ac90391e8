"""Pipeline stages that read an episode, write artifacts to a work directory.

Each stage only depends on the episode and on artifacts earlier stages
left in the work directory, so running the stages one by one and running
:func:`run_pipeline` produce the same files.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from . import plotting
from .config import Config
from .evaluation import (
    HcpEvalReport,
    evaluate_detections,
    evaluate_hcp,
    evaluate_timeline,
    format_quartiles,
    kfcv_threshold,
    object_detection_rate,
    rasterize,
    region_coverage,
)
from .fusion import estimate_hcp, fuse_episode
from .ingest import Episode, write_frames
from .model import (
    ACTIVITY_OBJECT,
    Activity,
    ActivityTimeline,
    ObjectCategory,
    RegionSource,
    RegionSpec,
    Track,
    ValidationError,
    parse_provenance,
    provenance_label,
)
from .newborn import accumulate_heatmap, select_newborn_region, write_pgm
from .temporal import ResampleGrid, crop_region, resample_frames, resample_region, resample_track
from .tracking import propose_object_region, track_episode

logger = logging.getLogger(__name__)

TRACKS = "tracks.csv"
REGIONS = "regions.csv"
NEWBORN = "newborn.json"
HEATMAP = "heatmap.pgm"
TRACKS_RS = "tracks_resampled.csv"
REGIONS_RS = "regions_resampled.csv"
FRAMES_RS = "frames_resampled"
TIMELINES = "timelines"
FIGURES = "figures"
HCP = "hcp.csv"
EVAL_CSV = "evaluation.csv"
REPORT_TXT = "report.txt"


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _f(v: float, nd: int = 6) -> str:
    return f"{v:.{nd}f}"


# ----------------------------------------------------------------- artifacts


def write_tracks(path, tracks: dict[ObjectCategory, Track]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["frame", "t", "category", "cx", "cy", "provenance"])
        for cat, tr in tracks.items():
            for i, ((x, y), flag, t) in enumerate(zip(tr.centers, tr.flags, tr.timestamps)):
                w.writerow([i, _f(t), cat.value, int(x), int(y), provenance_label(int(flag))])


def read_tracks(path) -> dict[ObjectCategory, Track]:
    rows: dict[ObjectCategory, list] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(ObjectCategory(row["category"]), []).append(row)
    return {cat: Track(cat, [(int(r["cx"]), int(r["cy"])) for r in rs],
                       [parse_provenance(r["provenance"]) for r in rs],
                       [float(r["t"]) for r in rs])
            for cat, rs in rows.items()}


def write_regions(path, regions: dict[RegionSource, RegionSpec]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["frame", "source", "x", "y", "side"])
        for src, reg in regions.items():
            for i, (x, y) in enumerate(reg.top_lefts):
                w.writerow([i, src.value, int(x), int(y), reg.side_px])


def read_regions(path) -> dict[RegionSource, RegionSpec]:
    rows: dict[RegionSource, list] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(RegionSource(row["source"]), []).append(row)
    return {src: RegionSpec(src, int(rs[0]["side"]), [(int(r["x"]), int(r["y"])) for r in rs])
            for src, rs in rows.items()}


def write_newborn(path, region: RegionSpec) -> None:
    x, y = region.top_left
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"x": x, "y": y, "side": region.side_px}, fh)
        fh.write("\n")


def read_newborn(path) -> RegionSpec:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return RegionSpec(RegionSource.NEWBORN, d["side"], [(d["x"], d["y"])])


def write_timeline(path, tl: ActivityTimeline) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["second", "prob", "binary"])
        for k, (p, b) in enumerate(zip(tl.probs, tl.binary)):
            w.writerow([k, _f(p), int(b)])


def read_timeline(path, activity: Activity, threshold: float) -> ActivityTimeline:
    probs, binary = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            probs.append(float(row["prob"]))
            binary.append(int(row["binary"]))
    return ActivityTimeline(Activity(activity), probs, binary, threshold)


def read_timelines(workdir, config: Config) -> dict[Activity, ActivityTimeline]:
    out = {}
    for activity in Activity:
        p = Path(workdir) / TIMELINES / f"{activity.value}.csv"
        if p.exists():
            out[activity] = read_timeline(p, activity, config.threshold_for(activity))
    return out


def write_hcp(path, timestamps, counts) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["frame", "t", "count"])
        for i, (t, c) in enumerate(zip(timestamps, counts)):
            w.writerow([i, _f(t), int(c)])


def read_hcp(path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        return np.array([int(r["count"]) for r in csv.DictReader(fh)], dtype=np.int64)


def truth_reference(episode: Episode, activity: Activity, n: int) -> np.ndarray | None:
    if episode.truth is None:
        return None
    return rasterize(episode.truth.intervals(activity), n)


# ----------------------------------------------------------------- stages


def _object_regions(tracks, episode: Episode, config: Config) -> dict[RegionSource, RegionSpec]:
    return {RegionSource(c.value): propose_object_region(
        t, episode.meta.im_width, episode.meta.im_height, config.object_region_px)
        for c, t in tracks.items()}


def run_track(episode: Episode, workdir, config: Config) -> dict[ObjectCategory, Track]:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    tracks = track_episode(episode, config)
    write_tracks(workdir / TRACKS, tracks)
    write_regions(workdir / REGIONS, _object_regions(tracks, episode, config))
    return tracks


def run_regions(episode: Episode, workdir, config: Config, newborn: bool = True):
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    tracks_path = workdir / TRACKS
    tracks = read_tracks(tracks_path) if tracks_path.exists() else track_episode(episode, config)
    write_regions(workdir / REGIONS, _object_regions(tracks, episode, config))
    region = None
    if newborn:
        hm = accumulate_heatmap(episode, episode.meta.im_width, episode.meta.im_height)
        region = select_newborn_region(hm, config.newborn_region_px)
        write_newborn(workdir / NEWBORN, region)
        write_pgm(workdir / HEATMAP, hm)
    return region


def run_resample(episode: Episode, workdir, config: Config, crops: bool = False) -> ResampleGrid:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    grid = ResampleGrid.covering(episode.meta.first_ts, episode.meta.last_ts, config.target_fps)
    tracks = read_tracks(workdir / TRACKS) if (workdir / TRACKS).exists() else {}
    regions = read_regions(workdir / REGIONS) if (workdir / REGIONS).exists() else {}
    ts = episode.timestamps
    if len(ts) < 2:
        raise ValidationError("resampling needs an episode with at least two frames")
    write_tracks(workdir / TRACKS_RS, {c: resample_track(t, grid) for c, t in tracks.items()})
    rs_regions = {s: resample_region(r, ts, grid) for s, r in regions.items()}
    write_regions(workdir / REGIONS_RS, rs_regions)
    if episode.frames is not None:
        frames = resample_frames(episode.frames, grid)
        write_frames(workdir / FRAMES_RS, frames)
        if crops:
            if (workdir / NEWBORN).exists():
                rs_regions[RegionSource.NEWBORN] = read_newborn(workdir / NEWBORN)
            for src, reg in rs_regions.items():
                np.save(workdir / f"crops_{src.value}.npy", crop_region(frames, reg))
    return grid


def run_fuse(episode: Episode, workdir, config: Config) -> dict[Activity, ActivityTimeline]:
    workdir = Path(workdir)
    (workdir / TIMELINES).mkdir(parents=True, exist_ok=True)
    (workdir / FIGURES).mkdir(parents=True, exist_ok=True)
    timelines = fuse_episode(episode, config)
    for activity, tl in timelines.items():
        write_timeline(workdir / TIMELINES / f"{activity.value}.csv", tl)
        plotting.plot_timeline(workdir / FIGURES / f"{activity.value}.svg", tl,
                               truth_reference(episode, activity, len(tl)))
    write_hcp(workdir / HCP, episode.timestamps, estimate_hcp(episode).counts)
    return timelines


def evaluate_workdir(episode: Episode, workdir, config: Config) -> dict:
    """Compute every metric the artifacts and ground truth allow."""
    workdir = Path(workdir)
    truth = episode.truth
    if truth is None:
        raise ValidationError(f"episode {episode.meta.episode_id} has no ground truth")
    results: dict = {"timelines": {}, "hcp": None, "detection": None, "tracking": {}}
    for activity, tl in read_timelines(workdir, config).items():
        results["timelines"][activity] = evaluate_timeline(tl, truth.intervals(activity))
    if truth.hcp is not None and (workdir / HCP).exists():
        results["hcp"] = evaluate_hcp([(read_hcp(workdir / HCP), truth.hcp)])
    if truth.boxes is not None:
        results["detection"] = evaluate_detections(episode.detections, truth.boxes)
        if (workdir / REGIONS).exists():
            regions = read_regions(workdir / REGIONS)
            for activity, cat in ACTIVITY_OBJECT.items():
                src = RegionSource(cat.value)
                ivs = truth.intervals(activity)
                if src not in regions or not ivs:
                    continue
                cov = region_coverage(regions[src], truth.boxes, cat)
                results["tracking"][activity] = object_detection_rate(ivs, cov, episode.timestamps)
    return results


def format_report(episode_id: str, results: dict) -> str:
    lines = [f"Episode {episode_id}", ""]
    det = results.get("detection")
    if det is not None:
        lines += ["Object detection (IoU 0.5)", f"{'':8}{'AP':>8}{'TP':>8}{'FP':>8}"]
        for cat, r in det.per_category.items():
            lines.append(f"{cat.value:8}{100 * r.ap:8.2f}{r.tp:8d}{r.fp:8d}")
        lines += [f"{'mAP50':8}{100 * det.map50:8.2f}", ""]
    if results.get("tracking"):
        lines += ["Object detection during activity", f"{'':20}{'P (%)':>8}  detected/true"]
        for activity, (hit, tot, p) in results["tracking"].items():
            lines.append(f"{activity.value:20}{p:8.2f}  {hit}/{tot}")
        lines.append("")
    if results["timelines"]:
        lines += ["Activity timelines", f"{'':20}{'Prec.':>8}{'Rec.':>8}{'Acc.':>8}{'F1':>8}"]
        for activity, r in results["timelines"].items():
            mark = "  *" if r.flags else ""
            lines.append(f"{activity.value:20}{100 * r.precision:8.2f}{100 * r.recall:8.2f}"
                         f"{100 * r.accuracy:8.2f}{100 * r.f1:8.2f}{mark}")
        if any(r.flags for r in results["timelines"].values()):
            lines.append("* undefined ratio reported as 0")
        lines.append("")
    hcp: HcpEvalReport | None = results.get("hcp")
    if hcp is not None:
        lines += ["HCP count", f"{'':20}{'mean':>8}  Q (25, 50, 75)",
                  f"{'correct pred. (%)':20}{hcp.p_mean:8.2f}  "
                  + ", ".join(f"{q:.2f}" for q in hcp.p_quartiles),
                  f"{'pred. error':20}{hcp.e_mean:8.2f}  "
                  + ", ".join(f"{q:.2f}" for q in hcp.e_quartiles), ""]
    return "\n".join(lines)


def write_eval_csv(path, results: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["section", "key", "tp", "tn", "fp", "fn", "precision", "recall",
                    "accuracy", "f1", "value"])
        for activity, r in results["timelines"].items():
            w.writerow(["timeline", activity.value, r.tp, r.tn, r.fp, r.fn, _f(r.precision),
                        _f(r.recall), _f(r.accuracy), _f(r.f1), ""])
        det = results["detection"]
        if det is not None:
            for cat, r in det.per_category.items():
                w.writerow(["detection", cat.value, r.tp, "", r.fp, "", "", "", "", "", _f(r.ap)])
            w.writerow(["detection", "mAP50", "", "", "", "", "", "", "", "", _f(det.map50)])
        for activity, (hit, tot, p) in results["tracking"].items():
            w.writerow(["tracking", activity.value, hit, "", "", tot - hit, "", "", "", "", _f(p)])
        hcp = results["hcp"]
        if hcp is not None:
            w.writerow(["hcp", "P", "", "", "", "", "", "", "", "", _f(hcp.p_mean)])
            w.writerow(["hcp", "E", "", "", "", "", "", "", "", "", _f(hcp.e_mean)])


def run_evaluate(episode: Episode, workdir, config: Config) -> dict:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    results = evaluate_workdir(episode, workdir, config)
    write_eval_csv(workdir / EVAL_CSV, results)
    (workdir / REPORT_TXT).write_text(format_report(episode.meta.episode_id, results) + "\n",
                                      encoding="utf-8")
    return results


def run_report(episode: Episode, workdir, config: Config) -> Path:
    """Timeline panels, per-activity figures, PR curves and a summary table."""
    workdir = Path(workdir)
    outdir = workdir / "report"
    outdir.mkdir(parents=True, exist_ok=True)
    timelines = read_timelines(workdir, config)
    refs = {a: truth_reference(episode, a, len(tl)) for a, tl in timelines.items()}
    hcp = None
    if (workdir / HCP).exists():
        truth_hcp = None if episode.truth is None or episode.truth.hcp is None else episode.truth.hcp
        hcp = (episode.timestamps, read_hcp(workdir / HCP), truth_hcp)
    if timelines or hcp is not None:
        plotting.plot_timeline_panels(outdir / "timelines.svg", timelines, refs, hcp)
    for activity, tl in timelines.items():
        plotting.plot_timeline(outdir / f"{activity.value}.svg", tl, refs[activity])
    if hcp is not None:
        plotting.plot_hcp_figure(outdir / "hcp.svg", *hcp)
    if episode.truth is not None:
        results = evaluate_workdir(episode, workdir, config)
        if results["detection"] is not None:
            plotting.plot_pr_curves(outdir / "pr_curves.svg", results["detection"])
        write_eval_csv(outdir / "summary.csv", results)
        (outdir / "summary.txt").write_text(
            format_report(episode.meta.episode_id, results) + "\n", encoding="utf-8")
    return outdir


def run_pipeline(episode: Episode, workdir, config: Config) -> dict:
    """track -> regions -> resample -> fuse -> evaluate (evaluate only with ground truth)."""
    run_track(episode, workdir, config)
    run_regions(episode, workdir, config, newborn=True)
    run_resample(episode, workdir, config)
    run_fuse(episode, workdir, config)
    if episode.truth is not None:
        return run_evaluate(episode, workdir, config)
    return {}


# ----------------------------------------------------------------- K-fold


def kfcv_episodes(episodes, config: Config, k: int | None = None) -> dict:
    """Cross-validated thresholds per activity across episodes."""
    per_activity: dict[Activity, list] = {}
    for ep in episodes:
        if ep.truth is None:
            raise ValidationError(f"episode {ep.meta.episode_id} has no ground truth")
        for activity, tl in fuse_episode(ep, config).items():
            per_activity.setdefault(activity, []).append(
                (tl.probs, rasterize(ep.truth.intervals(activity), len(tl))))
    reports = {}
    for activity, videos in per_activity.items():
        if len(videos) < 2:
            continue
        try:
            reports[activity] = kfcv_threshold(videos, activity, config.kfcv_grid_step, k)
        except ValidationError as exc:
            logger.warning("%s: %s", activity.value, exc)
    return reports


def write_kfcv(workdir, reports: dict) -> None:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    with open(workdir / "kfcv.csv", "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["activity", "fold", "held_out", "threshold", "train_f1", "precision",
                    "recall", "accuracy", "f1"])
        for activity, rep in reports.items():
            for r in rep.folds:
                w.writerow([activity.value, r.fold, " ".join(map(str, r.held_out)),
                            f"{r.threshold:.2f}", _f(r.train_f1), _f(r.precision),
                            _f(r.recall), _f(r.accuracy), _f(r.f1)])
    lines = ["K-fold cross validation threshold test",
             f"{'':20}{'Prec.':>8}{'Rec.':>8}{'Acc.':>8}  Thresh., Q (25, 50, 75)"]
    for activity, rep in reports.items():
        lines.append(f"{activity.value:20}{100 * rep.mean_precision:8.2f}"
                     f"{100 * rep.mean_recall:8.2f}{100 * rep.mean_accuracy:8.2f}  "
                     f"{format_quartiles(rep.threshold_quartiles)}")
        if rep.skipped:
            lines.append(f"{'':20}skipped folds: {', '.join(map(str, rep.skipped))}")
    if reports:
        mean = lambda a: 100 * float(np.mean([getattr(r, a) for r in reports.values()]))  # noqa: E731
        lines.append(f"{'mean all':20}{mean('mean_precision'):8.2f}{mean('mean_recall'):8.2f}"
                     f"{mean('mean_accuracy'):8.2f}")
    (workdir / "kfcv.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
