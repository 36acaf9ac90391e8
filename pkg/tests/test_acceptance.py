"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line with the measured
quantities before asserting.
"""

import math
import time

import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view

from oracles import confusion_oracle, p_measure_oracle, ratio, voc_oracle
from tlf.cli import main
from tlf.config import Config
from tlf.evaluation import (
    evaluate_detections,
    evaluate_timeline,
    f1_curve,
    kfcv_threshold,
    p_measure,
    threshold_grid,
)
from tlf.fusion import FusedWindowProb, assemble_timeline, fuse_regions, fuse_streams, softmax2
from tlf.ingest import load_episode
from tlf.model import (
    Activity,
    ActivityTimeline,
    BoundingBox,
    ObjectCategory,
    RegionSource,
    Stream,
    WindowScore,
)
from tlf.newborn import select_newborn_region
from tlf.synth import (
    Noise,
    Scenario,
    default_scenario,
    generate_episode,
    ramp_video,
    save_scenario,
    true_centers,
)
from tlf.temporal import ResampleGrid, make_windows, resample_frames
from tlf.tracking import remove_short_peaks, track_episode


@pytest.fixture
def verdict(capsys):
    def report(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {title}: {detail}")
        assert ok, detail
    return report


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_01_newborn_region_brute_force(verdict):
    rng = np.random.default_rng(1)
    mismatches, elapsed = 0, 0.0
    for i in range(200):
        side = int(rng.choice([8, 16, 32]))
        h, w = (int(v) for v in rng.integers(side, 129, 2))
        kind = i % 4
        if kind == 0:
            hm = rng.integers(0, 3, (h, w))
        elif kind == 1:
            hm = np.zeros((h, w), dtype=np.int64)
        elif kind == 2:
            hm = np.zeros((h, w), dtype=np.int64)
            for _ in range(int(rng.integers(1, 5))):
                y, x = rng.integers(0, h), rng.integers(0, w)
                hm[max(y - 6, 0):y + 6, max(x - 6, 0):x + 6] += int(rng.integers(1, 4))
        else:
            hm = rng.poisson(0.2, (h, w))
        t0 = time.perf_counter()
        got = select_newborn_region(hm, side).top_left
        elapsed += time.perf_counter() - t0
        sums = sliding_window_view(hm, (side, side)).sum(axis=(2, 3))
        ys, xs = np.nonzero(sums == sums.max())
        best = min(zip(ys.tolist(), xs.tolist()))
        if got != (best[1], best[0]):
            mismatches += 1
    verdict(1, "newborn region vs exhaustive search", mismatches == 0 and elapsed < 10,
            f"{mismatches}/200 mismatches, {elapsed:.2f} s")


def test_02_resampling_ramp_exact(verdict):
    worst, elapsed, frac_ok = 0.0, 0.0, 1.0
    for src_fps in (10.0, 25.0, 7.0):
        frames, a, b = ramp_video(64, 64, 100, src_fps, seed=int(src_fps))
        grid = ResampleGrid.covering(frames.timestamps[0], frames.timestamps[-1], 15.0)
        t0 = time.perf_counter()
        out = resample_frames(frames, grid)
        elapsed = max(elapsed, time.perf_counter() - t0)
        exact = a[None] + b[None] * grid.times[:, None, None] * src_fps
        err = np.abs(out.frames.astype(float) - exact)
        worst = max(worst, float(err.max()))
        frac_ok = min(frac_ok, float(np.mean(err <= 0.5 + 1e-9)))
    verdict(2, "affine-in-time video resampled to 15 fps", frac_ok == 1.0 and elapsed < 5,
            f"max error {worst:.3f} gray levels, {100 * frac_ok:.1f} % within 0.5, slowest {elapsed:.2f} s")


def _random_detection_instance(rng):
    cats = [ObjectCategory.HCPH, ObjectCategory.BMR, ObjectCategory.SD]
    truth, preds = [], []
    for _ in range(int(rng.integers(1, 6))):
        t = [BoundingBox(int(rng.integers(0, 60)), int(rng.integers(0, 60)), int(rng.integers(4, 20)),
                         int(rng.integers(4, 20)), cats[int(rng.integers(0, 3))])
             for _ in range(int(rng.integers(0, 4)))]
        p = []
        for g in t:
            for _ in range(int(rng.integers(0, 3))):
                p.append(BoundingBox(g.x + int(rng.integers(-5, 6)), g.y + int(rng.integers(-5, 6)), g.w, g.h,
                                     g.category, float(rng.integers(1, 11)) / 10))
        p += [BoundingBox(int(rng.integers(0, 60)), int(rng.integers(0, 60)), 10, 10,
                          cats[int(rng.integers(0, 3))], float(rng.integers(1, 11)) / 10)
              for _ in range(int(rng.integers(0, 2)))]
        truth.append(t)
        preds.append(p)
    return preds, truth


def test_03_metric_oracles(verdict):
    rng = np.random.default_rng(3)
    bad = {"p_measure": 0, "timeline": 0, "detection": 0}
    for _ in range(100):
        n = int(rng.integers(1, 200))
        a, b = rng.integers(0, 5, n), rng.integers(0, 5, n)
        bad["p_measure"] += p_measure(a, b) != p_measure_oracle(a.tolist(), b.tolist())

        n = int(rng.integers(1, 120))
        edges = np.sort(rng.choice(n * 2 + 1, size=2 * int(rng.integers(0, min(4, n + 1))), replace=False)) / 2
        ivs = [(float(edges[i]), float(edges[i + 1])) for i in range(0, len(edges), 2)]
        pred = rng.integers(0, 2, n).astype(np.int8)
        r = evaluate_timeline(ActivityTimeline(Activity.SUCTION, pred.astype(float), pred, 0.5), ivs)
        tp, tn, fp, fn = confusion_oracle(pred, ivs, n)
        ok = (r.tp, r.tn, r.fp, r.fn) == (tp, tn, fp, fn)
        ok &= r.precision == ratio(tp, tp + fp) and r.recall == ratio(tp, tp + fn)
        ok &= r.accuracy == (tp + tn) / n
        bad["timeline"] += not ok

        preds, truth = _random_detection_instance(rng)
        rep = evaluate_detections(preds, truth)
        for cat, res in rep.per_category.items():
            tr = {f: [(g.x, g.y, g.w, g.h) for g in t if g.category is cat] for f, t in enumerate(truth)}
            pr = [(p.confidence, f, (p.x, p.y, p.w, p.h)) for f, ps in enumerate(preds)
                  for p in ps if p.category is cat]
            pr.sort(key=lambda q: (-q[0], q[1], q[2][1], q[2][0], q[2][3], q[2][2]))
            pr = [(-k, f, bx) for k, (_, f, bx) in enumerate(pr)]
            otp, ofp, oap = voc_oracle(pr, tr)
            ok = (res.tp, res.fp) == (otp, ofp)
            ok &= math.isclose(res.ap, oap, rel_tol=1e-9, abs_tol=1e-12)
            bad["detection"] += not ok

    dup = evaluate_detections([[BoundingBox(0, 0, 10, 10, ObjectCategory.BMR, 0.9),
                                BoundingBox(1, 1, 10, 10, ObjectCategory.BMR, 0.8)]],
                              [[BoundingBox(0, 0, 10, 10, ObjectCategory.BMR)]]).per_category[ObjectCategory.BMR]
    third = evaluate_detections([[BoundingBox(5, 0, 10, 10, ObjectCategory.HCPH, 0.9)]],
                                [[BoundingBox(0, 0, 10, 10, ObjectCategory.HCPH)]]).per_category[ObjectCategory.HCPH]
    special = (dup.tp, dup.fp) == (1, 1) and (third.tp, third.fp) == (0, 1)
    verdict(3, "metric oracles (100 instances each)", not any(bad.values()) and special,
            f"mismatches {bad}; duplicate rule TP/FP {dup.tp}/{dup.fp}; IoU 1/3 hand TP/FP {third.tp}/{third.fp}")


def test_04_tracking_robustness(verdict):
    worst = 1.0
    cfg = Config()
    for seed in range(5):
        scen = default_scenario(300, seed=seed, noise=Noise(dropout=0.3, fp_rate=0.02))
        ep, _ = generate_episode(scen)
        for cat, tr in track_episode(ep, cfg).items():
            truth = true_centers(scen, cat, ep.timestamps)
            err = np.hypot(*(tr.centers - truth).T)
            worst = min(worst, float(np.mean(err <= 5)))
    rng = np.random.default_rng(4)
    broken = 0
    for _ in range(1000):
        n = int(rng.integers(1, 120))
        seq = np.cumsum(rng.normal(0, 40, (n, 2)), axis=0)
        seq[rng.random(n) < 0.1] += rng.uniform(-800, 800, 2)
        mp, jp = int(rng.integers(0, 10)), float(rng.uniform(20, 300))
        once = remove_short_peaks(seq, mp, jp)
        broken += not np.array_equal(remove_short_peaks(once, mp, jp), once)
    verdict(4, "tracking under 30 % dropout and 2 % false positives", worst >= 0.99 and broken == 0,
            f"worst track {100 * worst:.2f} % of frames within 5 px; idempotence failures {broken}/1000")


def test_05_end_to_end_zero_noise(tmp_path, verdict):
    ep_dir, out = tmp_path / "ep", tmp_path / "out"
    assert main(["simulate", "--duration", "300", "--seed", "0", "--out", str(ep_dir)]) == 0
    t0 = time.perf_counter()
    code = main(["pipeline", str(ep_dir), "--out", str(out)])
    elapsed = time.perf_counter() - t0
    rows = [line.split(",") for line in (out / "evaluation.csv").read_text().splitlines()[1:]]
    timeline = {r[1]: tuple(float(v) for v in r[6:9]) for r in rows if r[0] == "timeline"}
    hcp = {r[1]: float(r[10]) for r in rows if r[0] == "hcp"}
    scripted = set(default_scenario(300).activities)
    ok = code == 0 and set(timeline) == scripted and all(v == (1.0, 1.0, 1.0) for v in timeline.values())
    ok &= hcp == {"P": 100.0, "E": 0.0} and elapsed < 30
    worst = min(min(v) for v in timeline.values())
    verdict(5, "zero-noise pipeline reproduces the script", ok,
            f"{len(timeline)} activities, min precision/recall/accuracy {worst:.3f}, "
            f"HCP P {hcp.get('P')} E {hcp.get('E')}, {elapsed:.1f} s")


def test_06_window_geometry(verdict):
    bad = []
    for d in range(3, 601):
        ws = make_windows(float(d), "test")
        expected = [(s, s + 45) for s in range(0, 15 * d - 44, 15)]
        got = [(w.start_frame, w.start_frame + w.length_frames) for w in ws]
        ok = got == expected and len(ws) == d - 2
        ok &= all(w.fps == 15 and w.stride_frames == 15 for w in ws)
        ok &= [w.start_s for w in ws] == [float(k) for k in range(d - 2)]
        if not ok:
            bad.append(d)
    verdict(6, "test windows of 45 frames, one per second, 3..600 s", not bad,
            f"{598 - len(bad)}/598 durations enumerate correctly")


def test_07_kfcv_recovery(verdict):
    rng = np.random.default_rng(7)
    videos = []
    for _ in range(20):
        n = 60
        truth = np.zeros(n, dtype=int)
        truth[rng.permutation(n)[:25]] = 1
        probs = np.where(truth == 1, rng.uniform(0.31, 1.0, n), rng.uniform(0.0, 0.30, n))
        # pin the decision boundary: a negative at 0.30 and a positive at 0.31 in every video
        probs[np.flatnonzero(truth == 0)[0]] = 0.30
        probs[np.flatnonzero(truth == 1)[0]] = 0.31
        # extreme label noise far from the boundary
        flip = rng.permutation(n)[:2]
        probs[flip] = np.where(truth[flip] == 1, 0.02, 0.98)
        videos.append((np.round(probs, 6), truth))
    pooled_p = np.concatenate([p for p, _ in videos])
    pooled_t = np.concatenate([t for _, t in videos])
    grid = threshold_grid(0.01)
    brute = [2 * ((pooled_p > t) & (pooled_t == 1)).sum()
             / (2 * ((pooled_p > t) & (pooled_t == 1)).sum() + ((pooled_p > t) != (pooled_t == 1)).sum())
             for t in grid]
    global_opt = float(grid[int(np.argmax(brute))])
    assert np.allclose(brute, f1_curve(pooled_p, pooled_t, grid))
    rep = kfcv_threshold(videos, Activity.VENTILATION, 0.01)
    median = rep.threshold_quartiles[1]
    ok = global_opt == 0.30 and len(rep.folds) == 20 and abs(median - 0.30) <= 0.05
    ok &= rep.quartile_label.count(",") == 2 and rep.quartile_label.startswith(".")
    verdict(7, "cross-validated threshold recovers the F1 optimum", ok,
            f"global optimum {global_opt:.2f}, fold median {median:.2f}, quartiles ({rep.quartile_label})")


def test_08_threshold_monotonicity(verdict):
    rng = np.random.default_rng(8)
    violations = 0
    for _ in range(100):
        n = int(rng.integers(1, 300))
        probs = rng.random(n)
        probs[rng.random(n) < 0.1] = np.round(rng.random(), 2)
        fused = [FusedWindowProb(Activity.STIMULATION, float(k), float(p), (RegionSource.NEWBORN,),
                                 (Stream.APPEARANCE,)) for k, p in enumerate(probs)]
        counts = [int(assemble_timeline(fused, n, float(t)).binary.sum()) for t in threshold_grid(0.01)]
        violations += any(b > a for a, b in zip(counts, counts[1:]))
    verdict(8, "positives never increase with the threshold", violations == 0,
            f"{violations}/100 timelines violate monotonicity")


def test_09_fusion_algebra(verdict):
    rng = np.random.default_rng(9)
    worst_shift = 0.0
    for _ in range(2000):
        l0, l1 = rng.uniform(-20, 20, 2)
        c = rng.uniform(-100, 100)
        worst_shift = max(worst_shift, abs(softmax2((l0, l1))[1] - softmax2((l0 + c, l1 + c))[1]))
    asym = 0.0
    for _ in range(500):
        la, lf = tuple(rng.normal(0, 3, 2)), tuple(rng.normal(0, 3, 2))
        a = WindowScore(Activity.SUCTION, RegionSource.SD, Stream.APPEARANCE, 0.0, la)
        f = WindowScore(Activity.SUCTION, RegionSource.SD, Stream.FLOW, 0.0, lf)
        asym = max(asym, abs(fuse_streams([a, f]) - fuse_streams([f, a])))
        p, q = rng.random(2)
        r1 = fuse_regions({RegionSource.SD: p, RegionSource.NEWBORN: q}, Activity.SUCTION).prob_activity
        r2 = fuse_regions({RegionSource.NEWBORN: q, RegionSource.SD: p}, Activity.SUCTION).prob_activity
        asym = max(asym, abs(r1 - r2), abs(r1 - (p + q) / 2))
    closed = softmax2((0.0, math.log(3)))[1]
    ok = worst_shift <= 1e-12 and asym == 0.0 and abs(closed - 0.75) <= 1e-15
    verdict(9, "fusion algebra", ok,
            f"max shift error {worst_shift:.1e}, symmetry error {asym:.1e}, softmax2(0, ln 3) = {closed!r}")


def test_10_determinism(tmp_path, verdict):
    noisy = default_scenario(120, seed=5, noise=Noise(dropout=0.2, fp_rate=0.02, conf_jitter=0.05,
                                                       logit_sigma=1.0))
    save_scenario(tmp_path / "noisy.json", noisy)
    small = Scenario(seed=2, episode_id="small", duration_s=8.0, fps=10.0, width=160, height=120,
                     activities={"stimulation": [[1.0, 4.0]], "suction": [[2.0, 5.0]]},
                     objects={"SD": {"size": [12, 10], "waypoints": [[0, 30, 40], [4, 120, 80]]}},
                     newborn_center=[80, 60], hand_radius=30, hand_size=[12, 12], hcp=[[0, 8, 2]],
                     noise=Noise(dropout=0.1))
    save_scenario(tmp_path / "small.json", small)
    (tmp_path / "small.conf").write_text("object_region_px = 60\nnewborn_region_px = 80\n")
    runs = []
    for k in range(2):
        root = tmp_path / f"run{k}"
        main(["simulate", "--scenario", str(tmp_path / "noisy.json"), "--out", str(root / "in" / "noisy")])
        main(["simulate", "--scenario", str(tmp_path / "small.json"), "--frames",
              "--out", str(root / "in" / "small")])
        codes = (main(["pipeline", str(root / "in" / "noisy"), "--out", str(root / "out" / "noisy")]),
                 main(["pipeline", str(root / "in" / "small"), "--config", str(tmp_path / "small.conf"),
                       "--out", str(root / "out" / "small")]))
        assert codes == (0, 0)
        runs.append(_tree(root))
    same = runs[0] == runs[1]
    has_frames = any(k.startswith("out/small/frames_resampled/") for k in runs[0])
    verdict(10, "repeated pipeline runs are byte-identical", same and has_frames,
            f"{len(runs[0])} files compared, identical={same}")
