import numpy as np
import pytest

from conftest import box, make_episode
from tlf.model import ConfigError
from tlf.newborn import accumulate_heatmap, select_newborn_region, window_sums, write_pgm


def brute_force_region(hm, side):
    """Scan every window in (y, x) order, keeping the first strict maximum."""
    h, w = hm.shape
    best, best_tl = -1, None
    for y in range(h - side + 1):
        for x in range(w - side + 1):
            s = int(hm[y:y + side, x:x + side].sum())
            if s > best:
                best, best_tl = s, (x, y)
    return best_tl


def test_single_box():
    hm = accumulate_heatmap(make_episode([[box("HCPH", 3, 4, 10, 10)]], 32, 24), 32, 24)
    assert hm.shape == (24, 32)
    assert hm.sum() == 100 and hm[4:14, 3:13].min() == 1


def test_additive_over_frames_and_boxes():
    ep = make_episode([[box("HCPH", 0, 0)]] * 5, 20, 20)
    assert accumulate_heatmap(ep, 20, 20)[:10, :10].min() == 5
    ep = make_episode([[box("HCPH", 0, 0), box("HCPH", 5, 5)]], 20, 20)
    hm = accumulate_heatmap(ep, 20, 20)
    assert hm[5:10, 5:10].min() == 2 and hm.max() == 2 and hm.sum() == 200


def test_only_hands_and_clipping():
    ep = make_episode([[box("BMR", 0, 0), box("HCPH", 15, 15)]], 20, 20)
    hm = accumulate_heatmap(ep, 20, 20)
    assert hm.sum() == 25


def test_heatmap_matches_naive(rng):
    frames = []
    for _ in range(10):
        frames.append([box("HCPH", int(rng.integers(-10, 40)), int(rng.integers(-10, 30)),
                           int(rng.integers(1, 15)), int(rng.integers(1, 15)))
                       for _ in range(int(rng.integers(0, 4)))])
    naive = np.zeros((30, 40), dtype=int)
    for boxes in frames:
        for b in boxes:
            naive[max(b.y, 0):max(b.y + b.h, 0), max(b.x, 0):max(b.x + b.w, 0)] += 1
    assert np.array_equal(accumulate_heatmap(make_episode(frames, 40, 30), 40, 30), naive)


def test_all_zero_picks_origin():
    assert select_newborn_region(np.zeros((50, 60), dtype=int), 20).top_left == (0, 0)


def test_single_hot_pixel():
    hm = np.zeros((1080, 1920), dtype=np.int64)
    hm[500, 900] = 1
    assert select_newborn_region(hm, 700).top_left == (201, 0)


def test_window_sums_vs_brute(rng):
    hm = rng.integers(0, 5, (12, 9))
    sums = window_sums(hm, 4)
    for y in range(9):
        for x in range(6):
            assert sums[y, x] == hm[y:y + 4, x:x + 4].sum()


def test_blob_downscaled_grid(rng):
    hm = np.zeros((48, 64), dtype=np.int64)
    yy, xx = np.mgrid[:48, :64]
    hm += (100 * np.exp(-((xx - 40) ** 2 + (yy - 20) ** 2) / 50)).astype(np.int64)
    hm += rng.integers(0, 3, hm.shape)
    assert select_newborn_region(hm, 16).top_left == brute_force_region(hm, 16)


def test_window_larger_than_frame():
    with pytest.raises(ConfigError):
        select_newborn_region(np.zeros((10, 10)), 11)


def test_pgm(tmp_path):
    hm = np.array([[0, 1], [2, 4]])
    write_pgm(tmp_path / "h.pgm", hm)
    data = (tmp_path / "h.pgm").read_bytes()
    assert data.startswith(b"P5\n2 2\n255\n")
    assert list(data[-4:]) == [0, 63, 127, 255]  # floor(v * 255 / max)
