import pytest

from tlf.config import Config
from tlf.model import Activity, ConfigError


def test_defaults():
    c = Config()
    assert (c.object_region_px, c.newborn_region_px) == (500, 700)
    assert c.target_fps == 15.0 and c.window_frames == 45 and c.test_stride == 15
    # two-thirds overlap at test time
    assert c.test_stride / c.window_frames == pytest.approx(1 / 3)
    assert all(v == 0.5 for v in c.threshold.values())


def test_dump_roundtrip():
    c = Config().updated({"threshold.ventilation": "0.34", "jump_px": "120"})
    again = Config.loads(c.dumps())
    assert again == c
    assert again.threshold_for(Activity.VENTILATION) == 0.34


def test_committed_defaults_match():
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / "default.conf"
    assert Config.load(path, environ={}) == Config()


def test_env_override(tmp_path):
    p = tmp_path / "c.conf"
    p.write_text("smoothing_window = 9\n")
    c = Config.load(p, environ={"TLF_SMOOTHING_WINDOW": "11", "TLF_THRESHOLD_SUCTION": "0.2"})
    assert c.smoothing_window == 11
    assert c.threshold_for("suction") == 0.2


@pytest.mark.parametrize("text", ["nonsense = 1", "smoothing_window = 4", "missing_score_policy = x",
                                  "threshold.flying = 0.5", "target_fps = abc", "no equals sign"])
def test_bad_config(text):
    with pytest.raises(ConfigError):
        Config.loads(text)
