from pathlib import Path

import numpy as np
import pytest

from memnet.config import (PiecewiseField, Rect, RunConfig,
                           parse_device_config)
from memnet.errors import ConfigError

MINIMAL = """
[domain]
nx = 8
ny = 8
[doping]
[boundary]
n_bar = 1.0
p_bar = 2.0
[initial]
n0 = 1.0
p0 = 1.0
D0 = 1.0
[solver]
"""


def test_minimal_defaults():
    cfg = parse_device_config(MINIMAL)
    assert cfg.nx == 8 and cfg.ny == 8
    assert cfg.lambda2 == 1.0
    assert cfg.n_bar == (1.0, 1.0)
    assert cfg.p_bar == (2.0, 2.0)
    assert cfg.k_trunc is None
    assert cfg.gummel_tol == 1e-8
    assert cfg.gummel_max_iter == 50


def test_piecewise_field_eval():
    f = PiecewiseField(background=0.5, rects=(Rect(0.0, 0.0, 0.5, 0.5, 2.0),))
    assert f.eval(0.25, 0.25) == 2.5
    assert f.eval(0.75, 0.75) == 0.5
    vals = f.eval(np.array([0.1, 0.9]), np.array([0.1, 0.9]))
    np.testing.assert_array_equal(vals, [2.5, 0.5])
    assert f.sup == 2.5


def test_per_terminal_boundary_density():
    text = MINIMAL.replace("n_bar = 1.0", "n_bar_d1 = 1.5\nn_bar_d2 = 0.5")
    cfg = parse_device_config(text)
    assert cfg.n_bar == (1.5, 0.5)


def test_boundary_density_conflict_rejected():
    text = MINIMAL.replace("n_bar = 1.0", "n_bar = 1.0\nn_bar_d1 = 1.5\n"
                           "n_bar_d2 = 2.0")
    with pytest.raises(ConfigError, match="not both"):
        parse_device_config(text)


def test_nonpositive_boundary_rejected():
    with pytest.raises(ConfigError, match="strictly positive"):
        parse_device_config(MINIMAL.replace("p_bar = 2.0", "p_bar = 0.0"))


def test_unknown_key_reports_line():
    text = MINIMAL + "\n[solver]\nbogus = 1\n"
    with pytest.raises(ConfigError, match="bogus"):
        parse_device_config(text)


def test_bad_rect_reports_line():
    text = MINIMAL.replace("[boundary]", "rect = 1 2 3\n[boundary]")
    with pytest.raises(ConfigError) as err:
        parse_device_config(text)
    assert err.value.line is not None


def test_layout_segments_parse():
    text = MINIMAL.replace(
        "ny = 8", "ny = 8\nleft = 0:0.5:D1,0.5:1:N\nright = D2")
    cfg = parse_device_config(text)
    assert cfg.domain.boundary_layout["left"][0][2] == "D1"


def test_k_trunc_values():
    assert parse_device_config(MINIMAL).k_trunc is None
    cfg = parse_device_config(MINIMAL.replace("[solver]",
                                              "[solver]\nk_trunc = 2.5"))
    assert cfg.k_trunc == 2.5
    with pytest.raises(ConfigError):
        parse_device_config(MINIMAL.replace("[solver]",
                                            "[solver]\nk_trunc = -1"))


def test_shipped_configs_parse():
    for path in sorted(Path("configs").glob("*.cfg")):
        cfg = parse_device_config(path.read_text())
        assert cfg.nx >= 2 and cfg.ny >= 2


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ConfigError):
        RunConfig(dt=1e-3, t_end=1e-4)
    with pytest.raises(ConfigError):
        RunConfig(dt=1e-3, t_end=1.0, mode="drive")
    with pytest.raises(ConfigError):
        RunConfig(dt=1e-3, t_end=1.0, mode="sideways")
    ok = RunConfig(dt=1e-3, t_end=1.0, mode="drive", drive="DC:0.1")
    assert ok.mode == "drive"
