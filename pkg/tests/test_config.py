import json

import numpy as np
import pytest

from omavtraj import config as cfg
from omavtraj.config import ConfigError, Resolved


def test_defaults_resolve():
    raw = cfg.resolve({})
    rc = Resolved(raw, cfg.Path.cwd())
    assert rc.limits().v_max == 0.6
    assert rc.weights().kappa == 16
    assert rc.rrt().radius == pytest.approx(0.21)
    assert rc.opt_shape().half_extents[2] == pytest.approx(0.26)
    assert rc.true_shape().half_extents[2] == pytest.approx(0.21)
    json.loads(cfg.dumps(cfg.DEFAULTS))


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="limits.vmax"):
        cfg.resolve({"limits": {"vmax": 1.0}})
    with pytest.raises(ConfigError, match="'foo'"):
        cfg.resolve({"foo": 1})
    with pytest.raises(ConfigError, match="rrt"):
        cfg.resolve({"rrt": 3})


def test_bad_values_named():
    rc = Resolved(cfg.resolve({"limits": {"v_max": "fast"}}), cfg.Path.cwd())
    with pytest.raises(ConfigError, match="limits.v_max"):
        rc.limits()
    rc = Resolved(cfg.resolve({"start": {"Q": [2, 0, 0, 0]}}), cfg.Path.cwd())
    with pytest.raises(ConfigError, match="start.Q"):
        rc.endpoints()
    rc = Resolved(cfg.resolve({"goal": {"p": [1, 2]}}), cfg.Path.cwd())
    with pytest.raises(ConfigError, match="goal.p"):
        rc.endpoints()
    rc = Resolved(cfg.resolve({"bounds": {"lo": [0, 0, 0], "hi": [0, 1, 1]}}), cfg.Path.cwd())
    with pytest.raises(ConfigError, match="bounds"):
        rc.cloud()


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        cfg.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="JSON"):
        cfg.load(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[]")
    with pytest.raises(ConfigError):
        cfg.load(tmp_path / "list.json")


def test_map_round_trip_and_relative_path(tmp_path, rng):
    pts = rng.uniform(-1, 1, size=(50, 3))
    cfg.write_map(pts, tmp_path / "m.csv")
    np.testing.assert_allclose(cfg.read_map(tmp_path / "m.csv"), pts, atol=1e-8)
    (tmp_path / "c.json").write_text(json.dumps({"map_file": "m.csv"}))
    raw, base = cfg.load(tmp_path / "c.json")
    cloud = Resolved(raw, base).cloud()
    assert len(cloud.points) == 50
    np.testing.assert_allclose(cloud.lo, cloud.points.min(axis=0) - 1.0)


def test_read_map_errors(tmp_path):
    (tmp_path / "a.csv").write_text("x,y,z\n1,2\n")
    with pytest.raises(ConfigError, match="3 columns"):
        cfg.read_map(tmp_path / "a.csv")
    (tmp_path / "b.csv").write_text("1,2,3\n1,2,q\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        cfg.read_map(tmp_path / "b.csv")
    with pytest.raises(ConfigError, match="not found"):
        cfg.read_map(tmp_path / "none.csv")


def test_dumps_is_canonical():
    assert cfg.dumps({"b": 1, "a": [0.1]}) == '{\n "a": [\n  0.1\n ],\n "b": 1\n}\n'
    with pytest.raises(ValueError):
        cfg.dumps({"x": float("nan")})
