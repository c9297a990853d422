"""Artifact round trips: CSV tables, JSON sidecars, config hashing."""

import numpy as np
import pytest

from flamelet_pinn import runio


def test_fmt_round_trips_doubles():
    for x in (0.1, 1.0 / 3.0, 1e-300, 12345.6789, -0.0):
        assert float(runio.fmt(x)) == x


def test_config_hash_stable_and_order_insensitive():
    a = {"x": 1, "y": [1, 2], "z": "s"}
    b = {"z": "s", "y": [1, 2], "x": 1}
    assert runio.config_hash(a) == runio.config_hash(b)
    assert len(runio.config_hash(a)) == 12
    assert runio.config_hash(a) != runio.config_hash({**a, "x": 2})


def test_json_round_trip_handles_numpy(tmp_path):
    p = tmp_path / "m.json"
    runio.write_json(p, {"a": np.float64(0.5), "b": np.arange(3),
                         "c": np.int64(7)})
    back = runio.read_json(p)
    assert back == {"a": 0.5, "b": [0, 1, 2], "c": 7}


def test_json_rejects_unserializable(tmp_path):
    with pytest.raises(TypeError):
        runio.write_json(tmp_path / "bad.json", {"f": object()})


def test_field_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    t = np.array([0.0, 0.01, 0.02])
    z = np.linspace(0.0, 1.0, 5)
    T = 300.0 + 2000.0 * rng.random((3, 5))
    Y = rng.random((3, 5, 4))
    p = tmp_path / "field.csv"
    runio.write_field_csv(p, t, z, T, Y, meta={"alpha": 1.0})
    tb, zb, Tb, Yb = runio.read_field_csv(p)
    np.testing.assert_array_equal(tb, t)
    np.testing.assert_array_equal(zb, z)
    np.testing.assert_array_equal(Tb, T)
    np.testing.assert_array_equal(Yb, Y)
    assert runio.read_json(str(p) + ".meta.json") == {"alpha": 1.0}


def test_trajectory_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    t = np.logspace(-8, -2, 7)
    T = 1000.0 + 1500.0 * rng.random(7)
    Y = rng.random((7, 4))
    p = tmp_path / "traj.csv"
    runio.write_trajectory_csv(p, t, T, Y)
    tb, zb, Tb, Yb = runio.read_field_csv(p)
    assert zb is None
    np.testing.assert_array_equal(tb, t)
    np.testing.assert_array_equal(Tb, T)
    np.testing.assert_array_equal(Yb, Y)


def test_field_csv_rejects_corruption(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("nope,header\n")
    with pytest.raises(runio.ArtifactError):
        runio.read_field_csv(p)
    q = tmp_path / "short_row.csv"
    q.write_text(",".join(runio.FIELD_HEADER) + "\n1.0,0.5\n")
    with pytest.raises(runio.ArtifactError):
        runio.read_field_csv(q)


def test_history_csv_round_trip(tmp_path):
    rows = [(0, 1.5, 1.0, 0.25, 0.25, 5.0), (1, 0.5, 0.25, 0.125, 0.125, 5.5)]
    p = tmp_path / "history.csv"
    runio.write_history_csv(p, rows)
    data = runio.read_history_csv(p)
    np.testing.assert_array_equal(data["epoch"], [0.0, 1.0])
    np.testing.assert_array_equal(data["loss_total"], [1.5, 0.5])
    np.testing.assert_array_equal(data["alpha_current"], [5.0, 5.5])


def test_written_artifacts_are_deterministic(tmp_path):
    t = np.array([0.0, 0.01])
    T = np.array([300.0, 1700.0])
    Y = np.array([[0.1, 0.2, 0.3, 0.4], [0.25, 0.25, 0.25, 0.25]])
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    runio.write_trajectory_csv(p1, t, T, Y, meta={"seed": 1})
    runio.write_trajectory_csv(p2, t, T, Y, meta={"seed": 1})
    assert p1.read_bytes() == p2.read_bytes()
    assert (tmp_path / "a.csv.meta.json").read_bytes() == \
        (tmp_path / "b.csv.meta.json").read_bytes()


def test_ensure_dir(tmp_path):
    d = tmp_path / "x" / "y"
    out = runio.ensure_dir(d)
    assert str(out) == str(d)
    assert d.is_dir()
    runio.ensure_dir(d)   # idempotent
