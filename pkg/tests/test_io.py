"""Artifact writers: exact round trips and manifest bookkeeping."""

import hashlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumplab.io import (FAILED_MARKER, dump_matrix_npz, file_sha256,
                        format_number, read_csv, read_json, read_manifest,
                        write_csv, write_failed_marker, write_json,
                        write_manifest)


def test_format_number_kinds():
    assert format_number(True) == "1"
    assert format_number(np.int64(-4)) == "-4"
    assert format_number(1 / 3) == "0.33333333333333331"
    assert format_number("tag") == "tag"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip_is_exact(x):
    assert float(format_number(x)) == x


def test_csv_round_trip(tmp_path):
    rows = [(0, 0.1, "a"), (1, -2.5e-17, "b")]
    path = write_csv(tmp_path / "t.csv", ["j", "value", "tag"], rows)
    cols = read_csv(path)
    np.testing.assert_array_equal(cols["j"], [0.0, 1.0])
    np.testing.assert_array_equal(cols["value"], [0.1, -2.5e-17])
    assert list(cols["tag"]) == ["a", "b"]


def test_csv_bytes_stable(tmp_path):
    rows = [(k, np.sin(k)) for k in range(5)]
    a = write_csv(tmp_path / "a.csv", ["k", "v"], rows)
    b = write_csv(tmp_path / "b.csv", ["k", "v"], rows)
    assert a.read_bytes() == b.read_bytes()


def test_json_round_trip_with_numpy(tmp_path):
    payload = {"gamma": np.float64(0.25), "n": np.int32(7),
               "series": np.arange(3.0), "nested": {"ok": True}}
    path = write_json(tmp_path / "s.json", payload)
    back = read_json(path)
    assert back["gamma"] == 0.25
    assert back["n"] == 7
    assert back["series"] == [0.0, 1.0, 2.0]
    assert back["nested"]["ok"] is True


def test_file_sha256_matches_hashlib(tmp_path):
    p = tmp_path / "blob.bin"
    p.write_bytes(b"stationary" * 1000)
    assert file_sha256(p) == hashlib.sha256(b"stationary" * 1000).hexdigest()


def test_manifest_records_outputs(tmp_path):
    data = write_csv(tmp_path / "x.csv", ["a"], [(1,)])
    cfg = tmp_path / "run.toml"
    cfg.write_text("seed = 5\n")
    write_manifest(tmp_path, kind="evolve", config_path=cfg, seed=5,
                   outputs=[data], extra={"note": np.float64(1.5)})
    m = read_manifest(tmp_path)
    assert m["kind"] == "evolve"
    assert m["seed"] == 5
    assert m["config"]["sha256"] == file_sha256(cfg)
    (entry,) = m["outputs"]
    assert entry["path"] == "x.csv"
    assert entry["sha256"] == file_sha256(data)
    assert m["extra"]["note"] == 1.5
    assert "numpy" in m["versions"]


def test_failed_marker(tmp_path):
    marker = write_failed_marker(tmp_path / "run", "diagonalization blew up")
    assert marker.name == FAILED_MARKER
    assert "blew up" in marker.read_text()


def test_matrix_dump_round_trip(tmp_path):
    path = dump_matrix_npz(tmp_path / "m.npz", coupling=np.eye(3),
                           h0_diagonal=np.arange(3.0))
    with np.load(path) as data:
        assert int(data["format_version"]) == 1
        np.testing.assert_array_equal(data["coupling"], np.eye(3))
        np.testing.assert_array_equal(data["h0_diagonal"], np.arange(3.0))
