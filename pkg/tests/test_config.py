"""Config precedence, content hashing, run manifests."""

import json

import pytest

from plasmonet.config import (
    ENV_DATA,
    ENV_OUT,
    content_hash,
    data_root,
    load_config,
    make_manifest,
    merge_config,
    output_root,
    read_manifest,
    write_manifest,
)
from plasmonet.validation import ValidationError


def test_roots_follow_environment(monkeypatch):
    monkeypatch.delenv(ENV_OUT, raising=False)
    monkeypatch.delenv(ENV_DATA, raising=False)
    assert output_root().endswith("runs")
    assert data_root().endswith("data")
    monkeypatch.setenv(ENV_OUT, "/tmp/out-here")
    monkeypatch.setenv(ENV_DATA, "/tmp/data-here")
    assert output_root() == "/tmp/out-here"
    assert data_root() == "/tmp/data-here"


def test_load_config_errors_name_file(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(ValidationError, match="not found"):
        load_config(missing)
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  broken\n}")
    with pytest.raises(ValidationError, match="line 2"):
        load_config(bad)
    array = tmp_path / "arr.json"
    array.write_text("[1, 2]")
    with pytest.raises(ValidationError, match="object"):
        load_config(array)


def test_merge_precedence():
    defaults = {"epochs": 50, "seed": 0, "lr": 0.01}
    merged = merge_config(defaults, {"epochs": 10}, {"seed": 7})
    assert merged == {"epochs": 10, "seed": 7, "lr": 0.01}
    # flag beats file
    merged = merge_config(defaults, {"epochs": 10}, {"epochs": 3})
    assert merged["epochs"] == 3
    # None overrides are "not given"
    merged = merge_config(defaults, None, {"epochs": None})
    assert merged["epochs"] == 50


def test_merge_rejects_unknown_keys():
    defaults = {"epochs": 50}
    with pytest.raises(ValidationError, match="unknown config key: 'epoch'"):
        merge_config(defaults, {"epoch": 10})
    with pytest.raises(ValidationError, match="override"):
        merge_config(defaults, None, {"learning_rate": 0.1})


def test_content_hash_is_canonical(tmp_path):
    a = content_hash({"x": 1, "y": 2})
    b = content_hash({"y": 2, "x": 1})
    assert a == b
    assert content_hash({"x": 1, "y": 3}) != a
    data = tmp_path / "input.bin"
    data.write_bytes(b"hello")
    with_file = content_hash({"x": 1}, [str(data)])
    assert with_file != content_hash({"x": 1})
    data.write_bytes(b"world")
    assert content_hash({"x": 1}, [str(data)]) != with_file
    missing = tmp_path / "missing.bin"
    with pytest.raises(ValidationError, match="input file"):
        content_hash({}, [str(missing)])


def test_manifest_roundtrip_no_timestamps(tmp_path):
    cfg = {"epochs": 2, "seed": 5}
    manifest = make_manifest("train-image", cfg, 5, str(tmp_path), input_paths=())
    path = tmp_path / "manifest.json"
    write_manifest(manifest, path)
    doc = read_manifest(path)
    assert doc["command"] == "train-image"
    assert doc["seed"] == 5
    assert doc["config"] == cfg
    assert doc["content_hash"] == content_hash(cfg)
    text = path.read_text().lower()
    for word in ("time", "date", "stamp"):
        assert word not in text
    # byte-stable across rewrites
    write_manifest(manifest, tmp_path / "manifest2.json")
    assert (tmp_path / "manifest2.json").read_bytes() == path.read_bytes()
