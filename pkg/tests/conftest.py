"""Shared fixtures for the test suite."""

import os
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = REPO_ROOT / "data"


@pytest.fixture(scope="session")
def data_dir():
    if not DATA_DIR.is_dir():
        pytest.skip("bundled image data directory is missing")
    return DATA_DIR


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_unitary(n, seed):
    """Haar-ish random unitary via QR of a complex Gaussian matrix."""
    gen = np.random.default_rng(seed)
    z = gen.normal(size=(n, n)) + 1j * gen.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture()
def tmp_env(tmp_path, monkeypatch):
    """Redirect run output and data roots into the pytest tmp dir."""
    out = tmp_path / "runs"
    monkeypatch.setenv("PLASMONET_OUT", str(out))
    monkeypatch.setenv("PLASMONET_DATA", str(DATA_DIR))
    return tmp_path


def write_json(path, obj):
    import json

    path = Path(path)
    path.write_text(json.dumps(obj))
    return str(path)
