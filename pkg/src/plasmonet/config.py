"""Run configuration and reproducibility plumbing for the CLI.

One JSON config schema serves every subcommand; precedence is flag > file >
built-in default. Each run writes a manifest carrying a content hash over
the effective config and all input files, so two runs with equal manifests
are guaranteed to see identical inputs (there are deliberately no timestamps
in any output).
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass

from .validation import ValidationError

ENV_OUT = "PLASMONET_OUT"
ENV_DATA = "PLASMONET_DATA"


def output_root():
    return os.environ.get(ENV_OUT, os.path.join(".", "runs"))


def data_root():
    return os.environ.get(ENV_DATA, os.path.join(".", "data"))


def load_config(path):
    """JSON object from disk; errors name the file."""
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return cfg


def merge_config(defaults, file_cfg=None, overrides=None):
    """flag > file > default; unknown file keys are rejected by name."""
    merged = dict(defaults)
    for key, value in (file_cfg or {}).items():
        if key not in defaults:
            raise ValidationError(f"unknown config key: {key!r}")
        merged[key] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in defaults:
            raise ValidationError(f"unknown override key: {key!r}")
        merged[key] = value
    return merged


def _hash_file(path, hasher):
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                hasher.update(chunk)
    except FileNotFoundError:
        raise ValidationError(f"input file not found: {path}")


def content_hash(config, input_paths=()):
    """sha256 over the canonical config rendering plus input file bytes."""
    hasher = hashlib.sha256()
    hasher.update(json.dumps(config, sort_keys=True, default=str).encode())
    for path in input_paths:
        hasher.update(os.path.basename(path).encode())
        _hash_file(path, hasher)
    return hasher.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: str | None
    seed: int
    content_hash: str
    out_dir: str
    config: dict
    inputs: tuple


def make_manifest(command, config, seed, out_dir, config_path=None, input_paths=()):
    return RunManifest(
        command=command,
        config_path=config_path,
        seed=seed,
        content_hash=content_hash(config, input_paths),
        out_dir=out_dir,
        config=dict(config),
        inputs=tuple(input_paths),
    )


def write_manifest(manifest, path):
    with open(path, "w") as f:
        json.dump(asdict(manifest), f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def read_manifest(path):
    with open(path) as f:
        return json.load(f)
