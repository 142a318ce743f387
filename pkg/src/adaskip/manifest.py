"""Run manifests: everything needed to reproduce a command's outputs.

Each CLI command writes a manifest.json into its output directory recording
tool version, kernel backend, the effective config, every seed, the cost
constants, and SHA-256 digests of the inputs it read and the artifacts it
wrote (paths relative to the output directory, so reruns into different
directories stay byte-identical).  Commands that read an artifact sitting
next to a manifest verify its digest first.
"""

from __future__ import annotations

import os

from . import __version__, kernels
from .errors import ValidationError
from .ioutil import read_json, sha256_file, write_json

MANIFEST_FORMAT = "adaskip.manifest"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


def write_manifest(out_dir, run_id: str, command: str, config: dict,
                   seeds: dict, constants: dict, artifacts: list[str],
                   inputs: dict[str, str] | None = None):
    """artifacts: file names inside out_dir; inputs: {basename: digest}."""
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "run_id": run_id,
        "tool": {"name": "adaskip", "version": __version__},
        "backend": kernels.backend_name(),
        "command": command,
        "config": config,
        "seeds": seeds,
        "constants": constants,
        "artifacts": {
            name: {
                "sha256": sha256_file(os.path.join(out_dir, name)),
                "bytes": os.path.getsize(os.path.join(out_dir, name)),
            }
            for name in sorted(artifacts)
        },
        "inputs": dict(sorted((inputs or {}).items())),
    }
    write_json(os.path.join(out_dir, MANIFEST_NAME), doc)
    return doc


def read_manifest(out_dir) -> dict:
    doc = read_json(os.path.join(out_dir, MANIFEST_NAME))
    if doc.get("format") != MANIFEST_FORMAT or doc.get("version") != MANIFEST_VERSION:
        raise ValidationError(f"{out_dir}: not a manifest directory")
    return doc


def verify_dir(out_dir) -> list[str]:
    """Recompute artifact digests against the manifest; returns mismatches."""
    doc = read_manifest(out_dir)
    bad = []
    for name, meta in doc["artifacts"].items():
        path = os.path.join(out_dir, name)
        if not os.path.exists(path):
            bad.append(f"{name}: missing")
        elif sha256_file(path) != meta["sha256"]:
            bad.append(f"{name}: digest mismatch")
    return bad


def check_input(path):
    """If a manifest in the file's directory lists it, verify the digest."""
    directory = os.path.dirname(os.path.abspath(path))
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        return
    doc = read_json(manifest_path)
    meta = doc.get("artifacts", {}).get(os.path.basename(path))
    if meta is None:
        return
    if sha256_file(path) != meta["sha256"]:
        raise ValidationError(
            f"{path}: content does not match the digest recorded in its manifest"
        )
