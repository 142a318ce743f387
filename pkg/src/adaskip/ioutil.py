"""Canonical file IO: stable JSON/CSV rendering and content digests.

Every artifact is rendered deterministically (sorted keys, repr floats, LF
newlines) so identical runs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json

from .errors import ValidationError


def canonical_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_json(path, doc):
    with open(path, "w") as f:
        f.write(canonical_json(doc))


def read_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise ValidationError(f"{path}: no such file") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows, run_id: str | None = None):
    lines = []
    if run_id is not None:
        lines.append(f"# run_id={run_id}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
    except FileNotFoundError as exc:
        raise ValidationError(f"{path}: no such file") from exc
    return h.hexdigest()
