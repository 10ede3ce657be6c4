"""Array archive: a text manifest (name, shape, offset) plus one flat binary file.

The binary file holds all arrays concatenated as little-endian float64 in
manifest order; offsets count float64 elements. Manifest header lines starting
with '#meta ' carry key=json metadata. This is the on-disk format for encoder
checkpoints and full training checkpoints.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ShapeError

MANIFEST_SUFFIX = ".manifest"
BINARY_SUFFIX = ".bin"
_MAGIC = "# dualrep-archive-v1"


def save_archive(prefix: str | Path, arrays: dict[str, np.ndarray],
                 meta: dict[str, object] | None = None) -> None:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    lines = [_MAGIC]
    for key, value in (meta or {}).items():
        lines.append(f"#meta {key}={json.dumps(value)}")
    offset = 0
    chunks = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        shape = ",".join(str(s) for s in arr.shape) if arr.ndim else "0"
        lines.append(f"{name}\t{shape}\t{offset}")
        chunks.append(arr.reshape(-1))
        offset += arr.size
    prefix.with_suffix(prefix.suffix + MANIFEST_SUFFIX).write_text("\n".join(lines) + "\n")
    flat = np.concatenate(chunks) if chunks else np.empty(0)
    flat.astype("<f8").tofile(prefix.with_suffix(prefix.suffix + BINARY_SUFFIX))


def load_archive(prefix: str | Path) -> tuple[dict[str, np.ndarray], dict[str, object]]:
    prefix = Path(prefix)
    manifest = prefix.with_suffix(prefix.suffix + MANIFEST_SUFFIX)
    text = manifest.read_text().splitlines()
    if not text or text[0] != _MAGIC:
        raise ShapeError(f"{manifest} is not a dualrep archive manifest")
    meta: dict[str, object] = {}
    entries: list[tuple[str, tuple[int, ...], int]] = []
    for line in text[1:]:
        if not line.strip():
            continue
        if line.startswith("#meta "):
            key, _, value = line[len("#meta "):].partition("=")
            meta[key] = json.loads(value)
            continue
        name, shape_str, offset_str = line.split("\t")
        shape = () if shape_str == "0" else tuple(int(s) for s in shape_str.split(","))
        entries.append((name, shape, int(offset_str)))
    flat = np.fromfile(prefix.with_suffix(prefix.suffix + BINARY_SUFFIX), dtype="<f8")
    arrays: dict[str, np.ndarray] = {}
    for name, shape, offset in entries:
        size = int(np.prod(shape)) if shape else 1
        if offset + size > flat.size:
            raise ShapeError(f"archive entry {name} overruns binary file")
        arrays[name] = flat[offset: offset + size].reshape(shape).copy()
    return arrays, meta
