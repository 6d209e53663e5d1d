"""Artifact writers: deterministic CSV/JSON outputs and the run manifest.

Numbers go to CSV with 17 significant digits ('%.17g') so round-trips
are exact; identical configs and seeds therefore produce byte-identical
data files.  Timestamps and wall times live only in the manifest, which
also records a sha256 for the config and for every emitted file.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

MANIFEST_NAME = "manifest.json"
FAILED_MARKER = "FAILED"


def format_number(x) -> str:
    """Locale-independent scalar formatting; floats keep 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_number(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a package-written CSV, numeric where possible."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    cols: list[list] = [[] for _ in header]
    for line in text[1:]:
        for i, cell in enumerate(line.split(",")):
            cols[i].append(cell)
    out = {}
    for name, col in zip(header, cols):
        try:
            out[name] = np.array([float(c) for c in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True,
                               allow_nan=True) + "\n", encoding="utf-8")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def collect_versions() -> dict[str, str]:
    import numpy
    import scipy

    from . import __version__
    return {"package": __version__, "numpy": numpy.__version__,
            "scipy": scipy.__version__, "python": platform.python_version()}


def write_manifest(out_dir, *, kind: str, config_path=None, seed=None,
                   outputs: Sequence[Path] = (), wall_time_s: float | None = None,
                   extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    entries = []
    for p in outputs:
        p = Path(p)
        entries.append({"path": p.relative_to(out_dir).as_posix(),
                        "sha256": file_sha256(p), "bytes": p.stat().st_size})
    payload: dict[str, Any] = {
        "kind": kind,
        "seed": seed,
        "versions": collect_versions(),
        "outputs": entries,
        "wall_time_s": wall_time_s,
        "created_unix": time.time(),
    }
    if config_path is not None:
        config_path = Path(config_path)
        payload["config"] = {"path": config_path.name,
                             "sha256": file_sha256(config_path)}
    if extra:
        payload["extra"] = _jsonable(extra)
    return write_json(out_dir / MANIFEST_NAME, payload)


def read_manifest(out_dir) -> dict:
    return read_json(Path(out_dir) / MANIFEST_NAME)


def write_failed_marker(out_dir, reason: str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    marker = out_dir / FAILED_MARKER
    marker.write_text(reason + "\n", encoding="utf-8")
    return marker


def dump_matrix_npz(path, **arrays) -> Path:
    """Binary matrix dump with an embedded format version."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, format_version=np.int64(1), **arrays)
    return path
