"""Path serialization: CSV, packed binary, and the run manifest.

CSV files carry one replicate each, columns replicate,t,x with a header
row. The binary format packs every replicate of a run into one file:

    magic  b"PJLM"
    u32    format version (currently 1)
    u64    n, M, master seed, replicate count
    then per replicate: u64 replicate id + n little-endian float64

All integers little-endian. The manifest is deterministic JSON (sorted
keys, no timestamps) whose digests change iff any output byte changes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path as FsPath

import numpy as np

__all__ = ["write_csv", "read_csv", "write_binary", "read_binary",
           "write_manifest", "read_manifest", "file_digest"]

MAGIC = b"PJLM"
VERSION = 1
_HEADER = struct.Struct("<4sI4Q")


def write_csv(path, values: np.ndarray, replicate: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "t", "x"])
        for t, x in enumerate(values, start=1):
            w.writerow([replicate, t, repr(float(x))])


def read_csv(path) -> tuple[int, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["replicate", "t", "x"]:
        raise ValueError(f"{path}: missing replicate,t,x header")
    body = rows[1:]
    reps = {int(r[0]) for r in body}
    if len(reps) != 1:
        raise ValueError(f"{path}: expected a single replicate per file")
    ts = [int(r[1]) for r in body]
    if ts != list(range(1, len(body) + 1)):
        raise ValueError(f"{path}: t column must run 1..n")
    return reps.pop(), np.array([float(r[2]) for r in body])


def write_binary(path, runs: list[tuple[int, np.ndarray]], M: int,
                 seed: int) -> None:
    if not runs:
        raise ValueError("nothing to write")
    n = len(runs[0][1])
    if any(len(v) != n for _, v in runs):
        raise ValueError("all replicates must share one length")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, M, seed, len(runs)))
        for rep, values in runs:
            fh.write(struct.pack("<Q", rep))
            fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_binary(path) -> dict:
    raw = FsPath(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, M, seed, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    runs = []
    pos = _HEADER.size
    block = 8 + 8 * n
    if len(raw) != _HEADER.size + count * block:
        raise ValueError(f"{path}: size does not match header counts")
    for _ in range(count):
        (rep,) = struct.unpack_from("<Q", raw, pos)
        values = np.frombuffer(raw, dtype="<f8", count=n, offset=pos + 8).copy()
        runs.append((rep, values))
        pos += block
    return {"n": n, "M": M, "seed": seed, "runs": runs}


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, config: dict, files: dict[str, str]) -> None:
    """files maps relative file name -> sha256 hex digest."""
    doc = {"config": config, "files": dict(sorted(files.items())),
           "format_version": VERSION}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
