"""Deterministic text I/O helpers shared by the pipeline stages.

All numeric artifacts are written as plain text with ``%.17g`` formatting so
that float64 values round-trip exactly and repeated runs with the same seed
produce byte-identical files.
"""

import hashlib
import json
import os

import numpy as np


def fmt(x) -> str:
    """Format a scalar so float64 round-trips exactly."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, header, rows):
    """Write rows of scalars as comma-delimited text with a header line."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path):
    """Read a delimited text file written by :func:`write_csv`.

    Returns (header, float array of shape (n_rows, n_cols)).
    """
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return header, data


def canonical_json(obj) -> str:
    """JSON with sorted keys and fixed separators; digest- and diff-stable."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return sha256_bytes(fh.read())


def sha256_obj(obj) -> str:
    return sha256_bytes(canonical_json(obj).encode())


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def derive_seed(master, label) -> int:
    """Deterministic per-stage seed: first 8 hex digits of sha256(master:label)."""
    return int(sha256_bytes(f"{master}:{label}".encode())[:8], 16)


def write_kv(path, sections):
    """Write a ``[section]`` / ``key = value`` structured text file.

    ``sections`` is a dict of section name -> dict of key -> scalar or flat
    sequence (sequences are space-separated on one line).
    """
    with open(path, "w") as fh:
        for name, kv in sections.items():
            fh.write(f"[{name}]\n")
            for key, value in kv.items():
                if isinstance(value, (list, tuple, np.ndarray)):
                    text = " ".join(fmt(v) for v in np.asarray(value).ravel())
                elif isinstance(value, str):
                    text = value
                else:
                    text = fmt(value)
                fh.write(f"{key} = {text}\n")
            fh.write("\n")


def read_kv(path):
    """Read a file written by :func:`write_kv` into nested dicts of strings."""
    sections = {}
    current = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                sections[current] = {}
                continue
            if "=" not in line or current is None:
                raise ValueError(f"malformed line in {path!r}: {line!r}")
            key, _, value = line.partition("=")
            sections[current][key.strip()] = value.strip()
    return sections
