"""Artifact writers: CSV and JSON with a provenance header."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os

import numpy as np

from . import __version__


def config_hash(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def provenance(command, cfg_sha, tolerances, seed):
    return {
        "tool": "steadytube",
        "version": __version__,
        "command": command,
        "config_sha256": cfg_sha,
        "tolerances": tolerances,
        "seed": seed,
        "created": _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
    }


def to_jsonable(obj):
    """Convert numpy scalars/arrays, complex numbers and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(float(obj.real)), "im": to_jsonable(float(obj.imag))}
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path, header, body):
    doc = {"provenance": to_jsonable(header), "result": to_jsonable(body)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, columns, rows, footer=None):
    """Comma-separated table; '#' lines before (provenance) and after (fits)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(header):
            fh.write(f"# {key}: {json.dumps(to_jsonable(header[key]), sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows([_fmt(v) for v in row] for row in rows)
        for key in sorted(footer or {}):
            fh.write(f"# {key}: {json.dumps(to_jsonable(footer[key]), sort_keys=True)}\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
