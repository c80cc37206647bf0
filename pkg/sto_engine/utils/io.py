"""
File formats: long-format CSV, little-endian binary dumps with an integer
header, and JSON with shortest round-trip floats.
"""
import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _prepare_parent(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path, header, rows):
    path = _prepare_parent(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_scalar(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def format_scalar(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
        return repr(value)
    return str(value)


def write_binary(path, header, array):
    """int64 LE header words followed by float64 LE row-major data."""
    path = _prepare_parent(path)
    head = np.asarray(header, dtype="<i8")
    body = np.ascontiguousarray(array, dtype="<f8")
    with path.open("wb") as fh:
        fh.write(head.tobytes())
        fh.write(body.tobytes())
    return path


def read_binary(path, header_words):
    raw = Path(path).read_bytes()
    head_bytes = 8 * header_words
    if len(raw) < head_bytes:
        raise ValueError(f"{path}: truncated header")
    header = tuple(int(v) for v in np.frombuffer(raw[:head_bytes], dtype="<i8"))
    body = np.frombuffer(raw[head_bytes:], dtype="<f8")
    expected = int(np.prod(header))
    if body.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {body.size}")
    return header, body.reshape(header).copy()


def to_jsonable(obj):
    """Recursively convert numpy values and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            return format_scalar(value)
        return value
    return obj


def dumps(obj):
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    path = _prepare_parent(path)
    path.write_text(dumps(obj))
    return path


def parse_float(value):
    """Inverse of the non-finite string encoding."""
    if isinstance(value, str) and value in NONFINITE:
        return NONFINITE[value]
    return float(value)
