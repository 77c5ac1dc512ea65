"""CSV and JSON files: curves, responses, reports. Writes are atomic."""
import csv
import hashlib
import json
import os
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from rest_framework.utils.encoders import JSONEncoder

from .exceptions import GridError, ParseError
from .functional import FunctionalSample, Grid

MISSING_TOKENS = ("", "NA")
OBSERVED_TOKENS = {"1": True, "true": True, "0": False, "false": False}


def _float(token, path, line):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"not a number: {token!r}", path, line) from None


def read_curves(path) -> FunctionalSample:
    """First row holds the grid, every further row one curve."""
    with open(path, newline="") as handle:
        rows = [(line, row) for line, row in enumerate(csv.reader(handle), start=1) if row]
    if len(rows) < 2:
        raise ParseError("expected a grid row and at least one curve", path)
    width = len(rows[0][1])
    values = []
    for line, row in rows:
        if len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", path, line)
        values.append([_float(token.strip(), path, line) for token in row])
    try:
        grid = Grid(values[0])
    except GridError as exc:
        raise ParseError(f"invalid grid: {exc}", path, 1) from exc
    return FunctionalSample(grid, np.array(values[1:]))


def read_responses(path, n=None):
    """``y,observed`` columns; a missing y is empty or ``NA``. Returns (y, r)."""
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or [name.strip() for name in reader.fieldnames] != ["y", "observed"]:
            raise ParseError("header must be 'y,observed'", path, 1)
        y, r = [], []
        for row in reader:
            line = reader.line_num
            flag = OBSERVED_TOKENS.get((row["observed"] or "").strip().lower())
            if flag is None:
                raise ParseError(f"observed must be 0 or 1, got {row['observed']!r}", path, line)
            token = (row["y"] or "").strip()
            if flag:
                if token in MISSING_TOKENS:
                    raise ParseError("observed response has no value", path, line)
                y.append(_float(token, path, line))
            else:
                y.append(np.nan)
            r.append(flag)
    if n is not None and len(y) != n:
        raise ParseError(f"{len(y)} responses for {n} curves", path)
    return np.array(y, dtype=float), np.array(r, dtype=bool)


def _number(value):
    return repr(float(value))


def curves_text(sample: FunctionalSample) -> str:
    buffer = StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([_number(t) for t in sample.grid.points])
    for curve in sample.values:
        writer.writerow([_number(v) for v in curve])
    return buffer.getvalue()


def responses_text(y, r) -> str:
    buffer = StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["y", "observed"])
    for value, observed in zip(y, r):
        writer.writerow([_number(value) if observed else "NA", int(bool(observed))])
    return buffer.getvalue()


def atomic_write(path, content):
    """Write text or bytes to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(content, bytes) else "w"
    descriptor, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(descriptor, mode) as handle:
            handle.write(content)
        os.replace(temporary, path)
    except BaseException:
        os.unlink(temporary)
        raise
    return path


def write_curves(path, sample: FunctionalSample):
    return atomic_write(path, curves_text(sample))


def write_responses(path, y, r):
    return atomic_write(path, responses_text(y, r))


def json_text(data) -> str:
    return json.dumps(data, cls=JSONEncoder, sort_keys=True, indent=2) + "\n"


def write_json(path, data):
    return atomic_write(path, json_text(data))


def read_json(path):
    try:
        with open(path) as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from exc


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()
