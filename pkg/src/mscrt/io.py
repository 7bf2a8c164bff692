"""Plain CSV tables and file digests."""

from __future__ import annotations

import csv
import hashlib
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .linalg import Array


def parse_table(text: str, source: str = "<input>") -> tuple[list[str], Array]:
    """Header row plus numeric rows, comma separated, ``.`` as decimal point."""
    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigurationError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ConfigurationError(f"{source}: duplicate column names in header")
    if len(rows) < 2:
        raise ConfigurationError(f"{source}: no data rows")
    data = np.empty((len(rows) - 1, len(header)))
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ConfigurationError(
                f"{source}: line {k} has {len(row)} fields, header has {len(header)}"
            )
        for j, cell in enumerate(row):
            try:
                data[k - 2, j] = float(cell)
            except ValueError:
                raise ConfigurationError(
                    f"{source}: line {k}, column {header[j]!r}: {cell!r} is not a number"
                ) from None
    if not np.all(np.isfinite(data)):
        raise ConfigurationError(f"{source}: non-finite value in data")
    return header, data


def read_table(path) -> tuple[list[str], Array]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror}") from None
    return parse_table(text, str(path))


def format_table(names: Sequence[str], values) -> str:
    values = np.asarray(values, dtype=float)
    lines = [",".join(names)]
    lines += [",".join(repr(float(v)) for v in row) for row in values]
    return "\n".join(lines) + "\n"


def write_table(path, names: Sequence[str], values) -> None:
    Path(path).write_text(format_table(names, values))


def file_digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()
