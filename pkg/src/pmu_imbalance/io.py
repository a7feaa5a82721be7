"""Delimited writers for reports and result tables."""
from __future__ import annotations

import csv
import json
import math
from typing import IO, Iterable, Sequence

from . import __version__


def format_value(value) -> str:
    """Round-trip text for numbers (``repr`` of floats), plain text otherwise."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_rows(
    rows: Iterable[dict],
    columns: Sequence[str],
    stream: IO[str],
    fmt: str = "csv",
    digest: str | None = None,
) -> None:
    """Write dict rows with a fixed column order.

    CSV output starts with a ``#`` comment naming the package version and the
    config hash; JSON-lines output carries no header.
    """
    if fmt == "csv":
        stream.write(f"# pmu_imbalance {__version__} config_sha256={digest or '-'}\n")
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])
    elif fmt == "jsonl":
        for row in rows:
            stream.write(json.dumps({c: _json_value(row[c]) for c in columns}) + "\n")
    else:
        raise ValueError(f"unknown output format {fmt!r}")
