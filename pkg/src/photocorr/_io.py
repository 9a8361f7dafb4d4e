"""Small CSV helpers shared by the file formats."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence


def fmt(value) -> str:
    """Locale-independent, round-trip exact text for a number."""
    if isinstance(value, (bool,)):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    x = float(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence],
              comments: Sequence[str] = ()) -> None:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path: str | Path) -> tuple[list[str], list[str], list[list[str]]]:
    """Return (comment lines, header, rows) of a CSV written by `write_csv`."""
    comments, body = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    return comments, header, [row for row in reader]


def parse_comments(comments: Sequence[str]) -> dict[str, str]:
    out = {}
    for line in comments:
        key, sep, value = line.partition("=")
        if sep:
            out[key.strip()] = value.strip()
    return out
