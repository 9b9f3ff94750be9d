from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence


def fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def write_table(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence],
                comments: Sequence[str] = ()) -> Path:
    """CSV with leading '# ' comment lines, LF endings, UTF-8."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return path


def read_table(path: str | Path) -> tuple[list[str], list[str], list[list[str]]]:
    """Returns (comments, columns, rows) of a file written by write_table."""
    comments: list[str] = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#") and not body:
            comments.append(line[1:].strip())
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return comments, rows[0], rows[1:]
