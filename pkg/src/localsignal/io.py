"""CSV ingestion: one column (values) or two (label, value), optional header, '#' comments."""

from __future__ import annotations

import csv
import io
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InputError
from .model import TimeSeries


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def parse_csv(text: str, name: str = "", column: int | None = None) -> TimeSeries:
    """Parse delimited text into a series.

    Lines starting with ``#`` and blank lines are skipped.  The first row is a
    header when its value field is not numeric.  With one column the values
    are the series; with two the first is a label.  ``column`` picks a value
    column (0-based) from wider files, labels are then taken from column 0.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise InputError(f"{name or 'input'}: no data rows")
    try:
        dialect = csv.Sniffer().sniff(lines[0], delimiters=",;\t ")
        delim = dialect.delimiter
    except csv.Error:
        delim = ","
    rows = [[c.strip() for c in r] for r in csv.reader(lines, delimiter=delim, skipinitialspace=True)]
    rows = [[c for c in r if c != ""] if delim == " " else r for r in rows]
    width = len(rows[0])
    if column is None:
        if width not in (1, 2):
            raise InputError(f"{name or 'input'}: expected one or two columns, found {width} "
                             "(use --column to pick one)")
        vcol = width - 1
    else:
        if not 0 <= column < width:
            raise InputError(f"{name or 'input'}: column {column} out of range (width {width})")
        vcol = column
    header = None
    if not _is_number(rows[0][vcol]):
        header = rows[0]
        rows = rows[1:]
    if not rows:
        raise InputError(f"{name or 'input'}: header but no data rows")
    values, labels = [], []
    for i, r in enumerate(rows, start=1):
        if len(r) != width:
            raise InputError(f"{name or 'input'}: row {i} has {len(r)} fields, expected {width}")
        v = r[vcol]
        if not _is_number(v):
            raise InputError(f"{name or 'input'}: row {i}: {v!r} is not a number")
        values.append(float(v))
        if vcol > 0:
            labels.append(r[0])
    vals = np.array(values)
    if not np.all(np.isfinite(vals)):
        raise InputError(f"{name or 'input'}: non-finite values")
    lab = None
    if labels:
        lab = np.array([float(x) if _is_number(x) else x for x in labels], dtype=object)
        if all(isinstance(x, float) for x in lab):
            lab = lab.astype(float)
    if name == "" and header is not None:
        name = header[vcol]
    return TimeSeries(vals, lab, name)


def read_csv(path, column: int | None = None) -> TimeSeries:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise InputError(f"{path}: not a text file") from None
    return parse_csv(text, p.stem, column)


def load_lynx() -> TimeSeries:
    """Annual Canadian lynx trappings 1821-1934, labelled by year."""
    text = resources.files("localsignal").joinpath("data/lynx.csv").read_text()
    ts = parse_csv(text)
    return TimeSeries(ts.values, ts.labels, "lynx")


def write_table(rows: list[dict], fh) -> None:
    """Delimited table with a header from the keys of the first row."""
    if not rows:
        return
    w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)


def table_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    write_table(rows, buf)
    return buf.getvalue()
