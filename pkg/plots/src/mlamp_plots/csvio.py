"""Reading of the mlamp CSV contracts.

Files are comma separated with a header row, optional leading '#' comment
lines, '.' decimal points and the literal NA for missing values.
"""

from __future__ import annotations

from dataclasses import dataclass

NA = "NA"


class CsvError(Exception):
    """Malformed or unusable CSV input."""


@dataclass
class Table:
    path: str
    columns: list[str]
    rows: list[dict]

    def column(self, name: str) -> list:
        if name not in self.columns:
            raise CsvError(f"{self.path}: missing column {name!r} "
                           f"(have {self.columns})")
        return [row[name] for row in self.rows]

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise CsvError(f"{self.path}: missing columns {missing} "
                           f"(have {self.columns})")


def _parse_cell(text: str):
    if text == NA or text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path: str) -> Table:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise CsvError(f"{path}: empty CSV (no header row)")
    columns = lines[0].split(",")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(columns):
            raise CsvError(f"{path}: line {i} has {len(cells)} fields, "
                           f"header has {len(columns)}")
        rows.append({c: _parse_cell(x) for c, x in zip(columns, cells)})
    if not rows:
        raise CsvError(f"{path}: no data rows")
    return Table(path=path, columns=columns, rows=rows)


def classify(table: Table) -> str:
    """Which mlamp CSV contract a table follows, by its header."""
    cols = set(table.columns)
    if "phase" in cols:
        return "sweep"
    if "algorithm" in cols:
        return "instance"
    if "init" in cols:
        return "se"
    if {"m_signal", "phi"} <= cols:
        return "free-energy"
    raise CsvError(f"{table.path}: header matches no known mlamp contract "
                   f"({table.columns})")


def axis_columns(table: Table) -> list[str]:
    """Sweep axis columns: everything before the 'phase' column."""
    return table.columns[:table.columns.index("phase")]
