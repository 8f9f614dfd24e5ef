"""Rendering of ML-AMP experiment CSVs: phase diagrams, MSE curves and
free-energy scans.  Consumes only the documented CSV contracts of the
`mlamp` CLI; never recomputes inference quantities."""

from .csvio import CsvError, Table, classify, read_csv
from .render import PlotError, render

__all__ = ["CsvError", "Table", "classify", "read_csv", "PlotError",
           "render"]
