"""Phase-boundary extraction from a sweep grid via marching squares."""

from __future__ import annotations

import numpy as np
from skimage import measure

from .csvio import CsvError, Table, axis_columns


def sweep_grid(table: Table):
    """(x values, y values, phase-label 2-D array) from a two-axis sweep.

    Rows follow the sweep's deterministic order (first axis outermost);
    the grid must be complete and rectangular.
    """
    axes = axis_columns(table)
    if len(axes) != 2:
        raise CsvError(f"{table.path}: phase diagram needs a two-axis "
                       f"sweep, found axes {axes}")
    xs = np.unique(np.asarray(table.column(axes[0]), dtype=float))
    ys = np.unique(np.asarray(table.column(axes[1]), dtype=float))
    if len(xs) * len(ys) != len(table.rows):
        raise CsvError(
            f"{table.path}: ragged grid: {len(xs)} x {len(ys)} axis values "
            f"but {len(table.rows)} rows")
    phases = np.empty((len(xs), len(ys)), dtype=object)
    phases[:] = None
    for row in table.rows:
        i = int(np.searchsorted(xs, float(row[axes[0]])))
        j = int(np.searchsorted(ys, float(row[axes[1]])))
        if phases[i, j] is not None:
            raise CsvError(f"{table.path}: duplicate grid cell "
                           f"({row[axes[0]]}, {row[axes[1]]})")
        phases[i, j] = row["phase"]
    return axes, xs, ys, phases


def phase_boundaries(xs, ys, phases):
    """Marching-squares contours between phase regions.

    Returns a dict with the algorithmic boundary (easy vs the rest) and the
    information-theoretic boundary (impossible vs the rest), each a list of
    polyline arrays in data coordinates.
    """
    out = {}
    for name, positive in (("amp", ("easy",)),
                           ("it", ("impossible",))):
        field = np.isin(phases, positive).astype(float)
        polylines = []
        for contour in measure.find_contours(field, 0.5):
            # index space -> data coordinates
            cx = np.interp(contour[:, 0], np.arange(len(xs)), xs)
            cy = np.interp(contour[:, 1], np.arange(len(ys)), ys)
            polylines.append(np.column_stack([cx, cy]))
        out[name] = polylines
    return out


def transitions_present(phases, positive):
    """Whether any adjacent cell pair straddles the given label set."""
    field = np.isin(phases, positive)
    return (np.any(field[1:, :] != field[:-1, :])
            or np.any(field[:, 1:] != field[:, :-1]))
