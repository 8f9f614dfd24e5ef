"""The three panel renderers.

All panels are drawn with a fixed style and no timestamps, so re-running on
identical CSV input produces identical image files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .boundaries import phase_boundaries, sweep_grid  # noqa: E402
from .csvio import CsvError, Table, axis_columns, classify  # noqa: E402

KINDS = ("phase-diagram", "mse-curves", "free-energy")

MSE_FLOOR = 1e-16  # log-scale display floor for exactly-recovered points

_PHASE_ORDER = ("impossible", "hard", "easy", "unknown")
_PHASE_COLORS = {"impossible": "#3b4cc0", "hard": "#f6d186",
                 "easy": "#e8f6e8", "unknown": "#bbbbbb"}


class PlotError(Exception):
    """Unusable input combination for the requested panel."""


def _single(tables, kind, contract):
    if len(tables) != 1:
        raise PlotError(f"{kind} takes exactly one input CSV, got "
                        f"{len(tables)}")
    table, meta = tables[0]
    if classify(table) != contract:
        raise PlotError(f"{kind} needs a {contract} CSV, got a "
                        f"{classify(table)} CSV ({table.path})")
    return table, meta


def _render_phase_diagram(tables, ax, opts):
    table, _ = _single(tables, "phase-diagram", "sweep")
    axes, xs, ys, phases = sweep_grid(table)
    if np.any(phases == None):  # noqa: E711  (object grid)
        raise CsvError(f"{table.path}: grid has empty cells")
    idx = np.zeros(phases.shape, dtype=float)
    for k, name in enumerate(_PHASE_ORDER):
        idx[phases == name] = k
    cmap = matplotlib.colors.ListedColormap(
        [_PHASE_COLORS[p] for p in _PHASE_ORDER])
    # cell-centered mesh around the sample points
    def edges(v):
        mid = 0.5 * (v[1:] + v[:-1])
        return np.concatenate([[2 * v[0] - mid[0]], mid,
                               [2 * v[-1] - mid[-1]]])
    # axis convention: second sweep axis horizontal, first vertical
    ax.pcolormesh(edges(ys), edges(xs), idx, cmap=cmap, vmin=-0.5,
                  vmax=len(_PHASE_ORDER) - 0.5, shading="flat")
    bounds = phase_boundaries(xs, ys, phases)
    for line in bounds["it"]:
        ax.plot(line[:, 1], line[:, 0], "-", color="red", lw=2.0)
    for line in bounds["amp"]:
        ax.plot(line[:, 1], line[:, 0], ":", color="red", lw=2.0)
    ax.set_xlabel(opts.get("x_label") or axes[1])
    ax.set_ylabel(opts.get("y_label") or axes[0])
    handles = [matplotlib.patches.Patch(color=_PHASE_COLORS[p], label=p)
               for p in _PHASE_ORDER if np.any(phases == p)]
    handles.append(plt.Line2D([], [], color="red", ls="-",
                              label="IT boundary"))
    handles.append(plt.Line2D([], [], color="red", ls=":",
                              label="AMP boundary"))
    ax.legend(handles=handles, loc="best", fontsize=8)


def _render_mse_curves(tables, ax, opts):
    if not tables:
        raise PlotError("mse-curves needs at least one input CSV")
    drew = False
    for table, meta in tables:
        kind = classify(table)
        if kind == "sweep":
            axes = axis_columns(table)
            if len(axes) != 1:
                raise PlotError(f"{table.path}: mse-curves needs a "
                                f"one-axis sweep, found axes {axes}")
            x = np.asarray(table.column(axes[0]), dtype=float)
            table.require("amp_mse", "mmse")

            def series(name):
                vals = [v if v is not None else np.nan
                        for v in table.column(name)]
                return np.maximum(np.asarray(vals, dtype=float), MSE_FLOOR)

            ax.plot(x, series("amp_mse"), "-", color="C0", label="AMP (SE)")
            ax.plot(x, series("mmse"), "--", color="black", label="MMSE")
            if "instance_mse" in table.columns:
                inst = series("instance_mse")
                mask = np.isfinite(inst)
                if np.any(mask):
                    ax.plot(x[mask], inst[mask], "o", color="C0", mfc="none",
                            label="AMP (instance)")
            ax.set_xlabel(opts.get("x_label") or axes[0])
            drew = True
        elif kind == "instance":
            if "x" not in meta:
                raise PlotError(
                    f"{table.path}: instance CSVs need an x position "
                    "(--input PATH@x=VALUE) to join the MSE axis")
            x0 = float(meta["x"])
            table.require("algorithm", "kind", "mse")
            for row in table.rows:
                if row["kind"] != "summary":
                    continue
                mse = max(float(row["mse"]), MSE_FLOOR)
                if row["algorithm"] == "baseline":
                    ax.plot([x0], [mse], "v", color="red", mfc="none",
                            label="baseline (instance)")
                else:
                    ax.plot([x0], [mse], "s", color="C0",
                            label="ML-AMP (instance)")
            drew = True
        else:
            raise PlotError(f"{table.path}: mse-curves cannot use a "
                            f"{kind} CSV")
    if not drew:
        raise PlotError("mse-curves: nothing to draw")
    ax.set_yscale("log")
    ax.set_ylabel(opts.get("y_label") or "MSE")
    # de-duplicate legend labels
    handles, labels = ax.get_legend_handles_labels()
    seen = {}
    for h, lab in zip(handles, labels):
        seen.setdefault(lab, h)
    ax.legend(seen.values(), seen.keys(), loc="best", fontsize=8)


def _render_free_energy(tables, ax, opts):
    table, _ = _single(tables, "free-energy", "free-energy")
    table.require("m_signal", "phi")
    m = np.asarray(table.column("m_signal"), dtype=float)
    phi = np.asarray(table.column("phi"), dtype=float)
    ax.plot(m, phi, "-", color="C0")
    k = int(np.argmin(phi))
    ax.plot([m[k]], [phi[k]], "o", color="red", label="global minimum")
    ax.set_xlabel(opts.get("x_label") or "signal overlap")
    ax.set_ylabel(opts.get("y_label") or "free energy")
    ax.legend(loc="best", fontsize=8)


_RENDERERS = {
    "phase-diagram": _render_phase_diagram,
    "mse-curves": _render_mse_curves,
    "free-energy": _render_free_energy,
}


def render(kind: str, tables: list[tuple[Table, dict]], output: str,
           opts: dict | None = None) -> None:
    """Draw one panel from parsed CSV tables and write the image file.

    tables is a list of (Table, metadata) pairs; metadata carries
    presentation-only annotations such as the x position of an instance CSV.
    Raises PlotError/CsvError before any file is written.
    """
    if kind not in _RENDERERS:
        raise PlotError(f"unknown panel kind {kind!r}; choose from {KINDS}")
    opts = opts or {}
    fig, ax = plt.subplots(figsize=(5.0, 4.0), dpi=150)
    try:
        _RENDERERS[kind](tables, ax, opts)
        if opts.get("title"):
            ax.set_title(opts["title"])
        fig.tight_layout()
        fig.savefig(output)
    finally:
        plt.close(fig)
