"""Deterministic SVG plots of the CSV outputs."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import coldfluid  # noqa: E402
from .csvio import SchemaError, read_csv  # noqa: E402

KINDS = ("scatter+fit", "histogram")
FITS = {
    "linear": (coldfluid.fit_linear, lambda x, p: p["slope"] * x + p["intercept"]),
    "inverse": (coldfluid.fit_inverse, lambda x, p: p["c"] / x),
    "inverse-sqrt": (coldfluid.fit_inverse_sqrt, lambda x, p: 1.0 / np.sqrt(p["a"] + p["b"] * x)),
    "gaussian": (coldfluid.fit_gaussian,
                 lambda x, p: coldfluid.gaussian(x, p["A"], p["x0"], p["w"], p["B"])),
}


def _numeric_columns(path, header, rows, names):
    out = []
    for name in names:
        j = header.index(name)
        try:
            out.append(np.array([float(r[j]) for r in rows]))
        except ValueError as exc:
            raise SchemaError(f"{path}: column {name!r} is not numeric") from exc
    return out


def emit_plot(csv_path, kind, out_path, fit="linear", x=None, y=None):
    """Render ``csv_path`` to ``out_path`` (SVG).  Same input, same bytes.

    ``scatter+fit`` plots columns ``x`` vs ``y`` (default: first two numeric
    columns) with a ``fit`` overlay; ``histogram`` expects ``r_m,count``.
    """
    if kind not in KINDS:
        raise SchemaError(f"unknown plot kind {kind!r}; kinds: {KINDS}")
    header, rows, _ = read_csv(csv_path)
    if not rows:
        raise SchemaError(f"{csv_path}: no data rows, nothing to plot")

    plt.rcParams["svg.hashsalt"] = "paultrap"
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    if kind == "histogram":
        if header[:2] != ["r_m", "count"]:
            raise SchemaError(f"{csv_path}: histogram needs columns r_m,count; found {header}")
        r, c = _numeric_columns(csv_path, header, rows, ["r_m", "count"])
        width = r[1] - r[0] if len(r) > 1 else 1e-6
        ax.bar(r * 1e6, c, width=width * 1e6, color="0.4")
        ax.set_xlabel("cylindrical radius (um)")
        ax.set_ylabel("ions per bin")
    else:
        if x is None or y is None:
            numeric = []
            for j, name in enumerate(header):
                try:
                    [float(r[j]) for r in rows]
                    numeric.append(name)
                except ValueError:
                    continue
            if len(numeric) < 2:
                raise SchemaError(f"{csv_path}: need two numeric columns; found {header}")
            x, y = x or numeric[0], y or numeric[1]
        for name in (x, y):
            if name not in header:
                raise SchemaError(f"{csv_path}: no column {name!r}; found {header}")
        xs, ys = _numeric_columns(csv_path, header, rows, [x, y])
        ax.plot(xs, ys, "o", color="k", ms=4)
        if fit not in FITS:
            raise SchemaError(f"unknown fit {fit!r}; fits: {sorted(FITS)}")
        fitter, model = FITS[fit]
        res = fitter(np.column_stack([xs, ys]))
        grid = np.linspace(xs.min(), xs.max(), 200)
        ax.plot(grid, model(grid, res.params), "-", color="C0", lw=1.2)
        ax.set_xlabel(x)
        ax.set_ylabel(y)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path
