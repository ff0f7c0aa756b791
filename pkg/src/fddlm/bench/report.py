"""CSV output and static SVG plots of benchmark rows."""
import csv
import logging
import math
import warnings
from pathlib import Path

from fddlm.bench.experiment import CSV_FIELDS, NAN, ResultRow

log = logging.getLogger(__name__)

_INT_FIELDS = {"level", "n_v", "n_v2", "n_lambda", "iterations"}
_FLOAT_FIELDS = {"h", "cond_initial", "cond_precond", "solve_seconds", "setup_seconds"}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _parse(name, text):
    if name in _INT_FIELDS:
        return int(text)
    if name in _FLOAT_FIELDS:
        return float(text)
    if name == "converged":
        return text == "true"
    return text


def emit_csv(rows, path):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow([_format(getattr(row, f)) for f in CSV_FIELDS])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"unexpected CSV header in {path}")
        return [ResultRow(**{k: _parse(k, v) for k, v in rec.items()}) for rec in reader]


def _positive(values):
    return [v if (math.isfinite(v) and v > 0) else NAN for v in values]


def _series(rows, key):
    rows = sorted(rows, key=lambda r: r.level)
    return [getattr(r, key) for r in rows]


def plot_panel(rows, kind):
    """Figure for one (case, shape) panel; ``kind`` is ``"cond"`` or ``"iter"``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    case, shape = rows[0].case, rows[0].shape
    variants = sorted({r.variant for r in rows})
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    if kind == "cond":
        first = [r for r in rows if r.variant == variants[0]]
        ax.plot(_series(first, "h"), _positive(_series(first, "cond_initial")),
                "k--", marker="x", label="unpreconditioned")
        for v in variants:
            sel = [r for r in rows if r.variant == v]
            ax.plot(_series(sel, "h"), _positive(_series(sel, "cond_precond")),
                    marker="o", label=v)
        ax.set_xlabel("h")
        ax.set_ylabel("condition number")
    elif kind == "iter":
        for v in variants:
            sel = [r for r in rows if r.variant == v]
            ax.plot(_positive(_series(sel, "solve_seconds")),
                    _positive([float(i) for i in _series(sel, "iterations")]),
                    marker="o", label=v)
        ax.set_xlabel("solve time [s]")
        ax.set_ylabel("iterations")
    else:
        raise ValueError(f"unknown panel kind {kind!r}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_title(f"{case} {shape}")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return fig


def emit_plots(rows, out_dir):
    """One SVG per (case, shape) panel for condition numbers and for iterations.

    Returns the written paths.
    """
    rows = list(rows)
    if not rows:
        warnings.warn("no rows to plot; no plot files written", RuntimeWarning,
                      stacklevel=2)
        return []
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for case, shape in sorted({(r.case, r.shape) for r in rows}):
        panel = [r for r in rows if r.case == case and r.shape == shape]
        for kind in ("cond", "iter"):
            fig = plot_panel(panel, kind)
            path = out / f"{kind}_{case}_{shape}.svg"
            fig.savefig(path, format="svg")
            plt.close(fig)
            written.append(path)
    log.info("wrote %d plot files to %s", len(written), out)
    return written
