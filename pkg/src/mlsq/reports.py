"""Deterministic report writing: JSON summaries, CSV detail, PNG figures.

Reports are reproducible byte-for-byte: keys are sorted, floats use their
shortest round-trip representation, nothing records clocks or hostnames,
and figures are rendered through the Agg backend with pinned metadata.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

SCHEMA_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _jsonable(obj):
    """Rewrite numpy scalars, tuples, and infinities into plain JSON types."""
    import math

    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, complex):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_summary(outdir: str, summary: dict) -> str:
    payload = {"schema_version": SCHEMA_VERSION}
    payload.update(_jsonable(summary))
    path = os.path.join(outdir, "summary.json")
    with open(path, "w") as fh:
        fh.write(canonical_json(payload))
    return path


def write_csv(outdir: str, name: str, header: list[str], rows) -> str:
    path = os.path.join(outdir, f"{name}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, float):
                    cells.append(repr(v))
                elif isinstance(v, (list, tuple)):
                    cells.append(" ".join(str(x) for x in v))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")
    return path


def save_figure(fig, outdir: str, name: str) -> str:
    path = os.path.join(outdir, f"{name}.png")
    fig.savefig(path, dpi=110, metadata={"Software": "mlsq"})
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# figure builders (one per report family)
# ---------------------------------------------------------------------------


def figure_profile(xs, curves: dict, title: str, xlabel: str = "x"):
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, ys in curves.items():
        ax.plot(xs, ys, label=label, linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    if len(curves) > 1:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def figure_cube_masses(rows, title: str):
    """Tent mass / |Q| per cube, grouped by generation."""
    fig, ax = plt.subplots(figsize=(7, 4))
    gens = sorted({row["cube"][0] for row in rows})
    for g in gens:
        vals = [r["ratio"] for r in rows if r["cube"][0] == g]
        ax.scatter([g] * len(vals), vals, s=14, alpha=0.8)
    ax.set_xlabel("cube generation")
    ax.set_ylabel("tent mass / |Q|")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def figure_loglog(rows, xkey: str, ykey: str, title: str, slope_line=None):
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = [r[xkey] for r in rows]
    ys = [max(r[ykey], 1e-300) for r in rows]
    ax.loglog(xs, ys, "o", markersize=4, alpha=0.8)
    if slope_line is not None:
        import numpy as np

        s, c = slope_line
        xs_ref = np.array([min(xs), max(xs)])
        ax.loglog(xs_ref, c * xs_ref**s, "--", linewidth=1.0, label=f"slope {s:g}")
        ax.legend(fontsize=8)
    ax.set_xlabel(xkey)
    ax.set_ylabel(ykey)
    ax.set_title(title)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    return fig


def figure_decomposition(d, title: str):
    """Selected cubes and the stopping time over a 1-D or 2-D root."""
    fig, ax = plt.subplots(figsize=(7, 4))
    root = d.root
    if root.dim == 1:
        for Q in d.selected:
            ax.add_patch(
                plt.Rectangle(
                    (float(Q.lo[0]), 0.0), Q.side, Q.side, alpha=0.5, ec="k", lw=0.4
                )
            )
        ax.plot([float(root.lo[0]), float(root.hi[0])], [0, 0], "k-", lw=0.8)
        ax.set_xlim(float(root.lo[0]), float(root.hi[0]))
        ax.set_ylim(0, root.side * 1.05)
        ax.set_xlabel("x")
        ax.set_ylabel("tau")
    else:
        for Q in d.selected:
            ax.add_patch(
                plt.Rectangle(
                    tuple(float(v) for v in Q.lo[:2]),
                    Q.side,
                    Q.side,
                    alpha=0.5,
                    ec="k",
                    lw=0.4,
                )
            )
        ax.set_xlim(float(root.lo[0]), float(root.hi[0]))
        ax.set_ylim(float(root.lo[1]), float(root.hi[1]))
        ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    return fig
