"""Text tables, CSV files and matplotlib figures for CLI reports."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# no timestamps or version strings so repeated runs give identical bytes
_PNG_META = {"Software": None}


def format_table(headers, rows) -> str:
    cells = [[str(h) for h in headers]] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(headers))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}" if abs(v) < 1e5 else f"{v:.4e}"
    return "" if v is None else str(v)


def csv_text(headers, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(headers)
    w.writerows(rows)
    return buf.getvalue()


def atomic_write(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return buf.getvalue()


def sweep_figure(axis_label: str, values, tops, bounds) -> bytes:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(values, tops, marker="o", color="tab:blue")
    for x, y, b in zip(values, tops, bounds):
        if y is not None:
            ax.annotate(b, (x, y), textcoords="offset points", xytext=(0, 6), fontsize=7,
                        ha="center")
    ax.set_xlabel(axis_label)
    ax.set_ylabel("estimated TOPS")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _png(fig)


def congestion_figure(west, east, rc_west, rc_east) -> bytes:
    cols = range(len(west))
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.bar([c - 0.2 for c in cols], west, width=0.4, label="west")
    ax.bar([c + 0.2 for c in cols], east, width=0.4, label="east")
    ax.axhline(rc_west, color="tab:red", ls="--", lw=1, label="RC")
    if rc_east != rc_west:
        ax.axhline(rc_east, color="tab:purple", ls=":", lw=1)
    ax.set_xlabel("column")
    ax.set_ylabel("crossing streams")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _png(fig)
