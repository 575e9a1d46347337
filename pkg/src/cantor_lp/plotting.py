"""Log-log scaling figures for slope checks (matplotlib, byte-deterministic output)."""

from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write_bytes  # noqa: E402

STYLE = {
    "svg.hashsalt": "cantor-lp",  # fixed element ids
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
}
#: per-format metadata that would otherwise embed dates or versions
METADATA = {"svg": {"Date": None, "Creator": None}, "png": {"Software": None}, "pdf": {"CreationDate": None, "Producer": None}}


def scaling_figure(title: str, series: Sequence[dict]):
    """One log-log panel per series: points (with error bars) and the fitted line."""
    n = max(1, len(series))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.4), squeeze=False)
        for ax, s in zip(axes[0], series):
            x, y = np.asarray(s["x"], dtype=float), np.asarray(s["y"], dtype=float)
            yerr = s.get("yerr")
            ax.errorbar(x, y, yerr=yerr, fmt="o", ms=4, capsize=2, color="C0", label="measured")
            if "slope" in s:
                xs = np.geomspace(x.min(), x.max(), 50)
                ax.plot(xs, np.exp(s["intercept"]) * xs ** s["slope"], "-", color="C1",
                        label=f"fit slope {s['slope']:.3f}")
            if s.get("target_slope") is not None and "slope" in s:
                # reference line with the predicted exponent through the geometric mean of the data
                x0, y0 = np.exp(np.mean(np.log(x))), np.exp(np.mean(np.log(y)))
                xs = np.geomspace(x.min(), x.max(), 50)
                ax.plot(xs, y0 * (xs / x0) ** s["target_slope"], "--", color="0.5",
                        label=f"target slope {s['target_slope']:.3g}")
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel(s.get("xlabel", ""))
            ax.set_ylabel(s.get("ylabel", ""))
            ax.set_title(s.get("label", ""), fontsize=9)
            ax.legend(fontsize=7, frameon=False)
        fig.suptitle(title, fontsize=10)
        fig.tight_layout()
    return fig


def save_figure(fig, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    buf = io.BytesIO()
    with plt.rc_context(STYLE):
        fig.savefig(buf, format=fmt, metadata=METADATA.get(fmt))
    plt.close(fig)
    return atomic_write_bytes(path, buf.getvalue())


def render_plots(name: str, series: Sequence[dict], out_dir, formats: Sequence[str] = ("svg",)) -> list[Path]:
    if not series:
        return []
    written = []
    for fmt in formats:
        fig = scaling_figure(name, series)
        written.append(save_figure(fig, Path(out_dir) / f"{name}.{fmt}", fmt))
    return written
