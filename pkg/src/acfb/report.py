"""Delimited-text, SVG and manifest output.

Numbers are written with 17 significant digits so a CSV round-trips every
float64 exactly.  SVG files come from matplotlib with a fixed hash salt and no
date stamp, so equal inputs give equal bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import sys

import numpy as np

FLOAT_FMT = "%.17g"


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


def label(value) -> str:
    """Short, stable column suffix for a float parameter."""
    return "%.6g" % float(value)


def write_csv(path, header, rows) -> str:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row of length {len(row)} under a {len(header)}-column header")
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# -- plots ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "acfb"
    matplotlib.rcParams["svg.fonttype"] = "none"
    import matplotlib.pyplot as plt

    return plt


def loglog_svg(path, series, title="", xlabel="r", ylabel="") -> str:
    """Log-log scatter per series, with the fitted line when one is given.

    ``series`` is a list of dicts with keys ``name``, ``x``, ``y`` and
    optionally ``slope`` and ``intercept`` (natural-log fit).
    """
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for k, s in enumerate(series):
        x = np.asarray(s["x"], dtype=float)
        y = np.asarray(s["y"], dtype=float)
        keep = (x > 0) & (y > 0)
        colour = f"C{k % 10}"
        ax.loglog(x[keep], y[keep], "o", color=colour, ms=4, label=s["name"])
        if s.get("slope") is not None and np.isfinite(s["slope"]) and np.any(keep):
            xs = np.array([x[keep].min(), x[keep].max()])
            ax.loglog(xs, np.exp(s["intercept"]) * xs ** s["slope"], "-", color=colour, lw=1,
                      label=f"slope {s['slope']:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def lines_svg(path, series, title="", xlabel="", ylabel="", logx=False) -> str:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for k, s in enumerate(series):
        ax.plot(s["x"], s["y"], s.get("style", "o-"), color=f"C{k % 10}", ms=3, lw=1, label=s["name"])
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if series:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# -- manifest -------------------------------------------------------------------------

def versions() -> dict:
    from importlib import metadata

    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "matplotlib", "scikit-image"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def write_manifest(out_dir, *, subcommand, config_sha256, seed, wall_time, exit_code, artifacts,
                   gates=None, meta=None, config_path=None) -> str:
    path = os.path.join(out_dir, "manifest.json")
    doc = {
        "subcommand": subcommand,
        "config_sha256": config_sha256,
        "config_path": config_path,
        "seed": seed,
        "exit_code": exit_code,
        "wall_time_s": wall_time,
        "versions": versions(),
        "platform": sys.platform,
        "artifacts": {os.path.basename(a): file_sha256(a) for a in sorted(artifacts) if os.path.exists(a)},
        "gates": gates or [],
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
