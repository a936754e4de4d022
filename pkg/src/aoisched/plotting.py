"""Standalone plotting scripts written next to figure CSVs.

The script only needs matplotlib and the standard library, so it can be
re-run on the CSV without this package installed.
"""

from __future__ import annotations

import runpy

SCRIPT = '''\
"""Plot {title} from {csv_names}."""
import csv
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
KIND = {kind!r}
CSV_FILES = {csv_files!r}
PNG = {png!r}
TITLE = {title!r}
XLABEL = {xlabel!r}
YLABEL = {ylabel!r}


def rows(name):
    with open(os.path.join(HERE, name), newline="") as fh:
        return list(csv.DictReader(fh))


def sweep(ax):
    series = defaultdict(list)
    for r in rows(CSV_FILES[0]):
        series[r["policy"]].append((float(r["x"]), float(r["value"]), float(r["stderr"])))
    for name, pts in series.items():
        pts.sort()
        xs, ys, es = zip(*pts)
        ax.errorbar(xs, ys, yerr=es, marker="o", ms=3, capsize=2, label=name)
    ax.set_xlabel(XLABEL)
    ax.set_ylabel(YLABEL)


def distribution(ax):
    styles = {{0: dict(ls="-", marker=""), 1: dict(ls="", marker="o", ms=3)}}
    for k, (name, label) in enumerate(zip(CSV_FILES, ("analytic", "empirical"))):
        curves = defaultdict(list)
        for r in rows(name):
            curves[r["terminal"]].append((int(r["j"]), float(r["mu"])))
        for i, (term, pts) in enumerate(sorted(curves.items(), key=lambda kv: int(kv[0]))):
            js, mus = zip(*sorted(pts))
            ax.plot(js, mus, color="C%d" % i, label="terminal %s %s" % (term, label), **styles[k])
    ax.set_xlabel(XLABEL)
    ax.set_ylabel(YLABEL)


def main():
    fig, ax = plt.subplots(figsize=(6, 4.2))
    (sweep if KIND == "sweep" else distribution)(ax)
    ax.set_title(TITLE)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, PNG)
    fig.savefig(out, dpi=120)
    plt.close(fig)


if __name__ == "__main__":
    main()
'''


def write_script(path, kind, csv_files, png, title, xlabel, ylabel):
    text = SCRIPT.format(
        kind=kind, csv_files=list(csv_files), csv_names=", ".join(csv_files), png=png,
        title=title, xlabel=xlabel, ylabel=ylabel,
    )
    with open(path, "w") as fh:
        fh.write(text)


def render(script_path):
    """Run a written plot script in-process (``__main__`` with no arguments)."""
    import sys

    saved = sys.argv
    sys.argv = [str(script_path)]
    try:
        runpy.run_path(str(script_path), run_name="__main__")
    finally:
        sys.argv = saved
