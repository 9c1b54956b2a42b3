"""Plot phasescope CSV outputs. Requires matplotlib (not a package dependency).

Usage::

    python3 docs/plot_figures.py fig1 OUTDIR
    python3 docs/plot_figures.py fig2a SWEEPDIR
    python3 docs/plot_figures.py fig2b SWEEPDIR
    python3 docs/plot_figures.py fig3 SWEEPDIR
    python3 docs/plot_figures.py s1 HALF.csv SHIFTED.csv
"""

from __future__ import annotations

import csv
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np


def read_rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def num(v):
    return float(v) if v not in ("", None) else np.nan


def seed_means(rows, key):
    acc = defaultdict(list)
    for r in rows:
        if r["status"] == "ok":
            acc[(r["kind"], num(r["u_over_j"]), num(r["gamma"]))].append(num(r[key]))
    return {k: (np.mean(v), np.std(v)) for k, v in acc.items()}


def fig1(plt, out):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, kind in zip(axes, ("coherence", "population")):
        rows = read_rows(Path(out) / f"fig1_{kind}.csv")
        by_u = defaultdict(list)
        for r in rows:
            by_u[num(r["u_over_j"])].append((num(r["omega"]), num(r["S"])))
        for i, (u, pts) in enumerate(sorted(by_u.items())):
            w, s = np.array(pts).T
            ax.plot(w, s / max(s.max(), 1e-300) + i, lw=0.8, label=f"{u:g}")
        ax.set_title(kind)
        ax.set_xlabel("omega")
    axes[0].set_ylabel("S (offset by U/J index)")
    return fig


def fig2(plt, out, key, ylabel):
    stats = seed_means(read_rows(Path(out) / "diagram.csv"), key)
    fig, ax = plt.subplots(figsize=(6, 4))
    for kind, gamma in sorted({(k, g) for k, _, g in stats}):
        pts = sorted((u, m, s) for (k, u, g), (m, s) in stats.items() if k == kind and g == gamma)
        u, m, s = np.array(pts).T
        ax.errorbar(u, m, yerr=s, marker="o", ms=3, capsize=2, label=f"{kind}, gamma={gamma:g}")
    ax.set_xscale("log")
    ax.set_xlabel("U/J")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    return fig


def fig3(plt, out):
    stats = seed_means(read_rows(Path(out) / "diagram.csv"), "F")
    kinds = sorted({k for k, _, _ in stats})
    fig, axes = plt.subplots(1, len(kinds), figsize=(5 * len(kinds), 4), squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        us = sorted({u for k, u, _ in stats if k == kind})
        gs = sorted({g for k, _, g in stats if k == kind})
        z = np.array([[stats.get((kind, u, g), (np.nan,))[0] for u in us] for g in gs])
        im = ax.pcolormesh(np.arange(len(us) + 1), np.arange(len(gs) + 1), z, shading="flat")
        ax.set_xticks(np.arange(len(us)) + 0.5, [f"{u:.3g}" for u in us], rotation=90, fontsize=6)
        ax.set_yticks(np.arange(len(gs)) + 0.5, [f"{g:.2g}" for g in gs], fontsize=6)
        ax.set_xlabel("U/J")
        ax.set_ylabel("gamma")
        ax.set_title(kind)
        fig.colorbar(im, ax=ax, label="F(Gamma_max)")
    return fig


def s1(plt, *paths):
    fig, axes = plt.subplots(1, len(paths), figsize=(4 * len(paths), 4), squeeze=False)
    for ax, path in zip(axes[0], paths):
        rows = read_rows(path)
        n = max(int(r["j"]) for r in rows)
        m = np.zeros((n, n))
        for r in rows:
            m[int(r["j"]) - 1, int(r["k"]) - 1] = num(r["M_jk"])
        im = ax.imshow(m, cmap="RdBu_r", vmin=-abs(m).max(), vmax=abs(m).max())
        ax.set_title(Path(path).stem)
        fig.colorbar(im, ax=ax)
    return fig


def main(argv):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    which, args = argv[0], argv[1:]
    if which == "fig1":
        fig = fig1(plt, args[0])
    elif which == "fig2a":
        fig = fig2(plt, args[0], "F", "F(Gamma_max)")
    elif which == "fig2b":
        fig = fig2(plt, args[0], "coh_after", "time-averaged coherence")
    elif which == "fig3":
        fig = fig3(plt, args[0])
    elif which == "s1":
        fig = s1(plt, *args)
    else:
        raise SystemExit(__doc__)
    target = f"{which}.png"
    fig.tight_layout()
    fig.savefig(target, dpi=150)
    print(target)


if __name__ == "__main__":
    main(sys.argv[1:])
