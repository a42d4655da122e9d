#!/usr/bin/env python3
"""Plot zshot CSV outputs.

    plot_curves.py curve.csv        token accuracy vs size, single vs aggregate
    plot_curves.py flip_curve.csv   detections vs budget, influence vs random
    plot_curves.py augment.csv      token accuracy vs size per variant

Writes <input>.png next to the CSV. Needs pandas and matplotlib.
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def plot(path: Path) -> Path:
    df = pd.read_csv(path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if {"setting", "tok"} <= set(df.columns):
        for name, g in df.groupby("setting"):
            m = g.groupby("size")["tok"].agg(["mean", "std"]).reset_index()
            ax.errorbar(m["size"], m["mean"], yerr=m["std"], label=name, capsize=3)
        ax.set(xlabel="target training examples", ylabel="token accuracy", xscale="log")
    elif "influence_detected" in df.columns:
        for f, g in df.groupby("fraction"):
            ax.plot(g["budget"], g["influence_detected"], label=f"influence, f={f:g}")
            ax.plot(g["budget"], g["random_expected"], "--", color="gray")
        ax.set(xlabel="examples inspected", ylabel="flips found")
    elif "variant" in df.columns:
        for name, g in df.groupby("variant"):
            m = g.groupby("size")["tok"].mean()
            ax.plot(m.index, m.values, marker="o", label=name)
        ax.set(xlabel="target training examples", ylabel="token accuracy")
    else:
        raise SystemExit(f"{path}: unrecognized columns {list(df.columns)}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    return out


if __name__ == "__main__":
    if len(sys.argv) < 2:
        raise SystemExit(__doc__)
    for arg in sys.argv[1:]:
        print(plot(Path(arg)))
