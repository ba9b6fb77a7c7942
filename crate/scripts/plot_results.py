#!/usr/bin/env python3
"""Plot a `sparsekit sweep` / `reproduce` output directory.

Reads <dir>/results.csv and <dir>/layer_flops.csv and writes:

    accuracy_vs_k.png      top-1 accuracy against sparsity exponent k
    flops_vs_k.png         total FLOPS sparsity against k
    layer_flops.png        per-layer FLOPS sparsity, one panel per head

Rows are averaged over seeds; error bars show the min/max across seeds.

Usage:
    python3 scripts/plot_results.py results [--out plots]
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def by_seed(df, keys, value):
    g = df.groupby(keys)[value]
    out = g.mean().to_frame("mean")
    out["lo"] = g.min()
    out["hi"] = g.max()
    return out.reset_index()


def metric_vs_k(rows, value, ylabel, path):
    heads = sorted(rows["head"].unique())
    fig, axes = plt.subplots(1, len(heads), figsize=(5 * len(heads), 4), squeeze=False, sharey=True)
    stats = by_seed(rows, ["head", "method", "k"], value)
    for ax, head in zip(axes[0], heads):
        for method, part in stats[stats["head"] == head].groupby("method"):
            part = part.sort_values("k")
            err = [part["mean"] - part["lo"], part["hi"] - part["mean"]]
            ax.errorbar(part["k"], part["mean"], yerr=err, marker="o", capsize=3, label=method)
        ax.set_title(f"{head} head")
        ax.set_xlabel("k  (s = 10^-k)")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel(ylabel)
    axes[0][-1].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def layer_plot(layers, path):
    heads = sorted(layers["head"].unique())
    fig, axes = plt.subplots(1, len(heads), figsize=(5 * len(heads), 4), squeeze=False, sharey=True)
    stats = by_seed(layers, ["head", "method", "k", "layer_index"], "flops_sparsity")
    for ax, head in zip(axes[0], heads):
        part = stats[stats["head"] == head]
        for (method, k), run in part.groupby(["method", "k"]):
            run = run.sort_values("layer_index")
            ax.plot(run["layer_index"], run["mean"], marker=".", label=f"{method} k={k:g}")
        ax.set_title(f"{head} head")
        ax.set_xlabel("layer")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("FLOPS sparsity")
    axes[0][-1].legend(fontsize="x-small", ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("dir", type=Path, help="directory holding results.csv and layer_flops.csv")
    ap.add_argument("--out", type=Path, help="output directory (default: the input directory)")
    args = ap.parse_args()
    out = args.out or args.dir
    out.mkdir(parents=True, exist_ok=True)

    rows = pd.read_csv(args.dir / "results.csv")
    metric_vs_k(rows, "accuracy", "top-1 accuracy", out / "accuracy_vs_k.png")
    metric_vs_k(rows, "flops_sparsity", "total FLOPS sparsity", out / "flops_vs_k.png")

    layer_file = args.dir / "layer_flops.csv"
    if layer_file.exists():
        layer_plot(pd.read_csv(layer_file), out / "layer_flops.png")
    print(f"wrote plots to {out}")


if __name__ == "__main__":
    main()
