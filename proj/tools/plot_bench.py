#!/usr/bin/env python3
"""Plot bench-throughput or bench-latency CSV output.

usage: plot_bench.py <input.csv> <output.png>
"""
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def plot_throughput(df, ax):
    # x axis is whichever of shards / in_flight actually varies
    x, series = ("in_flight", "shards") if df["shards"].nunique() == 1 else ("shards", "in_flight")
    for (phase, s), g in df.groupby(["phase", series]):
        g = g.sort_values(x)
        ax.plot(g[x], g["tx_per_sec"], marker="o", label=f"{phase}, {series.replace('_', '-')} {s}")
    ax.set_xlabel(x.replace("_", "-"))
    ax.set_ylabel("tx/s")
    ax.set_ylim(bottom=0)


def plot_latency(df, ax):
    for (authorities, phase), g in df.groupby(["authorities", "phase"]):
        g = g.sort_values("fail_count")
        ax.errorbar(g["fail_count"], g["median_ms"], yerr=[[0] * len(g), g["p90_ms"] - g["median_ms"]],
                    marker="o", capsize=3, label=f"{authorities} authorities, {phase}")
    ax.set_xlabel("stopped authorities")
    ax.set_ylabel("latency (ms), median with p90")


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__.strip())
    df = pd.read_csv(sys.argv[1])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if "tx_per_sec" in df.columns:
        plot_throughput(df, ax)
    elif "median_ms" in df.columns:
        plot_latency(df, ax)
    else:
        sys.exit(f"unrecognised columns: {', '.join(df.columns)}")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(sys.argv[2], dpi=120)


if __name__ == "__main__":
    main()
