"""Plot a sweep's plot.csv: median performance against d with a min-max band."""
import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_plot_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise SystemExit(f"{path}: no sweep points")
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", type=Path)
    ap.add_argument("-o", "--output", type=Path)
    ap.add_argument("--title", default="")
    ap.add_argument("--logx", action="store_true", help="logarithmic d axis")
    args = ap.parse_args(argv)

    cols = read_plot_csv(args.csv)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(cols["d"], cols["min"], cols["max"], alpha=0.25, label="min-max over runs")
    ax.plot(cols["d"], cols["median"], "o-", label="median")
    ax.axhline(cols["baseline"][0], color="k", lw=1, label="baseline")
    ax.axhline(cols["threshold"][0], color="k", lw=1, ls="--", label="threshold")
    if args.logx:
        ax.set_xscale("log")
    ax.set_xlabel("subspace dimension d")
    ax.set_ylabel("performance")
    ax.set_title(args.title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    out = args.output or args.csv.with_suffix(".png")
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
