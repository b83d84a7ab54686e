#!/usr/bin/env python3
"""Plot train loss against epochs and wall-clock from `lgd bench` trace CSVs."""
import argparse
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir", type=pathlib.Path, help="directory written by lgd bench")
    ap.add_argument("--png", type=pathlib.Path, default=None)
    ap.add_argument("--log", action="store_true", help="log-scale loss axis")
    args = ap.parse_args()

    traces = sorted(args.out_dir.glob("trace_*.csv"))
    if not traces:
        raise SystemExit(f"no trace_*.csv in {args.out_dir}")
    fig, (by_epoch, by_time) = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for path in traces:
        df = pd.read_csv(path)
        name = path.stem.removeprefix("trace_")
        by_epoch.plot(df["epoch"], df["train_loss"], label=name)
        by_time.plot(df["wall_ns"] / 1e6, df["train_loss"], label=name)
    by_epoch.set_xlabel("epoch")
    by_time.set_xlabel("wall-clock (ms, step bodies only)")
    by_epoch.set_ylabel("train loss")
    for ax in (by_epoch, by_time):
        if args.log:
            ax.set_yscale("log")
        ax.legend()
    fig.tight_layout()
    fig.savefig(args.png or args.out_dir / "traces.png", dpi=120)


if __name__ == "__main__":
    main()
