"""First-alarm latency after onset with a chi-square calibrated CUSUM."""

import argparse

import numpy as np

from noisesig.harness import METHODS, BenchmarkConfig, latency_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--target-arl", type=float, default=1000.0)
    ap.add_argument("--methods", nargs="+", default=["wpt+hos", "wpt-only"], choices=METHODS)
    args = ap.parse_args()

    bench = BenchmarkConfig(runs=args.runs, seed=args.seed)
    for r in latency_suite(bench, args.methods, target_arl=args.target_arl):
        cdf = r.cdf
        quartiles = [int(np.searchsorted(cdf.y, q)) if cdf.y[-1] >= q else None for q in (0.25, 0.5, 0.75)]
        print(
            f"{r.method:<20} h_c={r.h_c:.2f} nu={r.nu:g} censored={cdf.censored:.2f} "
            f"latency quartiles={quartiles} false alarms before onset={r.false_alarms_before_onset:.2f}"
        )


if __name__ == "__main__":
    main()
