"""Side-by-side coefficients from discovery and the elastic-net baseline.

Usage: python scripts/compare_baseline.py --system lotka_volterra --sigma 2 --seed 0
"""

import argparse
from dataclasses import replace

from dynsparse.bench import get_system, true_terms
from dynsparse.config import RunConfig
from dynsparse.pipeline import baseline, clean_data, discover, noisy_data


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--system", default="lotka_volterra")
    ap.add_argument("--sigma", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lam", type=float, default=None)
    ap.add_argument("--rho", type=float, default=None)
    args = ap.parse_args()
    cfg = RunConfig.for_system(args.system)
    cfg = replace(cfg, noise=replace(cfg.noise, sigma=args.sigma))
    bl = cfg.baseline
    cfg = replace(cfg, baseline=replace(bl, lam=bl.lam if args.lam is None else args.lam,
                                        rho=bl.rho if args.rho is None else args.rho))
    clean = clean_data(cfg)
    ts = noisy_data(cfg, args.seed, clean) if args.sigma > 0 else clean
    found = discover(ts, cfg).model.terms()
    base = baseline(ts, cfg).terms()
    truth = true_terms(get_system(args.system))
    print(f"{'state':<6}{'term':<12}{'truth':>12}{'discovered':>14}{'baseline':>14}")
    for j in range(len(truth)):
        labels = sorted(set(truth[j]) | set(found[j]) | set(base[j]))
        for label in labels:
            print(f"x{j + 1:<5}{label:<12}{truth[j].get(label, 0.0):>12.6g}"
                  f"{found[j].get(label, 0.0):>14.6g}{base[j].get(label, 0.0):>14.6g}")


if __name__ == "__main__":
    main()
