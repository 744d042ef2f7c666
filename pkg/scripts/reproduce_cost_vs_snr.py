"""Mean total cost of the mixed policy against SNR, with the DP value at the prior for each point."""
import argparse
import csv
from pathlib import Path

from mixsearch.dp import SolverSettings
from mixsearch.io import solve_cached
from mixsearch.model import ModelParams
from mixsearch.sim import cost_slope, sweep_snr


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", default="0,2,4,6,8,10", help="comma-separated SNR values in dB")
    ap.add_argument("--pi", type=float, default=0.05)
    ap.add_argument("--c", type=float, default=0.01)
    ap.add_argument("--trials", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid-m", type=int, default=201)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("mixsearch-out"))
    args = ap.parse_args()

    settings = SolverSettings(grid_m=args.grid_m)
    snrs = [float(s) for s in args.snr.split(",")]
    pts = sweep_snr(ModelParams(args.pi, args.c), snrs, args.trials, args.seed,
                    policy_factory=lambda p: solve_cached(p, settings, args.out)[0].to_policy(),
                    workers=args.workers)
    path = args.out / "exports" / "cost_vs_snr.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snr_db", "mean_cost", "se_cost", "v_s_prior", "mean_delay", "error_rate", "error"])
        for p in pts:
            s = p.summary
            if s is None:
                w.writerow([p.snr_db, "", "", "", "", "", p.error])
            else:
                w.writerow([p.snr_db, s.mean_cost, s.se_cost, p.v_s_prior, s.mean_delay, s.error_rate, ""])
            print(p.snr_db, "failed: " + p.error if s is None else f"cost {s.mean_cost:.4f} +- {s.se_cost:.4f}"
                  f"  V_s(prior) {p.v_s_prior:.4f}")
    print(f"slope {cost_slope(pts):.5f} per dB -> {path}")


if __name__ == "__main__":
    main()
