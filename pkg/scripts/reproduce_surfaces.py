"""Solve the default model and export the value surfaces and stopping/switching regions as CSV."""
import argparse
from pathlib import Path

from mixsearch.dp import SolverSettings
from mixsearch.io import export_surface_csv, solve_cached
from mixsearch.model import DensityPair, ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pi", type=float, default=0.05)
    ap.add_argument("--c", type=float, default=0.01)
    ap.add_argument("--snr-db", type=float, default=3.0)
    ap.add_argument("--grid-m", type=int, default=201)
    ap.add_argument("--out", type=Path, default=Path("mixsearch-out"))
    args = ap.parse_args()

    params = ModelParams(args.pi, args.c, DensityPair.gaussian(1.0, snr_db=args.snr_db))
    bundle, path, hit = solve_cached(params, SolverSettings(grid_m=args.grid_m), args.out)
    print(f"bundle {path} ({'cached' if hit else 'solved'}), A_s={bundle.a_s:.6f}")
    exports = args.out / "exports"
    for name, surf in zip(("g", "V_s", "A_c"), bundle.surfaces()):
        print(export_surface_csv(surf, exports / f"{name}_{bundle.key}.csv"))
    print(export_surface_csv(bundle, exports / f"regions_{bundle.key}.csv"))
    print(f"R_tau nodes: {int(bundle.stop_mask.sum())}, R_phi nodes: {int(bundle.switch_mask.sum())}"
          f" of {len(bundle.grid)}")


if __name__ == "__main__":
    main()
