"""Print refinement tables (residual and observed order) for every registered check."""

import argparse
import math
from pathlib import Path

from gradest import mms
from gradest.reporting import write_csv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--spatial-levels", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--dt-levels", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3])
    p.add_argument("--N", type=int, default=64, help="fixed resolution for time studies")
    p.add_argument("--out", type=Path, default=None, help="write one CSV per table here")
    args = p.parse_args()

    for check, (_, order, variable) in mms.CHECKS.items():
        if variable == "N":
            levels = [(N, None) for N in args.spatial_levels]
            cases = ["exp-cos", "exp-mixed"]
        else:
            levels = [(args.N, dt) for dt in args.dt_levels]
            cases = [c for c in mms.PARABOLIC_TORUS if c != "homogeneous"]
        for cid in cases:
            rows = mms.convergence_study(check, levels, catalog_id=cid, expected_order=order)
            print(f"\n{check} on {cid} (expected order {order:g} in {variable})")
            print(f"{'N':>5} {'dt':>8} {'residual':>11} {'order':>7}")
            for r in rows:
                o = "" if math.isnan(r.order) else f"{r.order:.2f}"
                dt = "" if r.dt is None else f"{r.dt:g}"
                print(f"{r.N:5d} {dt:>8} {r.residual:11.3e} {o:>7}" + ("  flagged" if r.flagged else ""))
            if args.out is not None:
                write_csv(args.out / f"{check}_{cid}.csv", mms.StudyRow.CSV_COLUMNS,
                          [dict(r.csv_row(), dt="" if r.dt is None else r.dt) for r in rows])


if __name__ == "__main__":
    main()
