"""Achievable low-group surplus range at the optimal profit level.

Sweeps kernel mixtures between the surplus-free and the surplus-maximal
optimal couplings, dumps the realized welfare per target, and writes the
mid-mixture coupling atoms for inspection.
"""

import csv
import sys
from pathlib import Path

from fairprice import Exponential, MarketSlice, build_p_star
from fairprice.matching import coupling_to_csv_rows, coupling_welfare, mix_for_target_surplus
from fairprice.welfare import surplus_closed_forms, welfare_report

OUT = Path(__file__).resolve().parent.parent / "results"
N_ATOMS = 10_000


def main():
    OUT.mkdir(exist_ok=True)
    slice_ = MarketSlice(c=0.0, alpha=0.5, f_l=Exponential(1.0), f_h=Exponential(3.0))
    cs_l_star, cs_h_star = surplus_closed_forms(slice_)
    profit_star = welfare_report(build_p_star(slice_), slice_).profit

    with open(OUT / "outcome_range.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fraction", "sigma_target", "sigma_l", "sigma_h", "profit"])
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            target = frac * cs_l_star
            mix = mix_for_target_surplus(slice_, target, N_ATOMS)
            profit, cs_l, cs_h = coupling_welfare(slice_, mix)
            writer.writerow([f"{frac:g}", f"{target:.12g}", f"{cs_l:.12g}",
                             f"{cs_h:.12g}", f"{profit:.12g}"])
            print(f"sigma_l target {target:.5f} -> realized {cs_l:.5f}  "
                  f"(cs_h {cs_h:.5f}, profit {profit:.5f})")
    print(f"reference: cs_l* {cs_l_star:.5f}, cs_h* {cs_h_star:.5f}, profit* {profit_star:.5f}")

    mid = mix_for_target_surplus(slice_, 0.5 * cs_l_star, N_ATOMS)
    with open(OUT / "mid_mixture_coupling.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["v_l", "v_h", "weight", "source"])
        for row in coupling_to_csv_rows(mid):
            writer.writerow([f"{row[0]:.12g}", f"{row[1]:.12g}", f"{row[2]:.12g}", row[3]])
    print(f"wrote {OUT / 'outcome_range.csv'} and {OUT / 'mid_mixture_coupling.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
