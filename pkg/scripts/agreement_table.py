"""Print the discrete-versus-closed-form agreement table for the radial profiles."""
import argparse

from inflap.oracles import agreement_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--hs", type=float, nargs="+", default=[2e-2, 1e-2, 5e-3])
    ap.add_argument("--gammas", type=float, nargs="+", default=[0.0, 1.0, 2.0])
    args = ap.parse_args()
    rows = agreement_table(args.gammas, args.hs)
    print(f"{'profile':48s} {'gamma':>5s} {'h':>8s} {'abs':>10s} {'rel':>10s}")
    for r in rows:
        print(f"{r.profile[:48]:48s} {r.gamma:5.2f} {r.h:8.4f} {r.abs_error:10.3e} {r.rel_error:10.3e}")


if __name__ == "__main__":
    main()
