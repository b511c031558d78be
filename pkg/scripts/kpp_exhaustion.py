"""Whole-space KPP steady states by ball exhaustion, with the two-start uniqueness probe."""
import argparse

import numpy as np

from inflap.kpp import DriftSpec, kpp_power, solve_kpp_whole_space, uniqueness_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--radii", type=float, nargs="+", default=[10.0, 20.0, 40.0])
    ap.add_argument("--h", type=float, default=0.05)
    args = ap.parse_args()
    for g in (0.0, 2.0):
        res = solve_kpp_whole_space(kpp_power(g), DriftSpec.radial_decay(), args.radii, g, args.h)
        for t in res.trace:
            print(f"gamma={g} R={t['radius']:5g} centre={t['center']:.8f} diff={t['diff']:.2e}")
        dev = np.max(np.abs(res.inner_values() - 1.0))
        probe = uniqueness_probe(kpp_power(g), DriftSpec.radial_decay(), args.radii, g, args.h)
        print(f"gamma={g}: {res.status}, inner deviation {dev:.2e}, uniqueness gap {probe.max_gap:.2e}")


if __name__ == "__main__":
    main()
