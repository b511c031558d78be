"""Principal eigenvalue experiments in 1D.

Compares the computed bracket with the closed-form 1D value for each gamma,
then runs the large-alpha scaling of the potential.
"""
import argparse

from inflap.core import Sampler
from inflap.eigen import principal_eigenvalue, scaling_limit_check
from inflap.oracles import p_laplace_eigenvalue
from inflap.operator import CoefficientSet

from _common import ball


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=1 / 100)
    ap.add_argument("--alphas", type=float, nargs="+", default=[4.0, 16.0, 64.0])
    args = ap.parse_args()
    m = ball(args.h)
    for g in (0.0, 1.0, 2.0):
        r = principal_eigenvalue(m, CoefficientSet(g))
        print(f"gamma={g}: [{r.lambda_lo:.5f}, {r.lambda_hi:.5f}]  exact {p_laplace_eigenvalue(g):.5f}")
    for name, c in (("-x^2", lambda x: -x[:, 0] ** 2), ("1-x^2", lambda x: 1 - x[:, 0] ** 2)):
        for a, lam, ratio in scaling_limit_check(args.alphas, m, CoefficientSet(2.0, c=Sampler(c))):
            print(f"c={name:6s} alpha={a:5g} lambda={lam:10.4f} lambda/alpha={ratio:8.4f}")


if __name__ == "__main__":
    main()
