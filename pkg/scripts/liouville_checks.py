"""Theta certificate sweep, the sharpness example and the Liouville experiments."""
from inflap.liouville import (
    ExperimentConfig, certify_theta_subsolution, liouville_II_experiment, liouville_III_experiment,
    sharpness_counterexample,
)


def main():
    for a in (-0.25, -0.5, -0.75, -0.999):
        for h in (1e-2, 5e-3):
            r = certify_theta_subsolution(ExperimentConfig(alpha_test=a, h=h))
            print(f"alpha={a:7.3f} h={h:.0e} margin={r.min_margin:.3e} deviation={r.max_deviation:.2e}")
    s = sharpness_counterexample()
    print(f"sharpness: error {s.max_error:.2e}, max residual {s.max_value:.2e}")
    l2 = liouville_II_experiment(ExperimentConfig())
    print(f"liouville II: inf values {[round(v, 6) for v in l2.inf_values]}, flat {l2.flat}")
    l3 = liouville_III_experiment(ExperimentConfig(beta=1.0), c=-8.0)
    print(f"liouville III: certificate {l3.certificate_max:.2e}, final sup {l3.final_sup_plus:.2e}")


if __name__ == "__main__":
    main()
