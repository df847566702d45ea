"""Error decay of the batched protocol over block length.

Tabulates the typical weight, the projection error, the excess-failure
probability, their total, and the n^4-weighted total that certifies the
fast-convergence requirement.  Ends with log-linear decay fits.
"""

import argparse

from loccgate import analysis


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--theta", type=float, default=0.5)
    parser.add_argument("--delta", type=float, default=0.4)
    parser.add_argument(
        "--n", type=int, nargs="+", default=[2**k for k in range(6, 15)]
    )
    args = parser.parse_args()

    print(f"theta={args.theta} delta={args.delta}")
    print(f"{'n':>7} {'weight':>12} {'eps_n':>12} {'eps_prime':>12} {'total':>12} {'n^4 total':>14}")
    reports = []
    for n in args.n:
        rep = analysis.error_budget(n, args.delta, args.theta)
        reports.append(rep)
        print(
            f"{n:7d} {rep.typical_weight:12.6g} {rep.epsilon_n:12.4e} "
            f"{rep.epsilon_prime:12.4e} {rep.total_error:12.4e} "
            f"{float(n) ** 4 * rep.total_error:14.4e}"
        )

    slope_n, _, r2_n = analysis.log_linear_fit(args.n, [r.log_epsilon_n for r in reports])
    slope_p, _, r2_p = analysis.log_linear_fit(args.n, [r.log_epsilon_prime for r in reports])
    print()
    print(f"projection error: log eps ~ {slope_n:.3e} * n  (R^2 = {r2_n:.6f})")
    print(f"excess failures:  log eps ~ {slope_p:.3e} * n  (R^2 = {r2_p:.6f})")


if __name__ == "__main__":
    main()
