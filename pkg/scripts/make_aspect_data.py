"""Synthetic aspect-ratio measurements for the beta / U_off calibration fit.

Aspect ratios follow the cold-fluid relation for given beta and U_off, with
multiplicative Gaussian noise on alpha.

    python3 scripts/make_aspect_data.py --noise 0.01 --out aspect_ratios.csv
"""

import argparse

import numpy as np

from paultrap import coldfluid
from paultrap.csvio import write_csv


def synthesize(beta, uoff, urf_values, uend_values, noise, seed):
    params = coldfluid.ColdFluidParams(beta=beta, Uoff=uoff)
    rng = np.random.default_rng(seed)
    rows = []
    for U in urf_values:
        for Ue in uend_values:
            ratio = coldfluid.freq_ratio_from_voltages(U, Ue, params)
            alpha = coldfluid.alpha_from_freq_ratio(ratio)
            rows.append([alpha * (1.0 + noise * rng.standard_normal()), U, Ue])
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--beta", type=float, default=-2.311e-3)
    ap.add_argument("--uoff", type=float, default=0.92)
    ap.add_argument("--urf", type=float, nargs="+", default=[100.0, 150.0, 200.0, 250.0, 300.0])
    ap.add_argument("--uend", type=float, nargs="+", default=[2.0, 3.0, 4.0, 5.0])
    ap.add_argument("--noise", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--out", default="aspect_ratios.csv")
    args = ap.parse_args()
    rows = synthesize(args.beta, args.uoff, args.urf, args.uend, args.noise, args.seed)
    write_csv(args.out, ["alpha", "urf_V", "uend_V"], rows,
              {"source": f"synthetic, beta={args.beta}, uoff={args.uoff}, "
                         f"noise={args.noise}, seed={args.seed}"})
    fit = coldfluid.fit_beta_uoff([r for r in rows])
    print(f"beta = {fit['beta']:.5e} +- {fit.errors['beta']:.1e}, "
          f"U_off = {fit['Uoff']:.4f} +- {fit.errors['Uoff']:.4f}")


if __name__ == "__main__":
    main()
