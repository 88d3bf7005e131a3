"""Intershell spacing of MD crystals versus RF amplitude, and the delta0 fit.

Grows an N-ion low-aspect-ratio crystal at each U_rf, measures the mean
spacing of the radial shells in the central half of the crystal, and fits
delta_r = delta0 * a_ws-constant * U_rf^(-2/3).

    python3 scripts/md_shell_spacing.py --n 1000 --out shell_spacings.csv
"""

import argparse
import time

from paultrap import coldfluid, crystal
from paultrap.core import default_trap
from paultrap.csvio import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--urf", type=float, nargs="+", default=[100.0, 150.0, 200.0, 250.0])
    ap.add_argument("--alpha", type=float, default=0.3, help="target cold-fluid aspect ratio")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--steps", type=int, default=4000, help="steps per annealing stage")
    ap.add_argument("--out", default="shell_spacings.csv")
    args = ap.parse_args()

    rows = []
    for k, U in enumerate(args.urf):
        t0 = time.time()
        trap = default_trap(Urf=U)
        trap = trap.with_drive(Uend=crystal.uend_for_aspect_ratio(trap, args.alpha))
        state = crystal.grow_crystal(trap, args.n, seed=args.seed + k,
                                     stage_steps=(args.steps,) * 3)
        obs = crystal.observables(state)
        model = coldfluid.intershell_spacing_model(U, trap)
        print(f"U_rf={U:g} V U_end={trap.drive.Uend:.4f} V: {obs.shell_count} shells, "
              f"spacing {obs.intershell_spacing * 1e6:.3f} um (model {model * 1e6:.3f} um), "
              f"alpha {obs.alpha:.3f}, T {state.kinetic_temperature() * 1e3:.2f} mK, "
              f"{time.time() - t0:.0f} s", flush=True)
        rows.append([U, obs.intershell_spacing, trap.drive.Uend, obs.shell_count])

    fit = coldfluid.fit_delta0([(r[0], r[1]) for r in rows], default_trap())
    print(f"delta0 = {fit['delta0']:.4f} +- {fit.errors['delta0']:.4f}")
    write_csv(args.out, ["urf_V", "delta_r_m", "uend_V", "shells"], rows,
              {"source": f"MD, N={args.n}, alpha={args.alpha}, seed={args.seed}",
               "delta0_fit": fit["delta0"]})


if __name__ == "__main__":
    main()
