"""``paultrap`` command line.

Exit status: 0 success, 2 usage or parse error, 3 physics domain error,
4 numerical failure.  ``PAULTRAP_THREADS`` caps the MD kernel's threads.
"""

import argparse
import configparser
import math
import os
import sys

import numpy as np

from . import __version__, commands
from .core import DomainError, NumericalError
from .csvio import SchemaError
from .units import UnitError, parse_quantity

EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_NUMERIC = 4


def _unit(unit):
    def conv(text):
        try:
            return parse_quantity(text, unit)
        except UnitError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    conv.__name__ = f"quantity[{unit}]"
    return conv


def _add_trap_args(p):
    g = p.add_argument_group("trap")
    g.add_argument("--config", help="trap config file (default: shipped aarhus-866.cfg)")
    g.add_argument("--urf", type=_unit("V"), help="RF amplitude, e.g. 300 or 300V")
    g.add_argument("--uend", type=_unit("V"), help="end-electrode voltage")
    g.add_argument("--uoff", type=_unit("V"), help="static end-voltage offset")
    g.add_argument("--omega-rf", type=_unit("Hz"), help="RF drive frequency (not angular), e.g. 4MHz")
    g.add_argument("--species", help="ion species label, e.g. Ca-40")


def _trap(args):
    omega = None if args.omega_rf is None else 2.0 * math.pi * args.omega_rf
    return commands.load_trap(args.config, args.urf, args.uend, args.uoff, omega, args.species)


def build_parser():
    ap = argparse.ArgumentParser(prog="paultrap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"paultrap {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("circuit", help="attenuation, resonance ratio and phase error of loads")
    _add_trap_args(p)
    p.add_argument("--load", action="append", default=[],
                   help="rod=X+:Cp=22pF[:Cs=1000pF]; repeatable")
    p.add_argument("--balanced", metavar="ROD:T",
                   help="solve the balanced (Cp, Cs) pair for attenuation T on ROD")
    p.add_argument("--csv", help="write the table as CSV")

    p = sub.add_parser("field", help="Mathieu parameters and secular frequencies")
    _add_trap_args(p)

    p = sub.add_parser("displace", help="RF nodal line for attenuated rods")
    _add_trap_args(p)
    p.add_argument("--rod", action="append", required=True, help="ROD:attenuation, e.g. X+:0.96")
    p.add_argument("--points", type=int, default=11, help="rows of the delta sweep CSV")
    p.add_argument("--csv", help="write delta, x0_um_exact, x0_um_linear")

    p = sub.add_parser("ion", help="single-ion trajectory and micromotion report")
    _add_trap_args(p)
    for a in "xyz":
        p.add_argument(f"--udc-{a}", type=_unit("m"), default=0.0,
                       help=f"pseudopotential equilibrium offset along {a}, e.g. 10um")
    p.add_argument("--periods", type=float, default=100, help="RF periods to integrate")
    p.add_argument("--out", help="trajectory CSV")

    p = sub.add_parser("simulate", help="molecular dynamics of an ion ensemble")
    _add_trap_args(p)
    p.add_argument("--n", type=int, help="number of ions of the trap species")
    p.add_argument("--mix", help="species mix, e.g. Ca-40:100,Ca-44:100")
    p.add_argument("--mode", choices=("pseudo", "pseudopotential", "full_rf"), default="pseudo")
    p.add_argument("--steps", type=int, help="integration steps (default 5000)")
    p.add_argument("--duration", type=_unit("s"), help="simulated time instead of --steps")
    p.add_argument("--gamma", type=float, help="friction rate in 1/s (default 0.05 omega_r)")
    p.add_argument("--temperature", type=_unit("K"), default=0.01, help="bath temperature, e.g. 10mK")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="snapshot CSV")

    p = sub.add_parser("analyze", help="crystal observables of a snapshot CSV")
    p.add_argument("state", help="snapshot CSV from 'simulate'")
    p.add_argument("--hist", help="write the radial histogram CSV (r_m, count)")
    p.add_argument("--species", help="restrict to one species label")
    p.add_argument("--max-temperature", type=_unit("K"), default=0.05)
    p.add_argument("--robust", action="store_true", help="95th percentile R and L")

    p = sub.add_parser("fit", help="least-squares fits; CSV schemas listed in --model help")
    _add_trap_args(p)
    p.add_argument("--model", required=True, choices=sorted(commands.FIT_SCHEMAS),
                   help="; ".join(f"{k}: {','.join(v)}" for k, v in commands.FIT_SCHEMAS.items())
                   + " (optional sigma column)")
    p.add_argument("--in", dest="inp", required=True, help="input CSV")
    p.add_argument("--out", help="result CSV (param, value, sigma)")

    p = sub.add_parser("tomography", help="synthetic cavity-mode tomography scan and fit")
    _add_trap_args(p)
    p.add_argument("--axis", choices=("x", "y", "both"), default="x")
    p.add_argument("--range", type=_unit("m"), default=50e-6, help="half width of the scan")
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--noise", type=float, default=0.0, help="relative multiplicative noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--waist", type=_unit("m"), help="mode waist (default from config)")
    p.add_argument("--radius", type=_unit("m"), help="crystal radius (default waist/4)")
    p.add_argument("--mode-offset-x", type=_unit("m"), default=0.0)
    p.add_argument("--mode-offset-y", type=_unit("m"), default=0.0)
    p.add_argument("--out", help="scan CSV (displacement_um, coupling)")

    p = sub.add_parser("scenario", help="run a scenario file")
    p.add_argument("path", help="scenario file, or the name of a shipped one")
    p.add_argument("--out-dir", help="override the scenario's output_dir")

    p = sub.add_parser("plot", help="render a CSV as SVG")
    p.add_argument("csv")
    p.add_argument("--kind", choices=("scatter+fit", "histogram"), default="scatter+fit")
    p.add_argument("--fit", default="linear", help="overlay: linear, inverse, inverse-sqrt, gaussian")
    p.add_argument("--x", help="x column (default: first numeric)")
    p.add_argument("--y", help="y column (default: second numeric)")
    p.add_argument("--out", required=True, help="output SVG")
    return ap


def _dispatch(args):
    c = args.command
    if c == "circuit":
        trap = _trap(args)
        lines, _ = commands.run_circuit(trap, args.load, args.csv) if args.load else ([], [])
        if args.balanced:
            rod, _, t = args.balanced.partition(":")
            more, _ = commands.run_balanced(trap, rod, float(t or 0.96))
            lines += more
        if not (args.load or args.balanced):
            raise ValueError("give at least one --load or --balanced")
        return lines
    if c == "field":
        return commands.run_field(_trap(args))[0]
    if c == "displace":
        return commands.run_displace(_trap(args), args.rod, args.points, args.csv)[0]
    if c == "ion":
        udc = (args.udc_x, args.udc_y, args.udc_z)
        return commands.run_ion(_trap(args), udc, args.periods, args.out)[0]
    if c == "simulate":
        if (args.n is None) == (args.mix is None):
            raise ValueError("give exactly one of --n and --mix")
        mode = "pseudopotential" if args.mode == "pseudo" else args.mode
        return commands.run_simulate(_trap(args), args.n, args.mix, mode, args.steps, args.duration,
                                     args.gamma, args.temperature, args.seed, args.out)[0]
    if c == "analyze":
        return commands.run_analyze(args.state, args.hist, args.species, args.max_temperature,
                                    args.robust)[0]
    if c == "fit":
        return commands.run_fit(args.model, args.inp, args.out, _trap(args))[0]
    if c == "tomography":
        return commands.run_tomography(args.axis, args.range, args.points, args.noise, args.seed,
                                       args.waist, args.radius,
                                       (args.mode_offset_x, args.mode_offset_y), args.out,
                                       _trap(args))[0]
    if c == "scenario":
        from .scenario import run_scenario

        out = run_scenario(args.path, args.out_dir)
        return [f"manifest: {out}"]
    if c == "plot":
        from .plotting import emit_plot

        return [f"wrote {emit_plot(args.csv, args.kind, args.out, args.fit, args.x, args.y)}"]
    raise ValueError(f"unknown command {c}")


def _set_threads():
    value = os.environ.get("PAULTRAP_THREADS")
    if not value:
        return
    import numba

    n = int(value)
    if n < 1:
        raise ValueError("PAULTRAP_THREADS must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _set_threads()
        for line in _dispatch(args):
            print(line)
        return 0
    except DomainError as exc:
        print(f"paultrap: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"paultrap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SchemaError, UnitError, configparser.Error, FileNotFoundError, KeyError,
            ValueError) as exc:
        print(f"paultrap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
