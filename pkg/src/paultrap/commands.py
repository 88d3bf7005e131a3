"""Command implementations shared by the CLI and the scenario runner.

Every command takes already-parsed SI values, writes its CSV outputs and
returns ``(lines, files)``: text for stdout and the paths written.
"""

import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cavity, coldfluid, crystal, dynamics
from .circuit import (
    RODS,
    ElectrodeLoad,
    LoadedCircuit,
    attenuation,
    phase_error,
    resonance_ratio,
)
from .core import DATA_DIR, SPECIES, DomainError, load_config
from .csvio import SchemaError, read_columns, read_csv, write_csv
from .field import (
    QuadrupoleField,
    mathieu_params,
    nodal_line_2d,
    nodal_offset_1d,
    nodal_offset_linear,
    secular_frequencies,
    stability_classification,
)
from .units import parse_quantity

DEFAULT_CONFIG = DATA_DIR / "aarhus-866.cfg"


def load_trap(config=None, urf=None, uend=None, uoff=None, omega_rf=None, species=None):
    trap = load_config(config or DEFAULT_CONFIG)
    changes = {k: v for k, v in (("Urf", urf), ("Uend", uend), ("Uoff", uoff),
                                 ("Omega_rf", omega_rf)) if v is not None}
    if changes:
        trap = trap.with_drive(**changes)
    if species is not None:
        if species not in SPECIES:
            raise DomainError(f"unknown species {species!r}; known: {sorted(SPECIES)}")
        trap = trap.with_species(SPECIES[species])
    return trap


def circuit_for(trap):
    return LoadedCircuit.from_config(trap.circuit, trap.drive.Omega_rf)


# --- circuit ---------------------------------------------------------------------


def parse_load(spec):
    """``rod=X+:Cp=22pF[:Cs=1000pF]`` (the ``rod=`` prefix is optional)."""
    parts = [p.strip() for p in spec.split(":") if p.strip()]
    if not parts:
        raise ValueError(f"empty load spec {spec!r}")
    rod = parts[0].split("=", 1)[-1].strip()
    if rod not in RODS:
        raise ValueError(f"unknown rod {rod!r} in {spec!r}; rods are {RODS}")
    values = {"Cp": 0.0, "Cs": None}
    for p in parts[1:]:
        key, sep, val = p.partition("=")
        if not sep or key.strip() not in values:
            raise ValueError(f"bad load term {p!r}; expected Cp=... or Cs=...")
        values[key.strip()] = parse_quantity(val, "F")
    return rod, values["Cp"], values["Cs"]


def _phase_deg(circuit, ratio):
    shift = ratio - 1.0
    if abs(shift) >= 0.1:
        return math.nan
    return math.degrees(phase_error(circuit, shift))


def run_circuit(trap, loads, csv=None):
    circ = circuit_for(trap)
    rows = []
    for spec in loads:
        rod, Cp, Cs = parse_load(spec) if isinstance(spec, str) else spec
        load = ElectrodeLoad(C=circ.rods[rod].C, Ct=circ.rods[rod].Ct, Cp=Cp, Cs=Cs)
        ratio = resonance_ratio(load)
        rows.append([rod, Cp * 1e12, "" if Cs is None else Cs * 1e12,
                     attenuation(load), ratio, _phase_deg(circ, ratio)])
    header = ["rod", "Cp_pF", "Cs_pF", "attenuation", "resonance_ratio", "phase_deg"]
    lines = [f"{'rod':>4} {'Cp_pF':>9} {'Cs_pF':>9} {'attenuation':>12} {'res_ratio':>10} {'phase_deg':>9}"]
    for r in rows:
        cs = f"{r[2]:9.4g}" if r[2] != "" else f"{'-':>9}"
        lines.append(f"{r[0]:>4} {r[1]:9.4g} {cs} {r[3]:12.8f} {r[4]:10.7f} {r[5]:9.4f}")
    files = [write_csv(csv, header, rows, {"Q_res": circ.Q_res})] if csv else []
    return lines, files


def run_balanced(trap, rod="X+", target=0.96, csv=None):
    res = dynamics.balanced_load_scenario(trap, circuit_for(trap), target, rod)
    header = ["rod", "target", "Cp_pF", "Cs_pF", "resonance_shift", "phase_deg",
              "micromotion_m", "temperature_K"]
    row = [rod, target, res["Cp"] * 1e12, res["Cs"] * 1e12, res["resonance_shift"],
           math.degrees(res["phase_error"]), res["micromotion_amplitude"], res["temperature"]]
    lines = [f"balanced loads for {rod} at attenuation {target}: "
             f"Cp = {row[2]:.4f} pF, Cs = {row[3]:.4f} pF",
             f"resonance shift {row[4]:.3e}, phase error {row[5]:.3e} deg, "
             f"micromotion {row[6]:.3e} m, temperature {row[7]:.3e} K"]
    files = [write_csv(csv, header, [row])] if csv else []
    return lines, files


# --- field -----------------------------------------------------------------------


def run_field(trap):
    p = mathieu_params(trap)
    stable = stability_classification(p)
    lines = [f"U_rf = {trap.drive.Urf:g} V, U_end = {trap.drive.Uend:g} V, "
             f"U_off = {trap.drive.Uoff:g} V, Omega/2pi = {trap.drive.Omega_rf / 2 / math.pi / 1e6:g} MHz, "
             f"{trap.species.label}",
             f"{'axis':>4} {'q':>10} {'a':>12} {'stable':>6} {'omega/2pi_kHz':>14}"]
    freqs = secular_frequencies(p, trap.drive.Omega_rf).as_dict() if all(stable.values()) else {}
    for ax in ("x", "y", "z"):
        f = freqs.get(ax, math.nan) / (2 * math.pi * 1e3)
        lines.append(f"{ax:>4} {p.q(ax):10.6f} {p.a(ax):12.6e} {str(stable[ax]):>6} {f:14.3f}")
    return lines, []


def _field_from_rods(trap, rods):
    att = {}
    for spec in rods:
        rod, _, val = spec.partition(":")
        rod = rod.strip()
        if rod not in RODS or not val:
            raise ValueError(f"bad rod attenuation {spec!r}; expected e.g. X+:0.96")
        att[rod] = float(val)
    return QuadrupoleField.from_attenuations(trap.drive.Urf, trap.drive.Uend, trap.geometry, att), att


def run_displace(trap, rods, points=11, csv=None):
    qf, att = _field_from_rods(trap, rods)
    x0, y0 = nodal_line_2d(qf)
    r0 = trap.geometry.r0
    lines = [f"nodal line at x = {x0 * 1e6:.4f} um, y = {y0 * 1e6:.4f} um"]
    files = []
    if csv:
        dmin = min(att.values())
        deltas = np.linspace(dmin, 1.0, points)
        rows = [[d, nodal_offset_1d(1.0, d, r0) * 1e6, nodal_offset_linear(d, r0) * 1e6]
                for d in deltas]
        files.append(write_csv(csv, ["delta", "x0_um_exact", "x0_um_linear"], rows,
                               {"r0_m": r0, "x0_um_2d": x0 * 1e6, "y0_um_2d": y0 * 1e6}))
    return lines, files


def run_displacement_vs_cp(trap, rod, cp_values, csv=None):
    """Nodal offset along ``rod``'s axis for parallel loads ``cp_values`` (F)."""
    circ = circuit_for(trap)
    r0 = trap.geometry.r0
    axis = 0 if rod.startswith("X") else 1
    rows = []
    for cp in cp_values:
        load = replace(circ.rods[rod], Cp=cp)
        a = attenuation(load)
        qf = QuadrupoleField.from_attenuations(trap.drive.Urf, trap.drive.Uend,
                                               trap.geometry, {rod: a})
        x = nodal_line_2d(qf)[axis]
        rows.append([cp * 1e12, a, x * 1e6, math.copysign(nodal_offset_linear(a, r0), x) * 1e6])
    fit = coldfluid.fit_linear([(r[0], r[2]) for r in rows])
    meta = {"rod": rod, "slope_um_per_pF": fit["slope"], "intercept_um": fit["intercept"]}
    lines = [f"displacement vs Cp on {rod}: slope {fit['slope']:.5f} um/pF "
             f"(+- {fit.errors['slope']:.2e}), intercept {fit['intercept']:.2e} um"]
    files = [write_csv(csv, ["Cp_pF", "attenuation", "x0_um", "x0_um_linear"], rows, meta)] if csv else []
    return lines, files


# --- single ion --------------------------------------------------------------------


def run_ion(trap, udc=(0.0, 0.0, 0.0), periods=100, csv=None):
    traj = dynamics.integrate_single_ion(trap, u_dc=udc, periods=periods)
    rep = dynamics.micromotion_report(traj, trap)
    amp = rep.amplitude * 1e6
    lines = [f"micromotion amplitude (x, y, z) = ({amp[0]:.5f}, {amp[1]:.5f}, {amp[2]:.5f}) um",
             f"equivalent temperature = {rep.equivalent_temperature:.4e} K",
             f"secular amplitude = {rep.secular_amplitude * 1e6:.4f} um"]
    files = []
    if csv:
        rows = np.column_stack([traj.times, traj.positions, traj.velocities])
        files.append(write_csv(csv, ["t_s", "x_m", "y_m", "z_m", "vx", "vy", "vz"], rows,
                               {"udc_m": " ".join(format(u, ".6g") for u in udc),
                                "micromotion_x_m": rep.amplitude[0],
                                "equivalent_temperature_K": rep.equivalent_temperature}))
    return lines, files


# --- crystals --------------------------------------------------------------------


def parse_mix(text):
    """``Ca-40:100,Ca-44:100`` -> {label: count}."""
    out = {}
    for part in text.split(","):
        label, _, n = part.partition(":")
        label = label.strip()
        if label not in SPECIES:
            raise ValueError(f"unknown species {label!r}; known: {sorted(SPECIES)}")
        out[label] = int(n)
    return out


def run_simulate(trap, n=None, mix=None, mode="pseudopotential", steps=None, duration=None,
                 gamma=None, temperature=0.01, seed=0, out=None):
    counts = parse_mix(mix) if mix else int(n)
    species = {k: SPECIES[k] for k in counts} if isinstance(counts, dict) else None
    ens = crystal.initial_ensemble(trap, counts, seed=seed, T0=temperature, species=species)
    if gamma is None:
        f = crystal.species_frequencies(trap, ens.species[0])
        gamma = 0.05 * min(f.omega_x, f.omega_y)
    cooling = crystal.CoolingModel(gamma=gamma, T_target=temperature)
    if steps is None and duration is None:
        steps = 5000
    state, report = crystal.simulate(trap, ens, cooling, mode=mode, steps=steps,
                                     duration=duration, return_report=True)
    lines = [f"simulated N = {state.N} ions for {report.steps} steps ({state.time:.4e} s), "
             f"rejected steps {report.rejected_steps}, min distance {report.min_distance:.3e} m",
             f"kinetic temperature {state.kinetic_temperature():.4e} K"]
    files = [write_snapshot(out, state, trap, mode)] if out else []
    return lines, files


def write_snapshot(path, state, trap, mode):
    labels = state.labels()
    rows = [[i, labels[i], *state.positions[i], *state.velocities[i]] for i in range(state.N)]
    meta = {"time_s": state.time, "rng_seed": state.rng_seed, "mode": mode,
            "urf_V": trap.drive.Urf, "uend_V": trap.drive.Uend, "uoff_V": trap.drive.Uoff}
    return write_csv(path, ["id", "species", "x_m", "y_m", "z_m", "vx", "vy", "vz"], rows, meta)


def read_snapshot(path):
    header, rows, meta = read_csv(path)
    need = ["id", "species", "x_m", "y_m", "z_m", "vx", "vy", "vz"]
    if header != need:
        raise SchemaError(f"{path}: expected columns {need}, found {header}")
    if not rows:
        raise SchemaError(f"{path}: no ions")
    labels = [r[1] for r in rows]
    unknown = sorted(set(labels) - set(SPECIES))
    if unknown:
        raise SchemaError(f"{path}: unknown species {unknown}")
    order = sorted(set(labels), key=lambda s: SPECIES[s].mass)
    idx = np.array([order.index(s) for s in labels], dtype=np.int64)
    num = np.array([[float(v) for v in r[2:]] for r in rows])
    return crystal.IonEnsembleState(
        positions=num[:, :3].copy(), velocities=num[:, 3:].copy(), species_index=idx,
        species=tuple(SPECIES[s] for s in order), time=float(meta.get("time_s", 0.0)),
        rng_seed=int(meta.get("rng_seed", 0)),
    )


def run_analyze(state_path, hist=None, species=None, max_temperature=0.05, robust=False):
    state = read_snapshot(state_path)
    obs = crystal.observables(state, species_filter=species, max_temperature=max_temperature,
                              robust=robust)
    spacing = "absent (fewer than 3 shells)" if obs.intershell_spacing is None \
        else f"{obs.intershell_spacing * 1e6:.3f} um"
    lines = [f"N = {state.N}, T = {state.kinetic_temperature():.3e} K",
             f"R = {obs.R * 1e6:.3f} um, L = {obs.L * 1e6:.3f} um, alpha = {obs.alpha:.4f}",
             f"density = {obs.density * 1e-6:.4e} cm^-3",
             f"shells = {obs.shell_count}, intershell spacing = {spacing}"]
    files = []
    if hist:
        a_ws = coldfluid.wigner_seitz_radius(obs.density)
        edges, counts, _ = crystal.radial_histogram(state, a_ws / 10.0, species)
        centres = 0.5 * (edges[:-1] + edges[1:])
        files.append(write_csv(hist, ["r_m", "count"], zip(centres, counts),
                               {"bin_width_m": a_ws / 10.0, "shell_count": obs.shell_count}))
    return lines, files


# --- fits ------------------------------------------------------------------------

FIT_SCHEMAS = {
    "beta-uoff": ("alpha", "urf_V", "uend_V"),
    "delta0": ("urf_V", "delta_r_m"),
    "beta-shells": ("urf_V", "delta_r_m"),
    "linear": ("x", "y"),
    "inverse": ("x", "y"),
    "inverse-sqrt": ("x", "y"),
    "gaussian": ("x", "y"),
}


def run_fit(model, in_path, out=None, trap=None):
    if model not in FIT_SCHEMAS:
        raise ValueError(f"unknown fit model {model!r}; models: {sorted(FIT_SCHEMAS)}")
    cols, _ = read_columns(in_path, FIT_SCHEMAS[model], optional=("sigma",))
    data = np.column_stack([cols[c] for c in FIT_SCHEMAS[model]])
    sigma = cols.get("sigma")
    if model == "beta-uoff":
        res = coldfluid.fit_beta_uoff(data, sigma=sigma)
    elif model == "delta0":
        res = coldfluid.fit_delta0(data, trap, sigma=sigma)
    elif model == "beta-shells":
        res = coldfluid.fit_beta_shells(data, trap, sigma=sigma)
    else:
        fn = {"linear": coldfluid.fit_linear, "inverse": coldfluid.fit_inverse,
              "inverse-sqrt": coldfluid.fit_inverse_sqrt, "gaussian": coldfluid.fit_gaussian}
        res = fn[model](data, sigma=sigma)
    return fit_report(res, model, out)


def fit_report(res, model, out=None):
    err = res.errors
    lines = [f"fit {model}: {res.n_points} points, residual rms {res.residual_rms:.4e}",
             f"{'param':>10} {'value':>16} {'sigma':>12}"]
    lines += [f"{k:>10} {v:16.9g} {err[k]:12.4g}" for k, v in res.params.items()]
    files = []
    if out:
        rows = [[k, v, err[k]] for k, v in res.params.items()]
        files.append(write_csv(out, ["param", "value", "sigma"], rows,
                               {"model": model, "n_points": res.n_points,
                                "residual_rms": res.residual_rms}))
    return lines, files


# --- tomography ------------------------------------------------------------------


def run_tomography(axis="x", scan_range=50e-6, points=21, noise=0.02, seed=7, waist=None,
                   radius=None, mode_offset=(0.0, 0.0), out=None, trap=None):
    """Synthetic tomography scan(s); ``axis='both'`` also locates the mode axis."""
    cfg = {k.lower(): v for k, v in (trap.circuit if trap else {}).items()}
    if waist is None:
        waist = float(cfg.get("waist_um", 37.0)) * 1e-6
    if radius is None:
        radius = waist / 4.0
    mode = cavity.CavityMode(waist=waist, axis_offset=tuple(mode_offset))
    axes = ("x", "y") if axis == "both" else (axis,)
    scans = [cavity.tomography_scan(radius, mode, ax, scan_range, points, noise, seed + k)
             for k, ax in enumerate(axes)]
    lines, files = [], []
    fits = {}
    for scan in scans:
        r = coldfluid.fit_gaussian(scan.as_data() * [1e6, 1.0])
        fits[scan.axis] = (r["x0"], r.errors["x0"], r["w"])
        lines.append(f"scan {scan.axis}: peak at {r['x0']:.3f} +- {r.errors['x0']:.3f} um, "
                     # coupling ~ exp(-d^2/w0^2): the 1/e^2 fit width is sqrt(2) w0
                     f"implied waist {r['w'] / math.sqrt(2):.3f} um"
                     + ("" if scan.valid else " [R >= waist]"))
    if out:
        out = Path(out)
        for scan in scans:
            path = out if len(scans) == 1 else out.with_name(f"{out.stem}_{scan.axis}{out.suffix}")
            x0, s, w = fits[scan.axis]
            meta = {"axis": scan.axis, "waist_m": waist, "radius_m": radius, "noise": noise,
                    "seed": seed, "valid": scan.valid, "fit_x0_um": x0, "fit_sigma_um": s,
                    "fit_w_um": w}
            rows = zip(scan.displacements * 1e6, scan.couplings)
            files.append(write_csv(path, ["displacement_um", "coupling"], rows, meta))
        if len(scans) == 2:
            path = out.with_name(f"{out.stem}_offsets{out.suffix}")
            rows = [[ax, fits[ax][0], fits[ax][1]] for ax in ("x", "y")]
            files.append(write_csv(path, ["axis", "offset_um", "sigma_um"], rows))
    return lines, files
