"""Molecular dynamics of laser-cooled ion Coulomb crystals.

Doppler cooling is lumped into friction plus Langevin noise on the cooled
species; other species are cooled sympathetically through the Coulomb
interaction.  Forces are direct O(N^2) sums (see ``_kernels``).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.signal import find_peaks

from . import _kernels
from .coldfluid import alpha_from_freq_ratio, freq_ratio_from_alpha, wigner_seitz_radius
from .core import CONST, DomainError, NumericalError
from .field import (
    QuadrupoleField,
    mathieu_params_from_field,
    nodal_line_2d,
    secular_frequencies,
    stability_classification,
)

MAX_IONS = 4000
MIN_DISTANCE = 10e-9


@dataclass(frozen=True)
class IonEnsembleState:
    positions: np.ndarray  # (N, 3) m
    velocities: np.ndarray  # (N, 3) m/s
    species_index: np.ndarray  # (N,) index into ``species``
    species: tuple  # of IonSpecies
    time: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        n = len(self.positions)
        if n < 1:
            raise DomainError("ensemble needs at least one ion")
        if n > MAX_IONS:
            raise DomainError(f"N={n} exceeds the cap of {MAX_IONS}")
        if self.velocities.shape != (n, 3) or self.positions.shape != (n, 3):
            raise ValueError("positions and velocities must be (N, 3)")

    @property
    def N(self):
        return len(self.positions)

    @property
    def masses(self):
        return np.array([self.species[i].mass for i in self.species_index])

    @property
    def charges(self):
        return np.array([self.species[i].Q for i in self.species_index])

    def labels(self):
        return [self.species[i].label for i in self.species_index]

    def select(self, label):
        return np.array([self.species[i].label == label for i in self.species_index])

    def kinetic_temperature(self, mask=None):
        m = self.masses
        v2 = np.sum(self.velocities**2, axis=1)
        if mask is not None:
            m, v2 = m[mask], v2[mask]
        return float(np.mean(m * v2) / (3.0 * CONST.kB))


@dataclass(frozen=True)
class CoolingModel:
    gamma: float
    T_target: float
    cooled_species: frozenset = field(default_factory=lambda: frozenset({"Ca-40"}))

    def __post_init__(self):
        if self.gamma < 0 or self.T_target < 0:
            raise DomainError("gamma and T_target must be >= 0")


@dataclass(frozen=True)
class CrystalObservables:
    R: float
    L: float
    alpha: float
    density: float
    intershell_spacing: float | None
    shell_count: int
    shell_radii: tuple = ()


@dataclass(frozen=True)
class SimulationReport:
    steps: int
    rejected_steps: int
    min_distance: float


# --- setup --------------------------------------------------------------------------


def _field_for(trap, qfield):
    if qfield is None:
        return QuadrupoleField.symmetric(trap.drive.Urf, trap.drive.Uend, trap.geometry)
    return qfield


def species_frequencies(trap, species, qfield=None):
    """Pseudopotential secular frequencies of ``species`` (rad/s)."""
    qf = _field_for(trap, qfield)
    p = mathieu_params_from_field(qf, species, trap.drive.Omega_rf, trap.drive.Uoff)
    return secular_frequencies(p, trap.drive.Omega_rf)


def pack_trap_params(trap, ensemble, mode, qfield=None, static_field=(0.0, 0.0)):
    """Per-ion trap-force coefficients for the numba kernels.

    Rows 0..N-1: [krf_x, krf_y, kdc_r, kdc_z, Q, Q*Es_x, Q*Es_y];
    row N: [x_nodal, y_nodal, Omega, full_rf].
    """
    qf = _field_for(trap, qfield)
    g, dr = trap.geometry, trap.drive
    W = dr.Omega_rf
    xn, yn = (0.0, 0.0) if qf.is_symmetric() else nodal_line_2d(qf)
    V = qf.rod_amplitudes
    curv_x = (V["X-"] + V["X+"]) / g.r0**2
    curv_y = (V["Y-"] + V["Y+"]) / g.r0**2
    tp = np.zeros((ensemble.N + 1, 7))
    for k, sp in enumerate(ensemble.species):
        idx = ensemble.species_index == k
        p = mathieu_params_from_field(qf, sp, W, dr.Uoff)
        if not all(stability_classification(p).values()):
            raise DomainError(f"unstable trap for {sp.label}: {p}")
        if mode == "full_rf":
            krf_x, krf_y = sp.Q * curv_x, sp.Q * curv_y
        elif mode == "pseudopotential":
            krf_x = sp.mass * (p.q_x * W) ** 2 / 8.0
            krf_y = sp.mass * (p.q_y * W) ** 2 / 8.0
        else:
            raise ValueError(f"unknown mode {mode!r}")
        kdc_r = sp.Q * g.eta * (qf.Uend - dr.Uoff) / g.z0**2
        tp[:-1][idx] = [krf_x, krf_y, kdc_r, 2.0 * kdc_r, sp.Q,
                        sp.Q * static_field[0], sp.Q * static_field[1]]
    tp[-1, :4] = [xn, yn, W, 1.0 if mode == "full_rf" else 0.0]
    return tp


def default_dt(trap, ensemble, mode, qfield=None):
    """Time step: 50 per RF period (full_rf) or 1/100 of the fastest
    pseudopotential / plasma period."""
    W = trap.drive.Omega_rf
    if mode == "full_rf":
        return 2.0 * math.pi / W / 50.0
    w_max = 0.0
    for sp in ensemble.species:
        f = species_frequencies(trap, sp, qfield)
        # plasma frequency of the trapped plasma is sqrt(2) * rf pseudo-frequency
        w_rf = math.sqrt(max(f.omega_x**2, f.omega_y**2) + f.omega_z**2 / 2.0)
        w_max = max(w_max, f.omega_x, f.omega_y, f.omega_z, math.sqrt(2.0) * w_rf)
    return 2.0 * math.pi / w_max / 100.0


def cold_fluid_shape(trap, N, species=None, qfield=None):
    """(R, L) of the zero-temperature uniform spheroid holding N ions."""
    sp = species or trap.species
    f = species_frequencies(trap, sp, qfield)
    wr = min(f.omega_x, f.omega_y)
    alpha = alpha_from_freq_ratio(f.omega_z / wr)
    g, dr = trap.geometry, trap.drive
    U = 2.0 * max(abs(v) for v in _field_for(trap, qfield).rod_amplitudes.values())
    rho = CONST.epsilon0 * U**2 / (sp.mass * g.r0**4 * dr.Omega_rf**2)
    L = (3.0 * N / (4.0 * math.pi * rho * alpha**2)) ** (1.0 / 3.0)
    return alpha * L, L


def initial_ensemble(trap, counts, seed=0, T0=0.0, species=None, qfield=None):
    """Ions placed uniformly at random in the cold-fluid spheroid.

    ``counts`` is an int (single species = ``trap.species``) or a dict
    label -> count; ``species`` maps label -> IonSpecies for the latter.
    """
    rng = np.random.default_rng(seed)
    if isinstance(counts, int):
        counts = {trap.species.label: counts}
        species = {trap.species.label: trap.species}
    splist = tuple(species[label] for label in counts)
    N = sum(counts.values())
    R, L = cold_fluid_shape(trap, N, splist[0], qfield)
    pts = []
    while len(pts) < N:
        u = rng.uniform(-1.0, 1.0, size=(2 * N, 3))
        inside = np.sum(u**2, axis=1) <= 1.0
        pts.extend(u[inside])
    pos = np.array(pts[:N]) * np.array([R, R, L])
    idx = np.concatenate([np.full(c, k) for k, c in enumerate(counts.values())])
    idx = rng.permutation(idx)
    masses = np.array([splist[k].mass for k in idx])
    vel = rng.standard_normal((N, 3)) * np.sqrt(CONST.kB * T0 / masses)[:, None]
    return IonEnsembleState(pos, vel, idx.astype(np.int64), splist, 0.0, int(seed))


# --- integration ---------------------------------------------------------------------


def simulate(trap, ensemble, cooling, mode="pseudopotential", duration=None, dt=None,
             steps=None, qfield=None, static_field=(0.0, 0.0), chunk=200,
             return_report=False, callback=None, callback_every=None):
    """Integrate the ensemble with BAOAB Langevin splitting.

    With ``gamma = 0`` the scheme is velocity Verlet.  The result is fully
    determined by ``ensemble.rng_seed``; the returned state carries a fresh
    seed drawn from the same stream so runs can be chained reproducibly.
    """
    if dt is None:
        dt = default_dt(trap, ensemble, mode, qfield)
    if steps is None:
        if duration is None:
            raise ValueError("give duration or steps")
        steps = int(round(duration / dt))

    tp = pack_trap_params(trap, ensemble, mode, qfield, static_field)
    pos = np.ascontiguousarray(ensemble.positions, dtype=float).copy()
    vel = np.ascontiguousarray(ensemble.velocities, dtype=float).copy()
    charge = ensemble.charges
    masses = ensemble.masses
    inv_mass = 1.0 / masses
    cooled = np.array([ensemble.species[i].label in cooling.cooled_species
                       for i in ensemble.species_index])
    rng = np.random.default_rng(ensemble.rng_seed)

    def coefficients(h):
        c1 = np.where(cooled, math.exp(-cooling.gamma * h), 1.0)
        c2 = np.sqrt((1.0 - c1**2) * CONST.kB * cooling.T_target * inv_mass)
        return c1, c2

    c1, c2 = coefficients(dt)
    t = ensemble.time
    F, dmin_all = _kernels.total_forces(pos, t, charge, tp)
    done = 0
    rejected = 0
    N = ensemble.N
    next_cb = callback_every
    while done < steps:
        n = min(chunk, steps - done)
        if callback_every:
            n = min(n, next_cb - done)
        noise = rng.standard_normal((n, N, 3))
        k, t, dmin = _kernels.baoab_run(pos, vel, F, t, dt, n, inv_mass, c1, c2,
                                        noise, charge, tp, MIN_DISTANCE)
        dmin_all = min(dmin_all, dmin)
        done += k
        if k < n:
            rejected += 1
            t = _substep(pos, vel, F, t, dt, inv_mass, coefficients, rng, charge, tp)
            done += 1
        if callback_every and done >= next_cb:
            callback(done, replace(ensemble, positions=pos.copy(), velocities=vel.copy(), time=t))
            next_cb += callback_every
    out = replace(ensemble, positions=pos, velocities=vel, time=t,
                  rng_seed=int(rng.integers(2**63 - 1)))
    if return_report:
        return out, SimulationReport(steps=done, rejected_steps=rejected, min_distance=dmin_all)
    return out


def _substep(pos, vel, F, t, dt, inv_mass, coefficients, rng, charge, tp, depth=0):
    """Replace one rejected step by two half steps (recursively)."""
    if depth > 20:
        raise NumericalError("ion pair closer than the 10 nm guard even at dt/2^20")
    h = dt / 2.0
    c1, c2 = coefficients(h)
    for _ in range(2):
        noise = rng.standard_normal((1, len(pos), 3))
        k, t, _d = _kernels.baoab_run(pos, vel, F, t, h, 1, inv_mass, c1, c2,
                                      noise, charge, tp, MIN_DISTANCE)
        if k == 0:
            t = _substep(pos, vel, F, t, h, inv_mass, coefficients, rng, charge, tp, depth + 1)
    return t


def anneal(trap, ensemble, cooling, schedule, mode="pseudopotential", qfield=None,
           static_field=(0.0, 0.0), dt=None):
    """Run ``simulate`` through a list of ``(gamma, T_target, steps)`` stages;
    the last stage uses ``cooling`` as given."""
    state = ensemble
    for gamma, T, steps in schedule:
        stage = replace(cooling, gamma=gamma, T_target=T)
        state = simulate(trap, state, stage, mode=mode, steps=steps, qfield=qfield,
                         static_field=static_field, dt=dt)
    return state


def uend_for_ratio(trap, ratio, lo=1e-3, hi=None):
    """End voltage giving omega_z / omega_r = ``ratio`` at the trap's U_rf."""
    def f(Ue):
        fr = species_frequencies(trap.with_drive(Uend=Ue), trap.species)
        return fr.omega_z / min(fr.omega_x, fr.omega_y) - ratio

    if hi is None:
        # largest end voltage still radially confining, less a margin
        g = trap.geometry
        p_q = trap.species.Q * trap.drive.Urf / (trap.species.mass * g.r0**2)
        hi = trap.drive.Uoff + 0.99 * (p_q / trap.drive.Omega_rf) ** 2 * trap.species.mass \
            * g.z0**2 / (trap.species.Q * g.eta) / 2.0
    return brentq(f, lo, hi, xtol=1e-12)


def uend_for_aspect_ratio(trap, alpha):
    return uend_for_ratio(trap, freq_ratio_from_alpha(alpha))


def grow_crystal(trap, counts, seed=0, T_final=5e-4, stage_steps=(4000, 4000, 4000),
                 species=None, mode="pseudopotential", dt=None):
    """Random spheroid -> crystal with a three-stage friction/temperature ramp.

    Friction rates are fractions (0.1, 0.05, 0.02) of the radial frequency of
    the first species; bath temperatures step 10 mK -> 2 mK -> ``T_final``.
    """
    ens = initial_ensemble(trap, counts, seed=seed, T0=0.01, species=species)
    f = species_frequencies(trap, ens.species[0])
    wr = min(f.omega_x, f.omega_y)
    temps = (0.01, max(2e-3, T_final), T_final)
    schedule = [(g * wr, T, n) for g, T, n in zip((0.1, 0.05, 0.02), temps, stage_steps)]
    last = CoolingModel(gamma=schedule[-1][0], T_target=T_final)
    return anneal(trap, ens, last, schedule, mode=mode, dt=dt)


# --- observables -----------------------------------------------------------------


def _centered(ensemble, mask=None):
    p = ensemble.positions if mask is None else ensemble.positions[mask]
    return p - ensemble.positions.mean(axis=0)


def radial_histogram(ensemble, bin_width, species_filter=None, z_fraction=0.5):
    """Cylindrical-radius histogram of the central ``z_fraction`` of the crystal."""
    mask = None if species_filter is None else ensemble.select(species_filter)
    p = _centered(ensemble, mask)
    L = np.max(np.abs(_centered(ensemble)[:, 2]))
    sel = np.abs(p[:, 2]) <= z_fraction * L
    r = np.hypot(p[sel, 0], p[sel, 1])
    rmax = np.max(np.hypot(p[:, 0], p[:, 1])) if len(p) else 0.0
    nb = max(1, int(math.ceil((rmax + bin_width) / bin_width)))
    counts, edges = np.histogram(r, bins=nb, range=(0.0, nb * bin_width))
    return edges, counts, r


def find_shells(r, edges, counts, a_ws):
    """Shell radii from peaks of the radial histogram, refined by the mean
    radius of the ions within +-0.35 a_ws of each peak.

    Peaks closer than a_ws are not separated (expected spacing ~1.5 a_ws),
    and refined radii that land within 0.7 a_ws of each other are merged:
    the outer shell follows the curved spheroid surface and can smear
    across several bins.
    """
    centres = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    padded = np.concatenate([[0], counts, [0]])
    peaks, _ = find_peaks(padded, distance=max(1, int(round(a_ws / width))),
                          prominence=max(2.0, 0.15 * counts.max()))
    radii = []
    for p in peaks - 1:
        near = r[np.abs(r - centres[p]) < 0.35 * a_ws]
        if len(near) == 0:
            continue
        rk = float(near.mean())
        if radii and rk - radii[-1][0] < 0.7 * a_ws:
            prev, n = radii[-1]
            radii[-1] = ((prev * n + rk * len(near)) / (n + len(near)), n + len(near))
        else:
            radii.append((rk, len(near)))
    return [rk for rk, _ in radii]


def observables(ensemble, species_filter=None, max_temperature=0.05, robust=False,
                check=True):
    """Outer radius, half length, aspect ratio, density and shell spacing.

    ``robust`` takes the 95th percentile radius / half length instead of the
    maximum.  The intershell spacing is None (and ``shell_count`` < 3) when
    fewer than three shells are resolved.
    """
    if check and ensemble.kinetic_temperature() > max_temperature:
        raise DomainError(
            f"ensemble not crystallized: T = {ensemble.kinetic_temperature():.3g} K "
            f"> {max_temperature} K"
        )
    mask = None if species_filter is None else ensemble.select(species_filter)
    p = _centered(ensemble, mask)
    rc = np.hypot(p[:, 0], p[:, 1])
    az = np.abs(p[:, 2])
    if robust:
        R, L = np.percentile(rc, 95), np.percentile(az, 95)
    else:
        R, L = rc.max(), az.max()
    n = len(p)
    density = n / (4.0 * math.pi * R**2 * L / 3.0) if R > 0 and L > 0 else math.inf
    spacing, radii = None, ()
    if np.isfinite(density) and n >= 3:
        a_ws = wigner_seitz_radius(density)
        edges, counts, r = radial_histogram(ensemble, a_ws / 10.0, species_filter)
        radii = tuple(find_shells(r, edges, counts, a_ws))
        if len(radii) >= 3:
            spacing = float(np.mean(np.diff(radii)))
    return CrystalObservables(
        R=float(R), L=float(L), alpha=float(R / L) if L > 0 else math.inf,
        density=float(density), intershell_spacing=spacing,
        shell_count=len(radii), shell_radii=radii,
    )


def asymmetry_metric(ensemble, heavy=None, light=None):
    """(<x>_heavy - <x>_light) / R with R the outer crystal radius."""
    if len(set(ensemble.species_index.tolist())) < 2:
        raise ValueError("two species are required")
    order = sorted(range(len(ensemble.species)), key=lambda k: ensemble.species[k].mass)
    light = light or ensemble.species[order[0]].label
    heavy = heavy or ensemble.species[order[-1]].label
    p = ensemble.positions - ensemble.positions.mean(axis=0)
    R = np.max(np.hypot(p[:, 0], p[:, 1]))
    xh = p[ensemble.select(heavy), 0].mean()
    xl = p[ensemble.select(light), 0].mean()
    return float((xh - xl) / R)


def species_mean_radius(ensemble, label):
    p = ensemble.positions - ensemble.positions.mean(axis=0)
    m = ensemble.select(label)
    return float(np.mean(np.hypot(p[m, 0], p[m, 1])))


def two_species_symmetry(trap, ensemble, cooling, static_offset, steps, samples=10,
                         sample_every=200, mode="pseudopotential", dt=None):
    """Apply ``static_offset`` (V) and return the asymmetry metric averaged
    over ``samples`` snapshots, plus the final state.

    The offset is split antisymmetrically, +U/2 on X+ and -U/2 on X-, giving
    a uniform field -U/(2 r0) along x at the trap centre.
    """
    if len(set(ensemble.species_index.tolist())) < 2:
        raise ValueError("two species are required")
    Ex = -static_offset / (2.0 * trap.geometry.r0)
    state = simulate(trap, ensemble, cooling, mode=mode, steps=steps,
                     static_field=(Ex, 0.0), dt=dt)
    values = []
    for _ in range(samples):
        state = simulate(trap, state, cooling, mode=mode, steps=sample_every,
                         static_field=(Ex, 0.0), dt=dt)
        values.append(asymmetry_metric(state))
    return float(np.mean(values)), state
