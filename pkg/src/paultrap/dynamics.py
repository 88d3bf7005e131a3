"""Single-ion trajectories in the full time-dependent trap field."""

import math
from dataclasses import dataclass

import numpy as np

from .circuit import ElectrodeLoad, phase_error, resonance_ratio, solve_balanced_loads
from .core import CONST, DomainError
from .field import AXES, mathieu_params, secular_frequencies, stability_classification


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray  # (n, 3)
    velocities: np.ndarray  # (n, 3)

    def __post_init__(self):
        n = len(self.times)
        if self.positions.shape != (n, 3) or self.velocities.shape != (n, 3):
            raise ValueError("times, positions and velocities must have equal length")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")


@dataclass(frozen=True)
class MicromotionReport:
    amplitude: np.ndarray  # per axis, m
    equivalent_temperature: float  # K
    axis_temperatures: np.ndarray  # per axis, K
    secular_amplitude: float  # m


def _force_constants(trap):
    """Per-axis (static k_dc, rf k_rf) such that F_u = -(k_dc - k_rf cos(W t)) u / M."""
    sp, g, dr = trap.species, trap.geometry, trap.drive
    k_end = g.eta * sp.Q * dr.Uend_eff / g.z0**2
    k_rf = sp.Q * dr.Urf / g.r0**2
    kdc = np.array([-k_end, -k_end, 2.0 * k_end])
    krf = np.array([k_rf, -k_rf, 0.0])
    return kdc / sp.mass, krf / sp.mass


def equation_of_motion(trap, u_dc=(0.0, 0.0, 0.0)):
    """Return ``accel(t, x)`` for the full quadrupole plus a uniform static
    force placing the pseudopotential equilibrium at ``u_dc``."""
    kdc, krf = _force_constants(trap)
    W = trap.drive.Omega_rf
    omegas = secular_frequencies(mathieu_params(trap), W).as_dict()
    w2 = np.array([omegas[a] ** 2 for a in AXES])
    push = w2 * np.asarray(u_dc, dtype=float)

    def accel(t, x):
        return -(kdc - krf * math.cos(W * t)) * x + push

    return accel


def _rk4(accel, x, v, h, n):
    times = np.arange(n + 1) * h
    X = np.empty((n + 1, 3))
    V = np.empty((n + 1, 3))
    X[0], V[0] = x, v
    for i in range(n):
        t = times[i]
        k1x, k1v = v, accel(t, x)
        k2x, k2v = v + 0.5 * h * k1v, accel(t + 0.5 * h, x + 0.5 * h * k1x)
        k3x, k3v = v + 0.5 * h * k2v, accel(t + 0.5 * h, x + 0.5 * h * k2x)
        k4x, k4v = v + h * k3v, accel(t + h, x + h * k3x)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        X[i + 1], V[i + 1] = x, v
    return Trajectory(times, X, V)


def integrate_single_ion(trap, u_dc=(0.0, 0.0, 0.0), initial=None, duration=None,
                         dt=None, periods=None, steps_per_period=50):
    """Classical RK4 with a fixed step (default 50 steps per RF period).

    ``initial`` is ``(position, velocity)``.  The default starts on the
    adiabatic solution with no secular motion, u(0) = u_dc (1 - q/2) at rest.
    Either ``duration`` (s) or ``periods`` (RF periods) must be given.
    """
    W = trap.drive.Omega_rf
    T_rf = 2.0 * math.pi / W
    params = mathieu_params(trap)
    stable = stability_classification(params)
    if not all(stable.values()):
        raise DomainError(f"unstable trap parameters: {stable}, {params}")
    if dt is None:
        dt = T_rf / steps_per_period
    if dt > T_rf / 50.0 * (1 + 1e-12):
        raise DomainError("dt must resolve the RF period with >= 50 steps")
    if duration is None:
        if periods is None:
            raise ValueError("give duration or periods")
        duration = periods * T_rf
    n = int(round(duration / dt))

    if initial is None:
        q = np.array([params.q(a) for a in AXES])
        x = np.asarray(u_dc, dtype=float) * (1.0 - q / 2.0)
        v = np.zeros(3)
    else:
        x = np.asarray(initial[0], dtype=float).copy()
        v = np.asarray(initial[1], dtype=float).copy()

    accel = equation_of_motion(trap, u_dc)
    return _rk4(accel, x, v, dt, n)


def adiabatic_solution(trap, u0, times, u_dc=0.0, axis="x"):
    """u(t) = (u_dc + u0 cos(w t)) (1 - q/2 cos(W t))."""
    p = mathieu_params(trap)
    W = trap.drive.Omega_rf
    w = secular_frequencies(p, W).as_dict()[axis]
    q = p.q(axis)
    return (u_dc + u0 * np.cos(w * times)) * (1.0 - q / 2.0 * np.cos(W * times))


def excess_micromotion_amplitude(q, u_dc):
    if abs(q) >= 1:
        raise DomainError("|q| must be < 1")
    return abs(q) / 2.0 * abs(u_dc)


def _demodulate(signal, times, omega):
    """Complex amplitude A such that signal ~ Re(A e^{i omega t}), using the
    longest span of whole periods."""
    dt = (times[-1] - times[0]) / (len(times) - 1)
    per = 2.0 * math.pi / omega / dt
    # tolerance keeps a time-shifted copy from losing a period to rounding
    n_periods = int((len(times) - 1) / per + 1e-6)
    n = int(round(n_periods * per))
    s = signal[:n]
    # phase referenced to absolute time so shifting the window only rotates A
    ph = np.exp(-1j * omega * times[:n])
    return 2.0 * np.mean(s * ph[:, None], axis=0) if s.ndim == 2 else 2.0 * np.mean(s * ph)


def micromotion_report(traj, trap):
    W = trap.drive.Omega_rf
    T_rf = 2.0 * math.pi / W
    span = traj.times[-1] - traj.times[0]
    if span < 20 * T_rf * (1 - 1e-9):
        raise ValueError("trajectory must cover at least 20 RF periods")
    A = _demodulate(traj.positions, traj.times, W)
    Vd = _demodulate(traj.velocities, traj.times, W)
    amp = np.abs(A)
    # <v_mm^2> = |V|^2 / 2 per axis; 1/2 kB T = 1/2 M <v_mm^2>
    axis_T = trap.species.mass * np.abs(Vd) ** 2 / 2.0 / CONST.kB
    # one-RF-period moving average removes the micromotion
    per = max(1, int(round(T_rf / (traj.times[1] - traj.times[0]))))
    kernel = np.ones(per) / per
    slow = np.column_stack([np.convolve(traj.positions[:, k], kernel, mode="valid")
                            for k in range(3)])
    sec = slow - np.mean(slow, axis=0)
    secular_amplitude = float(np.max(np.linalg.norm(sec, axis=1)))
    return MicromotionReport(
        amplitude=amp,
        equivalent_temperature=float(np.sum(axis_T)),
        axis_temperatures=axis_T,
        secular_amplitude=secular_amplitude,
    )


def phase_error_micromotion(trap, delta_phi):
    """Micromotion driven by an RF phase error ``delta_phi`` on one rod pair.

    In the two-electrode model a phase lag on one rod leaves a quadrature
    field of amplitude ~ (Urf/2) sin(dphi) / (2 r0) at the nodal point; the
    ion follows it with amplitude Q E / (M W^2).  Returns ``(E_quad,
    amplitude, equivalent_temperature)``.
    """
    sp, g, W = trap.species, trap.geometry, trap.drive.Omega_rf
    E = trap.drive.Urf / 2.0 * math.sin(abs(delta_phi)) / (2.0 * g.r0)
    amp = sp.Q * E / (sp.mass * W**2)
    v = amp * W
    T = sp.mass * v**2 / 2.0 / CONST.kB
    return E, amp, T


def integrate_with_quadrature_field(trap, E_quad, periods=200, steps_per_period=50):
    """Trajectory of an ion driven by an extra field E_quad sin(W t) along x."""
    base = equation_of_motion(trap)
    W = trap.drive.Omega_rf
    f = trap.species.Q * E_quad / trap.species.mass

    def accel(t, x):
        a = base(t, x)
        a[0] += f * math.sin(W * t)
        return a

    T_rf = 2.0 * math.pi / W
    dt = T_rf / steps_per_period
    n = int(periods * steps_per_period)
    x = np.zeros(3)
    v = np.zeros(3)
    # start on the forced solution to avoid exciting secular motion
    v[0] = -f / W
    return _rk4(accel, x, v, dt, n)


def balanced_load_scenario(trap, circuit, target_attenuation=0.96, rod="X+"):
    """Micromotion budget of a rod loaded with the balanced (Cp, Cs) pair.

    The residual resonance shift of the loaded rod feeds the circuit phase
    model, and the phase error is converted to a driven-micromotion
    temperature with :func:`phase_error_micromotion`.
    """
    Ct = circuit.rods[rod].Ct
    Cp, Cs = solve_balanced_loads(Ct, target_attenuation)
    load = ElectrodeLoad(C=circuit.rods[rod].C, Ct=Ct, Cp=Cp, Cs=Cs)
    shift = resonance_ratio(load) - 1.0
    dphi = phase_error(circuit, shift)
    E, amp, T = phase_error_micromotion(trap, dphi)
    return {
        "Cp": Cp,
        "Cs": Cs,
        "resonance_shift": shift,
        "phase_error": dphi,
        "micromotion_amplitude": amp,
        "temperature": T,
    }
