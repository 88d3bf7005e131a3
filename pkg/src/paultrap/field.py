"""Trap potentials, Mathieu parameters, secular frequencies, RF nodal line.

Asymmetric rod amplitudes use the two-electrode 1/distance model along each
radial axis: the X rods set the field along x and the Y rods along y.  The
amplitude part of the RF potential is

    Phi(x, y) = r0/2 * [V(X-)/(r0+x) + V(X+)/(r0-x) + V(Y-)/(r0+y) + V(Y+)/(r0-y)]

with V the signed rod amplitudes.  For V(X+-) = -U/2, V(Y+-) = +U/2 this is
the ideal quadrupole -U/2 (x^2 - y^2)/r0^2 up to fourth order.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .circuit import ROD_PHASE, RODS
from .core import DomainError, NumericalError

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class MathieuParams:
    a_x: float
    a_y: float
    a_z: float
    q_x: float
    q_y: float
    q_z: float = 0.0

    def a(self, axis):
        return getattr(self, f"a_{axis}")

    def q(self, axis):
        return getattr(self, f"q_{axis}")


@dataclass(frozen=True)
class SecularFrequencies:
    omega_x: float
    omega_y: float
    omega_z: float

    @property
    def omega_r(self):
        return min(self.omega_x, self.omega_y)

    def as_dict(self):
        return {"x": self.omega_x, "y": self.omega_y, "z": self.omega_z}


@dataclass(frozen=True)
class QuadrupoleField:
    rod_amplitudes: dict
    Uend: float
    geometry: object
    static_offsets: dict = field(default_factory=lambda: {r: 0.0 for r in RODS})

    def __post_init__(self):
        if set(self.rod_amplitudes) != set(RODS):
            raise DomainError(f"rod amplitudes must be given for {RODS}")
        if not all(math.isfinite(v) for v in self.rod_amplitudes.values()):
            raise DomainError("rod amplitudes must be finite")

    @classmethod
    def symmetric(cls, Urf, Uend, geometry):
        amps = {r: ROD_PHASE[r] * Urf / 2.0 for r in RODS}
        return cls(rod_amplitudes=amps, Uend=Uend, geometry=geometry)

    @classmethod
    def from_attenuations(cls, Urf, Uend, geometry, attenuations):
        """``attenuations`` maps rod -> factor (missing rods are unity)."""
        amps = {
            r: ROD_PHASE[r] * attenuations.get(r, 1.0) * Urf / 2.0 for r in RODS
        }
        return cls(rod_amplitudes=amps, Uend=Uend, geometry=geometry)

    def is_symmetric(self):
        mags = [abs(v) for v in self.rod_amplitudes.values()]
        return max(mags) == min(mags)


# --- Mathieu parameters and secular frequencies ---------------------------------


def mathieu_params(trap):
    sp, g, dr = trap.species, trap.geometry, trap.drive
    W2 = dr.Omega_rf**2
    a_x = -4.0 * g.eta * sp.Q * dr.Uend_eff / (sp.mass * g.z0**2 * W2)
    q_x = 2.0 * sp.Q * dr.Urf / (sp.mass * g.r0**2 * W2)
    return MathieuParams(a_x=a_x, a_y=a_x, a_z=-2.0 * a_x, q_x=q_x, q_y=-q_x)


def mathieu_params_from_field(qfield, species, Omega_rf, Uoff=0.0):
    """Per-axis a, q of an asymmetric field (q from the curvature of Phi)."""
    g = qfield.geometry
    V = qfield.rod_amplitudes
    W2 = Omega_rf**2
    pref = -2.0 * species.Q / (species.mass * g.r0**2 * W2)
    a_x = -4.0 * g.eta * species.Q * (qfield.Uend - Uoff) / (species.mass * g.z0**2 * W2)
    return MathieuParams(
        a_x=a_x,
        a_y=a_x,
        a_z=-2.0 * a_x,
        q_x=pref * (V["X-"] + V["X+"]),
        q_y=pref * (V["Y-"] + V["Y+"]),
    )


def secular_frequencies(params, Omega_rf):
    """omega_u = sqrt(q_u^2/2 + a_u) * Omega/2 (lowest-order adiabatic)."""
    out = {}
    for axis in AXES:
        rad = params.q(axis) ** 2 / 2.0 + params.a(axis)
        if rad < 0:
            kind = "axially" if axis == "z" else "radially"
            raise DomainError(
                f"{kind} unstable in pseudopotential approximation "
                f"(q^2/2 + a = {rad:.3e} on {axis})"
            )
        out[axis] = math.sqrt(rad) / 2.0 * Omega_rf
    return SecularFrequencies(out["x"], out["y"], out["z"])


def trap_frequencies(trap):
    return secular_frequencies(mathieu_params(trap), trap.drive.Omega_rf)


def drive_from_frequencies(omega_r, omega_z, trap):
    """Invert the secular relations: (Urf, Uend_eff) giving omega_r, omega_z."""
    sp, g, W = trap.species, trap.geometry, trap.drive.Omega_rf
    a_z = (2.0 * omega_z / W) ** 2
    a_x = -a_z / 2.0
    q2 = 2.0 * ((2.0 * omega_r / W) ** 2 - a_x)
    if q2 < 0:
        raise DomainError("requested frequencies need an imaginary q")
    Urf = math.sqrt(q2) * sp.mass * g.r0**2 * W**2 / (2.0 * sp.Q)
    Uend_eff = -a_x * sp.mass * g.z0**2 * W**2 / (4.0 * g.eta * sp.Q)
    return Urf, Uend_eff


# --- potentials -----------------------------------------------------------------


def potential_rf(x, y, t, qfield, Omega_rf):
    """RF potential (V).  Ideal quadrupole when all rods are equal, the
    per-axis 1/distance superposition otherwise."""
    c = np.cos(Omega_rf * t)
    if qfield.is_symmetric():
        Urf = 2.0 * abs(qfield.rod_amplitudes["X+"])
        r0 = qfield.geometry.r0
        return -0.5 * Urf * c * (x**2 - y**2) / r0**2
    return c * rf_amplitude_potential(x, y, qfield)


def potential_end(x, y, z, qfield):
    g = qfield.geometry
    return g.eta * qfield.Uend / g.z0**2 * (z**2 - (x**2 + y**2) / 2.0)


def _axis_terms(qfield):
    V = qfield.rod_amplitudes
    return (V["X-"], V["X+"]), (V["Y-"], V["Y+"])


def rf_amplitude_potential(x, y, qfield):
    r0 = qfield.geometry.r0
    (xm, xp), (ym, yp) = _axis_terms(qfield)
    return 0.5 * r0 * (xm / (r0 + x) + xp / (r0 - x) + ym / (r0 + y) + yp / (r0 - y))


def rf_amplitude_gradient(x, y, qfield):
    r0 = qfield.geometry.r0
    (xm, xp), (ym, yp) = _axis_terms(qfield)
    gx = 0.5 * r0 * (-xm / (r0 + x) ** 2 + xp / (r0 - x) ** 2)
    gy = 0.5 * r0 * (-ym / (r0 + y) ** 2 + yp / (r0 - y) ** 2)
    return gx, gy


def pseudopotential(x, y, qfield):
    """|grad Phi|^2: proportional to the time-averaged pseudopotential (V^2/m^2)."""
    gx, gy = rf_amplitude_gradient(x, y, qfield)
    return gx**2 + gy**2


def _truncated_gradient_model(qfield):
    """grad Phi ~= g + H r from the second-order expansion about the centre."""
    r0 = qfield.geometry.r0
    (xm, xp), (ym, yp) = _axis_terms(qfield)
    g = np.array([(xp - xm) / (2.0 * r0), (yp - ym) / (2.0 * r0)])
    H = np.diag([(xm + xp) / r0**2, (ym + yp) / r0**2])
    return g, H


def nodal_offset_1d(U_A, U_B, r0):
    """Nodal point between electrodes A (at -r0) and B (at +r0).

    Positive result = displacement toward B, the weaker electrode.
    """
    if U_A + U_B == 0:
        raise DomainError("U_A + U_B must be non-zero")
    return (U_A - U_B) / (U_A + U_B) * r0 / 2.0


def nodal_offset_linear(delta, r0):
    """First-order (delta -> 1) expansion of :func:`nodal_offset_1d`."""
    return (1.0 - delta) * r0 / 4.0


def nodal_line_2d(qfield, max_iter=50, rtol=1e-9, validity=0.2):
    """Minimum of |grad Phi|^2 of the truncated model by damped Newton."""
    r0 = qfield.geometry.r0
    g, H = _truncated_gradient_model(qfield)

    def grad(r):
        return g + H @ r

    def psi(r):
        v = grad(r)
        return float(v @ v)

    ref = math.hypot(*(g + H @ np.array([r0 / 10.0, 0.0])))
    ref = max(ref, math.hypot(*(g + H @ np.array([0.0, r0 / 10.0]))))
    r = np.zeros(2)
    for it in range(max_iter):
        v = grad(r)
        if math.hypot(*v) < rtol * ref:
            break
        try:
            step = -np.linalg.solve(H, v)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular curvature at iteration {it}") from exc
        lam = 1.0
        p0 = psi(r)
        while psi(r + lam * step) > p0 and lam > 1e-8:
            lam *= 0.5
        r = r + lam * step
    else:
        raise NumericalError(
            f"Newton did not converge in {max_iter} iterations: "
            f"|grad|={math.hypot(*grad(r)):.3e}, ref={ref:.3e}, r={r}"
        )
    if math.hypot(*r) >= validity * r0:
        raise DomainError(
            f"nodal offset {r} exceeds the Taylor-validity guard {validity}*r0"
        )
    return float(r[0]), float(r[1])


def nodal_line_grid(qfield, half_width, n=400):
    """Brute-force argmin of the full-expression pseudopotential on an n x n grid.

    Returns ``(x, y, cell)`` where ``cell`` is the grid spacing.
    """
    xs = np.linspace(-half_width, half_width, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    P = pseudopotential(X, Y, qfield)
    i, j = np.unravel_index(np.argmin(P), P.shape)
    return float(xs[i]), float(xs[j]), float(xs[1] - xs[0])


def static_field_at_center(qfield):
    """Static field (Ex, Ey) in V/m from the dc rod offsets, same 1/d model."""
    D = qfield.static_offsets
    r0 = qfield.geometry.r0
    Ex = -(D["X+"] - D["X-"]) / (2.0 * r0)
    Ey = -(D["Y+"] - D["Y-"]) / (2.0 * r0)
    return Ex, Ey


# --- stability --------------------------------------------------------------------


def monodromy(a, q, rtol=1e-11, atol=1e-13):
    """Monodromy matrix of u'' + (a - 2q cos 2tau) u = 0 over one period pi."""

    def rhs(tau, y):
        u, v = y[0], y[1]
        k = a - 2.0 * q * np.cos(2.0 * tau)
        return [v, -k * u, y[3], -k * y[2]]

    sol = solve_ivp(rhs, (0.0, math.pi), [1.0, 0.0, 0.0, 1.0],
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericalError(f"monodromy integration failed: {sol.message}")
    u1, v1, u2, v2 = sol.y[:, -1]
    return np.array([[u1, u2], [v1, v2]])


def is_stable(a, q):
    """|trace| <= 2 of the monodromy; the marginal case counts as stable."""
    if not (math.isfinite(a) and math.isfinite(q)):
        raise DomainError("Mathieu parameters must be finite")
    return abs(np.trace(monodromy(a, q))) <= 2.0


def stability_classification(params):
    return {axis: is_stable(params.a(axis), params.q(axis)) for axis in AXES}


def stability_boundary_q(a=0.0, lo=0.5, hi=1.2, tol=1e-7):
    """Bisect for the first-region edge in q at fixed a."""
    if not is_stable(a, lo) or is_stable(a, hi):
        raise DomainError("bracket does not straddle the stability boundary")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_stable(a, mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
