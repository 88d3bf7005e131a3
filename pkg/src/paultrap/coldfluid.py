"""Zero-temperature charged-liquid model and the regressions built on it.

Includes the aspect-ratio <-> trap-frequency-ratio relation, the beta/U_off
parameterisation of the frequency ratio, density and Wigner-Seitz radius,
intershell spacing, and generic fitters (linear, 1/x, 1/sqrt(a+bx), Gaussian).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .core import CONST, DomainError, NumericalError, beta_from_eta


class FitError(NumericalError):
    pass


@dataclass(frozen=True)
class ColdFluidParams:
    beta: float
    Uoff: float = 0.0
    delta0: float = 1.48

    def __post_init__(self):
        if not self.beta < 0:
            raise DomainError("beta must be negative")
        if not self.delta0 > 0:
            raise DomainError("delta0 must be positive")


@dataclass(frozen=True)
class FitResult:
    params: dict
    covariance: np.ndarray
    residual_rms: float
    n_points: int
    model: str = ""

    @property
    def errors(self):
        err = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(self.params, err))

    def __getitem__(self, name):
        return self.params[name]


# --- aspect ratio <-> frequency ratio ---------------------------------------------

# ratio^2 = sum c_k (alpha - 1)^k near alpha = 1
_SERIES = (1.0, 6 / 5, 9 / 175, -32 / 875, 8872 / 336875, -420528 / 21896875,
           32602424 / 2299171875)
_SERIES_RADIUS = 1e-3


def freq_ratio_from_alpha(alpha):
    """omega_z / omega_r of a uniform spheroid with aspect ratio R/L = alpha."""
    if not alpha > 0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    eps = alpha - 1.0
    if abs(eps) < _SERIES_RADIUS:
        r2 = sum(c * eps**k for k, c in enumerate(_SERIES))
    elif alpha < 1.0:
        s = math.sqrt(alpha**-2 - 1.0)
        h = math.asinh(s)
        r2 = -2.0 * (h - alpha * s) / (h - s / alpha)
    else:
        s = math.sqrt(1.0 - alpha**-2)
        h = math.asin(s)
        r2 = -2.0 * (h - alpha * s) / (h - s / alpha)
    return math.sqrt(r2)


ALPHA_RANGE = (1e-6, 1e6)


def alpha_from_freq_ratio(ratio, tol=1e-14):
    """Invert :func:`freq_ratio_from_alpha` by bisection in log(alpha)."""
    if not ratio > 0:
        raise DomainError(f"frequency ratio must be > 0, got {ratio}")
    lo, hi = math.log(ALPHA_RANGE[0]), math.log(ALPHA_RANGE[1])
    if not freq_ratio_from_alpha(math.exp(lo)) <= ratio <= freq_ratio_from_alpha(math.exp(hi)):
        raise DomainError(f"ratio {ratio} outside the achievable range")
    if ratio == 1.0:
        return 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if freq_ratio_from_alpha(math.exp(mid)) < ratio:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return math.exp(0.5 * (lo + hi))


def freq_ratio_from_voltages(Urf, Uend, params):
    """omega_z/omega_r = sqrt(-(Uend - Uoff) / (beta (Urf/2)^2 + (Uend - Uoff)/2))."""
    dU = Uend - params.Uoff
    den = params.beta * (Urf / 2.0) ** 2 + 0.5 * dU
    if den == 0:
        raise DomainError("frequency-ratio denominator vanishes")
    rad = -dU / den
    if rad < 0:
        raise DomainError("radially deconfined: negative radicand")
    return math.sqrt(rad)


def params_from_trap(trap, delta0=1.48):
    beta = beta_from_eta(trap.geometry.eta, trap.species, trap.geometry, trap.drive)
    return ColdFluidParams(beta=beta, Uoff=trap.drive.Uoff, delta0=delta0)


# --- density and shells ------------------------------------------------------------


def density(Urf, trap):
    """rho0 = eps0 Urf^2 / (M r0^4 Omega^2), ions per m^3."""
    g, sp = trap.geometry, trap.species
    return CONST.epsilon0 * Urf**2 / (sp.mass * g.r0**4 * trap.drive.Omega_rf**2)


def density_from_beta(Urf, beta, trap):
    """Same density written through beta: eps0 eta |beta| Urf^2 / (Q z0^2)."""
    g = trap.geometry
    return CONST.epsilon0 * g.eta * abs(beta) * Urf**2 / (trap.species.Q * g.z0**2)


def wigner_seitz_radius(rho):
    return (3.0 / (4.0 * math.pi * rho)) ** (1.0 / 3.0)


def shell_constant(trap, beta=None):
    """K in delta_r = delta0 * K * Urf^(-2/3)."""
    g = trap.geometry
    if beta is None:
        beta = beta_from_eta(g.eta, trap.species, g, trap.drive)
    return (3.0 * trap.species.Q * g.z0**2
            / (4.0 * math.pi * CONST.epsilon0 * g.eta * abs(beta))) ** (1.0 / 3.0)


def intershell_spacing_model(Urf, trap, delta0=1.48, beta=None):
    if not Urf > 0:
        raise DomainError("Urf must be > 0")
    return delta0 * shell_constant(trap, beta) * Urf ** (-2.0 / 3.0)


# --- fitting helpers ----------------------------------------------------------------


def _as_columns(data, ncol):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < ncol:
        raise ValueError(f"data must have at least {ncol} columns")
    return arr


def _linear_lsq(A, y, sigma, names, model):
    n, p = A.shape
    if n <= p:
        raise FitError(f"need more than {p} points, got {n}")
    w = np.ones(n) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    Aw, yw = A * w[:, None], y * w
    coef, _, rank, _ = np.linalg.lstsq(Aw, yw, rcond=None)
    if rank < p:
        raise FitError("degenerate data: design matrix is rank deficient")
    resid = y - A @ coef
    cov = _covariance(Aw, yw - Aw @ coef, sigma is not None)
    return FitResult(dict(zip(names, coef)), cov, float(np.sqrt(np.mean(resid**2))), n, model)


def _covariance(J, resid_w, absolute_sigma):
    n, p = J.shape
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Jacobian") from exc
    if not absolute_sigma:
        cov = cov * float(resid_w @ resid_w) / (n - p)
    return 0.5 * (cov + cov.T)


def _nonlinear(fun, jac, x0, names, model, n, y, sigma=None, max_iter=200, **kw):
    p = len(x0)
    if n <= p:
        raise FitError(f"need more than {p} points, got {n}")
    w = np.ones(n) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)

    def res(x):
        return (fun(x) - y) * w

    def jw(x):
        return jac(x) * w[:, None]

    sol = least_squares(res, x0, jac=jw, method="lm", max_nfev=max_iter * (p + 1),
                        xtol=1e-14, ftol=1e-14, gtol=1e-14, **kw)
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise FitError(f"{model} fit did not converge: {sol.message}")
    J = sol.jac
    if np.linalg.matrix_rank(J) < p:
        raise FitError(f"{model} fit: singular Jacobian at {sol.x}")
    cov = _covariance(J, sol.fun, sigma is not None)
    resid = fun(sol.x) - y
    return FitResult(dict(zip(names, sol.x)), cov, float(np.sqrt(np.mean(resid**2))), n, model)


# --- generic fits --------------------------------------------------------------------


def fit_linear(data, sigma=None):
    """y = slope * x + intercept."""
    arr = _as_columns(data, 2)
    x, y = arr[:, 0], arr[:, 1]
    A = np.column_stack([x, np.ones_like(x)])
    return _linear_lsq(A, y, sigma, ("slope", "intercept"), "linear")


def fit_inverse(data, sigma=None):
    """y = c / x."""
    arr = _as_columns(data, 2)
    x, y = arr[:, 0], arr[:, 1]
    return _linear_lsq((1.0 / x)[:, None], y, sigma, ("c",), "inverse")


def fit_inverse_sqrt(data, sigma=None):
    """y = 1 / sqrt(a + b x); started from the linear fit of 1/y^2."""
    arr = _as_columns(data, 2)
    x, y = arr[:, 0], arr[:, 1]
    start = np.linalg.lstsq(np.column_stack([np.ones_like(x), x]), 1.0 / y**2, rcond=None)[0]
    # scale parameters to O(1) so LM damping is well conditioned
    sa = abs(start[0]) or 1.0
    sb = abs(start[1]) or sa / max(np.ptp(x), 1e-300)

    def f(p):
        return 1.0 / np.sqrt(sa * p[0] + sb * p[1] * x)

    def jac(p):
        d = (sa * p[0] + sb * p[1] * x) ** -1.5
        return np.column_stack([-0.5 * sa * d, -0.5 * sb * x * d])

    r = _nonlinear(f, jac, np.array([start[0] / sa, start[1] / sb]), ("a", "b"),
                   "inverse_sqrt", len(x), y, sigma)
    S = np.diag([sa, sb])
    return FitResult({"a": r.params["a"] * sa, "b": r.params["b"] * sb},
                     S @ r.covariance @ S, r.residual_rms, r.n_points, r.model)


def gaussian(x, A, x0, w, B):
    """A exp(-2 (x - x0)^2 / w^2) + B (1/e^2 waist convention)."""
    return A * np.exp(-2.0 * (x - x0) ** 2 / w**2) + B


def fit_gaussian(data, sigma=None, p0=None):
    """Levenberg-Marquardt fit of :func:`gaussian`; parameters A, x0, w, B."""
    arr = _as_columns(data, 2)
    x, y = arr[:, 0], arr[:, 1]
    if p0 is None:
        B0 = float(np.min(y))
        i = int(np.argmax(y))
        A0 = float(y[i] - B0)
        half = y - B0 > A0 * math.exp(-2.0)
        w0 = 0.5 * float(np.ptp(x[half])) if half.sum() > 1 else float(np.ptp(x)) / 4
        p0 = (A0, float(x[i]), max(w0, float(np.ptp(x)) / len(x)), B0)
    xs = float(np.ptp(x)) or 1.0
    ys = float(np.ptp(y)) or 1.0
    scale = np.array([ys, xs, xs, ys])

    def f(p):
        A, x0, w, B = p * scale
        return gaussian(x, A, x0, w, B)

    def jac(p):
        A, x0, w, B = p * scale
        E = np.exp(-2.0 * (x - x0) ** 2 / w**2)
        J = np.column_stack([
            E,
            A * E * 4.0 * (x - x0) / w**2,
            A * E * 4.0 * (x - x0) ** 2 / w**3,
            np.ones_like(x),
        ])
        return J * scale

    r = _nonlinear(f, jac, np.asarray(p0, dtype=float) / scale, ("A", "x0", "w", "B"),
                   "gaussian", len(x), y, sigma)
    S = np.diag(scale)
    params = {k: v * s for (k, v), s in zip(r.params.items(), scale)}
    params["w"] = abs(params["w"])
    return FitResult(params, S @ r.covariance @ S, r.residual_rms, r.n_points, r.model)


# --- physics fits --------------------------------------------------------------------


def fit_beta_uoff(data, sigma=None):
    """Fit beta and U_off to rows of (alpha, Urf, Uend).

    Residual per point: ratio(Urf, Uend; beta, Uoff) - ratio(alpha).
    """
    arr = _as_columns(data, 3)
    if len(arr) < 3:
        raise FitError("need at least 3 points")
    alpha, U, Ue = arr[:, 0], arr[:, 1], arr[:, 2]
    target = np.array([freq_ratio_from_alpha(a) for a in alpha])
    r2 = target**2
    # linearised start: beta r^2 U^2/4 - Uoff (r^2/2 + 1) = -Ue (r^2/2 + 1)
    A = np.column_stack([r2 * U**2 / 4.0, -(r2 / 2.0 + 1.0)])
    b = -Ue * (r2 / 2.0 + 1.0)
    start, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < 2:
        raise FitError("degenerate voltages: cannot separate beta from U_off")
    bs = abs(start[0]) or 1e-3

    def f(p):
        beta, Uoff = p[0] * bs, p[1]
        dU = Ue - Uoff
        den = beta * (U / 2.0) ** 2 + 0.5 * dU
        return np.sqrt(np.clip(-dU / den, 0.0, None))

    def jac(p):
        beta, Uoff = p[0] * bs, p[1]
        dU = Ue - Uoff
        den = beta * (U / 2.0) ** 2 + 0.5 * dU
        val = np.sqrt(np.clip(-dU / den, 1e-300, None))
        d_beta = 0.5 / val * (dU * (U / 2.0) ** 2 / den**2)
        # d/dUoff of -dU/den: (den - dU*0.5)/den^2 with d(dU)/dUoff = -1
        d_uoff = 0.5 / val * ((den - 0.5 * dU) / den**2)
        return np.column_stack([d_beta * bs, d_uoff])

    r = _nonlinear(f, jac, np.array([start[0] / bs, start[1]]), ("beta", "Uoff"),
                   "beta_uoff", len(arr), target, sigma)
    S = np.diag([bs, 1.0])
    return FitResult({"beta": r.params["beta"] * bs, "Uoff": r.params["Uoff"]},
                     S @ r.covariance @ S, r.residual_rms, r.n_points, r.model)


def fit_delta0(data, trap, sigma=None):
    """Fit delta0 in delta_r = delta0 K Urf^(-2/3) to rows of (Urf, delta_r)."""
    arr = _as_columns(data, 2)
    if len(arr) < 2:
        raise FitError("need at least 2 points")
    U, dr = arr[:, 0], arr[:, 1]
    K = shell_constant(trap)
    return _linear_lsq((K * U ** (-2.0 / 3.0))[:, None], dr, sigma, ("delta0",), "delta0")


def fit_beta_shells(data, trap, delta0=1.48, sigma=None):
    """Fit beta with delta0 fixed: delta_r = delta0 K(beta) Urf^(-2/3),
    K proportional to |beta|^(-1/3)."""
    arr = _as_columns(data, 2)
    U, dr = arr[:, 0], arr[:, 1]
    K1 = shell_constant(trap, beta=-1.0)
    lin = _linear_lsq((delta0 * K1 * U ** (-2.0 / 3.0))[:, None], dr, sigma, ("c",),
                      "beta_shells")
    c = lin.params["c"]
    if not c > 0:
        raise FitError("non-positive shell amplitude")
    beta = -(c ** -3.0)
    dbeta = 3.0 * c**-4.0
    return FitResult({"beta": beta}, lin.covariance * dbeta**2, lin.residual_rms,
                     lin.n_points, "beta_shells")
