"""Overlap of a spheroidal ion crystal with a TEM00 cavity mode.

The collective coupling scales as the square root of the number of ions
in the mode, so the coupling here is the square root of the crystal-averaged
normalized mode intensity.  The mode waist is taken constant over the
crystal length and its axial standing-wave structure is ignored.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .coldfluid import fit_gaussian

AXES = ("x", "y")


class ValidityWarning(UserWarning):
    """Crystal radius not below the mode waist."""


@dataclass(frozen=True)
class CavityMode:
    waist: float  # m
    axis_offset: tuple = (0.0, 0.0)  # (x, y) of the mode axis, m
    wavelength: float = 866e-9  # m, recorded only

    def __post_init__(self):
        if not self.waist > 0:
            raise ValueError("waist must be positive")


@dataclass(frozen=True)
class TomographyScan:
    axis: str
    displacements: np.ndarray  # m
    couplings: np.ndarray  # normalized to the aligned, noiseless peak
    valid: bool = True  # False when the crystal radius is not below the waist

    def __post_init__(self):
        if len(self.displacements) != len(self.couplings):
            raise ValueError("displacements and couplings must have equal length")
        if np.any(np.asarray(self.couplings) < 0):
            raise ValueError("couplings must be non-negative")

    def as_data(self):
        return np.column_stack([self.displacements, self.couplings])


def _radius(crystal):
    R = getattr(crystal, "R", crystal)
    return float(R)


def _disk_rule(n_radial, n_angular):
    """Nodes (psi, theta) and weights for the column-weighted disk average.

    A uniform spheroid seen along z has column length proportional to
    sqrt(1 - rho^2/R^2).  With rho = R sin(psi) the weight becomes
    sin(psi) cos(psi)^2 dpsi dtheta on [0, pi/2] x [0, 2 pi].
    """
    u, wu = np.polynomial.legendre.leggauss(n_radial)
    v, wv = np.polynomial.legendre.leggauss(n_angular)
    psi = (u + 1.0) * math.pi / 4.0
    theta = (v + 1.0) * math.pi
    w = (wu * math.pi / 4.0 * np.sin(psi) * np.cos(psi) ** 2)[:, None] * (wv * math.pi)[None, :]
    return np.sin(psi), theta, w / w.sum()


_RULE = _disk_rule(48, 64)


def coupling_strength(crystal, mode, crystal_center=(0.0, 0.0)):
    """Square root of the crystal-averaged intensity exp(-2 d^2 / w0^2).

    ``crystal`` is a :class:`CrystalObservables` (only ``R`` is used) or a
    radius in metres.  A point-like crystal on the mode axis gives 1.
    """
    R = _radius(crystal)
    if R < 0:
        raise ValueError("crystal radius must be >= 0")
    dx = crystal_center[0] - mode.axis_offset[0]
    dy = crystal_center[1] - mode.axis_offset[1]
    s, theta, w = _RULE
    rho = R * s[:, None]
    x = dx + rho * np.cos(theta)[None, :]
    y = dy + rho * np.sin(theta)[None, :]
    avg = np.sum(w * np.exp(-2.0 * (x**2 + y**2) / mode.waist**2))
    return math.sqrt(avg)


def tomography_scan(crystal, mode, axis="x", scan_range=50e-6, n_points=21, noise_sigma=0.0,
                    seed=0, other=0.0):
    """Couplings for crystal displacements in [-scan_range, scan_range] along ``axis``.

    ``other`` is the crystal coordinate along the perpendicular axis.  Noise
    is multiplicative Gaussian with relative width ``noise_sigma``.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if n_points < 5:
        raise ValueError("n_points must be >= 5")
    R = _radius(crystal)
    valid = R < mode.waist
    if not valid:
        warnings.warn(f"crystal radius {R:.3g} m is not below the waist {mode.waist:.3g} m; "
                      "the scan no longer maps the mode profile", ValidityWarning, stacklevel=2)
    d = np.linspace(-scan_range, scan_range, n_points)
    peak = coupling_strength(R, CavityMode(mode.waist))
    c = np.empty(n_points)
    for i, di in enumerate(d):
        centre = (di, other) if axis == "x" else (other, di)
        c[i] = coupling_strength(R, mode, centre) / peak
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        c = np.clip(c * (1.0 + noise_sigma * rng.standard_normal(n_points)), 0.0, None)
    return TomographyScan(axis, d, c, valid)


def locate_mode_offset(scan_x, scan_y):
    """Gaussian-fit centres of an x and a y scan: ``((x, sx), (y, sy))``."""
    out = []
    for scan in (scan_x, scan_y):
        r = fit_gaussian(scan.as_data())
        out.append((r["x0"], r.errors["x0"]))
    return tuple(out)
