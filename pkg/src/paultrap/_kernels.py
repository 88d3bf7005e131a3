"""Numba kernels for the N-body integrator.

The Coulomb sum for ion i runs over j in index order inside one thread, so
results do not depend on how ``prange`` distributes rows.
"""

import math

import numpy as np
from numba import config, njit, prange

from .core import CONST

# the TBB layer shipped with some numba builds is too old; workqueue is always there
config.THREADING_LAYER = "workqueue"

KE = 1.0 / (4.0 * math.pi * CONST.epsilon0)


@njit(parallel=True, cache=True)
def coulomb_forces(pos, charge):
    n = pos.shape[0]
    F = np.zeros((n, 3))
    dmin2 = np.empty(n)
    for i in prange(n):
        fx = 0.0
        fy = 0.0
        fz = 0.0
        dm = np.inf
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        for j in range(n):
            if j == i:
                continue
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            dz = zi - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 < dm:
                dm = r2
            s = charge[j] / (r2 * math.sqrt(r2))
            fx += s * dx
            fy += s * dy
            fz += s * dz
        c = KE * charge[i]
        F[i, 0] = c * fx
        F[i, 1] = c * fy
        F[i, 2] = c * fz
        dmin2[i] = dm
    return F, math.sqrt(dmin2.min()) if n > 1 else np.inf


@njit(cache=True)
def trap_forces(pos, t, tp, F):
    """Add trap forces to ``F`` in place (layout: crystal.pack_trap_params)."""
    n = pos.shape[0]
    xn = tp[n, 0]
    yn = tp[n, 1]
    W = tp[n, 2]
    full = tp[n, 3]
    c = math.cos(W * t)
    for i in range(n):
        dx = pos[i, 0] - xn
        dy = pos[i, 1] - yn
        if full > 0.5:
            # tp[i,0], tp[i,1] hold Q * curvature of the RF amplitude potential
            fx = -c * tp[i, 0] * dx
            fy = -c * tp[i, 1] * dy
        else:
            fx = -tp[i, 0] * dx
            fy = -tp[i, 1] * dy
        F[i, 0] += fx + tp[i, 2] * pos[i, 0] + tp[i, 5]
        F[i, 1] += fy + tp[i, 2] * pos[i, 1] + tp[i, 6]
        F[i, 2] += -tp[i, 3] * pos[i, 2]


@njit(cache=True)
def total_forces(pos, t, charge, tp):
    F, dmin = coulomb_forces(pos, charge)
    trap_forces(pos, t, tp, F)
    return F, dmin


@njit(cache=True)
def baoab_run(pos, vel, F, t, dt, nsteps, inv_mass, c1, c2, noise, charge, tp, guard):
    """Advance ``nsteps`` BAOAB Langevin steps in place.

    ``c1`` = exp(-gamma dt) and ``c2`` = sqrt((1 - c1^2) kB T / m) per ion.
    Returns ``(steps_done, t, min_distance)``; stops before committing a step
    whose minimum pair distance falls below ``guard``.
    """
    n = pos.shape[0]
    h = 0.5 * dt
    dmin_run = np.inf
    new_pos = np.empty_like(pos)
    new_vel = np.empty_like(vel)
    for s in range(nsteps):
        for i in range(n):
            for k in range(3):
                v = vel[i, k] + h * F[i, k] * inv_mass[i]
                x = pos[i, k] + h * v
                v = c1[i] * v + c2[i] * noise[s, i, k]
                new_pos[i, k] = x + h * v
                new_vel[i, k] = v
        F2, dmin = total_forces(new_pos, t + dt, charge, tp)
        if dmin < guard:
            return s, t, dmin
        for i in range(n):
            for k in range(3):
                pos[i, k] = new_pos[i, k]
                vel[i, k] = new_vel[i, k] + h * F2[i, k] * inv_mass[i]
                F[i, k] = F2[i, k]
        t += dt
        if dmin < dmin_run:
            dmin_run = dmin
    return nsteps, t, dmin_run
