"""Capacitive loading of the resonant RF drive circuit.

Each trap electrode is a capacitance ``Ct`` fed through a coupling capacitor
``C``.  A rod (three electrodes) can be loaded with a parallel capacitor
``Cp`` and/or a series capacitor ``Cs``; this attenuates the RF amplitude on
that rod and shifts the LC resonance.  Exact forms are returned by default;
the ``*_first_order`` variants assume ``C >> Ct, Cp, Cs``.
"""

import math
from dataclasses import dataclass, field, replace

from .core import DomainError

RODS = ("X+", "X-", "Y+", "Y-")
# X rods sit on the -cos phase, Y rods on +cos (matches phi_rf ~ -(x^2 - y^2))
ROD_PHASE = {"X+": -1, "X-": -1, "Y+": +1, "Y-": +1}


@dataclass(frozen=True)
class ElectrodeLoad:
    C: float = 2.2e-9
    Ct: float = 40e-12
    Cp: float = 0.0
    Cs: float | None = None

    def __post_init__(self):
        if not self.C > 0 or not self.Ct > 0:
            raise DomainError("C and Ct must be > 0")
        if self.Cp < 0:
            raise DomainError("Cp must be >= 0")
        if self.Cs is not None and not self.Cs > 0:
            raise DomainError("Cs must be > 0 when present")


def divider_gain(load):
    """U_e / U_in = 1 / (1 + Ct/C) of the unloaded voltage divider."""
    return 1.0 / (1.0 + load.Ct / load.C)


def parallel_attenuation(load):
    """U_e'/U_e after adding ``Cp`` in parallel with the electrode."""
    return (1.0 + load.Ct / load.C) / (1.0 + (load.Ct + load.Cp) / load.C)


def parallel_attenuation_first_order(load):
    return 1.0 - load.Cp / load.C


def series_attenuation(load):
    """U_e'/U_e with ``Cs`` in series and ``Cp`` to ground.

    Falls back to :func:`parallel_attenuation` when ``Cs`` is absent.
    """
    if load.Cs is None:
        return parallel_attenuation(load)
    C, Cs, Ctp = load.C, load.Cs, load.Ct + load.Cp
    return (1.0 + load.Ct / C) / (1.0 + Ctp * (C + Cs) / (C * Cs))


def series_attenuation_first_order(load):
    if load.Cs is None:
        return 1.0
    return 1.0 / (1.0 + (load.Ct + load.Cp) / load.Cs)


def attenuation(load):
    return series_attenuation(load)


def effective_capacitance(load):
    """Series combination of ``Cs`` with ``Ct + Cp``."""
    Ctp = load.Ct + load.Cp
    if load.Cs is None:
        return Ctp
    return Ctp / (1.0 + Ctp / load.Cs)


def resonance_ratio(load):
    """Omega'/Omega = sqrt(Ct / Ct') for the loaded electrode."""
    r2 = load.Ct / (load.Ct + load.Cp)
    if load.Cs is not None:
        r2 += load.Ct / load.Cs
    return math.sqrt(r2)


def solve_balanced_loads(Ct, target_attenuation, Cs_cap=1.0):
    """Loads giving first-order attenuation ``t`` with unchanged resonance.

    Returns ``(Cp, Cs)``; ``Cs`` is None (no series capacitor) when it would
    exceed ``Cs_cap`` farad.
    """
    t = target_attenuation
    if not 0.0 < t < 1.0:
        raise DomainError(f"target attenuation must lie in (0, 1), got {t}")
    Cp = Ct * (1.0 - t) / t
    Cs = Ct / (1.0 - t)
    if Cs > Cs_cap:
        return Cp, None
    return Cp, Cs


@dataclass(frozen=True)
class LoadedCircuit:
    """Four rods, each with one load applied to its three electrodes.

    ``Q_res`` has no physics-derived default: it must be supplied.
    """

    base_resonance: float
    Q_res: float
    rods: dict = field(default_factory=lambda: {r: ElectrodeLoad() for r in RODS})
    electrodes_per_rod: int = 3

    def __post_init__(self):
        if not self.base_resonance > 0:
            raise DomainError("base resonance must be > 0")
        if not self.Q_res > 0:
            raise DomainError("Q_res must be > 0")
        if set(self.rods) != set(RODS):
            raise DomainError(f"rods must be exactly {RODS}")

    def with_load(self, rod, **changes):
        rods = dict(self.rods)
        rods[rod] = replace(rods[rod], **changes)
        return replace(self, rods=rods)

    def attenuations(self):
        return {r: attenuation(self.rods[r]) for r in RODS}

    def total_capacitance(self):
        return sum(self.electrodes_per_rod * self.rods[r].Ct for r in RODS)

    @classmethod
    def from_config(cls, circuit_cfg, Omega_rf):
        cfg = {k.lower(): v for k, v in circuit_cfg.items()}
        if "q_res" not in cfg:
            raise DomainError("[circuit] Q_res is required")
        C = float(cfg.get("c_nf", 2.2)) * 1e-9
        Ct = float(cfg.get("ct_pf", 40.0)) * 1e-12
        rods = {}
        for r in RODS:
            key = f"ct_pf_{r.lower()}"
            rods[r] = ElectrodeLoad(C=C, Ct=float(cfg[key]) * 1e-12 if key in cfg else Ct)
        return cls(base_resonance=Omega_rf, Q_res=float(cfg["q_res"]), rods=rods)


def rod_amplitudes(Urf, circuit):
    """Signed RF amplitude on each rod: phase * attenuation * Urf/2."""
    att = circuit.attenuations()
    return {r: ROD_PHASE[r] * att[r] * Urf / 2.0 for r in RODS}


def resonance_model_coefficients(circuit, loaded_rods=1):
    """(a, b) of Omega(Cp) = 1/sqrt(a + b Cp) for ``Cp`` added per electrode.

    The LC resonance scales as 1/sqrt(L C_total); adding ``Cp`` to every
    electrode of ``loaded_rods`` rods increases C_total linearly.
    """
    a = 1.0 / circuit.base_resonance**2
    n_loaded = loaded_rods * circuit.electrodes_per_rod
    b = a * n_loaded / circuit.total_capacitance()
    return a, b


def resonance_vs_parallel_load(circuit, Cp_values, loaded_rods=1):
    if len(Cp_values) == 0:
        raise ValueError("Cp_values must be non-empty")
    if any(cp < 0 for cp in Cp_values):
        raise DomainError("Cp values must be >= 0")
    a, b = resonance_model_coefficients(circuit, loaded_rods)
    return [(cp, 1.0 / math.sqrt(a + b * cp)) for cp in Cp_values]


def phase_error(circuit, delta_resonance):
    """Phase difference (rad) between a circuit whose resonance moved by the
    relative amount ``delta_resonance`` and the unshifted one, both driven at
    the unshifted resonance (series-RLC phase response).
    """
    if abs(delta_resonance) >= 0.1:
        raise DomainError("|delta_resonance| must be < 0.1")
    Q = circuit.Q_res
    w0 = circuit.base_resonance
    w0s = w0 * (1.0 + delta_resonance)
    w = w0

    def phase(res):
        return math.atan(Q * (w / res - res / w))

    return abs(phase(w0s) - phase(w0))


def phase_error_first_order(circuit, delta_resonance):
    return 2.0 * circuit.Q_res * abs(delta_resonance)
