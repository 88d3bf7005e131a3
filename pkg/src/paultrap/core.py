"""Constants, ion species, trap geometry and drive configuration."""

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import scipy.constants as sc


class DomainError(ValueError):
    """A physically meaningless input (unstable trap, negative radicand, ...)."""


class NumericalError(RuntimeError):
    """A solver or integrator failed to converge."""


@dataclass(frozen=True)
class Constants:
    epsilon0: float = sc.epsilon_0
    kB: float = sc.k
    e: float = sc.e
    amu: float = sc.physical_constants["atomic mass constant"][0]


CONST = Constants()


@dataclass(frozen=True)
class IonSpecies:
    charge: int
    mass: float
    label: str = ""

    def __post_init__(self):
        if self.charge < 1:
            raise DomainError(f"charge must be >= 1, got {self.charge}")
        if not self.mass > 0:
            raise DomainError(f"mass must be > 0, got {self.mass}")

    @property
    def Q(self):
        return self.charge * CONST.e

    @classmethod
    def from_amu(cls, mass_amu, charge=1, label=""):
        return cls(charge=charge, mass=mass_amu * CONST.amu, label=label)


CA40 = IonSpecies.from_amu(39.962591, label="Ca-40")
CA44 = IonSpecies.from_amu(43.955482, label="Ca-44")
SPECIES = {"Ca-40": CA40, "Ca-44": CA44}


@dataclass(frozen=True)
class TrapGeometry:
    r0: float
    z0: float
    zE: float
    d: float
    eta: float

    def __post_init__(self):
        for name in ("r0", "z0", "zE", "d"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")
        if not 0 < self.eta < 1:
            raise DomainError(f"eta must lie in (0, 1), got {self.eta}")


@dataclass(frozen=True)
class DriveConfig:
    Urf: float
    Omega_rf: float
    Uend: float
    Uoff: float = 0.0

    def __post_init__(self):
        if not self.Omega_rf > 0:
            raise DomainError("Omega_rf must be > 0")
        if self.Urf < 0:
            raise DomainError("Urf must be >= 0")

    @property
    def Uend_eff(self):
        return self.Uend - self.Uoff


@dataclass(frozen=True)
class TrapConfig:
    geometry: TrapGeometry
    drive: DriveConfig
    species: IonSpecies = CA40
    # [circuit] section is kept verbatim for circuit.LoadedCircuit.from_config
    circuit: dict = field(default_factory=dict, compare=False)

    def with_drive(self, **changes):
        return replace(self, drive=replace(self.drive, **changes))

    def with_species(self, species):
        return replace(self, species=species)


PREDICTED_BETA = -2.29e-3  # V^-1, design value of beta for the shipped trap


def beta_from_eta(eta, species, geom, drive):
    """beta = -Q z0^2 / (M eta r0^4 Omega^2), in 1/V."""
    return -species.Q * geom.z0**2 / (
        species.mass * eta * geom.r0**4 * drive.Omega_rf**2
    )


def derive_eta_from_beta(beta, species, geom, drive):
    """Invert :func:`beta_from_eta` for the geometry constant eta."""
    if not beta < 0:
        raise DomainError(f"beta must be negative, got {beta}")
    return -species.Q * geom.z0**2 / (
        species.mass * beta * geom.r0**4 * drive.Omega_rf**2
    )


def default_trap(Urf=100.0, Uend=5.0, Uoff=0.0, species=CA40):
    """The shipped ``aarhus-866`` trap with the drive overridden."""
    trap = load_config(DATA_DIR / "aarhus-866.cfg")
    trap = trap.with_drive(Urf=Urf, Uend=Uend, Uoff=Uoff)
    return trap.with_species(species)


DATA_DIR = Path(__file__).parent / "data"


def _parser():
    # inline comments are allowed so config files can annotate assumptions
    return configparser.ConfigParser(inline_comment_prefixes=("#", ";"))


def parse_config_text(text, source="<string>"):
    parser = _parser()
    parser.read_string(text, source=source)
    return trap_from_parser(parser)


def load_config(path):
    path = Path(path)
    return parse_config_text(path.read_text(), source=str(path))


def trap_from_parser(parser):
    g = parser["geometry"]
    r0 = g.getfloat("r0_mm") * 1e-3
    z0 = g.getfloat("z0_mm") * 1e-3
    zE = g.getfloat("zE_mm", fallback=2.95) * 1e-3
    d = g.getfloat("d_mm", fallback=5.2) * 1e-3

    dr = parser["drive"]
    drive = DriveConfig(
        Urf=dr.getfloat("urf_V", fallback=100.0),
        Omega_rf=2 * math.pi * dr.getfloat("omega_rf_MHz") * 1e6,
        Uend=dr.getfloat("uend_V", fallback=5.0),
        Uoff=dr.getfloat("uoff_V", fallback=0.0),
    )

    species = CA40
    if parser.has_section("ion"):
        ion = parser["ion"]
        label = ion.get("label", "Ca-40")
        if "mass_amu" in ion:
            species = IonSpecies.from_amu(
                ion.getfloat("mass_amu"), ion.getint("charge", fallback=1), label
            )
        else:
            species = SPECIES[label]

    if "eta" in g:
        eta = g.getfloat("eta")
    else:
        # no eta given: derive it from the predicted beta
        tmp = TrapGeometry(r0, z0, zE, d, 0.5)
        eta = derive_eta_from_beta(PREDICTED_BETA, species, tmp, drive)
    geom = TrapGeometry(r0=r0, z0=z0, zE=zE, d=d, eta=eta)

    circuit = dict(parser["circuit"]) if parser.has_section("circuit") else {}
    return TrapConfig(geometry=geom, drive=drive, species=species, circuit=circuit)


def trap_to_config_text(trap):
    g, dr, ion = trap.geometry, trap.drive, trap.species
    lines = [
        "[geometry]",
        f"r0_mm = {g.r0 * 1e3!r}",
        f"z0_mm = {g.z0 * 1e3!r}",
        f"zE_mm = {g.zE * 1e3!r}",
        f"d_mm = {g.d * 1e3!r}",
        f"eta = {g.eta!r}",
        "",
        "[drive]",
        f"urf_V = {dr.Urf!r}",
        f"omega_rf_MHz = {dr.Omega_rf / (2 * math.pi * 1e6)!r}",
        f"uend_V = {dr.Uend!r}",
        f"uoff_V = {dr.Uoff!r}",
        "",
        "[ion]",
        f"label = {ion.label}",
        f"charge = {ion.charge}",
        f"mass_amu = {ion.mass / CONST.amu!r}",
    ]
    if trap.circuit:
        lines += ["", "[circuit]"] + [f"{k} = {v}" for k, v in trap.circuit.items()]
    return "\n".join(lines) + "\n"
