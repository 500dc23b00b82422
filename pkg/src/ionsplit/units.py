"""Physical constants, ion species and the dimensionless unit system.

All numerics run in units where hbar = m = omega0 = 1, so lengths are
measured in sqrt(hbar / (m omega0)), times in 1/omega0 and energies in
hbar omega0.  SI values only appear at I/O boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

# CODATA 2018, 10 significant digits
HBAR = 1.054571817e-34  # J s
ELEMENTARY_CHARGE = 1.602176634e-19  # C
EPSILON_0 = 8.854187813e-12  # F/m
ATOMIC_MASS_UNIT = 1.660539067e-27  # kg
ELECTRON_MASS = 9.109383702e-31  # kg

# neutral atomic masses in u; the ion mass subtracts one electron
SPECIES = {
    "Be9+": (9.012183065, 1),
    "Ca40+": (39.96259086, 1),
}

_ALIASES = {
    "9be+": "Be9+",
    "be9+": "Be9+",
    "be+": "Be9+",
    "40ca+": "Ca40+",
    "ca40+": "Ca40+",
    "ca+": "Ca40+",
}

# exponents of (energy, length) for each unit tag
UNIT_TAGS = {
    "length": (0, 1),
    "time": None,
    "energy": (1, 0),
    "alpha": (1, -2),
    "beta": (1, -4),
    "force": (1, -1),
    "momentum": None,
    "angular_frequency": None,
}


class UnknownSpeciesError(KeyError):
    pass


def resolve_species(name: str) -> str:
    if name in SPECIES:
        return name
    key = name.strip().lower().replace("^", "").replace("_", "")
    if key in _ALIASES:
        return _ALIASES[key]
    raise UnknownSpeciesError(f"unknown ion species {name!r}; known: {sorted(SPECIES)}")


@dataclass(frozen=True)
class TrapSpec:
    """Ion species plus initial axial trap frequency.

    Fields are SI. ``coulomb_internal`` is C_c expressed in the internal
    unit system and is what the numerical modules consume.
    """

    ion_mass: float
    ion_charge: float
    omega0: float
    species: str = "custom"

    def __post_init__(self):
        if not (self.ion_mass > 0 and self.omega0 > 0 and self.ion_charge != 0):
            raise ValueError("ion_mass, omega0 must be positive and ion_charge non-zero")

    @property
    def coulomb_const(self) -> float:
        return self.ion_charge**2 / (4.0 * math.pi * EPSILON_0)

    @property
    def length_unit(self) -> float:
        return math.sqrt(HBAR / (self.ion_mass * self.omega0))

    @property
    def time_unit(self) -> float:
        return 1.0 / self.omega0

    @property
    def energy_quantum(self) -> float:
        return HBAR * self.omega0

    @property
    def d0(self) -> float:
        """Initial two-ion equilibrium separation in metres."""
        return (2.0 * self.coulomb_const / (self.ion_mass * self.omega0**2)) ** (1.0 / 3.0)

    @property
    def coulomb_internal(self) -> float:
        return self.coulomb_const / (self.energy_quantum * self.length_unit)

    @property
    def d0_internal(self) -> float:
        return (2.0 * self.coulomb_internal) ** (1.0 / 3.0)

    def _scale(self, unit: str) -> float:
        if unit not in UNIT_TAGS:
            raise ValueError(f"unknown unit tag {unit!r}; expected one of {sorted(UNIT_TAGS)}")
        if unit == "time":
            return self.time_unit
        if unit == "angular_frequency":
            return self.omega0
        if unit == "momentum":
            return HBAR / self.length_unit
        e_pow, l_pow = UNIT_TAGS[unit]
        return self.energy_quantum**e_pow * self.length_unit**l_pow

    def to_si(self, value, unit: str):
        return value * self._scale(unit)

    def from_si(self, value, unit: str):
        return value / self._scale(unit)

    def to_dict(self) -> dict:
        out = {"omega0_hz": self.omega0 / (2.0 * math.pi)}
        if self.species in SPECIES:
            out["species"] = self.species
        else:
            out["mass_kg"] = self.ion_mass
            out["charge_C"] = self.ion_charge
        return out


def make_trap_spec(species: str | None = "Be9+", omega0_hz: float = 2.0e6, *,
                   mass_kg: float | None = None, charge_C: float | None = None) -> TrapSpec:
    """Build a TrapSpec from a species name or explicit mass/charge.

    ``omega0_hz`` is the ordinary frequency omega0 / 2 pi.
    """
    if not omega0_hz > 0:
        raise ValueError("omega0_hz must be positive")
    omega0 = 2.0 * math.pi * omega0_hz
    if mass_kg is not None or charge_C is not None:
        if mass_kg is None or charge_C is None:
            raise ValueError("explicit ions need both mass_kg and charge_C")
        if mass_kg <= 0:
            raise ValueError("mass_kg must be positive")
        return TrapSpec(mass_kg, charge_C, omega0, "custom")
    if species is None:
        raise ValueError("give either a species or mass_kg/charge_C")
    name = resolve_species(species)
    amu, z = SPECIES[name]
    mass = amu * ATOMIC_MASS_UNIT - z * ELECTRON_MASS
    return TrapSpec(mass, z * ELEMENTARY_CHARGE, omega0, name)


def trap_from_dict(block: dict) -> TrapSpec:
    """Parse the JSON trap block ``{"species": ..., "omega0_hz": ...}``."""
    if "omega0_hz" not in block:
        raise ValueError("trap block needs omega0_hz")
    return make_trap_spec(block.get("species", "Be9+"), float(block["omega0_hz"]),
                          mass_kg=block.get("mass_kg"), charge_C=block.get("charge_C"))
