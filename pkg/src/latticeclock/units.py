"""Physical constants, unit conversions, and trap/interaction parameters.

Every frequency inside the package is angular (rad/s). Hz enters and leaves
only at the CLI / file boundary via the converters below; mixing the two is
the classic 2-pi bug this convention exists to prevent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import DomainError

# 2018 CODATA
HBAR = 1.054571817e-34        # J s
KB = 1.380649e-23             # J / K
ATOMIC_MASS_UNIT = 1.66053906892e-27   # kg
BOHR_RADIUS = 5.29177210903e-11        # m
PLANCK = 2.0 * math.pi * HBAR

#: Sr clock transition frequency used for fractional-shift reporting (Hz).
SR_CLOCK_FREQUENCY_HZ = 4.29e14

#: Magic wavelength default for the Sr lattice (m).
DEFAULT_LATTICE_WAVELENGTH = 813.4e-9


def hz_to_angular(f_hz: float) -> float:
    return 2.0 * math.pi * f_hz


def angular_to_hz(omega: float) -> float:
    return omega / (2.0 * math.pi)


def angular_to_energy(omega: float, constants: "Constants | None" = None) -> float:
    c = constants or CONSTANTS
    return c.hbar * omega


def energy_to_angular(energy: float, constants: "Constants | None" = None) -> float:
    c = constants or CONSTANTS
    return energy / c.hbar


@dataclass(frozen=True)
class Constants:
    """Fundamental constants plus the configurable lattice wavelength."""

    hbar: float = HBAR
    kB: float = KB
    mSr: float = 87.0 * ATOMIC_MASS_UNIT
    a0: float = BOHR_RADIUS
    lattice_wavelength: float = DEFAULT_LATTICE_WAVELENGTH

    def __post_init__(self):
        for name in ("hbar", "kB", "mSr", "a0", "lattice_wavelength"):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"Constants.{name} must be positive")
        if abs(self.mSr / (87.0 * ATOMIC_MASS_UNIT) - 1.0) > 1e-3:
            raise DomainError("mSr must equal 87 atomic mass units within 0.1%")

    def with_wavelength(self, wavelength: float) -> "Constants":
        return replace(self, lattice_wavelength=wavelength)


CONSTANTS = Constants()

#: Lamb-Dicke regime guard: eta must stay below this.
ETA_MAX = 0.3


def lamb_dicke(k: float, omega: float, constants: Constants = CONSTANTS) -> float:
    """Lamb-Dicke parameter eta = k * sqrt(hbar/(m omega)) / sqrt(2).

    k is the probe wavevector component along the confinement axis (1/m),
    omega the trap angular frequency (rad/s).
    """
    if k < 0.0:
        raise DomainError("wavevector must be non-negative")
    if omega <= 0.0:
        raise DomainError("trap frequency must be positive")
    return k * math.sqrt(constants.hbar / (constants.mSr * omega)) / math.sqrt(2.0)


def lamb_dicke_wavevector(eta: float, omega: float,
                          constants: Constants = CONSTANTS) -> float:
    """Inverse of :func:`lamb_dicke`: the k that produces a given eta."""
    if omega <= 0.0:
        raise DomainError("trap frequency must be positive")
    return eta * math.sqrt(2.0) / math.sqrt(constants.hbar / (constants.mSr * omega))


def recoil_energy(wavelength: float, constants: Constants = CONSTANTS) -> float:
    """Photon recoil energy hbar^2 (2 pi / lambda)^2 / (2 m), in joules."""
    if wavelength <= 0.0:
        raise DomainError("wavelength must be positive")
    k = 2.0 * math.pi / wavelength
    return (constants.hbar * k) ** 2 / (2.0 * constants.mSr)


@dataclass(frozen=True)
class TrapGeometry:
    """Trap frequencies, Lamb-Dicke parameters, and the derived interaction scale.

    Fields omegaX/omegaY/omegaZ are angular (rad/s); scattering_length is the
    signed singlet g-e scattering length (m). aHo, omegaPerp and u are derived
    and kept consistent by construction.
    """

    omegaX: float
    omegaY: float
    omegaZ: float
    etaZ: float
    etaY: float = 0.0
    scattering_length: float = 0.0
    constants: Constants = field(default=CONSTANTS, repr=False)

    def __post_init__(self):
        for name in ("omegaX", "omegaY", "omegaZ"):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"TrapGeometry.{name} must be positive")
        for name in ("etaZ", "etaY"):
            eta = getattr(self, name)
            if not (0.0 <= eta < ETA_MAX):
                raise DomainError(
                    f"TrapGeometry.{name}={eta} outside the Lamb-Dicke guard [0, {ETA_MAX})")
        if not math.isfinite(self.scattering_length):
            raise DomainError("scattering_length must be finite")

    @property
    def aHo(self) -> float:
        """Axial harmonic oscillator length sqrt(hbar/(m omegaZ))."""
        return math.sqrt(self.constants.hbar / (self.constants.mSr * self.omegaZ))

    @property
    def omegaPerp(self) -> float:
        """Mean transverse trapping frequency sqrt(omegaX omegaY)."""
        return math.sqrt(self.omegaX * self.omegaY)

    @property
    def u(self) -> float:
        """Interaction parameter 4 omegaPerp a / aHo (rad/s, sign of a)."""
        return 4.0 * self.omegaPerp * self.scattering_length / self.aHo

    def with_u(self, u: float) -> "TrapGeometry":
        """Same trap, scattering length adjusted to give interaction u."""
        a = u * self.aHo / (4.0 * self.omegaPerp)
        return replace(self, scattering_length=a)


def interaction_parameter(geometry: TrapGeometry) -> float:
    """u = 4 omegaPerp a_eg / aHo; negative for negative scattering length."""
    return geometry.u
