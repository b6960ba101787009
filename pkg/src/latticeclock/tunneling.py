"""Band structure of the sinusoidal lattice and tunneling-rate estimates.

Energies are in recoil units E_r = hbar^2 k_L^2 / (2 m).  The single-particle
problem -psi'' + (V/E_r) sin^2(k_L y) psi = E psi is diagonalized per
quasimomentum in the plane-wave basis e^{i(q + 2j)k_L y}, where it is a real
symmetric tridiagonal matrix: diagonal (q + 2j)^2 + V/2, off-diagonal -V/4.
Its eigenvalues are the Mathieu characteristic values up to the V/2 offset.

Thermal averages weight band b by the harmonic ladder exp(-(b+1/2) hbar
omega_Y / kB T): band-center weights over-count the top bound band (the
anharmonic compression of the actual band centers is strong near the lip of
a 64 E_r well) and miss the reference tunneling times by a factor ~2.

Tunneling time convention: h / (J E_r) with J dimensionless.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConvergenceError, DomainError
from .units import CONSTANTS, Constants, recoil_energy

__all__ = [
    "BandStructure", "TiltParams", "band_structure", "band_tunneling",
    "thermal_tunneling", "effective_tunneling", "thermal_effective_tunneling",
    "interaction_tunneling_regime_check", "write_dispersion_csv",
]


@dataclass(frozen=True)
class BandStructure:
    """Dispersion E_b(q) of a lattice of given depth (everything in E_r)."""

    depth: float
    quasimomenta: np.ndarray      # units of k_L, first Brillouin zone
    energies: np.ndarray          # (n_q, n_bands)

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    @property
    def bound_band_count(self) -> int:
        """Bands lying entirely below the lattice depth."""
        return int(np.sum(self.energies.max(axis=0) < self.depth))

    def band(self, b: int) -> np.ndarray:
        return self.energies[:, b]


def band_structure(depth: float, n_bands: int = 8, n_q: int = 101,
                   plane_wave_cutoff: int | None = None) -> BandStructure:
    """Diagonalize the lattice per quasimomentum; checks cutoff convergence.

    plane_wave_cutoff counts Fourier components on each side; the default
    max(2*n_bands + 5, ceil(sqrt(depth)) + 10) is then verified against
    cutoff+10 to 1e-8 and a ConvergenceError raised if it fails.
    """
    if depth <= 0.0:
        raise DomainError("lattice depth must be positive")
    if plane_wave_cutoff is None:
        plane_wave_cutoff = max(2 * n_bands + 5, int(math.sqrt(depth)) + 10)
    if plane_wave_cutoff < 2 * n_bands + 5:
        raise DomainError("plane_wave_cutoff must be >= 2*n_bands + 5")
    qs = np.linspace(-1.0, 1.0, n_q)

    def solve(cut):
        j = np.arange(-cut, cut + 1)
        off = -depth / 4.0 * np.ones(2 * cut)
        out = np.empty((n_q, n_bands))
        for i, q in enumerate(qs):
            diag = (q + 2.0 * j) ** 2 + depth / 2.0
            out[i] = eigh_tridiagonal(diag, off, select="i",
                                      select_range=(0, n_bands - 1))[0]
        return out

    energies = solve(plane_wave_cutoff)
    check = solve(plane_wave_cutoff + 10)
    if not np.allclose(energies, check, rtol=0.0, atol=1e-8):
        raise ConvergenceError(
            f"plane-wave cutoff {plane_wave_cutoff} not converged to 1e-8")
    return BandStructure(float(depth), qs, energies)


def band_tunneling(band: np.ndarray) -> float:
    """Tunneling energy J = bandwidth/4 (tight-binding cosine convention)."""
    band = np.asarray(band, dtype=float)
    if band.size == 0:
        raise DomainError("band array is empty")
    return float(band.max() - band.min()) / 4.0


def _harmonic_band_weights(n_bands: int, tempY: float, omegaY: float,
                           constants: Constants) -> np.ndarray:
    """Boltzmann weights on the harmonic ladder (b + 1/2) hbar omegaY."""
    if tempY <= 0.0:
        raise DomainError("temperature must be positive")
    spacing = constants.hbar * omegaY / (constants.kB * tempY)
    w = np.exp(-spacing * np.arange(n_bands))
    return w / w.sum()


def _tunneling_time(j_recoil: float, constants: Constants) -> float:
    er = recoil_energy(constants.lattice_wavelength, constants)
    planck = 2.0 * math.pi * constants.hbar
    return planck / (j_recoil * er) if j_recoil > 0.0 else math.inf


def thermal_tunneling(bands: BandStructure, tempY: float, omegaY: float,
                      constants: Constants = CONSTANTS) -> dict:
    """Thermal <J> over bound bands and the matching tunneling time.

    Returns dict with 'mean_J' (E_r units), 'time' (s, h/(J E_r)),
    'weights', and 'band_J'.
    """
    nb = bands.bound_band_count
    if nb == 0:
        raise DomainError("no bound bands at this depth")
    j_band = np.array([band_tunneling(bands.band(b)) for b in range(nb)])
    w = _harmonic_band_weights(nb, tempY, omegaY, constants)
    mean_j = float(np.sum(w * j_band))
    return {"mean_J": mean_j, "time": _tunneling_time(mean_j, constants),
            "weights": w, "band_J": j_band}


@dataclass(frozen=True)
class TiltParams:
    """Site-dependent energy offsets from the transverse dipole confinement.

    omegaDY is the harmonic curvature frequency of the dipole potential
    along the lattice axis (the printed 4 V_X/(m w0^2) is dimensionally a
    frequency squared; the measured 2 pi x 485 Hz value is authoritative).
    """

    omegaDY: float = 2.0 * math.pi * 485.0    # rad/s
    mean_site_index: int = 25
    lattice_spacing: float | None = None      # m, defaults to lambda/2
    constants: Constants = CONSTANTS

    def __post_init__(self):
        if self.omegaDY <= 0.0 or self.mean_site_index < 0:
            raise DomainError("tilt parameters must be positive")

    @property
    def spacing(self) -> float:
        if self.lattice_spacing is not None:
            return self.lattice_spacing
        return self.constants.lattice_wavelength / 2.0

    def site_offset(self, site_index: int) -> float:
        """Mean offset between sites j and j+1: m omegaDY^2 a^2 (j+1/2)/2, in E_r."""
        c = self.constants
        delta = 0.5 * c.mSr * self.omegaDY ** 2 * self.spacing ** 2 \
            * (site_index + 0.5)
        return delta / recoil_energy(c.lattice_wavelength, c)


def effective_tunneling(j_recoil: float, tilt: TiltParams,
                        site_index: int | None = None) -> float:
    """Tilt-suppressed J_eff = J^2 / sqrt(J^2 + Delta^2), both in E_r."""
    if j_recoil < 0.0:
        raise DomainError("J must be >= 0")
    j_site = tilt.mean_site_index if site_index is None else site_index
    delta = tilt.site_offset(j_site)
    if j_recoil == 0.0:
        return 0.0
    return j_recoil ** 2 / math.sqrt(j_recoil ** 2 + delta ** 2)


def thermal_effective_tunneling(bands: BandStructure, tempY: float,
                                omegaY: float, tilt: TiltParams,
                                site_index: int | None = None,
                                constants: Constants = CONSTANTS) -> dict:
    """Thermal <J_eff> over bound bands plus the effective tunneling time."""
    nb = bands.bound_band_count
    j_band = np.array([band_tunneling(bands.band(b)) for b in range(nb)])
    j_eff = np.array([effective_tunneling(j, tilt, site_index) for j in j_band])
    w = _harmonic_band_weights(nb, tempY, omegaY, constants)
    mean_jeff = float(np.sum(w * j_eff))
    return {"mean_J_eff": mean_jeff, "time": _tunneling_time(mean_jeff, constants),
            "weights": w, "band_J_eff": j_eff}


def interaction_tunneling_regime_check(mean_u: float, omegaY: float,
                                       threshold: float = 0.05) -> dict:
    """Is interaction-assisted tunneling negligible (<U> << omegaY)?"""
    if omegaY <= 0.0:
        raise DomainError("omegaY must be positive")
    ratio = abs(mean_u) / omegaY
    return {"ratio": ratio, "negligible": bool(ratio < threshold),
            "threshold": threshold}


def write_dispersion_csv(bands: BandStructure, fh) -> None:
    """Dump the dispersion as rows (band, q_over_kL, E_over_Er)."""
    close = False
    if isinstance(fh, (str, bytes)):
        fh = open(fh, "w", newline="")
        close = True
    try:
        writer = csv.writer(fh)
        writer.writerow(["band", "q_over_kL", "E_over_Er"])
        for b in range(bands.n_bands):
            for q, e in zip(bands.quasimomenta, bands.energies[:, b]):
                writer.writerow([b, repr(float(q)), repr(float(e))])
    finally:
        if close:
            fh.close()
