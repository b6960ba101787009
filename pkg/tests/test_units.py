import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from latticeclock.errors import DomainError
from latticeclock.units import (CONSTANTS, Constants, TrapGeometry,
                                angular_to_energy, angular_to_hz,
                                energy_to_angular, hz_to_angular, lamb_dicke,
                                lamb_dicke_wavevector, recoil_energy)


def test_constants_positive_and_mass():
    c = CONSTANTS
    assert c.hbar > 0 and c.kB > 0 and c.mSr > 0 and c.a0 > 0
    assert abs(c.mSr / (87 * 1.66053906892e-27) - 1) < 1e-3


def test_bad_constants_rejected():
    with pytest.raises(DomainError):
        Constants(hbar=-1.0)
    with pytest.raises(DomainError):
        Constants(mSr=86.0 * 1.66053906892e-27)   # >0.1% off 87 amu


@given(st.floats(1.0, 1e6))
def test_frequency_roundtrip(f):
    assert angular_to_hz(hz_to_angular(f)) == pytest.approx(f, rel=1e-12)


@given(st.floats(1.0, 1e7))
def test_energy_roundtrip(omega):
    assert energy_to_angular(angular_to_energy(omega)) == pytest.approx(omega, rel=1e-12)


def test_lamb_dicke_zero_wavevector():
    assert lamb_dicke(0.0, 2 * math.pi * 700.0) == 0.0


def test_lamb_dicke_algebraic_identity():
    # choose omega so that a_ho * k = 0.1  ->  eta = 0.1 / sqrt(2)
    omega = 2 * math.pi * 700.0
    a_ho = math.sqrt(CONSTANTS.hbar / (CONSTANTS.mSr * omega))
    k = 0.1 / a_ho
    assert lamb_dicke(k, omega) == pytest.approx(0.1 / math.sqrt(2), rel=1e-12)


def test_lamb_dicke_roundtrip_at_paper_value():
    # eta_Z = 0.046 at omega_Z = 2 pi x 0.7 kHz: inversion recovers k
    omega = 2 * math.pi * 700.0
    k = lamb_dicke_wavevector(0.046, omega)
    assert lamb_dicke(k, omega) == pytest.approx(0.046, rel=1e-12)


def test_lamb_dicke_domain():
    with pytest.raises(DomainError):
        lamb_dicke(1.0, 0.0)
    with pytest.raises(DomainError):
        lamb_dicke(-1.0, 1.0)


def test_recoil_energy_wavelength_scaling():
    e1 = recoil_energy(813.4e-9)
    e2 = recoil_energy(2 * 813.4e-9)
    assert e2 == pytest.approx(e1 / 4.0, rel=1e-12)
    assert recoil_energy(1e3) < 1e-47     # lambda -> infinity limit -> 0


def test_recoil_energy_magic_wavelength():
    # independent oracle: E_r = h^2 / (2 m lambda^2)
    lam = 813.4e-9
    h = 2 * math.pi * CONSTANTS.hbar
    want = h ** 2 / (2 * CONSTANTS.mSr * lam ** 2)
    got = recoil_energy(lam)
    assert got == pytest.approx(want, rel=1e-12)
    assert got / h == pytest.approx(3466.2, rel=2e-4)   # ~3.47 kHz


def test_recoil_energy_domain():
    with pytest.raises(DomainError):
        recoil_energy(0.0)


def test_geometry_derived_quantities(std_geometry):
    g = std_geometry
    assert g.aHo == pytest.approx(
        math.sqrt(CONSTANTS.hbar / (CONSTANTS.mSr * g.omegaZ)), rel=1e-12)
    assert g.omegaPerp == pytest.approx(math.sqrt(g.omegaX * g.omegaY), rel=1e-12)
    assert g.u == pytest.approx(4 * g.omegaPerp * g.scattering_length / g.aHo,
                                rel=1e-12)
    assert g.u < 0.0   # negative scattering length


def test_interaction_zero_scattering(std_geometry):
    import dataclasses
    g = dataclasses.replace(std_geometry, scattering_length=0.0)
    assert g.u == 0.0


def test_interaction_transverse_scaling(std_geometry):
    import dataclasses
    g2 = dataclasses.replace(std_geometry, omegaX=2 * std_geometry.omegaX,
                             omegaY=2 * std_geometry.omegaY)
    assert abs(g2.u) == pytest.approx(2 * abs(std_geometry.u), rel=1e-12)


def test_interaction_hand_evaluated_value(std_geometry):
    # independent hand evaluation: u = 4 sqrt(wx wy) a / sqrt(hbar/(m wz))
    g = std_geometry
    import dataclasses
    g = dataclasses.replace(g, scattering_length=-40 * CONSTANTS.a0)
    a_ho = math.sqrt(1.054571817e-34 / (87 * 1.66053906892e-27 * 2 * math.pi * 700))
    u_hand = 4 * math.sqrt(2 * math.pi * 90e3 * 2 * math.pi * 55e3) \
        * (-40 * 5.29177210903e-11) / a_ho
    assert g.u == pytest.approx(u_hand, rel=1e-10)
    assert g.u / (2 * math.pi) == pytest.approx(-1462.2, rel=1e-3)


def test_u_invariant_under_omega_z_change(std_geometry):
    # u * aHo / omegaPerp is independent of omegaZ at fixed scattering length
    import dataclasses
    g1 = std_geometry
    g2 = dataclasses.replace(g1, omegaZ=3.7 * g1.omegaZ)
    k1 = g1.u * g1.aHo / g1.omegaPerp
    k2 = g2.u * g2.aHo / g2.omegaPerp
    assert k1 == pytest.approx(k2, rel=1e-12)


def test_with_u_roundtrip(std_geometry):
    g = std_geometry.with_u(-123.4)
    assert g.u == pytest.approx(-123.4, rel=1e-12)


def test_lamb_dicke_guard():
    with pytest.raises(DomainError):
        TrapGeometry(1.0, 1.0, 1.0, etaZ=0.5)
