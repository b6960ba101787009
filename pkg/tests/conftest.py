import numpy as np
import pytest

from latticeclock.units import CONSTANTS, TrapGeometry, hz_to_angular


@pytest.fixture(scope="session")
def std_geometry():
    """The workhorse trap: 90/55 kHz transverse, 700 Hz axial, a = -40 a0."""
    return TrapGeometry(
        omegaX=hz_to_angular(90e3),
        omegaY=hz_to_angular(55e3),
        omegaZ=hz_to_angular(700.0),
        etaZ=0.046,
        scattering_length=-40.0 * CONSTANTS.a0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def dense_pair_hamiltonian(om1, om2, delta, u_pair):
    """Independent 4x4 tensor-product construction for N=2 oracles."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex) * 0.5
    sy = np.array([[0, 1j], [-1j, 0]]) * 0.5
    sz = np.array([[-1, 0], [0, 1]], dtype=complex) * 0.5
    i2 = np.eye(2)
    s1 = [np.kron(s, i2) for s in (sx, sy, sz)]
    s2 = [np.kron(i2, s) for s in (sx, sy, sz)]
    dot = sum(a @ b for a, b in zip(s1, s2))
    h = (-delta * (s1[2] + s2[2]) - om1 * s1[0] - om2 * s2[0]
         - u_pair * (dot - 0.25 * np.eye(4)))
    return h


def dense_pair_excitation(om1, om2, delta, u_pair, t):
    h = dense_pair_hamiltonian(om1, om2, delta, u_pair)
    w, v = np.linalg.eigh(h)
    psi0 = np.zeros(4, dtype=complex)
    psi0[0] = 1.0
    psi = v @ (np.exp(-1j * w * t) * (v.conj().T @ psi0))
    counts = np.array([0, 1, 1, 2])
    return float(counts @ np.abs(psi) ** 2) / 2.0
