import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_pair_excitation, dense_pair_hamiltonian
from latticeclock.errors import CapacityError, DomainError
from latticeclock.modes import ModeConfig, pair_interaction_matrix
from latticeclock.spinmodel import (DriveParams, build_hamiltonian, evolve,
                                    excited_fraction, excited_population,
                                    ground_state, pair_excitation_batch,
                                    site_operator, _SX, _SY, _SZ)
from latticeclock.units import CONSTANTS, TrapGeometry, hz_to_angular


@pytest.fixture(scope="module")
def flat_geometry():
    """eta = 0: every mode couples at the bare Rabi frequency."""
    return TrapGeometry(hz_to_angular(90e3), hz_to_angular(55e3),
                        hz_to_angular(700.0), etaZ=0.0,
                        scattering_length=-40 * CONSTANTS.a0)


def test_drive_params_validation():
    with pytest.raises(DomainError):
        DriveParams(omega0B=0.0)
    with pytest.raises(DomainError):
        DriveParams(omega0B=1.0, pulse_time=-1.0)
    with pytest.raises(DomainError):
        DriveParams(omega0B=1.0, target_excitation=1.5)
    d = DriveParams.pi_pulse(0.08)
    assert d.omega0B * d.pulse_time == pytest.approx(math.pi, rel=1e-12)


def test_single_spin_matrix(flat_geometry):
    drive = DriveParams(omega0B=2.0, detuning=0.7)
    h = build_hamiltonian(ModeConfig((0,), 1.0), drive, flat_geometry)
    # basis (g, e): -delta S^z - Omega S^x
    want = np.array([[0.35, -1.0], [-1.0, -0.35]])
    assert np.allclose(h.matrix, want, atol=1e-14)


def test_hermiticity_and_capacity(flat_geometry, rng):
    drive = DriveParams(omega0B=1.3, detuning=0.2)
    cfg = ModeConfig(tuple(sorted(rng.choice(50, size=4, replace=False).tolist())), 1.0)
    h = build_hamiltonian(cfg, drive, flat_geometry)
    assert np.max(np.abs(h.matrix - h.matrix.conj().T)) < 1e-12
    with pytest.raises(CapacityError):
        build_hamiltonian(ModeConfig(tuple(range(13)), 1.0), drive, flat_geometry)


def test_pair_spectrum_paper_eigenvalues(flat_geometry, rng):
    """N=2, dOmega=0: eigenvalues are {-W, 0, +W, U} with W = sqrt(Om^2+d^2)."""
    for _ in range(20):
        om = rng.uniform(0.5, 5.0)
        delta = rng.uniform(-3.0, 3.0)
        u = rng.uniform(-2000.0, 2000.0)
        geo = flat_geometry.with_u(u)
        drive = DriveParams(omega0B=om, detuning=delta)
        cfg = ModeConfig((0, 3), 1.0)
        h = build_hamiltonian(cfg, drive, geo)
        upair = pair_interaction_matrix(u, 3)[0, 3]
        got = np.sort(np.linalg.eigvalsh(h.matrix))
        w = math.hypot(om, delta)
        want = np.sort([-w, 0.0, w, upair])
        assert np.max(np.abs(got - want)) < 1e-10 * max(1.0, abs(upair), w)


def test_exact_pairwise_matches_tensor_oracle(flat_geometry, rng):
    """N=3 Hamiltonian equals an independent site-by-site tensor build."""
    drive = DriveParams(omega0B=1.7, detuning=-0.45)
    cfg = ModeConfig((1, 4, 9), 1.0)
    geo = flat_geometry.with_u(321.0)
    h = build_hamiltonian(cfg, drive, geo, "exact-pairwise")
    umat = pair_interaction_matrix(geo.u, 9)
    dim = 8
    want = np.zeros((dim, dim), dtype=complex)
    for j in range(3):
        want -= drive.detuning * site_operator(_SZ, j, 3)
        want -= 1.7 * site_operator(_SX, j, 3)
    for j in range(3):
        for jp in range(3):
            if j == jp:
                continue
            dot = sum(site_operator(o, j, 3) @ site_operator(o, jp, 3)
                      for o in (_SX, _SY, _SZ))
            mj, mjp = cfg.modes[j], cfg.modes[jp]
            want -= umat[mj, mjp] / 2.0 * (dot - 0.25 * np.eye(dim))
    assert np.max(np.abs(h.matrix - want)) < 1e-12


def test_mean_u_commutes_with_s_squared(flat_geometry):
    drive = DriveParams(omega0B=1.0, detuning=0.3)
    cfg = ModeConfig((0, 5, 11), 1.0)
    h = build_hamiltonian(cfg, drive, flat_geometry.with_u(500.0), "mean-U")
    s2 = sum((sum(site_operator(o, j, 3) for j in range(3))) @
             (sum(site_operator(o, j, 3) for j in range(3)))
             for o in (_SX, _SY, _SZ))
    comm = h.matrix @ s2 - s2 @ h.matrix
    assert np.max(np.abs(comm)) < 1e-10


def test_evolution_basics(flat_geometry):
    drive = DriveParams(omega0B=2.0)
    cfg = ModeConfig((0,), 1.0)
    h = build_hamiltonian(cfg, drive, flat_geometry)
    psi0 = evolve(h, 0.0)
    assert np.allclose(psi0, ground_state(1))
    # resonant pi pulse: full transfer
    psi = evolve(h, math.pi / 2.0)
    assert excited_fraction(psi) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(DomainError):
        evolve(h, math.inf)


def test_unitarity_and_number_conservation(flat_geometry, rng):
    drive = DriveParams(omega0B=1.1, detuning=0.4)
    cfg = ModeConfig((0, 2, 7), 1.0)
    h = build_hamiltonian(cfg, drive, flat_geometry.with_u(-800.0))
    for t in rng.uniform(0.0, 20.0, size=5):
        psi = evolve(h, t)
        assert abs(np.linalg.norm(psi) - 1.0) < 1e-10
        ne = excited_population(psi)
        ng = 3 - ne
        assert ne + ng == pytest.approx(3.0, abs=1e-10)


def test_excited_fraction_limits():
    assert excited_fraction(np.array([1, 0, 0, 0], dtype=complex)) == 0.0
    assert excited_fraction(np.array([0, 0, 0, 1], dtype=complex)) == 1.0
    plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
    assert excited_fraction(plus) == pytest.approx(0.5, abs=1e-12)


def test_s_squared_conserved_homogeneous_mean_u(flat_geometry):
    """<S^2>(t) constant for homogeneous drive + mean-U interaction."""
    drive = DriveParams(omega0B=1.5, detuning=0.6)
    cfg = ModeConfig((0, 3, 8), 1.0)
    h = build_hamiltonian(cfg, drive, flat_geometry.with_u(700.0), "mean-U")
    s2 = sum((sum(site_operator(o, j, 3) for j in range(3))) @
             (sum(site_operator(o, j, 3) for j in range(3)))
             for o in (_SX, _SY, _SZ))
    vals = []
    for t in (0.0, 0.3, 1.1, 2.9):
        psi = evolve(h, t)
        vals.append(float(np.real(psi.conj() @ s2 @ psi)))
    assert np.ptp(vals) < 1e-8


def test_permutation_symmetry(flat_geometry):
    """Permuting identical-coupling mode labels leaves N^e(t) unchanged."""
    drive = DriveParams(omega0B=1.2, detuning=0.1)
    geo = flat_geometry.with_u(450.0)
    t = 1.7
    base = None
    for perm in ((2, 5, 9), (9, 2, 5), (5, 9, 2)):
        modes = tuple(sorted(perm))
        h = build_hamiltonian(ModeConfig(modes, 1.0), drive, geo)
        ne = excited_fraction(evolve(h, t))
        if base is None:
            base = ne
        assert ne == pytest.approx(base, abs=1e-12)


def test_per_mode_detuning_hook(flat_geometry):
    drive = DriveParams(omega0B=1.0, detuning=0.0)
    cfg = ModeConfig((0, 4), 1.0)
    h0 = build_hamiltonian(cfg, drive, flat_geometry)
    h1 = build_hamiltonian(cfg, drive, flat_geometry, extra_detuning={4: 0.8})
    assert np.max(np.abs(h0.matrix - h1.matrix)) > 0.1
    want = h0.matrix - 0.8 * site_operator(_SZ, 1, 2)
    assert np.allclose(h1.matrix, want, atol=1e-14)


def test_pair_evolution_vs_rk4_oracle(flat_geometry):
    """Inhomogeneous-drive pair dynamics against an RK4 integrator."""
    om1, om2, delta, u = 1.0, 0.82, 0.37, 4.1
    t_final = 2.3
    h = dense_pair_hamiltonian(om1, om2, delta, u)
    psi = np.zeros(4, dtype=complex)
    psi[0] = 1.0
    steps = 4000
    dt = t_final / steps
    for _ in range(steps):
        k1 = -1j * h @ psi
        k2 = -1j * h @ (psi + dt / 2 * k1)
        k3 = -1j * h @ (psi + dt / 2 * k2)
        k4 = -1j * h @ (psi + dt * k3)
        psi = psi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    counts = np.array([0, 1, 1, 2])
    rk4 = float(counts @ np.abs(psi) ** 2) / 2.0
    fast = pair_excitation_batch(np.array([om1]), np.array([om2]),
                                 np.array([u]), delta, t_final)[0]
    assert fast == pytest.approx(rk4, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(om1=st.floats(0.3, 3.0), ratio=st.floats(0.7, 1.0),
       delta=st.floats(-4.0, 4.0), u=st.floats(-40.0, 40.0),
       t=st.floats(0.0, 8.0))
def test_pair_batch_matches_dense_oracle(om1, ratio, delta, u, t):
    om2 = om1 * ratio
    want = dense_pair_excitation(om1, om2, delta, u, t)
    got = pair_excitation_batch(np.array([om1]), np.array([om2]),
                                np.array([u]), delta, t)[0]
    assert got == pytest.approx(want, abs=1e-11)


def test_pair_batch_backends_agree(rng):
    import latticeclock.spinmodel as sm
    om1 = rng.uniform(0.5, 2.0, 300)
    om2 = om1 * rng.uniform(0.85, 1.0, 300)
    uu = rng.uniform(-60.0, 60.0, 300)
    a = pair_excitation_batch(om1, om2, uu, 0.45, 3.3, backend="numpy")
    if sm._HAVE_NUMBA:
        b = pair_excitation_batch(om1, om2, uu, 0.45, 3.3, backend="numba")
        assert np.max(np.abs(a - b)) < 1e-12
    assert np.all((a > -1e-12) & (a < 1.0 + 1e-12))
