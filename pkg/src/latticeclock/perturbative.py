"""Analytic treatment of the clock shift to second order in drive inhomogeneity.

Frame and conventions (pinned by the rotated-frame consistency test):

* theta = atan2(mean_rabi, delta), so sin(theta) = Om/W, cos(theta) = delta/W
  with W = sqrt(delta^2 + Om^2).
* Rotated collective axes s^z = -(Om S^x + delta S^z)/W, s^x =
  (-delta S^x + Om S^z)/W, s^y = S^y.  In this frame the homogeneous
  Hamiltonian is W s^z - (U/2) s.s (Dicke energies W m, spin-wave energies
  W m + N U/2) and the drive inhomogeneity enters exactly as
  sum_j dOm_j (cos(theta) s^x_j + sin(theta) s^z_j).
* |g...g> expands over rotated Dicke states with amplitudes
  (-1)^{m+N/2} sqrt(C(N, N/2+m)) cos^{N/2+m}(theta/2) sin^{N/2-m}(theta/2);
  the alternating sign is required by the raising-built phase convention of
  the collective states (the same convention under which the tabulated
  matrix elements below hold) and is dropped in common printed forms.
* N^e = N/2 - cos(theta) <s^z> + sin(theta) <s^x>.

`second_order_excitation` evaluates the exact second-order coefficient by
time-dependent perturbation theory: first-order transitions feed the
S = N/2 - 1 spin-wave manifold, second-order return amplitudes interfere
with the Dicke dynamics, and Parseval collapses the site sums so only the
variance dOm^2 of the couplings survives.  Validated against exact
diagonalization to ~1e-8 for N = 2, 3, 4.

A widely circulated closed form for the same quantity (transcribed verbatim
in `printed_shift_formula`) fails that validation by a parameter-dependent
factor and is retained for reference only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import (DomainError, SignInconsistencyError,
                     SingularConfigurationError, SlopeDegenerateError)
from .modes import ThermalEnsemble, pair_interaction_matrix, rabi_frequency
from .spinmodel import DriveParams
from .units import TrapGeometry

__all__ = [
    "CollectiveBasisParams", "rotation_angle", "wigner_initial_amplitudes",
    "spin_wave_matrix_element", "homogeneous_excitation",
    "homogeneous_excitation_slope", "homogeneous_lock_point",
    "second_order_excitation", "shift_second_order", "printed_shift_formula",
    "thermal_shift", "scaling_fit",
]


def rotation_angle(delta: float, mean_rabi: float) -> float:
    """theta with sin(theta) = Om/sqrt(delta^2+Om^2) (the printed arcsin of
    Om/(delta^2+Om^2) is dimensionally inconsistent and not used)."""
    return math.atan2(mean_rabi, delta)


@dataclass(frozen=True)
class CollectiveBasisParams:
    """Inputs of the collective-basis shift formulas for one mode set."""

    n_particles: int
    mean_rabi: float          # rad/s
    delta_rabi_std: float     # rad/s, sqrt(sum Om^2/N - mean^2)
    mean_u: float             # rad/s
    detuning: float           # rad/s

    def __post_init__(self):
        if self.n_particles < 2:
            raise DomainError("collective-basis shift needs N >= 2")
        if self.delta_rabi_std < 0.0:
            raise DomainError("delta_rabi_std must be >= 0")
        if self.mean_rabi <= 0.0:
            raise DomainError("mean_rabi must be positive")

    @property
    def theta(self) -> float:
        return rotation_angle(self.detuning, self.mean_rabi)

    @classmethod
    def from_mode_set(cls, omegas, mean_u: float, detuning: float):
        omegas = np.asarray(omegas, dtype=float)
        mean = float(omegas.mean())
        std = float(math.sqrt(max(np.mean(omegas ** 2) - mean ** 2, 0.0)))
        return cls(len(omegas), mean, std, mean_u, detuning)


def wigner_initial_amplitudes(n_particles: int, theta: float) -> np.ndarray:
    """Rotation amplitudes sqrt(C(N,k)) cos^{N-k}(th/2) sin^{k}(th/2).

    Entry k corresponds to m = k - N/2 in the printed ordering; the squared
    amplitudes are the binomial weights of the initial state over the Dicke
    ladder and sum to one.  (The relative signs needed alongside the
    tabulated matrix elements are supplied internally by
    `_signed_initial_amplitudes`.)
    """
    if n_particles < 1:
        raise DomainError("n_particles must be >= 1")
    k = np.arange(n_particles + 1)
    c = np.array([math.sqrt(comb(n_particles, int(kk))) for kk in k])
    return c * np.cos(theta / 2.0) ** (n_particles - k) * np.sin(theta / 2.0) ** k


def _signed_initial_amplitudes(n_particles, theta):
    """Amplitudes of |g..g> over rotated Dicke states |N/2, m>, m ascending.

    a_m = (-1)^{m+N/2} sqrt(C(N, N/2+m)) cos^{N/2+m}(th/2) sin^{N/2-m}(th/2);
    theta may be an array (batched over configurations).
    """
    n = n_particles
    th = np.asarray(theta, dtype=float)
    k = np.arange(n + 1)                      # m = k - N/2
    c = np.array([math.sqrt(comb(n, int(kk))) for kk in k])
    cosf = np.cos(th[..., None] / 2.0) ** k
    sinf = np.sin(th[..., None] / 2.0) ** (n - k)
    return (-1.0) ** k * c * cosf * sinf


# --------------------------------------------------------------------------
# Tabulated single-site matrix elements between collective states
# --------------------------------------------------------------------------

_DICKE_KINDS = {"dicke-2sz", "dicke-plus", "dicke-minus"}
_WAVE_KINDS = {"wave-2sz", "wave-plus", "wave-minus"}


def spin_wave_matrix_element(n_particles: int, kind: str, site: int,
                             m_row: float, m_col: float, k_col: int,
                             k_row: int | None = None) -> complex:
    """Single-site operator elements between collective spin states.

    dicke-* kinds: <N/2, m_row | op_site | N/2-1, m_col, k_col>.
    wave-*  kinds: <N/2-1, m_row, k_row | op_site | N/2-1, m_col, k_col>
    (zero for N = 2, where no such elements exist).
    op is 2 s^z, s^+ or s^-; site runs 1..N (enters through the phase
    e^{2 i pi k site / N}).  The s^- Dicke element carries a + sign; the
    commonly printed - is a typo (checked against brute-force construction).
    """
    n = n_particles
    if n < 2:
        raise DomainError("collective families need N >= 2")
    if not 1 <= site <= n:
        raise DomainError("site index must lie in 1..N")
    sw_max = n / 2 - 1
    if abs(m_col) > sw_max + 1e-9:
        raise DomainError("m_col outside the spin-wave representation")
    if not 1 <= k_col <= n - 1:
        raise DomainError("k_col must lie in 1..N-1")

    if kind in _DICKE_KINDS:
        if abs(m_row) > n / 2 + 1e-9:
            raise DomainError("m_row outside the Dicke representation")
        phase = np.exp(2j * math.pi * k_col * site / n)
        root = n * n * (n - 1)
        if kind == "dicke-2sz" and m_row == m_col:
            return phase * 2.0 * math.sqrt(((n / 2) ** 2 - m_row ** 2) / root)
        if kind == "dicke-plus" and m_row == m_col + 1:
            return -phase * math.sqrt((n / 2 + m_row) * (n / 2 + m_row - 1) / root)
        if kind == "dicke-minus" and m_row == m_col - 1:
            return phase * math.sqrt((n / 2 - m_row) * (n / 2 - m_row - 1) / root)
        return 0.0 + 0.0j

    if kind in _WAVE_KINDS:
        if k_row is None:
            raise DomainError("wave-* kinds need k_row")
        if not 1 <= k_row <= n - 1:
            raise DomainError("k_row must lie in 1..N-1")
        if abs(m_row) > sw_max + 1e-9:
            raise DomainError("m_row outside the spin-wave representation")
        if n == 2:
            return 0.0 + 0.0j
        pref = (-2.0 * np.exp(2j * math.pi * (k_col - k_row) * site / n)
                + (n if k_col == k_row else 0.0))
        den = n * (n - 2)
        if kind == "wave-2sz" and m_row == m_col:
            return pref * 2.0 * m_row / den
        if kind == "wave-plus" and m_row == m_col + 1:
            return pref * math.sqrt((n / 2 + m_row - 1) * (n / 2 - m_row)) / den
        if kind == "wave-minus" and m_row == m_col - 1:
            return pref * math.sqrt((n / 2 + m_row) * (n / 2 - m_row - 1)) / den
        return 0.0 + 0.0j

    raise DomainError(f"unknown matrix-element kind {kind!r}")


# --------------------------------------------------------------------------
# Homogeneous (zero-order) lineshape
# --------------------------------------------------------------------------

def homogeneous_excitation(n_particles: int, mean_rabi: float, detuning,
                           t: float):
    """N Om^2/(Om^2+delta^2) sin^2(t sqrt(Om^2+delta^2)/2): excited count."""
    if t < 0.0:
        raise DomainError("t must be >= 0")
    d = np.asarray(detuning, dtype=float)
    w2 = mean_rabi ** 2 + d * d
    val = n_particles * mean_rabi ** 2 / w2 * np.sin(t * np.sqrt(w2) / 2.0) ** 2
    return float(val) if np.ndim(detuning) == 0 else val


def homogeneous_excitation_slope(n_particles: int, mean_rabi, detuning,
                                 t: float):
    """d/d(delta) of the homogeneous excited count (analytic)."""
    d = np.asarray(detuning, dtype=float)
    om = np.asarray(mean_rabi, dtype=float)
    w2 = om * om + d * d
    w = np.sqrt(w2)
    val = (n_particles / 2.0) * d * om * om * (
        t * w * np.sin(t * w) - 2.0 + 2.0 * np.cos(t * w)) / (w2 * w2)
    return float(val) if np.ndim(val) == 0 else val


def homogeneous_lock_point(n_particles: int, mean_rabi, t: float,
                           target_fraction: float, weights=None,
                           span: float = 4.0, grid_points: int = 201) -> float:
    """Outermost positive detuning where the (optionally weighted) homogeneous
    lineshape crosses the target fraction; bisection to 1e-12 relative."""
    om = np.atleast_1d(np.asarray(mean_rabi, dtype=float))
    w = np.ones(om.size) / om.size if weights is None else np.asarray(weights)
    wsum = float(np.sum(w))
    om_bar = float(np.sum(w * om) / wsum)
    om2 = om * om

    def frac(d):
        w2 = om2 + d * d
        tot = np.sum(w * om2 / w2 * np.sin(t * np.sqrt(w2) / 2.0) ** 2)
        return float(tot / wsum)

    grid = np.linspace(0.0, span * om_bar, grid_points)
    vals = np.array([frac(d) for d in grid]) - target_fraction
    idx = None
    for i in range(len(grid) - 2, -1, -1):
        if (vals[i] > 0.0) != (vals[i + 1] > 0.0):
            idx = i
            break
    if idx is None:
        raise DomainError("target fraction not reached by the homogeneous line")
    lo, hi = grid[idx], grid[idx + 1]
    flo = vals[idx]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = frac(mid) - target_fraction
        if (fmid > 0.0) == (flo > 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
        if hi - lo <= 1e-12 * om_bar:
            break
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# Second-order excitation correction (time-dependent perturbation theory)
# --------------------------------------------------------------------------

def _t_integral(x, t):
    """int_0^t e^{i x s} ds, series branch for small |x t|."""
    x = np.asarray(x, dtype=float)
    xt = x * t
    small = np.abs(xt) < 1e-6
    xs = np.where(small, 1.0, x)
    out = (np.exp(1j * xt) - 1.0) / (1j * xs)
    ser = t * (1.0 + 1j * xt / 2.0 - xt ** 2 / 6.0 - 1j * xt ** 3 / 24.0)
    return np.where(small, ser, out)


def _g_integral(x, y, t):
    """int_0^t ds2 e^{i x s2} int_0^{s2} ds1 e^{i y s1}, regular at y -> 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    small = np.abs(y * t) < 1e-6
    ys = np.where(small, 1.0, y)
    main = (_t_integral(x + y, t) - _t_integral(x, t)) / (1j * ys)
    xt = x * t
    tinyx = np.abs(xt) < 1e-6
    xs = np.where(tinyx, 1.0, x)
    lim = (t * np.exp(1j * xt)) / (1j * xs) - (np.exp(1j * xt) - 1.0) / (1j * xs) ** 2
    lim_ser = 0.5 * t * t * (1.0 + 2j * xt / 3.0 - xt * xt / 4.0)
    lim = np.where(tinyx, lim_ser, lim)
    return np.where(small, lim, main)


def _ladder_sx(S: float) -> np.ndarray:
    dim = int(round(2 * S)) + 1
    m = np.arange(-S, S + 1)
    sp = np.zeros((dim, dim))
    for i in range(dim - 1):
        sp[i + 1, i] = math.sqrt(S * (S + 1) - m[i] * (m[i] + 1))
    return 0.5 * (sp + sp.T)


def second_order_excitation(n_particles: int, mean_rabi, mean_u, detuning,
                            t: float):
    """Second-order excitation coefficient: N^e = N^{e(0)} + dOm^2 * this.

    All of mean_rabi, mean_u, detuning may be arrays of a common batch shape
    (thermal averaging); t is scalar.  Exact finite TDPT sums, no fitting.
    """
    n = n_particles
    if n < 2:
        raise DomainError("second-order correction needs N >= 2")
    om = np.asarray(mean_rabi, dtype=float)
    uu = np.asarray(mean_u, dtype=float)
    dl = np.asarray(detuning, dtype=float)
    om, uu, dl = np.broadcast_arrays(om, uu, dl)
    shape = om.shape
    om, uu, dl = om.ravel(), uu.ravel(), dl.ravel()

    W = np.hypot(om, dl)
    th = np.arctan2(om, dl)
    Q = n * uu / 2.0
    cth, sth = np.cos(th), np.sin(th)
    ma = np.arange(-n / 2, n / 2 + 1)
    mb = np.arange(-(n / 2 - 1), n / 2 - 1 + 1)
    A = _signed_initial_amplitudes(n, th)                      # (M, n+1)

    root = n * n * (n - 1)
    gz = np.sqrt(np.maximum((n / 2) ** 2 - ma ** 2, 0.0) / root)
    gp = np.sqrt(np.maximum((n / 2 + ma) * (n / 2 + ma - 1), 0.0) / root)
    gm = np.sqrt(np.maximum((n / 2 - ma) * (n / 2 - ma - 1), 0.0) / root)

    # coupling u[m_b, m_a] per config: sin(th) g_z on m_b = m_a,
    # -cos(th)/2 g_+ on m_b = m_a - 1, +cos(th)/2 g_- on m_b = m_a + 1
    nb, na = len(mb), len(ma)
    U = np.zeros((om.size, nb, na))
    for jb, mt in enumerate(mb):
        for ja, m in enumerate(ma):
            if mt == m:
                U[:, jb, ja] += sth * gz[ja]
            if mt == m - 1:
                U[:, jb, ja] += -0.5 * cth * gp[ja]
            if mt == m + 1:
                U[:, jb, ja] += +0.5 * cth * gm[ja]

    Delta = (W[:, None, None] * (mb[None, :, None] - ma[None, None, :])
             + Q[:, None, None])                               # (M, nb, na)
    Td = _t_integral(Delta, t)
    b1 = -1j * np.einsum("mba,ma,mba->mb", U, A, Td)           # (M, nb)

    c2 = np.zeros((om.size, na), dtype=complex)
    for jap in range(na):
        x = W[:, None] * (ma[jap] - mb[None, :]) - Q[:, None]  # (M, nb)
        inner = np.einsum("mba,ma,mba->mb", U, A,
                          _g_integral(x[:, :, None], Delta, t))
        c2[:, jap] = -np.einsum("mb,mb->m", U[:, :, jap], inner)

    sxa = _ladder_sx(n / 2)
    phase_a = np.exp(1j * W[:, None] * ma[None, :] * t)
    # <psi0|O|psi2> with O = N/2 - cos th s^z + sin th s^x
    bra = A * phase_a
    ket = c2 / phase_a
    t1 = 2.0 * np.real(
        np.einsum("mp,p,mp->m", bra, -ma, ket) * cth
        + np.einsum("mp,pq,mq->m", bra, sxa, ket) * sth)
    t1_id = (n / 2.0) * 2.0 * np.real(np.einsum("mp,mp->m", A.astype(complex), c2))

    ph_b = np.exp(-1j * (W[:, None] * mb[None, :] + Q[:, None]) * t)
    bb = b1 * ph_b
    if n > 2:
        sxb = _ladder_sx(n / 2 - 1)
        t2 = np.real(
            np.einsum("mp,p,mp->m", np.conj(bb), -mb, bb) * cth
            + np.einsum("mp,pq,mq->m", np.conj(bb), sxb, bb) * sth)
    else:
        t2 = np.zeros(om.size)
    t2_id = (n / 2.0) * np.real(np.einsum("mp,mp->m", np.conj(bb), bb))

    out = (t1 + t1_id + t2 + t2_id) * n * n
    return float(out[0]) if shape == () else out.reshape(shape)


def shift_second_order(params: CollectiveBasisParams, t: float,
                       delta0: float | None = None,
                       target_fraction: float = 0.3,
                       resonance_rtol: float = 1e-6,
                       slope_floor: float | None = None) -> float:
    """Closed second-order collisional shift (rad/s) for one mode set.

    delta0 defaults to the zero-order lock point of the homogeneous line at
    target_fraction.  Raises SingularConfigurationError near the spin-wave
    resonance N^2 U^2/4 = delta^2 + Om^2 (the expansion degrades there) and
    SlopeDegenerateError when the zero-order slope is too small to divide by.
    """
    n, om = params.n_particles, params.mean_rabi
    if delta0 is None:
        delta0 = homogeneous_lock_point(n, om, t, target_fraction)
    w2 = om * om + delta0 * delta0
    res = n * n * params.mean_u ** 2 / 4.0
    if abs(res - w2) < resonance_rtol * w2:
        raise SingularConfigurationError(
            "N^2 U^2/4 within relative %.0e of delta^2+Om^2" % resonance_rtol)
    slope = homogeneous_excitation_slope(n, om, delta0, t)
    floor = slope_floor if slope_floor is not None else 1e-12 * n * t
    if abs(slope) < floor:
        raise SlopeDegenerateError(f"zero-order slope {slope:.3e} below floor")
    ne2 = second_order_excitation(n, om, params.mean_u,
                                  np.array([delta0, -delta0]), t)
    return float(-params.delta_rabi_std ** 2 * (ne2[0] - ne2[1]) / (2.0 * slope))


def printed_shift_formula(params: CollectiveBasisParams, t: float,
                          delta0: float) -> float:
    """Verbatim transcription of the circulated closed form C/(4 pi D).

    Kept for reference: validation against the exact oracle shows a
    parameter-dependent disagreement (factors ~4-11 at N=2), so this is NOT
    used by `shift_second_order` or `thermal_shift`.
    """
    n, om, dom, uu = (params.n_particles, params.mean_rabi,
                      params.delta_rabi_std, params.mean_u)
    d2 = delta0 * delta0
    o2 = om * om
    w2 = d2 + o2
    w = math.sqrt(w2)
    nu = n * uu
    D = delta0 * o2 * (-2.0 + 2.0 * math.cos(t * w) + t * w * math.sin(t * w)) / w2 ** 2
    big = (
        2 * nu * om ** 4 * w2 ** 2
        - 2 * nu * math.cos(t * nu / 2) * o2 * (o2 - nu * nu / 4.0) * w2 ** 2
        + nu ** 5 * o2 / 32.0 * (-7 * d2 + 2 * o2)
        + nu ** 3 / 8.0 * math.cos(t * w) ** 2 * o2 * (w2 - nu * nu / 4.0) * (d2 + 2 * o2)
        - nu ** 3 / 8.0 * (8 * d2 ** 3 + 5 * d2 ** 2 * o2 + 3 * d2 * o2 ** 2 + 6 * o2 ** 3)
        + 2 * nu * math.cos(t * w) * (
            -math.cos(t * nu / 2) * (o2 - nu * nu / 4.0) * w2 ** 2 * (2 * d2 + o2)
            + o2 * (nu ** 4 * d2 / 32.0 + w2 ** 2 * (2 * d2 + o2)
                    - nu * nu / 4.0 * w2 * (5 * d2 + o2)))
        + math.sin(t * w) * (
            -t * nu * o2 * w * (w2 - nu * nu / 4.0)
            * (nu * nu / 4.0 * (d2 - 2 * o2) + 2 * o2 * w2)
            + 4 * w2 ** 2.5 * (nu ** 4 / 16.0 + o2 * o2
                               + nu * nu / 4.0 * (d2 - 2 * o2)) * math.sin(t * nu / 2)
            - nu ** 3 / 8.0 * o2 * (w2 - nu * nu / 4.0) * (d2 + 2 * o2) * math.sin(t * w)))
    C = 2.0 * dom ** 2 * delta0 / (nu * nu * w2 ** 3 * (w2 - nu * nu / 4.0) ** 2) * big
    return C / (4.0 * math.pi * D)


def thermal_shift(ensemble: ThermalEnsemble, drive: DriveParams,
                  geometry: TrapGeometry,
                  slope_floor: float | None = None,
                  delta0: float | None = None) -> float:
    """Boltzmann-averaged second-order shift (rad/s).

    Numerator (dOm^2-weighted odd part of the second-order correction) and
    denominator (zero-order slope) are averaged separately over the ensemble
    and then ratioed; the common lock point comes from the thermally
    averaged homogeneous line at drive.target_excitation.
    """
    if geometry.u == 0.0:
        return 0.0
    modes = ensemble.mode_array()
    weights = ensemble.weight_array()
    n = modes.shape[1]
    if n < 2:
        raise DomainError("thermal_shift needs N >= 2")
    omega_all = np.atleast_1d(rabi_frequency(np.arange(ensemble.n_max + 1),
                                             drive.omega0B, geometry.etaZ,
                                             geometry.etaY))
    om_cfg = omega_all[modes]                       # (M, n)
    om_bar = om_cfg.mean(axis=1)
    dom2 = np.maximum((om_cfg ** 2).mean(axis=1) - om_bar ** 2, 0.0)
    umat = pair_interaction_matrix(geometry.u, ensemble.n_max)
    uu = np.zeros(len(weights))
    npairs = n * (n - 1)
    for j in range(n):
        for jp in range(n):
            if jp != j:
                uu += umat[modes[:, j], modes[:, jp]]
    uu /= npairs

    t = drive.pulse_time
    if delta0 is None:
        # u-independent: reusable across an interaction sweep
        delta0 = homogeneous_lock_point(n, om_bar, t, drive.target_excitation,
                                        weights=weights)
    ne2_plus = second_order_excitation(n, om_bar, uu, delta0, t)
    ne2_minus = second_order_excitation(n, om_bar, uu, -delta0, t)
    num = float(np.sum(weights * dom2 * (ne2_plus - ne2_minus)))
    den = float(np.sum(weights * homogeneous_excitation_slope(n, om_bar, delta0, t)))
    floor = slope_floor if slope_floor is not None else 1e-12 * n * t
    if abs(den) < floor:
        raise SlopeDegenerateError(f"averaged zero-order slope {den:.3e} below floor")
    return -num / (2.0 * den)


def scaling_fit(u_values, shifts, regime: str = "weak"):
    """Least-squares power law |shift| = prefactor * u^exponent.

    Requires >= 1 decade of u span and a sign-consistent shift column;
    returns (exponent, prefactor, sign).
    """
    u = np.asarray(u_values, dtype=float)
    s = np.asarray(shifts, dtype=float)
    if regime not in ("weak", "strong"):
        raise DomainError(f"unknown regime {regime!r}")
    if u.size != s.size or u.size < 2:
        raise DomainError("need matching u/shift tables with >= 2 rows")
    if np.any(u <= 0.0):
        raise DomainError("u values must be positive")
    if u.max() / u.min() < 10.0 * (1 - 1e-9):
        raise DomainError("fit window must span at least one decade in u")
    if np.any(s == 0.0) or (np.any(s > 0) and np.any(s < 0)):
        raise SignInconsistencyError("shift signs inconsistent in the fit window")
    sign = 1.0 if s[0] > 0 else -1.0
    slope, intercept = np.polyfit(np.log(u), np.log(np.abs(s)), 1)
    return float(slope), float(math.exp(intercept)), sign
