"""Exact dynamics of the driven interacting N-spin system.

The Hamiltonian (hbar = 1, all frequencies angular):

    H = -delta S^z - sum_j Omega_{n_j} S^x_{n_j}
        - sum_{j != j'} (U_{n_j n_{j'}}/2) (S_j . S_j' - 1/4)

in the product basis |sigma_1 ... sigma_N>, sigma in {g,e}, with bit j = 1
meaning e and the first mode the most significant bit.  The -1/4 keeps the
fully symmetric (non-interacting) states at zero interaction energy, so for
N=2, dOmega=0, delta=0 the spectrum is {-Om, 0, +Om, U}.

`pair_excitation_batch` is the production path for thermal N=2 ensembles:
the 4x4 problem reduces in the basis (T0, (T- + T+)/sqrt2, (T- - T+)/sqrt2, S)
to a symmetric tridiagonal chain with off-diagonals (-Om_bar, delta, dOm) and
diagonal (0,0,0,U), solved per configuration by a Jacobi sweep (numba kernel,
numpy fallback).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError
from .modes import ModeConfig, pair_interaction_matrix, rabi_frequency
from .units import TrapGeometry

__all__ = [
    "DriveParams", "SpinHamiltonian", "build_hamiltonian", "evolve",
    "excited_fraction", "excited_population", "pair_excitation_batch",
    "MAX_SPINS",
]

MAX_SPINS = 12

_SX = np.array([[0.0, 1.0], [1.0, 0.0]]) * 0.5
_SY = np.array([[0.0, 1.0j], [-1.0j, 0.0]]) * 0.5   # basis order (g, e)
_SZ = np.array([[-1.0, 0.0], [0.0, 1.0]]) * 0.5


@dataclass(frozen=True)
class DriveParams:
    """Clock-laser drive: bare Rabi frequency, detuning, pulse, lock target."""

    omega0B: float                   # rad/s
    detuning: float = 0.0            # rad/s
    pulse_time: float = 0.08         # s; 80 ms spectroscopy pulse default
    target_excitation: float = 0.3   # lock level as a fraction in (0, 1)

    def __post_init__(self):
        if not (self.omega0B > 0.0):
            raise DomainError("omega0B must be positive")
        if not (self.pulse_time > 0.0):
            raise DomainError("pulse_time must be positive")
        if not (0.0 < self.target_excitation < 1.0):
            raise DomainError("target_excitation must lie in (0, 1)")
        if not math.isfinite(self.detuning):
            raise DomainError("detuning must be finite")

    @classmethod
    def pi_pulse(cls, pulse_time: float = 0.08, **kw) -> "DriveParams":
        """Drive whose bare Rabi frequency makes the pulse a pi pulse."""
        return cls(omega0B=math.pi / pulse_time, pulse_time=pulse_time, **kw)


def site_operator(op: np.ndarray, j: int, n: int) -> np.ndarray:
    """Embed a single-spin operator at site j of an n-spin product space."""
    out = np.array([[1.0 + 0.0j]])
    for k in range(n):
        out = np.kron(out, op if k == j else np.eye(2))
    return out


@dataclass(frozen=True)
class SpinHamiltonian:
    """Dense Hermitian matrix plus the labels it was built from."""

    matrix: np.ndarray
    mode_labels: tuple
    omegas: tuple
    interaction_mode: str
    detuning: float
    mean_u: float

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_particles(self) -> int:
        return len(self.mode_labels)


def build_hamiltonian(config: ModeConfig, drive: DriveParams,
                      geometry: TrapGeometry,
                      interaction_mode: str = "exact-pairwise",
                      extra_detuning: dict | None = None) -> SpinHamiltonian:
    """Assemble the dense spin Hamiltonian for one mode configuration.

    interaction_mode 'exact-pairwise' uses U_{n,n'} = u I_{n,n'}/pi per pair;
    'mean-U' replaces every pair coupling by the configuration mean.
    extra_detuning optionally maps mode index -> additional per-mode detuning
    (rad/s), the hook for detuning inhomogeneity; no functional form is
    imposed.
    """
    n = len(config.modes)
    if n > MAX_SPINS:
        raise CapacityError(f"N={n} exceeds dense-capacity limit {MAX_SPINS}")
    omegas = rabi_frequency(np.array(config.modes), drive.omega0B,
                            geometry.etaZ, geometry.etaY)
    omegas = np.atleast_1d(omegas)
    if not np.all(np.isfinite(omegas)) or not math.isfinite(drive.detuning):
        raise DomainError("non-finite drive inputs")
    if interaction_mode not in ("exact-pairwise", "mean-U"):
        raise DomainError(f"unknown interaction mode {interaction_mode!r}")

    if n > 1:
        umat = pair_interaction_matrix(geometry.u, max(config.modes))
        pair_u = np.array([[umat[a, b] for b in config.modes] for a in config.modes])
        mean_u = float((pair_u.sum() - np.trace(pair_u)) / (n * (n - 1)))
    else:
        pair_u = np.zeros((1, 1))
        mean_u = 0.0
    if interaction_mode == "mean-U" and n > 1:
        pair_u = np.full((n, n), mean_u)

    dim = 2 ** n
    H = np.zeros((dim, dim), dtype=complex)
    sz_total = sum(site_operator(_SZ, j, n) for j in range(n))
    H -= drive.detuning * sz_total
    if extra_detuning:
        for j, mode in enumerate(config.modes):
            dd = extra_detuning.get(mode, 0.0)
            if dd:
                H -= dd * site_operator(_SZ, j, n)
    for j in range(n):
        H -= omegas[j] * site_operator(_SX, j, n)
    for j in range(n):
        for jp in range(n):
            if jp == j:
                continue
            dot = sum(site_operator(o, j, n) @ site_operator(o, jp, n)
                      for o in (_SX, _SY, _SZ))
            H -= (pair_u[j, jp] / 2.0) * (dot - 0.25 * np.eye(dim))
    return SpinHamiltonian(H, tuple(config.modes), tuple(float(o) for o in omegas),
                           interaction_mode, drive.detuning, mean_u)


def ground_state(n: int) -> np.ndarray:
    """All atoms in g: the first product-basis vector."""
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1.0
    return psi


def evolve(hamiltonian: SpinHamiltonian, t: float,
           psi0: np.ndarray | None = None) -> np.ndarray:
    """|psi(t)> = exp(-i H t)|g...g> via Hermitian eigendecomposition."""
    if not math.isfinite(t):
        raise DomainError("evolution time must be finite")
    if psi0 is None:
        psi0 = ground_state(hamiltonian.n_particles)
    w, v = np.linalg.eigh(hamiltonian.matrix)
    return v @ (np.exp(-1j * w * t) * (v.conj().T @ psi0))


def excited_population(state: np.ndarray) -> float:
    """N^e = N/2 + <S^z>: expected number of atoms in e."""
    dim = state.shape[0]
    n = int(round(math.log2(dim)))
    bits = np.array([bin(i).count("1") for i in range(dim)])
    return float(np.sum(bits * np.abs(state) ** 2))


def excited_fraction(state: np.ndarray) -> float:
    """Excited-state fraction (N/2 + <S^z>)/N in [0, 1]."""
    dim = state.shape[0]
    n = int(round(math.log2(dim)))
    return excited_population(state) / n


# --------------------------------------------------------------------------
# Batched N=2 fast path
# --------------------------------------------------------------------------

def _pair_excitation_numpy(om1, om2, u_pair, delta, t):
    m = om1.shape[0]
    om = 0.5 * (om1 + om2)
    d = 0.5 * (om1 - om2)
    A = np.zeros((m, 4, 4))
    A[:, 0, 1] = A[:, 1, 0] = -om
    A[:, 1, 2] = A[:, 2, 1] = delta
    A[:, 2, 3] = A[:, 3, 2] = d
    A[:, 3, 3] = u_pair
    w, v = np.linalg.eigh(A)
    c0 = (v[:, 1, :] + v[:, 2, :]) / math.sqrt(2.0)
    amp = np.exp(-1j * w * t) * c0
    p1 = np.einsum("mk,mk->m", v[:, 1, :], amp)
    p2 = np.einsum("mk,mk->m", v[:, 2, :], amp)
    return 0.5 - np.real(p1 * np.conj(p2))


try:  # numba kernel; identical math, ~4x faster on a laptop
    import numba as _nb

    _nb.config.THREADING_LAYER = "workqueue"   # quiet, portable default

    @_nb.njit(cache=True)
    def _jacobi4(a, v):
        for _ in range(16):
            off = (a[0, 1] ** 2 + a[0, 2] ** 2 + a[0, 3] ** 2
                   + a[1, 2] ** 2 + a[1, 3] ** 2 + a[2, 3] ** 2)
            sc = a[0, 0] ** 2 + a[1, 1] ** 2 + a[2, 2] ** 2 + a[3, 3] ** 2 + 1e-300
            if off <= 1e-30 * sc:
                break
            for p in range(3):
                for q in range(p + 1, 4):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                    if tau >= 0.0:
                        tt = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                    else:
                        tt = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                    c = 1.0 / np.sqrt(1.0 + tt * tt)
                    s = tt * c
                    app = a[p, p]
                    aqq = a[q, q]
                    a[p, p] = app - tt * apq
                    a[q, q] = aqq + tt * apq
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for r in range(4):
                        if r != p and r != q:
                            arp = a[r, p]
                            arq = a[r, q]
                            a[r, p] = c * arp - s * arq
                            a[p, r] = a[r, p]
                            a[r, q] = s * arp + c * arq
                            a[q, r] = a[r, q]
                    for r in range(4):
                        vrp = v[r, p]
                        vrq = v[r, q]
                        v[r, p] = c * vrp - s * vrq
                        v[r, q] = s * vrp + c * vrq

    @_nb.njit(cache=True, parallel=True)
    def _pair_excitation_numba(om1, om2, u_pair, delta, t):
        m = om1.shape[0]
        out = np.empty(m)
        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        for i in _nb.prange(m):
            a = np.zeros((4, 4))
            v = np.eye(4)
            om = 0.5 * (om1[i] + om2[i])
            d = 0.5 * (om1[i] - om2[i])
            a[0, 1] = -om
            a[1, 0] = -om
            a[1, 2] = delta
            a[2, 1] = delta
            a[2, 3] = d
            a[3, 2] = d
            a[3, 3] = u_pair[i]
            _jacobi4(a, v)
            re1 = 0.0
            im1 = 0.0
            re2 = 0.0
            im2 = 0.0
            for k in range(4):
                ck = (v[1, k] + v[2, k]) * inv_sqrt2
                ph = -a[k, k] * t
                cr = np.cos(ph) * ck
                ci = np.sin(ph) * ck
                re1 += v[1, k] * cr
                im1 += v[1, k] * ci
                re2 += v[2, k] * cr
                im2 += v[2, k] * ci
            out[i] = 0.5 - (re1 * re2 + im1 * im2)
        return out

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover - env without numba
    _HAVE_NUMBA = False


def pair_excitation_batch(om1: np.ndarray, om2: np.ndarray, u_pair: np.ndarray,
                          delta: float, t: float,
                          backend: str = "auto") -> np.ndarray:
    """Excited fraction after time t for many N=2 configurations at once.

    om1, om2, u_pair are per-configuration arrays (rad/s); identical results
    (to ~1e-14) from the numba kernel and the numpy batched-eigh fallback.
    """
    om1 = np.ascontiguousarray(om1, dtype=float)
    om2 = np.ascontiguousarray(om2, dtype=float)
    u_pair = np.ascontiguousarray(u_pair, dtype=float)
    if backend == "auto":
        backend = "numba" if _HAVE_NUMBA else "numpy"
    if backend == "numba":
        if not _HAVE_NUMBA:
            raise DomainError("numba backend requested but numba is unavailable")
        return _pair_excitation_numba(om1, om2, u_pair, float(delta), float(t))
    if backend != "numpy":
        raise DomainError(f"unknown backend {backend!r}")
    return _pair_excitation_numpy(om1, om2, u_pair, float(delta), float(t))
