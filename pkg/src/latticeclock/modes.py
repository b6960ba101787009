"""Axial-mode machinery: per-mode Rabi couplings, Hermite mode-overlap
integrals, interaction coefficients, and Boltzmann-weighted mode ensembles.

Numerical core
--------------
Overlap integrals are Gauss-Hermite quadratures of products of *unit-
normalized* harmonic oscillator eigenfunctions psi_n.  Two tricks keep this
exact and overflow-free up to mode indices of a few thousand:

* psi_n is evaluated by the three-term recurrence with a per-node power-of-two
  exponent carried separately, so the classically forbidden region (where
  float64 underflows) is traversed without losing the recurrence (the plain
  recurrence dies: once two consecutive values underflow to zero it can never
  recover, even though psi_n itself comes back to O(1) near its turning point).

* the Gauss-Hermite *total* weights w_i e^{x_i^2} come from the Christoffel
  identity 1/sum_k psi_k(x_i)^2, which never under- or overflows; the
  exponential of the weight is absorbed into the bounded psi factors of the
  integrand.  With m >= n + n' + 1 nodes the quadrature is exact.

The widely printed normalization of the overlap coefficient omits the
sqrt(pi) factors of the Hermite norm; `overlap_coefficient` follows that
printed convention (I(0,0) = sqrt(pi/2)) while the physical contact matrix
element used in the spin Hamiltonian is printed/pi (see
`pair_interaction_matrix`).  The two conventions differ by the constant pi
only; the thermal-average closed form u sqrt(pi/40 * hbar omega/(kB T))
agrees with the physical one to ~1% and pins the choice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite

from .errors import CapacityError, ConvergenceError, DomainError
from .units import CONSTANTS, Constants

__all__ = [
    "hermite_functions", "gauss_hermite_total_weights", "overlap_coefficient",
    "overlap_matrix", "pair_interaction_matrix", "laguerre_values",
    "rabi_frequency", "ModeConfig", "ThermalEnsemble", "thermal_ensemble",
    "mean_interaction", "write_ensemble", "read_ensemble",
]


# --------------------------------------------------------------------------
# Hermite functions and quadrature
# --------------------------------------------------------------------------

def hermite_functions(nmax: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal oscillator eigenfunctions psi_k(x) for k = 0..nmax.

    Returns an array of shape (nmax+1, len(x)).  Underflow-safe: a shared
    per-node base-2 exponent rides along the recurrence and values are
    materialized with ldexp (true zeros where psi really is below 1e-308).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((nmax + 1, x.size))
    # represent psi_k = f * 2^scale
    scale = np.rint(-0.5 * x * x / math.log(2.0)).astype(np.int64)
    f_cur = math.pi ** -0.25 * np.exp(-0.5 * x * x - scale * math.log(2.0))
    f_prev = np.zeros_like(x)
    out[0] = np.ldexp(f_cur, scale)
    for k in range(nmax):
        f_next = (math.sqrt(2.0 / (k + 1)) * x * f_cur
                  - math.sqrt(k / (k + 1.0)) * f_prev)
        f_prev, f_cur = f_cur, f_next
        amax = np.maximum(np.abs(f_cur), np.abs(f_prev))
        big = amax > 2.0 ** 512
        if np.any(big):
            f_cur[big] = np.ldexp(f_cur[big], -1024)
            f_prev[big] = np.ldexp(f_prev[big], -1024)
            scale[big] += 1024
        small = (amax < 2.0 ** -512) & (amax > 0.0)
        if np.any(small):
            f_cur[small] = np.ldexp(f_cur[small], 1024)
            f_prev[small] = np.ldexp(f_prev[small], 1024)
            scale[small] -= 1024
        out[k + 1] = np.ldexp(f_cur, scale)
    return out


def gauss_hermite_total_weights(m: int, nodes: np.ndarray) -> np.ndarray:
    """Total weights w_i e^{x_i^2} of the m-point Gauss-Hermite rule.

    Christoffel identity with bounded Hermite functions; exact companion of
    scipy's nodes without the weight underflow that sets in near |x| ~ 27.
    """
    psi = hermite_functions(m - 1, nodes)
    s = np.einsum("ki,ki->i", psi, psi)
    if np.any(s <= 0.0):
        raise ConvergenceError("Christoffel sum underflowed; node set invalid")
    return 1.0 / s


@lru_cache(maxsize=8)
def _overlap_quadrature(nmax: int):
    m = 2 * nmax + 9
    nodes = roots_hermite(m)[0]
    tw = gauss_hermite_total_weights(m, nodes)
    psi_sq = hermite_functions(nmax, nodes / math.sqrt(2.0)) ** 2
    return nodes, tw, psi_sq


@lru_cache(maxsize=4)
def _overlap_matrix_cached(nmax: int) -> np.ndarray:
    _, tw, psi_sq = _overlap_quadrature(nmax)
    out = (math.pi / math.sqrt(2.0)) * (psi_sq * tw) @ psi_sq.T
    out.setflags(write=False)
    return out


def overlap_matrix(nmax: int) -> np.ndarray:
    """All I_{n,n'} for n,n' <= nmax in the printed convention.

    I_{n,n'} = int e^{-2 xi^2} H_n^2 H_{n'}^2 d xi / (2^{n+n'} n! n'!)
             = pi * int psi_n(xi)^2 psi_{n'}(xi)^2 d xi.

    Cached (read-only view) per nmax: thermal sweeps hit the same matrix for
    every interaction strength.
    """
    if nmax < 0:
        raise DomainError("nmax must be >= 0")
    return _overlap_matrix_cached(int(nmax))


def overlap_coefficient(n: int, n_prime: int, n_nodes: int | None = None) -> float:
    """Mode-overlap coefficient I_{n,n'} (printed convention, see module doc).

    n_nodes overrides the quadrature size (must be >= n+n'+1 for exactness);
    used by the convergence tests.
    """
    if n < 0 or n_prime < 0:
        raise DomainError("mode indices must be non-negative")
    n, n_prime = int(n), int(n_prime)
    if n_nodes is None:
        nmax = max(n, n_prime)
        _, tw, psi_sq = _overlap_quadrature(nmax)
        return float(math.pi / math.sqrt(2.0) * np.sum(tw * psi_sq[n] * psi_sq[n_prime]))
    nodes = roots_hermite(int(n_nodes))[0]
    tw = gauss_hermite_total_weights(int(n_nodes), nodes)
    psi = hermite_functions(max(n, n_prime), nodes / math.sqrt(2.0))
    return float(math.pi / math.sqrt(2.0) * np.sum(tw * psi[n] ** 2 * psi[n_prime] ** 2))


def pair_interaction_matrix(u: float, nmax: int) -> np.ndarray:
    """Physical pair interaction U_{n,n'} = u * I_{n,n'} / pi (rad/s).

    The /pi restores the unit normalization of the oscillator eigenfunctions
    that the printed overlap convention drops; fixed against the closed-form
    thermal average (4 pi^2 ~ 40).
    """
    return (u / math.pi) * overlap_matrix(nmax)


# --------------------------------------------------------------------------
# Per-mode Rabi frequencies
# --------------------------------------------------------------------------

def laguerre_values(nmax: int, x: float) -> np.ndarray:
    """L_n(x) for n = 0..nmax by the stable three-term recurrence."""
    out = np.empty(nmax + 1)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 1.0 - x
    for n in range(1, nmax):
        out[n + 1] = ((2 * n + 1 - x) * out[n] - n * out[n - 1]) / (n + 1)
    return out


def rabi_frequency(n, omega0B: float, etaZ: float, etaY: float = 0.0):
    """Mode-resolved Rabi frequency
    Omega_n = Omega0B L_n(etaZ^2) L_0(etaY^2) e^{-(etaY^2+etaZ^2)/2}.

    Accepts a scalar or an array of mode indices.
    """
    arr = np.atleast_1d(np.asarray(n))
    if np.any(arr < 0):
        raise DomainError("mode index must be >= 0")
    for eta in (etaZ, etaY):
        if not (0.0 <= eta < 0.3):
            raise DomainError("Lamb-Dicke parameters must lie in [0, 0.3)")
    lag = laguerre_values(int(arr.max()), etaZ ** 2)[arr.astype(int)]
    env = math.exp(-(etaY ** 2 + etaZ ** 2) / 2.0)   # L_0(etaY^2) = 1
    vals = omega0B * lag * env
    return float(vals[0]) if np.isscalar(n) or np.ndim(n) == 0 else vals


# --------------------------------------------------------------------------
# Thermal ensembles of mode configurations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeConfig:
    """One set of initially occupied axial modes with its Boltzmann weight."""

    modes: tuple
    weight: float

    def __post_init__(self):
        m = self.modes
        if any(int(x) != x or x < 0 for x in m):
            raise DomainError("mode indices must be non-negative integers")
        if any(b <= a for a, b in zip(m, m[1:])):
            raise DomainError("modes must be strictly increasing (one fermion per mode)")
        if not (self.weight > 0.0):
            raise DomainError("weight must be positive")


@dataclass(frozen=True)
class ThermalEnsemble:
    """Normalized collection of mode configurations at temperature tempZ."""

    configs: tuple
    temperature: float
    omegaZ: float
    n_max: int
    coverage: float
    policy: str
    seed: int | None = None

    @property
    def n_particles(self) -> int:
        return len(self.configs[0].modes)

    def mode_array(self) -> np.ndarray:
        return np.array([c.modes for c in self.configs], dtype=np.int64)

    def weight_array(self) -> np.ndarray:
        return np.array([c.weight for c in self.configs])


def _pair_coverage(n_max: int, r: float) -> float:
    """Captured mass of the fermionic pair partition sum for modes <= n_max."""
    z1 = 1.0 / (1.0 - r)
    z2 = 1.0 / (1.0 - r * r)
    z1t = (1.0 - r ** (n_max + 1)) / (1.0 - r)
    z2t = (1.0 - r ** (2 * (n_max + 1))) / (1.0 - r * r)
    return (z1t * z1t - z2t) / (z1 * z1 - z2)


def _nmax_for_coverage(n_particles: int, r: float, coverage: float) -> int:
    if n_particles == 1:
        n = int(math.ceil(math.log(1.0 - coverage) / math.log(r))) if r > 0 else 0
        return max(n, 1)
    n = max(int(-math.log(2.0 * (1.0 - coverage)) / -math.log(r)), 2)
    while _pair_coverage(n, r) < coverage:
        n = int(n * 1.3) + 2
    # trim back to the smallest sufficient n_max
    lo, hi = 2, n
    while lo < hi:
        mid = (lo + hi) // 2
        if _pair_coverage(mid, r) >= coverage:
            hi = mid
        else:
            lo = mid + 1
    return lo


def thermal_ensemble(n_particles: int, tempZ: float, omegaZ: float,
                     policy: str = "auto", seed: int = 0,
                     coverage: float = 0.999, n_samples: int = 2000,
                     constants: Constants = CONSTANTS) -> ThermalEnsemble:
    """Boltzmann ensemble of strictly-increasing N-tuples of axial modes.

    policy 'enumeration' (exact; N <= 2) keeps every configuration with
    modes <= n_max, n_max chosen so the captured partition-sum mass reaches
    `coverage`.  policy 'sampling' (N >= 3) draws n_samples independent
    configurations from the single-particle Boltzmann law, rejecting
    Pauli-violating collisions; reproducible from seed.  'auto' picks
    enumeration for N <= 2.
    """
    if n_particles < 1:
        raise DomainError("n_particles must be >= 1")
    if tempZ <= 0.0 or omegaZ <= 0.0:
        raise DomainError("temperature and trap frequency must be positive")
    t_ratio = constants.kB * tempZ / (constants.hbar * omegaZ)
    r = math.exp(-1.0 / t_ratio)
    if policy == "auto":
        policy = "enumeration" if n_particles <= 2 else "sampling"

    if policy == "enumeration":
        if n_particles > 2:
            raise CapacityError(f"enumeration supports N <= 2, got N={n_particles}")
        n_max = _nmax_for_coverage(n_particles, r, coverage)
        if n_particles == 1:
            n = np.arange(n_max + 1)
            w = r ** n
            cov = float(np.sum(w) * (1.0 - r))
            w = w / np.sum(w)
            configs = tuple(ModeConfig((int(k),), float(wk))
                            for k, wk in zip(n, w) if wk > 0.0)
        else:
            i, j = np.triu_indices(n_max + 1, k=1)
            logw = (i + j) * math.log(r)
            w = np.exp(logw - logw.max())        # relative to lowest config
            cov = _pair_coverage(n_max, r)
            w = w / np.sum(w)
            keep = w > 0.0
            configs = tuple(ModeConfig((int(a), int(b)), float(wk))
                            for a, b, wk in zip(i[keep], j[keep], w[keep]))
        return ThermalEnsemble(configs, tempZ, omegaZ, int(n_max), float(cov),
                               "enumeration", None)

    if policy != "sampling":
        raise DomainError(f"unknown ensemble policy {policy!r}")
    rng = np.random.default_rng(seed)
    configs = []
    n_max_seen = 0
    for _ in range(n_samples):
        while True:
            draws = rng.geometric(1.0 - r, size=n_particles) - 1
            if len(set(draws.tolist())) == n_particles:
                break
        modes = tuple(sorted(int(d) for d in draws))
        n_max_seen = max(n_max_seen, modes[-1])
        configs.append(ModeConfig(modes, 1.0 / n_samples))
    return ThermalEnsemble(tuple(configs), tempZ, omegaZ, n_max_seen, 1.0,
                           "sampling", seed)


def mean_interaction(tempZ: float, omegaZ: float, u: float,
                     coverage: float = 0.999,
                     constants: Constants = CONSTANTS) -> dict:
    """Thermal mean pair interaction <U> for N=2, direct and closed form.

    Returns dict with 'direct' (exact Boltzmann average of the physical
    u I/pi over the fermionic pair ensemble), 'closed_form'
    (u sqrt(pi/40 * hbar omegaZ / kB tempZ)) and 'relative_deviation'.
    Both in rad/s.  Computed without forming the full overlap matrix:
    sum_{n<n'} w_n w_n' I_{nn'} = (w^T I w - sum_n w_n^2 I_nn)/2 and
    w^T I w reduces to one quadrature of (sum_n w_n psi_n^2)^2.
    """
    if tempZ <= 0.0:
        raise DomainError("temperature must be positive")
    t_ratio = constants.kB * tempZ / (constants.hbar * omegaZ)
    closed = u * math.sqrt(math.pi / 40.0 * 1.0 / t_ratio)
    if u == 0.0:
        return {"direct": 0.0, "closed_form": 0.0, "relative_deviation": 0.0}
    r = math.exp(-1.0 / t_ratio)
    n_max = _nmax_for_coverage(2, r, coverage)
    _, tw, psi_sq = _overlap_quadrature(n_max)
    w = r ** np.arange(n_max + 1)
    g = w @ psi_sq                      # sum_n w_n psi_n(x)^2
    h = (w * w) @ (psi_sq * psi_sq)     # sum_n w_n^2 psi_n(x)^4
    quad = math.pi / math.sqrt(2.0)
    num = 0.5 * (quad * np.sum(tw * g * g) - quad * np.sum(tw * h))
    z1 = np.sum(w)
    den = 0.5 * (z1 * z1 - np.sum(w * w))
    mean_i_printed = float(num / den)
    direct = u * mean_i_printed / math.pi
    rel = abs(direct - closed) / max(abs(closed), 1e-300)
    return {"direct": direct, "closed_form": closed, "relative_deviation": rel}


# --------------------------------------------------------------------------
# Ensemble serialization (columnar text: mode indices then weight)
# --------------------------------------------------------------------------

def write_ensemble(ensemble: ThermalEnsemble, fh) -> None:
    close = False
    if isinstance(fh, (str, bytes)):
        fh = open(fh, "w")
        close = True
    try:
        fh.write(f"# latticeclock ensemble v1 N={ensemble.n_particles} "
                 f"tempZ={ensemble.temperature!r} omegaZ={ensemble.omegaZ!r} "
                 f"n_max={ensemble.n_max} coverage={ensemble.coverage!r} "
                 f"policy={ensemble.policy} seed={ensemble.seed}\n")
        for c in ensemble.configs:
            fh.write(" ".join(str(m) for m in c.modes) + f" {c.weight!r}\n")
    finally:
        if close:
            fh.close()


def read_ensemble(fh) -> ThermalEnsemble:
    close = False
    if isinstance(fh, (str, bytes)):
        fh = open(fh)
        close = True
    try:
        header = fh.readline()
        if not header.startswith("# latticeclock ensemble v1"):
            raise DomainError("not an ensemble file")
        meta = dict(tok.split("=", 1) for tok in header.split()[4:])
        configs = []
        for line in fh:
            parts = line.split()
            configs.append(ModeConfig(tuple(int(p) for p in parts[:-1]),
                                      float(parts[-1])))
        seed = None if meta["seed"] == "None" else int(meta["seed"])
        return ThermalEnsemble(tuple(configs), float(meta["tempZ"]),
                               float(meta["omegaZ"]), int(meta["n_max"]),
                               float(meta["coverage"]), meta["policy"], seed)
    finally:
        if close:
            fh.close()
