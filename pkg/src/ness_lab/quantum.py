"""Quantum master-equation picture.

    d rho/dt = -i[H0, rho] - (eps^2/2)[V, [V, rho]] + W^beta rho

Density matrices are vectorized row-major: rho[nu, mu] sits at index
nu * N + mu. Populations are the diagonal entries, coherences the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .model import BathSpec, ChainSpec, Couplings, DrivingSpec, InvalidParameterError
from .stochastic import (
    DegenerateSteadyStateError,
    NessReport,
    bath_rate_matrix,
    cooling_rate,
    diffusion_coefficient,
    effective_temperature,
    effective_temperature_unweighted,
    micro_temperatures,
)

# 1/rcond above which the dense null-space solve hands over to the
# eigenbasis reduction
CONDITION_LIMIT = 1e12


def _commutator(a, rho):
    return a @ rho - rho @ a


def bath_action(chain: ChainSpec, bath: BathSpec, rho: np.ndarray) -> np.ndarray:
    """Pauli rates on the populations, uniform decay gamma_beta on coherences."""
    rates = bath_rate_matrix(chain, bath)
    pauli = rates - np.diag(rates.sum(axis=0))
    pops = np.diagonal(rho, axis1=-2, axis2=-1)
    out = -bath.gamma_beta * rho
    idx = np.arange(chain.n_levels)
    out[..., idx, idx] = pops @ pauli.T
    return out


def coherent_action(chain: ChainSpec, rho: np.ndarray) -> np.ndarray:
    return -1j * _commutator(np.diag(chain.energies), rho)


def driving_action(v: np.ndarray, epsilon: float, rho: np.ndarray) -> np.ndarray:
    return -0.5 * epsilon**2 * _commutator(v, _commutator(v, rho))


def _basis(n):
    """Stack of the N^2 matrix units |nu><mu| in vectorization order."""
    return np.eye(n * n, dtype=complex).reshape(n * n, n, n)


def _as_superoperator(images):
    # column k is vec(image of basis element k)
    return images.reshape(images.shape[0], -1).T.copy()


@dataclass(frozen=True)
class Superoperator:
    """Generator of the vectorized master equation, kept as its three terms."""

    chain: ChainSpec
    bath: BathSpec
    v: np.ndarray = field(repr=False)
    epsilon: float
    coherent: np.ndarray = field(repr=False)
    driving: np.ndarray = field(repr=False)
    bath_part: np.ndarray = field(repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return self.coherent + self.driving + self.bath_part

    @property
    def population_index(self) -> np.ndarray:
        n = self.chain.n_levels
        return np.arange(n) * (n + 1)

    @property
    def coherence_index(self) -> np.ndarray:
        n = self.chain.n_levels
        return np.setdiff1d(np.arange(n * n), self.population_index)

    def population_block(self) -> np.ndarray:
        p = self.population_index
        return self.matrix[np.ix_(p, p)]

    def coherence_block(self) -> np.ndarray:
        c = self.coherence_index
        return self.matrix[np.ix_(c, c)]

    def lambda_block(self) -> np.ndarray:
        """Coherence -> population couplings, rows n, columns (nu, mu)."""
        return self.matrix[np.ix_(self.population_index, self.coherence_index)]

    def lambda_dagger_block(self) -> np.ndarray:
        """Population -> coherence couplings."""
        return self.matrix[np.ix_(self.coherence_index, self.population_index)]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        n = self.chain.n_levels
        return (self.matrix @ np.asarray(rho).reshape(n * n)).reshape(n, n)


def build_superoperator(chain: ChainSpec, bath: BathSpec, v: np.ndarray, driving: DrivingSpec | float) -> Superoperator:
    """Assemble the generator column by column from its action on matrix units."""
    epsilon = driving.epsilon if isinstance(driving, DrivingSpec) else float(driving)
    v = np.asarray(v, dtype=float)
    n = chain.n_levels
    if v.shape != (n, n):
        raise InvalidParameterError(f"V must be {n}x{n}, got {v.shape}")
    if not np.allclose(v, v.T, rtol=0, atol=1e-14 * max(1.0, np.abs(v).max())):
        raise InvalidParameterError("V must be symmetric")
    basis = _basis(n)
    return Superoperator(
        chain=chain,
        bath=bath,
        v=v,
        epsilon=epsilon,
        coherent=_as_superoperator(coherent_action(chain, basis)),
        driving=_as_superoperator(driving_action(v, epsilon, basis)),
        bath_part=_as_superoperator(bath_action(chain, bath, basis)),
    )


def block_formula_coherence_diagonal(chain, bath, v, epsilon):
    """i Delta_{nu mu} - gamma_{nu mu} - gamma_beta for every ordered coherence.

    Returned as an N x N array indexed [nu, mu]; the diagonal is unused.
    """
    e = chain.energies
    v2 = np.diag(v @ v)
    gamma = 0.5 * epsilon**2 * (v2[:, None] + v2[None, :])
    return 1j * (e[:, None] - e[None, :]) - gamma - bath.gamma_beta


def block_formula_lambda(v, epsilon):
    """eps^2 V_{n nu} V_{mu n} as an array indexed [n, nu, mu]."""
    return epsilon**2 * v[:, :, None] * v.T[:, None, :]


# -- Hermitian real coordinates -------------------------------------------

def _hermitian_coordinates(n):
    """Index data mapping real coordinates x to vec(rho).

    Coordinates: the N populations, then (Re, Im) of rho[nu, mu], nu < mu.
    """
    iu, ju = np.triu_indices(n, 1)
    return np.arange(n) * (n + 1), iu * n + ju, ju * n + iu


def _real_generator(s: np.ndarray, n: int) -> np.ndarray:
    diag, upper, lower = _hermitian_coordinates(n)
    cols = np.concatenate([
        s[:, diag],
        s[:, upper] + s[:, lower],          # rho_numu = rho_munu = 1
        1j * (s[:, upper] - s[:, lower]),   # rho_numu = i, rho_munu = -i
    ], axis=1)
    return np.concatenate([cols[diag].real, cols[upper].real, cols[upper].imag], axis=0)


def _rho_from_coordinates(x, n):
    diag, upper, _ = _hermitian_coordinates(n)
    m = upper.size
    rho = np.zeros((n, n), dtype=complex)
    rho[np.diag_indices(n)] = x[:n]
    iu, ju = np.triu_indices(n, 1)
    rho[iu, ju] = x[n:n + m] + 1j * x[n + m:]
    rho[ju, iu] = x[n:n + m] - 1j * x[n + m:]
    return rho


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray = field(repr=False)
    method: str = "dense"
    residual: float = 0.0
    condition: float = 1.0

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diagonal(self.rho)).copy()

    @property
    def trace_error(self) -> float:
        return abs(np.trace(self.rho) - 1.0)

    @property
    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T)).min())


def _dense_null_vector(real_gen, n):
    """Row-replacement solve; returns (x, 1/rcond)."""
    a = real_gen.copy()
    a[0, :] = 0.0
    a[0, :n] = 1.0
    rhs = np.zeros(a.shape[0])
    rhs[0] = 1.0
    anorm = np.linalg.norm(a, 1)
    lu, piv, info = lapack.dgetrf(a)
    if info > 0:
        return None, math.inf
    rcond, _ = lapack.dgecon(lu, anorm, norm="1")
    x, _ = lapack.dgetrs(lu, piv, rhs)
    return x, (math.inf if rcond == 0 else 1.0 / rcond)


def _generator_null_vector(g):
    """Normalized null vector of a small real generator-like matrix."""
    a = g.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(a.shape[0])
    rhs[-1] = 1.0
    try:
        return np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSteadyStateError(f"effective generator is singular: {exc}") from None


def _reduced_solve(s: Superoperator):
    """Exact Schur-complement elimination of coherences in the V eigenbasis.

    The driving term is diagonal there, and it is added analytically so that
    its large entries never mix with the slow bath and energy terms.
    """
    n = s.chain.n_levels
    lam, u = np.linalg.eigh(s.v)
    k = np.kron(u, u)
    slow_part = k.T @ (s.coherent + s.bath_part) @ k
    rate = -0.5 * s.epsilon**2 * (lam[:, None] - lam[None, :]) ** 2
    a = slow_part + np.diag(rate.reshape(-1))
    pop = np.arange(n) * (n + 1)
    coh = np.setdiff1d(np.arange(n * n), pop)
    a_ff = a[np.ix_(coh, coh)]
    a_fs = a[np.ix_(coh, pop)]
    a_sf = a[np.ix_(pop, coh)]
    try:
        fast = scipy.linalg.solve(a_ff, a_fs, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise DegenerateSteadyStateError(f"coherence block is singular: {exc}") from None
    g = np.real(a[np.ix_(pop, pop)] - a_sf @ fast)
    p_r = _generator_null_vector(g)
    x = np.zeros(n * n, dtype=complex)
    x[pop] = p_r
    x[coh] = -fast @ p_r
    rho_r = x.reshape(n, n)
    rho = u @ rho_r @ u.T
    return 0.5 * (rho + rho.conj().T)


def solve_quantum_ness(s: Superoperator, method: str = "auto") -> DensityMatrix:
    """Steady state of the master equation, normalized to unit trace.

    ``method`` is "dense" (row-replacement solve in Hermitian coordinates),
    "reduced" (coherence elimination in the V eigenbasis) or "auto", which
    runs the dense solve and falls back to the reduction when the system's
    condition estimate exceeds ``CONDITION_LIMIT``.
    """
    if method not in ("auto", "dense", "reduced"):
        raise ValueError(f"unknown method {method!r}")
    n = s.chain.n_levels
    full = s.matrix
    cond = math.nan
    rho = None
    used = method
    if method in ("auto", "dense"):
        real_gen = _real_generator(full, n)
        x, cond = _dense_null_vector(real_gen, n)
        if x is None and method == "dense":
            raise DegenerateSteadyStateError(
                f"dense system is exactly singular (null space dimension {null_space_dimension(s)})")
        if x is not None and (method == "dense" or cond <= CONDITION_LIMIT):
            rho = _rho_from_coordinates(x, n)
            used = "dense"
    if rho is None:
        if s.epsilon == 0:
            raise DegenerateSteadyStateError(
                f"undriven system has no unique steady state (null space dimension {null_space_dimension(s)})")
        rho = _reduced_solve(s)
        used = "reduced"
    norm = float(np.max(np.abs(full)))
    residual = float(np.max(np.abs(full @ rho.reshape(-1)))) / norm
    return DensityMatrix(rho=rho, method=used, residual=residual, condition=cond)


def null_space_dimension(s: Superoperator, tol: float = 1e-10) -> int:
    """Number of singular values of the generator below ``tol`` * largest."""
    sv = np.linalg.svd(_real_generator(s.matrix, s.chain.n_levels), compute_uv=False)
    return int(np.sum(sv < tol * sv[0]))


def strong_driving_limit(chain: ChainSpec, bath: BathSpec, v: np.ndarray) -> DensityMatrix:
    """epsilon -> infinity steady state: a mixture of V eigenstates.

    The weights solve the bath generator projected onto the eigenbasis of V;
    valid when V has a non-degenerate spectrum.
    """
    lam, u = np.linalg.eigh(v)
    rates = bath_rate_matrix(chain, bath)
    pauli = rates - np.diag(rates.sum(axis=0))
    prob = u**2  # prob[n, r] = |<n|r>|^2
    # <r| W^beta(|r'><r'|) |r>: Pauli flow of the n-distribution of r',
    # read out in r, plus uniform dephasing of the off-diagonal part
    overlap = prob.T @ prob
    g = prob.T @ pauli @ prob - bath.gamma_beta * (np.eye(len(lam)) - overlap)
    p_r = _generator_null_vector(g)
    rho = (u * p_r) @ u.T
    return DensityMatrix(rho=rho.astype(complex), method="limit")


def quantum_ear_direct(chain: ChainSpec, v: np.ndarray, epsilon: float, rho: np.ndarray) -> float:
    """tr(H0 D(rho)) with D the driving term; coherences included."""
    return float(np.real(np.sum(chain.energies * np.diagonal(driving_action(v, epsilon, rho)))))


def couplings_from_v(chain: ChainSpec, v: np.ndarray, driving: DrivingSpec) -> Couplings:
    band = np.diagonal(v, 1)
    return Couplings(driving.epsilon**2 * band**2, driving)


def quantum_ness_report(chain: ChainSpec, bath: BathSpec, v: np.ndarray, driving: DrivingSpec, rho: DensityMatrix) -> NessReport:
    """FDR diagnostics of the quantum steady state.

    The EAR is taken equal to the cooling rate (they balance at steady
    state), and D follows from EAR = D / T_sys.
    """
    p = rho.populations
    q = cooling_rate(chain, bath, p)
    t_sys = effective_temperature(chain, bath, p)
    couplings = couplings_from_v(chain, v, driving)
    if driving.epsilon > 0:
        _, d_lrt, d_slrt = diffusion_coefficient(chain, bath, couplings)
    else:
        d_lrt = d_slrt = 0.0
    return NessReport(
        picture="quantum",
        ear=q,
        cooling=q,
        t_sys=t_sys,
        t_sys_unweighted=effective_temperature_unweighted(chain, p),
        d_eff=q * t_sys,
        d_lrt=d_lrt,
        d_slrt=d_slrt,
        d_bath=bath.bath_diffusion(chain),
        residual=rho.residual,
        micro_temps=micro_temperatures(chain, p),
    )


@dataclass(frozen=True)
class EigenbasisAnalysis:
    eigvals: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)
    mean_energies: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    t_mix: float
    spectral_span_r: float

    @property
    def fit_defined(self) -> bool:
        return math.isfinite(self.t_mix)


def eigenbasis_analysis(chain: ChainSpec, v: np.ndarray, rho, min_weight: float = 1e-12) -> EigenbasisAnalysis:
    """Weights of the V eigenstates in rho and the mixture temperature.

    T_mix comes from a least-squares fit of ln p_r against <E>_r weighted by
    p_r; it is NaN when the <E>_r are degenerate or too few weights survive.
    """
    rho = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho)
    lam, u = np.linalg.eigh(v)
    mean_e = (u**2).T @ chain.energies
    weights = np.real(np.einsum("nr,nm,mr->r", u, rho, u))
    span = float(mean_e.max() - mean_e.min())
    t_mix = math.nan
    keep = weights > min_weight
    if span > 1e-9 * chain.spectral_span and np.count_nonzero(keep) >= 2:
        x, y, w = mean_e[keep], np.log(weights[keep]), weights[keep]
        if np.ptp(x) > 1e-9 * chain.spectral_span:
            slope = np.polyfit(x, y, 1, w=np.sqrt(w))[0]
            t_mix = -1.0 / slope if slope != 0 else math.inf
    return EigenbasisAnalysis(lam, u, mean_e, weights, t_mix, span)


@dataclass(frozen=True)
class SaturationResult:
    t_inf_estimate: float
    t_inf_lower_bound: float
    converged: bool
    epsilons: np.ndarray = field(repr=False)
    t_sys: np.ndarray = field(repr=False)
    ear: np.ndarray = field(repr=False)
    spectral_span_r: float = math.nan


def saturation_temperature(chain: ChainSpec, bath: BathSpec, v: np.ndarray, driving_grid,
                           energy_window: float | None = None, rtol: float = 0.01) -> SaturationResult:
    """T_sys along an increasing epsilon grid and the eigenbasis lower bound.

    The estimate is T_sys at the largest epsilon; it counts as converged when
    the last two grid points differ by less than ``rtol``. The bound is
    (energy_window / span of <E>_r) * T_B, with the window defaulting to
    N * delta0.
    """
    eps = np.sort(np.asarray(list(driving_grid), dtype=float))
    if eps.size == 0:
        raise InvalidParameterError("empty driving grid")
    t_sys = np.empty(eps.size)
    ears = np.empty(eps.size)
    for i, e in enumerate(eps):
        s = build_superoperator(chain, bath, v, e)
        rho = solve_quantum_ness(s)
        p = rho.populations
        t_sys[i] = effective_temperature(chain, bath, p)
        ears[i] = cooling_rate(chain, bath, p)
    window = chain.energy_window if energy_window is None else energy_window
    span = eigenbasis_analysis(chain, v, np.eye(chain.n_levels) / chain.n_levels).spectral_span_r
    bound = math.inf if span <= 0 else window / span * bath.temperature_b
    converged = eps.size >= 2 and abs(t_sys[-1] - t_sys[-2]) < rtol * abs(t_sys[-1])
    return SaturationResult(float(t_sys[-1]), bound, bool(converged), eps, t_sys, ears, span)
