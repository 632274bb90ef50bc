"""Stochastic rate-equation picture: generator, steady state and FDR diagnostics.

Pair sums follow the convention sum_{n,m} over ordered pairs; quantities
that are naturally per-link (chain transitions (n-1) <-> n) use each
unordered pair once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _extended as ext
from .model import BathSpec, ChainSpec, Couplings, InvalidParameterError


class DegenerateSteadyStateError(RuntimeError):
    """The generator has no unique normalizable null vector."""


class DegenerateNetworkError(ZeroDivisionError):
    """A resistor-network average hit a vanishing connector."""


class StiffnessError(ValueError):
    def __init__(self, dt, suggested):
        super().__init__(f"time step {dt:g} too large for the stiffest rate; use dt <= {suggested:g}")
        self.suggested_dt = suggested


def bath_rate_matrix(chain: ChainSpec, bath: BathSpec) -> np.ndarray:
    """Nearest-neighbour bath rates 2 w_beta / (1 + exp((E_n - E_m) / T_B)), m -> n."""
    e = chain.energies
    n = chain.n_levels
    out = np.zeros((n, n))
    idx = np.arange(1, n)
    up = e[idx] - e[idx - 1]
    # 2/(1+exp(x)) = 1 - tanh(x/2), avoids overflow for T_B -> 0
    out[idx, idx - 1] = bath.w_beta * (1.0 - np.tanh(0.5 * up / bath.temperature_b))
    out[idx - 1, idx] = bath.w_beta * (1.0 + np.tanh(0.5 * up / bath.temperature_b))
    return out


def driving_rate_matrix(chain: ChainSpec, couplings: Couplings) -> np.ndarray:
    """Symmetric tridiagonal w^eps_{nm} built from the chain rates."""
    if len(couplings) != chain.n_levels - 1:
        raise InvalidParameterError(
            f"expected {chain.n_levels - 1} couplings for N={chain.n_levels}, got {len(couplings)}"
        )
    return np.diag(couplings.rates, 1) + np.diag(couplings.rates, -1)


@dataclass(frozen=True)
class RateMatrix:
    """Generator of dp/dt = W p; ``w[n, m]`` is the m -> n rate."""

    chain: ChainSpec
    bath: BathSpec
    couplings: Couplings
    driving: np.ndarray = field(repr=False)
    bath_rates: np.ndarray = field(repr=False)

    @property
    def off_diagonal(self) -> np.ndarray:
        return self.driving + self.bath_rates

    @property
    def w(self) -> np.ndarray:
        off = self.off_diagonal
        return off - np.diag(off.sum(axis=0))

    def exact(self) -> np.ndarray:
        """The generator as mpfr entries, diagonal summed without rounding."""
        with ext.context():
            off = ext.to_mpfr(self.driving) + ext.to_mpfr(self.bath_rates)
            for m in range(off.shape[0]):
                off[m, m] = -sum(off[:, m])
        return off


def build_rate_matrix(chain: ChainSpec, bath: BathSpec, couplings: Couplings) -> RateMatrix:
    return RateMatrix(chain, bath, couplings, driving_rate_matrix(chain, couplings), bath_rate_matrix(chain, bath))


@dataclass(frozen=True)
class StochasticNess:
    populations: np.ndarray
    populations_exact: np.ndarray = field(repr=False)
    residual: float
    rate_matrix: RateMatrix = field(repr=False)


def solve_ness(w: RateMatrix) -> StochasticNess:
    """Null vector of W normalized to one.

    Dense elimination on W with its last row replaced by the normalization
    constraint, performed in extended precision (see ``_extended``).
    """
    a = w.exact()
    n = a.shape[0]
    with ext.context():
        a[-1, :] = ext.to_mpfr(np.ones(n))
        rhs = ext.to_mpfr(np.zeros(n))
        rhs[-1] = ext.to_mpfr([1.0])[0]
    p = ext.solve(a, rhs)
    if p is None:
        raise DegenerateSteadyStateError("rate matrix is singular beyond its null space (reducible chain?)")
    with ext.context():
        resid = w.exact().dot(p)
    residual = float(max(abs(r) for r in resid))
    pf = ext.to_float(p)
    if np.any(pf < 0):
        raise DegenerateSteadyStateError("steady state has negative populations")
    return StochasticNess(pf, p, residual, w)


def rk4_propagator(w: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step for the linear system dp/dt = W p."""
    a = h * w
    eye = np.eye(w.shape[0])
    a2 = a @ a
    return eye + a + a2 / 2 + a2 @ a / 6 + a2 @ a2 / 24


def evolve(w: RateMatrix | np.ndarray, p0, t: float, dt: float, max_block_steps: int = 4096) -> np.ndarray:
    """Integrate dp/dt = W p over ``t`` with RK4 steps of size <= ``dt``.

    Long runs apply a precomputed power of the one-step propagator, which
    is the same RK4 trajectory evaluated with fewer matrix products.
    """
    mat = w.w if isinstance(w, RateMatrix) else np.asarray(w, dtype=float)
    p = np.array(p0, dtype=float)
    if t < 0 or dt <= 0:
        raise InvalidParameterError("need t >= 0 and dt > 0")
    if t == 0:
        return p
    stiff = float(np.max(np.abs(np.diag(mat))))
    if dt * stiff >= 0.1:
        raise StiffnessError(dt, 0.1 / stiff * 0.99)
    n_steps = math.ceil(t / dt - 1e-12)
    step = rk4_propagator(mat, t / n_steps)
    # block = step^(2^k) with n_steps / 2^k <= max_block_steps
    k = max(0, math.ceil(math.log2(n_steps / max_block_steps))) if n_steps > max_block_steps else 0
    block = step
    for _ in range(k):
        block = block @ block
    n_blocks, rest = divmod(n_steps, 2**k)
    for _ in range(n_blocks):
        p = block @ p
    for _ in range(rest):
        p = step @ p
    return p


def _link_arrays(chain, p):
    """Lower/upper populations of each link (n-1, n)."""
    p = p if ext.is_extended(p) else np.asarray(p, dtype=float)
    return p[:-1], p[1:]


def ear(chain: ChainSpec, couplings: Couplings, p) -> float:
    """Energy absorption rate sum_{n,m} (E_n - E_m) w^eps_{nm} p_m.

    Accepts float or extended (mpfr object) populations; the latter keep the
    cancellation between up and down fluxes exact.
    """
    lo, hi = _link_arrays(chain, p)
    de = np.diff(chain.energies)
    with ext.context():
        # up (n-1 -> n) gains de, down (n -> n-1) loses de
        total = np.sum(de * couplings.rates * (lo - hi))
    return float(total)


def cooling_rate(chain: ChainSpec, bath: BathSpec, p) -> float:
    """Cooling rate -sum_{n,m} (E_n - E_m) w^beta_{nm} p_m."""
    rates = bath_rate_matrix(chain, bath)
    lo, hi = _link_arrays(chain, p)
    idx = np.arange(1, chain.n_levels)
    up = rates[idx, idx - 1]
    down = rates[idx - 1, idx]
    de = np.diff(chain.energies)
    with ext.context():
        total = np.sum(de * (down * hi - up * lo))
    return float(total)


def inverse_micro_temperatures(chain: ChainSpec, p) -> np.ndarray:
    """1/T_n = -ln(p_n / p_{n-1}) / (E_n - E_{n-1}) for every link."""
    lo, hi = _link_arrays(chain, p)
    de = np.diff(chain.energies)
    if ext.is_extended(p):
        with ext.context():
            logs = ext.log(hi / lo)
        logs = ext.to_float(logs)
    else:
        if np.any(lo <= 0) or np.any(hi <= 0):
            raise InvalidParameterError("micro temperatures need strictly positive populations")
        logs = np.log(hi / lo)
    return -logs / de


def micro_temperatures(chain: ChainSpec, p) -> np.ndarray:
    """Pairwise temperatures from the population ratio of neighbouring levels.

    Equal neighbouring populations give ``+inf``.
    """
    beta = inverse_micro_temperatures(chain, p)
    with np.errstate(divide="ignore"):
        return np.where(beta == 0, np.inf, 1.0 / np.where(beta == 0, 1.0, beta))


def micro_temperatures_closed_form(bath: BathSpec, couplings: Couplings) -> np.ndarray:
    """High-temperature result T_n = T_B (w_n + w_beta) / w_beta."""
    if bath.w_beta == 0:
        return np.full(len(couplings), np.inf)
    return bath.temperature_b * (couplings.rates + bath.w_beta) / bath.w_beta


def _bath_link_weights(chain, bath, p):
    """p-bar * w-bar^beta * (Delta E)^2 per link, as floats."""
    lo, hi = _link_arrays(chain, p)
    pbar = 0.5 * (ext.to_float(lo) + ext.to_float(hi)) if ext.is_extended(p) else 0.5 * (lo + hi)
    return pbar * bath.w_beta * np.diff(chain.energies) ** 2


def effective_temperature(chain: ChainSpec, bath: BathSpec, p) -> float:
    """Weighted harmonic mean of the micro temperatures.

    Weights p-bar_{nm} w-bar^beta_{nm} (E_n - E_m)^2 make the linearized cooling
    rate read D_B/T_B - D_B/T_sys.
    """
    weights = _bath_link_weights(chain, bath, p)
    inv = np.sum(weights * inverse_micro_temperatures(chain, p)) / np.sum(weights)
    return math.inf if inv == 0 else 1.0 / inv


def effective_temperature_unweighted(chain: ChainSpec, p) -> float:
    """Plain harmonic average of the micro temperatures over the links."""
    inv = float(np.mean(inverse_micro_temperatures(chain, p)))
    return math.inf if inv == 0 else 1.0 / inv


def effective_temperature_closed_form(bath: BathSpec, couplings: Couplings) -> float:
    """T_B / mean[w_beta / (w_beta + w_n)]."""
    r = couplings.rates
    return bath.temperature_b / float(np.mean(bath.w_beta / (bath.w_beta + r)))


def diffusion_coefficient(chain: ChainSpec, bath: BathSpec, couplings: Couplings):
    """Return (d_eff, d_lrt, d_slrt) for the chain.

    d_eff interpolates between the arithmetic mean (weak driving, LRT) and
    the series-resistor harmonic mean (strong driving, SLRT) of the rates.
    """
    w = np.asarray(couplings.rates, dtype=float)
    d2 = chain.delta0**2
    d_lrt = float(np.mean(w)) * d2
    with np.errstate(divide="ignore"):
        d_slrt = d2 / float(np.mean(1.0 / w)) if np.all(w > 0) else 0.0
    wb = bath.w_beta
    if wb == 0:
        if not np.all(w > 0):
            raise DegenerateNetworkError("w_beta = 0 with a vanishing connector")
        d_eff = d_slrt
    else:
        d_eff = float(np.mean(w / (wb + w))) / float(np.mean(1.0 / (wb + w))) * d2
    return d_eff, d_lrt, d_slrt


def ear_closed_form(chain: ChainSpec, bath: BathSpec, couplings: Couplings) -> float:
    """High-temperature EAR mean[w_n / (w_beta + w_n)] * D_B / T_B."""
    w = couplings.rates
    return float(np.mean(w / (bath.w_beta + w))) * bath.bath_diffusion(chain) / bath.temperature_b


def lrt_diffusion_canonical(chain: ChainSpec, couplings: Couplings, temperature: float) -> float:
    """(1/2) sum_{n,m} w^eps_{nm} (E_n - E_m)^2 averaged over a canonical p_m."""
    from .model import canonical_distribution

    p = canonical_distribution(chain, temperature)
    w = driving_rate_matrix(chain, couplings)
    e = chain.energies
    de2 = (e[:, None] - e[None, :]) ** 2
    return 0.5 * float(np.sum(w * de2 * p[None, :]))


def bath_diffusion_weighted(chain: ChainSpec, bath: BathSpec, p) -> float:
    """(1/2) sum_{n,m} p-bar w-bar^beta (E_n - E_m)^2, the finite-chain D_B."""
    return float(np.sum(_bath_link_weights(chain, bath, p)))


@dataclass(frozen=True)
class LinearizationCheck:
    cooling_exact: float
    cooling_linearized: float
    ear_exact: float
    ear_linearized: float

    @property
    def cooling_deviation(self) -> float:
        return abs(self.cooling_linearized - self.cooling_exact) / max(abs(self.cooling_exact), 1e-30)

    @property
    def ear_deviation(self) -> float:
        return abs(self.ear_linearized - self.ear_exact) / max(abs(self.ear_exact), 1e-30)


def linearization_cross_check(chain: ChainSpec, bath: BathSpec, couplings: Couplings, p) -> LinearizationCheck:
    """Compare the tanh-linearized flux formulas against the exact sums."""
    weights = _bath_link_weights(chain, bath, p)
    beta_n = inverse_micro_temperatures(chain, p)
    q_lin = float(np.sum(weights) / bath.temperature_b - np.sum(weights * beta_n))
    lo, hi = _link_arrays(chain, p)
    pbar = 0.5 * (ext.to_float(lo) + ext.to_float(hi)) if ext.is_extended(p) else 0.5 * (lo + hi)
    w_lin = float(np.sum(pbar * couplings.rates * np.diff(chain.energies) ** 2 * beta_n))
    return LinearizationCheck(cooling_rate(chain, bath, p), q_lin, ear(chain, couplings, p), w_lin)


@dataclass(frozen=True)
class NessReport:
    picture: str
    ear: float
    cooling: float
    t_sys: float
    t_sys_unweighted: float
    d_eff: float
    d_lrt: float
    d_slrt: float
    d_bath: float
    residual: float
    micro_temps: np.ndarray = field(repr=False)

    def record(self) -> dict:
        """Flat scalar fields, for one CSV row."""
        row = asdict(self)
        row.pop("micro_temps")
        return row


def stochastic_report(ness: StochasticNess) -> NessReport:
    w = ness.rate_matrix
    chain, bath, couplings = w.chain, w.bath, w.couplings
    p = ness.populations_exact
    d_eff, d_lrt, d_slrt = diffusion_coefficient(chain, bath, couplings)
    return NessReport(
        picture="stochastic",
        ear=ear(chain, couplings, p),
        cooling=cooling_rate(chain, bath, p),
        t_sys=effective_temperature(chain, bath, p),
        t_sys_unweighted=effective_temperature_unweighted(chain, p),
        d_eff=d_eff,
        d_lrt=d_lrt,
        d_slrt=d_slrt,
        d_bath=bath.bath_diffusion(chain),
        residual=ness.residual,
        micro_temps=micro_temperatures(chain, p),
    )
