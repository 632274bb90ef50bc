"""System definition: energy ladder, bath, driving and the sparse coupling sampler.

Units follow k_B = hbar = 1. Energies and temperatures share one unit,
rates are inverse time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InvalidParameterError(ValueError):
    """Raised when a physical parameter violates its domain."""


def _require_finite(name, value):
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ChainSpec:
    """Uniform ladder E_n = n * delta0, n = 0..N-1."""

    n_levels: int = 25
    delta0: float = 1.0

    def __post_init__(self):
        if int(self.n_levels) != self.n_levels or self.n_levels < 2:
            raise InvalidParameterError(f"n_levels must be an integer >= 2, got {self.n_levels!r}")
        _require_finite("delta0", self.delta0)
        if self.delta0 <= 0:
            raise InvalidParameterError(f"delta0 must be positive, got {self.delta0!r}")

    @property
    def energies(self) -> np.ndarray:
        return self.delta0 * np.arange(self.n_levels, dtype=float)

    @property
    def spectral_span(self) -> float:
        """max(E) - min(E) = (N - 1) * delta0."""
        return (self.n_levels - 1) * self.delta0

    @property
    def energy_window(self) -> float:
        """Width N * delta0 of the energy window, one delta0 bin per level."""
        return self.n_levels * self.delta0


@dataclass(frozen=True)
class BathSpec:
    temperature_b: float = 10.0
    w_beta: float = 0.1
    gamma_phi: float = 0.0

    def __post_init__(self):
        for name in ("temperature_b", "w_beta", "gamma_phi"):
            _require_finite(name, getattr(self, name))
        if self.temperature_b <= 0:
            raise InvalidParameterError(f"temperature_b must be positive, got {self.temperature_b!r}")
        if self.w_beta < 0 or self.gamma_phi < 0:
            raise InvalidParameterError("w_beta and gamma_phi must be non-negative")

    @property
    def gamma_beta(self) -> float:
        """Uniform dephasing rate of every coherence, w_beta + gamma_phi."""
        return self.w_beta + self.gamma_phi

    def bath_diffusion(self, chain: ChainSpec) -> float:
        """Bulk bath-induced diffusion D_B = w_beta * delta0**2."""
        return self.w_beta * chain.delta0**2


@dataclass(frozen=True)
class DrivingSpec:
    """Driving amplitude and log-normal width of the coupling ensemble.

    The location ``mu = 2 ln(epsilon) - sigma**2 / 2`` fixes the ensemble
    mean of the rates at ``epsilon**2``; the sparsity is ``exp(-sigma**2)``.
    """

    epsilon: float
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        _require_finite("epsilon", self.epsilon)
        _require_finite("sigma", self.sigma)
        if self.epsilon < 0:
            raise InvalidParameterError(f"epsilon must be non-negative, got {self.epsilon!r}")
        if self.sigma < 0:
            raise InvalidParameterError(f"sigma must be non-negative, got {self.sigma!r}")

    @property
    def sparsity(self) -> float:
        return math.exp(-self.sigma**2)

    @property
    def mu(self) -> float:
        return 2.0 * math.log(self.epsilon) - 0.5 * self.sigma**2

    @classmethod
    def from_sparsity(cls, epsilon: float, sparsity: float, seed: int = 0) -> "DrivingSpec":
        if not 0 < sparsity <= 1:
            raise InvalidParameterError(f"sparsity must lie in (0, 1], got {sparsity!r}")
        return cls(epsilon=epsilon, sigma=sigma_from_sparsity(sparsity), seed=seed)

    def with_epsilon(self, epsilon: float) -> "DrivingSpec":
        return DrivingSpec(epsilon=epsilon, sigma=self.sigma, seed=self.seed)


def sigma_from_sparsity(sparsity: float) -> float:
    """Invert s = exp(-sigma**2)."""
    return math.sqrt(-math.log(sparsity))


@dataclass(frozen=True)
class Couplings:
    """Nearest-neighbour driving rates w_n for the transitions (n-1) <-> n."""

    rates: np.ndarray = field(repr=False)
    spec: DrivingSpec

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 1:
            raise InvalidParameterError("rates must be one-dimensional")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise InvalidParameterError("rates must be finite and non-negative")
        rates = rates.copy()
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    def __len__(self):
        return self.rates.size

    def scaled(self, factor: float) -> "Couplings":
        return Couplings(self.rates * factor, self.spec)


def unit_lognormal_factors(sigma: float, seed: int, size: int) -> np.ndarray:
    """Samples of exp(sigma*z - sigma**2/2), z ~ N(0, 1); mean one in expectation.

    The stream is numpy's PCG64 seeded with ``seed`` and drawn through
    ``standard_normal``, so a given (seed, size) always yields the same z.
    """
    z = np.random.default_rng(seed).standard_normal(size)
    return np.exp(sigma * z - 0.5 * sigma**2)


def sample_rates(driving: DrivingSpec, size: int) -> np.ndarray:
    """Draw ``size`` log-normal rates with ensemble mean epsilon**2."""
    if not driving.epsilon > 0:
        raise InvalidParameterError(f"epsilon must be positive to sample, got {driving.epsilon!r}")
    # w = exp(mu + sigma z) written as eps^2 * exp(sigma z - sigma^2/2) so that
    # an epsilon sweep at fixed seed rescales one and the same realization.
    return driving.epsilon**2 * unit_lognormal_factors(driving.sigma, driving.seed, size)


def sample_couplings(chain: ChainSpec, driving: DrivingSpec) -> Couplings:
    """Sample the N-1 chain rates for ``driving``.

    ``epsilon == 0`` is accepted and returns all-zero rates (undriven chain).
    """
    if driving.epsilon == 0:
        return Couplings(np.zeros(chain.n_levels - 1), driving)
    return Couplings(sample_rates(driving, chain.n_levels - 1), driving)


def canonical_distribution(chain: ChainSpec, temperature: float) -> np.ndarray:
    """Boltzmann populations p_n ~ exp(-E_n / T), normalized."""
    _require_finite("temperature", temperature)
    if temperature <= 0:
        raise InvalidParameterError(f"temperature must be positive, got {temperature!r}")
    e = chain.energies
    weights = np.exp(-(e - e.min()) / temperature)
    return weights / weights.sum()


def build_perturbation_matrix(chain: ChainSpec, couplings: Couplings, driving: DrivingSpec | None = None) -> np.ndarray:
    """Real symmetric tridiagonal V with epsilon**2 * V[n-1, n]**2 = w_n.

    The diagonal is zero. ``driving`` defaults to ``couplings.spec``.
    """
    driving = couplings.spec if driving is None else driving
    if len(couplings) != chain.n_levels - 1:
        raise InvalidParameterError(
            f"expected {chain.n_levels - 1} couplings for N={chain.n_levels}, got {len(couplings)}"
        )
    if not driving.epsilon > 0:
        raise InvalidParameterError("V is undefined for epsilon = 0")
    band = np.sqrt(couplings.rates) / driving.epsilon
    return np.diag(band, 1) + np.diag(band, -1)
