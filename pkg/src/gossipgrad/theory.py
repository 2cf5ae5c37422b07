"""Closed-form tuning and bound formulas for the anytime decentralized method.

Constants follow the explicit (non big-O) displays of the analysis, so every
formula here is numerically checkable against simulation.  Notation:
``K = sqrt(5120) * L`` and ``sigma_tilde = sqrt(2 sigma^2 + zeta^2)``.
``rho`` is always an explicit input; for time-varying gossip sequences no
single per-round gap is defined, so the caller chooses what to plug in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError

__all__ = [
    "TheoryInputs",
    "theoretical_lr",
    "convergence_bound",
    "gamma_bound",
    "gamma_threshold",
    "psi_bound",
    "parallelism_bound",
    "transient_complexity",
    "K_FACTOR",
]

# K / L: sqrt(5120) == 8 * sqrt(80).
K_FACTOR = math.sqrt(5120.0)


@dataclass(frozen=True)
class TheoryInputs:
    """Problem constants feeding the bound formulas.

    ``initial_distance`` is D1 = ||w1 - x*||.  ``zeta`` is the assumption
    level heterogeneity bound, supplied explicitly (the generator's
    at-the-optimum zeta is not the same quantity).
    """

    smoothness: float
    rounds: int
    rho: float
    machines: int
    sigma: float
    zeta: float
    initial_distance: float

    def __post_init__(self):
        if self.smoothness < 0 or self.sigma < 0 or self.zeta < 0 or self.initial_distance < 0:
            raise ParameterError("smoothness, sigma, zeta and initial distance must be >= 0")
        if not 0.0 < self.rho <= 1.0:
            raise ParameterError(f"rho must lie in (0, 1], got {self.rho}")
        if self.rounds < 1:
            raise ParameterError(f"round count must be >= 1, got {self.rounds}")
        if self.machines < 1:
            raise ParameterError(f"machine count must be >= 1, got {self.machines}")

    @property
    def K(self) -> float:
        return K_FACTOR * self.smoothness

    @property
    def sigma_tilde(self) -> float:
        return math.sqrt(2.0 * self.sigma**2 + self.zeta**2)


def theoretical_lr(inputs: TheoryInputs) -> float:
    """Four-term minimum learning rate for linear weights.

    min{ 1/(24 L T),  rho^2/K,  D1 sqrt(M)/(sqrt(3) sigma T^{3/2}),
         sqrt(D1/(2 K sigma_tilde)) rho/T }.
    Terms with a vanishing denominator (sigma = 0, sigma_tilde = 0) are
    treated as +inf and drop out.
    """
    L, T, D1 = inputs.smoothness, inputs.rounds, inputs.initial_distance
    if L <= 0:
        raise ParameterError(f"smoothness must be positive, got {L}")
    if D1 <= 0:
        raise ParameterError(f"initial distance must be positive, got {D1}")
    terms = [1.0 / (24.0 * L * T), inputs.rho**2 / inputs.K]
    if inputs.sigma > 0:
        terms.append(D1 * math.sqrt(inputs.machines) / (math.sqrt(3.0) * inputs.sigma * T**1.5))
    st = inputs.sigma_tilde
    if st > 0:
        terms.append(math.sqrt(D1 / (2.0 * inputs.K * st)) * inputs.rho / T)
    return min(terms)


def convergence_bound(inputs: TheoryInputs) -> float:
    """Expected excess-loss bound at the tuned rate (explicit constants)."""
    L, T, D1 = inputs.smoothness, inputs.rounds, inputs.initial_distance
    if L <= 0:
        raise ParameterError(f"smoothness must be positive, got {L}")
    if D1 <= 0:
        raise ParameterError(f"initial distance must be positive, got {D1}")
    rho, M = inputs.rho, inputs.machines
    K, st = inputs.K, inputs.sigma_tilde
    return (
        8.0 * math.sqrt(3.0) * D1 * inputs.sigma / math.sqrt(M * T)
        + 8.0 * math.sqrt(2.0) * D1**1.5 * math.sqrt(K * st) / (rho * T)
        + 96.0 * L * D1**2 / T
        + 4.0 * K * D1**2 / (rho**2 * T**2)
    )


def gamma_bound(eta: float, rho: float, sigma: float, zeta: float) -> float:
    """Steady bound on the query-point consensus distance:
    ``2560 (2 sigma^2 + zeta^2) eta^2 / rho^4``.

    Valid for linear weights and eta below ``gamma_threshold(rho, L)``.
    """
    if not 0.0 < rho <= 1.0:
        raise ParameterError(f"rho must lie in (0, 1], got {rho}")
    return 2560.0 * (2.0 * sigma**2 + zeta**2) * eta**2 / rho**4


def gamma_threshold(rho: float, smoothness: float) -> float:
    """Learning-rate validity threshold ``rho^2 / (8 sqrt(80) L)`` for the
    gamma bound (equals ``rho^2 / K``)."""
    if smoothness <= 0:
        raise ParameterError(f"smoothness must be positive, got {smoothness}")
    if not 0.0 < rho <= 1.0:
        raise ParameterError(f"rho must lie in (0, 1], got {rho}")
    return rho**2 / (K_FACTOR * smoothness)


def psi_bound(sigma: float, zeta: float, smoothness: float, gamma: float) -> float:
    """Gradient-spread bound ``5 (2 sigma^2 + zeta^2) + 10 L^2 Gamma``."""
    return 5.0 * (2.0 * sigma**2 + zeta**2) + 10.0 * smoothness**2 * gamma


_PARALLELISM = {
    ("ring", "dsgd"): lambda N, rho: N ** (1.0 / 8.0),
    ("ring", "datsgd"): lambda N, rho: N ** (1.0 / 6.0),
    ("torus", "dsgd"): lambda N, rho: N ** (1.0 / 6.0),
    ("torus", "datsgd"): lambda N, rho: N ** (1.0 / 4.0),
    ("near_complete", "dsgd"): lambda N, rho: math.sqrt(rho) * N ** (1.0 / 4.0),
    ("near_complete", "datsgd"): lambda N, rho: rho * math.sqrt(N),
}


def parallelism_bound(topology_class: str, N: float, rho: float, algorithm: str) -> float:
    """Asymptotic machine-count limit (unit constant) by topology class.

    Ring: N^{1/8} vs N^{1/6}; torus: N^{1/6} vs N^{1/4}; near-complete:
    ``sqrt(rho) N^{1/4}`` vs ``rho sqrt(N)`` (dsgd vs datsgd respectively).
    """
    if N < 1:
        raise ParameterError(f"sample count must be >= 1, got {N}")
    key = (topology_class, algorithm)
    if key not in _PARALLELISM:
        classes = sorted({c for c, _ in _PARALLELISM})
        algos = sorted({a for _, a in _PARALLELISM})
        raise ParameterError(
            f"unknown (topology_class, algorithm) {key!r}; "
            f"topology classes: {classes}, algorithms: {algos}"
        )
    return _PARALLELISM[key](float(N), float(rho))


def transient_complexity(machines: int, rho: float) -> float:
    """Rounds before the statistically optimal term dominates: ``M / rho^2``."""
    if machines < 1:
        raise ParameterError(f"machine count must be >= 1, got {machines}")
    if not 0.0 < rho <= 1.0:
        raise ParameterError(f"rho must lie in (0, 1], got {rho}")
    return machines / rho**2
