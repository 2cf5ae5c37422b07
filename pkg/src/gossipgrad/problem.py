"""Synthetic least-squares objectives with controllable noise and heterogeneity.

Machine ``i`` holds ``f_i(x) = 0.5 * ||A_i x - b_i||^2`` with ``A_i`` a dense
d x d standard-normal draw (one shared draw across machines when
``shared_design`` is set) and targets ``b_i = A_i (x_sharp - delta_i)``.
The planted point ``x_sharp ~ N(0, I/d)`` is drawn once; the per-machine
offsets ``delta_i ~ N(0, zeta^2/d I)`` control heterogeneity at the optimum
(``zeta = 0`` plants a common zero-residual minimizer).  Stochastic gradients
add ``N(0, sigma^2/d I)`` noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateProblemError, ParameterError

__all__ = ["LeastSquaresProblem", "GradientSample", "GradientNoise", "generate", "batched_exact_grads"]

# Stream-domain tag separating gradient noise from other seeded draws.
_NOISE_TAG = 0x6E6F6973


@dataclass(eq=False)
class LeastSquaresProblem:
    """Immutable-by-convention bundle of per-machine quadratics.

    ``design`` is (M, d, d), ``targets`` is (M, d).  Machine indices are
    0-based.  ``smoothness`` and ``optimum`` are cached on first access.
    """

    dimension: int
    machines: int
    design: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    x_sharp: np.ndarray = field(repr=False)
    noise_std: float
    heterogeneity: float
    shared_design: bool
    seed: int

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.machines:
            raise ParameterError(
                f"machine index {i} out of range for {self.machines} machines"
            )

    def exact_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        """A_i^T (A_i x - b_i)."""
        self._check_index(i)
        A = self.design[i]
        return A.T @ (A @ x - self.targets[i])

    def stoch_grad(self, i: int, x: np.ndarray, rng: np.random.Generator, t: int | None = None) -> "GradientSample":
        """Exact gradient plus N(0, sigma^2/d I) noise drawn from ``rng``.

        With ``noise_std == 0`` the stream is not consumed and the value
        equals ``exact_grad`` bitwise.
        """
        value = self.exact_grad(i, x)
        if self.noise_std > 0.0:
            value = value + rng.standard_normal(self.dimension) * (
                self.noise_std / math.sqrt(self.dimension)
            )
        return GradientSample(value=value, machine=i, round=t)

    def machine_loss(self, i: int, x: np.ndarray) -> float:
        self._check_index(i)
        r = self.design[i] @ x - self.targets[i]
        return 0.5 * float(r @ r)

    def loss(self, x: np.ndarray) -> float:
        """Global objective (1/M) sum_i 0.5 ||A_i x - b_i||^2."""
        r = np.matmul(self.design, x) - self.targets
        return 0.5 * float(np.einsum("md,md->", r, r)) / self.machines

    @cached_property
    def smoothness(self) -> float:
        """max_i lambda_max(A_i^T A_i), the global smoothness constant."""
        if self.shared_design:
            H = self.design[0].T @ self.design[0]
            return float(np.linalg.eigvalsh(H)[-1])
        H = np.matmul(self.design.transpose(0, 2, 1), self.design)
        return float(np.linalg.eigvalsh(H)[:, -1].max())

    @cached_property
    def optimum(self) -> tuple[np.ndarray, float]:
        """Global minimizer and minimal loss via the normal equations."""
        H = np.einsum("mki,mkj->ij", self.design, self.design)
        c = np.einsum("mki,mk->i", self.design, self.targets)
        if np.linalg.cond(H) > 1e12:
            raise DegenerateProblemError(
                f"normal matrix condition number {np.linalg.cond(H):.3g} exceeds 1e12"
            )
        x_star = np.linalg.solve(H, c)
        grad_norm = float(np.linalg.norm((H @ x_star - c) / self.machines))
        if grad_norm > 1e-8 * (1.0 + float(np.linalg.norm(x_star))):
            raise DegenerateProblemError(
                f"optimum residual gradient norm {grad_norm:.3g} too large"
            )
        x_star.setflags(write=False)
        return x_star, self.loss(x_star)


@dataclass(frozen=True)
class GradientSample:
    value: np.ndarray
    machine: int
    round: int | None = None


def generate(
    dimension: int,
    machines: int,
    sigma: float,
    zeta: float,
    shared_design: bool = False,
    seed: int = 0,
) -> LeastSquaresProblem:
    """Draw a problem instance; bitwise deterministic given the seed.

    Draw order: design matrices, then x_sharp, then (if zeta > 0) the
    per-machine offsets.
    """
    if dimension < 1:
        raise ParameterError(f"dimension must be >= 1, got {dimension}")
    if machines < 1:
        raise ParameterError(f"machine count must be >= 1, got {machines}")
    if sigma < 0:
        raise ParameterError(f"noise std must be >= 0, got {sigma}")
    if zeta < 0:
        raise ParameterError(f"heterogeneity must be >= 0, got {zeta}")

    rng = np.random.default_rng(seed)
    if shared_design:
        A0 = rng.standard_normal((dimension, dimension))
        design = np.ascontiguousarray(np.broadcast_to(A0, (machines, dimension, dimension)))
    else:
        design = rng.standard_normal((machines, dimension, dimension))
    x_sharp = rng.standard_normal(dimension) / math.sqrt(dimension)
    if zeta > 0:
        delta = rng.standard_normal((machines, dimension)) * (zeta / math.sqrt(dimension))
        targets = np.einsum("mij,mj->mi", design, x_sharp[None, :] - delta)
    else:
        targets = np.matmul(design, x_sharp)
    targets = np.ascontiguousarray(targets)
    design.setflags(write=False)
    targets.setflags(write=False)
    x_sharp.setflags(write=False)
    return LeastSquaresProblem(
        dimension=dimension,
        machines=machines,
        design=design,
        targets=targets,
        x_sharp=x_sharp,
        noise_std=float(sigma),
        heterogeneity=float(zeta),
        shared_design=shared_design,
        seed=seed,
    )


def batched_exact_grads(problem: LeastSquaresProblem, Y: np.ndarray) -> np.ndarray:
    """Exact gradients of every machine at its own column of ``Y`` (d, M)."""
    R = np.matmul(problem.design, Y.T[:, :, None])[:, :, 0] - problem.targets
    return np.matmul(problem.design.transpose(0, 2, 1), R[:, :, None])[:, :, 0].T


class GradientNoise:
    """Counter-keyed gradient noise, one (d, M) block per round.

    Block ``t`` is a pure function of ``(seed, t, d, M)``: it is drawn from a
    Philox stream whose 256-bit counter is set to ``t << 128``, so any round
    is addressable in O(1) and results never depend on evaluation order or on
    how rounds are chunked.  Machine ``i`` reads column ``i``.  Entries are
    pre-scaled to standard deviation ``sigma / sqrt(d)`` per coordinate.
    """

    def __init__(self, seed: int, sigma: float, dimension: int, machines: int):
        if sigma < 0:
            raise ParameterError(f"noise std must be >= 0, got {sigma}")
        self.seed = seed
        self.sigma = float(sigma)
        self.dimension = dimension
        self.machines = machines
        words = np.random.SeedSequence([seed, _NOISE_TAG]).generate_state(2, np.uint64)
        self._key = int(words[0]) | (int(words[1]) << 64)
        self._scale = self.sigma / math.sqrt(dimension)

    def block(self, t: int) -> np.ndarray:
        """Noise matrix for round ``t >= 1``; column i targets machine i."""
        if t < 1:
            raise ParameterError(f"round index must be >= 1, got {t}")
        if self.sigma == 0.0:
            return np.zeros((self.dimension, self.machines))
        rng = np.random.Generator(np.random.Philox(key=self._key, counter=t << 128))
        return rng.standard_normal((self.dimension, self.machines)) * self._scale

    def blocks(self, t_begin: int, t_end: int) -> np.ndarray | None:
        """Stacked blocks for rounds [t_begin, t_end); None when sigma == 0."""
        if self.sigma == 0.0:
            return None
        out = np.empty((t_end - t_begin, self.dimension, self.machines))
        for k, t in enumerate(range(t_begin, t_end)):
            rng = np.random.Generator(np.random.Philox(key=self._key, counter=t << 128))
            rng.standard_normal(out=out[k])
        out *= self._scale
        return out
