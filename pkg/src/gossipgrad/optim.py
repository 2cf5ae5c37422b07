"""Round-by-round execution of decentralized SGD variants.

Two algorithms over a gossip sequence:

- ``dsgd``: each machine takes a plain SGD step at its own iterate, then the
  iterate matrix gossips.
- ``datsgd``: gradients are queried at slowly-moving query points (running
  weighted averages of the iterates).  Per machine,
  ``w_half = w - eta * alpha_t * g`` and
  ``x_half = (1 - delta_t) * x + delta_t * w_half``; then BOTH the iterate and
  the query-point matrices gossip with the same matrix.

Weight schedules: constant (``alpha_t = 1``), linear (``alpha_t = t``), and a
fixed-gamma heuristic that replaces the averaging coefficient with
``delta_t = 1 - gamma`` and drops the alpha-weighting of the gradient step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, metrics, problem as problem_mod, topology
from ._kernels import driver
from .errors import ParameterError, ShapeError

__all__ = [
    "WeightSchedule",
    "NetworkState",
    "RunConfig",
    "RunResult",
    "weight_coeffs",
    "initial_state",
    "dsgd_round",
    "datsgd_round",
    "run",
]

ALGORITHMS = ("dsgd", "datsgd")
SCHEDULE_KINDS = ("constant", "linear", "fixed_gamma")
INITIAL_POINT_RULES = ("zeros", "gaussian")

DIVERGENCE_LIMIT = 1e12

_INIT_TAG = 0x696E6974


@dataclass(frozen=True)
class WeightSchedule:
    """Anytime-averaging weight rule.

    ``fixed_gamma`` has no alpha weights; alpha-dependent formulas must reject
    it (weight_coeffs returns None for both alpha values).
    """

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ParameterError(
                f"unknown schedule kind {self.kind!r}, allowed: {SCHEDULE_KINDS}"
            )
        if self.kind == "fixed_gamma":
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                raise ParameterError(
                    f"fixed_gamma requires gamma in (0, 1), got {self.gamma}"
                )
        elif self.gamma is not None:
            raise ParameterError(f"{self.kind} schedule takes no gamma")

    @classmethod
    def constant(cls) -> "WeightSchedule":
        return cls("constant")

    @classmethod
    def linear(cls) -> "WeightSchedule":
        return cls("linear")

    @classmethod
    def fixed_gamma(cls, gamma: float) -> "WeightSchedule":
        return cls("fixed_gamma", gamma)

    @property
    def has_alpha(self) -> bool:
        return self.kind != "fixed_gamma"


def weight_coeffs(schedule: WeightSchedule, t: int) -> tuple[float | None, float | None, float]:
    """(alpha_t, alpha_{1:t}, delta_t) at round ``t >= 1``.

    Constant: (1, t, 1/t).  Linear: (t, t(t+1)/2, 2/(t+1)).  Fixed-gamma:
    (None, None, 1 - gamma).
    """
    if t < 1:
        raise ParameterError(f"round index must be >= 1, got {t}")
    if schedule.kind == "constant":
        return 1.0, float(t), 1.0 / t
    if schedule.kind == "linear":
        return float(t), t * (t + 1) / 2.0, 2.0 / (t + 1)
    return None, None, 1.0 - schedule.gamma


@dataclass
class NetworkState:
    """Per-machine state between rounds.

    ``iterates`` is the (d, M) matrix W; ``query_points`` is the (d, M)
    matrix X (None for dsgd, whose gradients are queried at the iterates).
    ``weight_sum`` accumulates alpha_{1:t-1} (None under fixed_gamma).
    """

    iterates: np.ndarray
    query_points: np.ndarray | None = None
    round: int = 1
    weight_sum: float | None = 0.0

    @property
    def machines(self) -> int:
        return self.iterates.shape[1]

    @property
    def dimension(self) -> int:
        return self.iterates.shape[0]

    def mean_iterate(self) -> np.ndarray:
        return self.iterates.mean(axis=1)

    def mean_query_point(self) -> np.ndarray:
        Y = self.iterates if self.query_points is None else self.query_points
        return Y.mean(axis=1)

    def output_matrix(self) -> np.ndarray:
        """The algorithm's output variable: X for datsgd, W for dsgd."""
        return self.iterates if self.query_points is None else self.query_points


def initial_state(w1: np.ndarray, machines: int, algorithm: str) -> NetworkState:
    """All machines start at the shared w1 (query points included)."""
    w1 = np.asarray(w1, dtype=np.float64)
    if w1.ndim != 1:
        raise ShapeError(f"initial point must be a vector, got shape {w1.shape}")
    W = np.tile(w1[:, None], (1, machines))
    X = W.copy() if algorithm == "datsgd" else None
    return NetworkState(iterates=W, query_points=X, round=1, weight_sum=0.0)


def _round_grads(problem, Y, noise, t):
    G = problem_mod.batched_exact_grads(problem, Y)
    if noise is not None and noise.sigma > 0.0:
        G = G + noise.block(t)
    return G


def dsgd_round(
    state: NetworkState,
    P: np.ndarray,
    problem: problem_mod.LeastSquaresProblem,
    eta: float,
    noise: problem_mod.GradientNoise | None = None,
) -> NetworkState:
    """One decentralized SGD round: local step at the iterates, then gossip."""
    if state.query_points is not None:
        raise ParameterError("dsgd state must not carry query points")
    _check_dims(state, P, problem)
    G = _round_grads(problem, state.iterates, noise, state.round)
    W = topology.gossip_step(state.iterates - eta * G, P)
    return NetworkState(iterates=W, query_points=None, round=state.round + 1, weight_sum=None)


def datsgd_round(
    state: NetworkState,
    P: np.ndarray,
    problem: problem_mod.LeastSquaresProblem,
    eta: float,
    schedule: WeightSchedule,
    noise: problem_mod.GradientNoise | None = None,
) -> NetworkState:
    """One anytime round: gradients at the query points, averaged update,
    then gossip of both matrices with the same P."""
    if state.query_points is None:
        raise ParameterError("datsgd state requires query points")
    _check_dims(state, P, problem)
    t = state.round
    alpha, _, delta = weight_coeffs(schedule, t)
    G = _round_grads(problem, state.query_points, noise, t)
    step = eta if alpha is None else eta * alpha
    W_half = state.iterates - step * G
    X_half = (1.0 - delta) * state.query_points + delta * W_half
    new_sum = None
    if schedule.has_alpha and state.weight_sum is not None:
        new_sum = state.weight_sum + alpha
    return NetworkState(
        iterates=topology.gossip_step(W_half, P),
        query_points=topology.gossip_step(X_half, P),
        round=t + 1,
        weight_sum=new_sum,
    )


def _check_dims(state: NetworkState, P: np.ndarray, problem) -> None:
    P = np.asarray(P)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != state.machines:
        raise ShapeError(
            f"gossip matrix shape {P.shape} does not match {state.machines} machines"
        )
    if problem.machines != state.machines or problem.dimension != state.dimension:
        raise ShapeError(
            f"problem is {problem.dimension}x{problem.machines}, state is "
            f"{state.dimension}x{state.machines}"
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one simulation run."""

    algorithm: str
    topology: topology.TopologySpec
    learning_rate: float
    rounds: int
    dimension: int
    sigma: float = 0.0
    zeta: float = 0.0
    shared_design: bool = False
    schedule: WeightSchedule = field(default_factory=WeightSchedule.constant)
    seed: int = 0
    metric_stride: int = 10
    initial_point: str = "zeros"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ParameterError(
                f"unknown algorithm {self.algorithm!r}, allowed: {ALGORITHMS}"
            )
        if self.learning_rate <= 0:
            raise ParameterError(f"learning rate must be positive, got {self.learning_rate}")
        if self.rounds < 1:
            raise ParameterError(f"round count must be >= 1, got {self.rounds}")
        if self.metric_stride < 1:
            raise ParameterError(f"metric stride must be >= 1, got {self.metric_stride}")
        if self.initial_point not in INITIAL_POINT_RULES:
            raise ParameterError(
                f"unknown initial point rule {self.initial_point!r}, allowed: {INITIAL_POINT_RULES}"
            )

    @property
    def machines(self) -> int:
        return self.topology.machines

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


@dataclass
class RunResult:
    """Metrics trace plus final state (and the generated problem instance)."""

    trace: metrics.MetricsTrace
    final_state: NetworkState
    problem: problem_mod.LeastSquaresProblem
    config: RunConfig
    noise_seed: int

    @property
    def x_star(self) -> np.ndarray:
        return self.problem.optimum[0]

    def final_excess_loss(self) -> float:
        return metrics.excess_loss(self.problem, self.final_state.mean_query_point())

    def final_per_node_error(self) -> float:
        """Error of the output variable (X for datsgd, W for dsgd)."""
        return metrics.per_node_error(self.final_state.output_matrix(), self.x_star)

    def final_per_node_error_w(self) -> float:
        return metrics.per_node_error(self.final_state.iterates, self.x_star)


def initial_point(config: RunConfig) -> np.ndarray:
    """w1 per the config's rule; drawn from the config seed (not the noise
    seed) so replicates share the same starting distance."""
    if config.initial_point == "zeros":
        return np.zeros(config.dimension)
    words = np.random.SeedSequence([config.seed, _INIT_TAG]).generate_state(2, np.uint64)
    rng = np.random.Generator(np.random.Philox(key=int(words[0]) | (int(words[1]) << 64)))
    return rng.standard_normal(config.dimension) / math.sqrt(config.dimension)


def build_problem(config: RunConfig) -> problem_mod.LeastSquaresProblem:
    return problem_mod.generate(
        config.dimension,
        config.machines,
        config.sigma,
        config.zeta,
        shared_design=config.shared_design,
        seed=config.seed,
    )


def run(
    config: RunConfig,
    *,
    noise_seed: int | None = None,
    backend: str | None = None,
) -> RunResult:
    """Execute a full run; deterministic given (config, noise_seed, backend).

    The problem instance is generated from ``config.seed``; the gradient-noise
    streams are keyed by ``noise_seed`` (default: the config seed), which is
    what seed-replication sweeps vary.  Raises DivergenceError (reporting the
    round) if any iterate entry exceeds 1e12 in magnitude or turns non-finite.
    """
    kernel = _kernels.get_kernel(backend)
    seq = topology.build(config.topology)
    prob = build_problem(config)
    x_star, f_star = prob.optimum
    w1 = initial_point(config)
    noise_seed = config.seed if noise_seed is None else noise_seed
    noise = None
    if config.sigma > 0:
        noise = problem_mod.GradientNoise(noise_seed, config.sigma, config.dimension, config.machines)

    algo = _kernels.ALGO_DATSGD if config.algorithm == "datsgd" else _kernels.ALGO_DSGD
    sched = {
        "constant": _kernels.SCHED_CONSTANT,
        "linear": _kernels.SCHED_LINEAR,
        "fixed_gamma": _kernels.SCHED_FIXED_GAMMA,
    }[config.schedule.kind]
    record_rounds = driver.record_schedule(config.rounds, config.metric_stride)

    W, X, raw = driver.simulate(
        kernel,
        algo=algo,
        sched=sched,
        gamma=config.schedule.gamma or 0.0,
        eta=config.learning_rate,
        rounds=config.rounds,
        design=prob.design,
        targets=prob.targets,
        gossip_stack=seq.stacked(),
        w1=w1,
        noise=noise,
        record_rounds=record_rounds,
        x_star=x_star,
        f_star=f_star,
        div_limit=DIVERGENCE_LIMIT,
    )

    excess = raw[:, 4]
    if np.any(excess < -1e-10):
        warnings.warn(
            f"excess loss dipped to {excess.min():.3g} (< -1e-10); clamped in the trace",
            RuntimeWarning,
            stacklevel=2,
        )
    np.clip(excess, 0.0, None, out=excess)

    trace = metrics.MetricsTrace(
        rounds=record_rounds,
        gamma=raw[:, 0].copy(),
        xi=raw[:, 1].copy(),
        psi=raw[:, 2].copy(),
        loss_consensus=raw[:, 3].copy(),
        excess_loss=excess.copy(),
        per_node_error_x=raw[:, 5].copy(),
        per_node_error_w=raw[:, 6].copy(),
    )
    final_weight = None
    if config.algorithm == "datsgd" and config.schedule.has_alpha:
        T = config.rounds
        final_weight = float(T) if config.schedule.kind == "constant" else T * (T + 1) / 2.0
    state = NetworkState(
        iterates=W,
        query_points=X,
        round=config.rounds + 1,
        weight_sum=final_weight,
    )
    return RunResult(trace=trace, final_state=state, problem=prob, config=config, noise_seed=noise_seed)
