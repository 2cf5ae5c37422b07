"""gossipgrad: decentralized SGD simulation over gossip networks.

Simulates plain decentralized SGD and its anytime-averaged variant on
synthetic least-squares problems, records consensus-distance diagnostics,
and evaluates the closed-form tuning/bound formulas the simulations are
checked against.  A compiled round-loop kernel is used when built, with a
pure-numpy fallback selected automatically at import.
"""

from ._kernels import DEFAULT_BACKEND, HAVE_COMPILED, available_backends
from .errors import (
    ConfigError,
    DegenerateProblemError,
    DivergenceError,
    GossipGradError,
    NoStableLearningRateError,
    ParameterError,
    ShapeError,
    ZeroSpectralGapError,
)
from .harness import SweepSpec, bound_check, grid_search, run_seeds, sweep_machines
from .metrics import consensus_distance, excess_loss, gradient_consensus, per_node_error
from .optim import NetworkState, RunConfig, WeightSchedule, run
from .problem import GradientNoise, LeastSquaresProblem, generate
from .theory import TheoryInputs, convergence_bound, theoretical_lr
from .topology import (
    Complete,
    Custom,
    GossipSequence,
    OnePeerExp,
    Ring,
    Torus,
    build,
    gossip_step,
    spectral_gap,
    validate,
)

__version__ = "0.1.0"


def active_backend() -> str:
    """Name of the kernel backend runs use by default."""
    return DEFAULT_BACKEND
