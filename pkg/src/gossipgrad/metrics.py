"""Consensus-distance and error diagnostics recorded along a run.

All quantities are pathwise: they are computed from the actual matrices of a
round (query points, iterates, and the gradients that were really sampled),
not re-sampled.  Seed averaging happens in the harness.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .problem import LeastSquaresProblem

__all__ = [
    "MetricsTrace",
    "TRACE_COLUMNS",
    "consensus_distance",
    "gradient_consensus",
    "excess_loss",
    "per_node_error",
]

TRACE_COLUMNS = (
    "round",
    "gamma",
    "xi",
    "psi",
    "loss_consensus",
    "excess_loss",
    "per_node_error_x",
    "per_node_error_w",
)


def consensus_distance(Y: np.ndarray) -> float:
    """(1/M) sum_i ||y_i - ybar||^2 over the columns of a (d, M) matrix."""
    Y = np.asarray(Y, dtype=np.float64)
    mean = Y.mean(axis=1, keepdims=True)
    diff = Y - mean
    return float(np.einsum("dm,dm->", diff, diff)) / Y.shape[1]


def gradient_consensus(G: np.ndarray) -> float:
    """Same spread measure applied to a (d, M) matrix of sampled gradients."""
    return consensus_distance(G)


def excess_loss(problem: LeastSquaresProblem, x: np.ndarray) -> float:
    """f(x) - f(x*), clamped at zero; warns if below -1e-10 (numerical issue)."""
    _, f_star = problem.optimum
    value = problem.loss(x) - f_star
    if value < -1e-10:
        warnings.warn(
            f"excess loss {value:.3g} below -1e-10; optimum or loss evaluation suspect",
            RuntimeWarning,
            stacklevel=2,
        )
    return max(value, 0.0)


def per_node_error(Y: np.ndarray, x_star: np.ndarray) -> float:
    """(1/M) sum_i ||y_i - x*||^2, the final-error measure of the sweeps."""
    Y = np.asarray(Y, dtype=np.float64)
    diff = Y - np.asarray(x_star, dtype=np.float64)[:, None]
    return float(np.einsum("dm,dm->", diff, diff)) / Y.shape[1]


@dataclass
class MetricsTrace:
    """Per-round diagnostics at the recorded rounds of a run.

    Row ``t`` describes the state at the start of round ``t`` together with
    the gradients sampled during round ``t`` (so ``psi`` pairs with the
    ``gamma`` of the very points the gradients were queried at).  For D-SGD
    the query points are the iterates, so the ``gamma``/``per_node_error_x``
    columns mirror ``xi``/``per_node_error_w``.
    """

    rounds: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    psi: np.ndarray
    loss_consensus: np.ndarray
    excess_loss: np.ndarray
    per_node_error_x: np.ndarray
    per_node_error_w: np.ndarray

    def __post_init__(self):
        n = len(self.rounds)
        for f in fields(self):
            if len(getattr(self, f.name)) != n:
                raise ValueError(f"trace column {f.name} has mismatched length")

    def __len__(self) -> int:
        return len(self.rounds)

    def column(self, name: str) -> np.ndarray:
        if name not in TRACE_COLUMNS:
            raise KeyError(name)
        return getattr(self, "rounds" if name == "round" else name)

    def to_csv(self, path_or_buf) -> None:
        """Write the trace in the pinned column order; floats use repr."""
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for k in range(len(self)):
                row = [str(int(self.rounds[k]))]
                row += [
                    repr(float(self.column(c)[k]))
                    for c in TRACE_COLUMNS[1:]
                ]
                fh.write(",".join(row) + "\n")
        finally:
            if own:
                fh.close()

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()
