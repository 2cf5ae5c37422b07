"""Backend-independent round loop: chunking, noise feed, trace assembly.

Round semantics (both kernels):

- rounds are 1-based; round t samples gradients at the current query points
  (X for the anytime variant, W for plain decentralized SGD), records metrics
  for the state at the START of round t paired with those gradients, then
  applies the local update and gossips.
- the kernel returns the first round whose post-gossip state exceeded the
  divergence limit (or -1), plus the updated trace cursor.
"""

from __future__ import annotations

import numpy as np

from ..errors import DivergenceError

# Rounds per kernel call; results are invariant to this (noise blocks are
# keyed per round), it only bounds the noise buffer to ~2M doubles.
_CHUNK_TARGET = 2_000_000


def chunk_length(dimension: int, machines: int) -> int:
    return max(1, min(512, _CHUNK_TARGET // max(1, dimension * machines)))


def record_schedule(rounds: int, stride: int) -> np.ndarray:
    """Recorded rounds: 1, 1+stride, 1+2*stride, ... plus the final round."""
    pts = list(range(1, rounds + 1, max(1, stride)))
    if pts[-1] != rounds:
        pts.append(rounds)
    return np.asarray(pts, dtype=np.int64)


def simulate(
    kernel,
    *,
    algo: int,
    sched: int,
    gamma: float,
    eta: float,
    rounds: int,
    design: np.ndarray,
    targets: np.ndarray,
    gossip_stack: np.ndarray,
    w1: np.ndarray,
    noise,
    record_rounds: np.ndarray,
    x_star: np.ndarray,
    f_star: float,
    div_limit: float = 1e12,
):
    """Run ``rounds`` rounds; returns (W, X, trace) with trace (n_rec, 7).

    W and X hold the state after the final round's update.  Raises
    DivergenceError as soon as any entry leaves [-div_limit, div_limit].
    """
    d, machines = len(w1), design.shape[0]
    W = np.ascontiguousarray(np.tile(np.asarray(w1, dtype=np.float64)[:, None], (1, machines)))
    X = W.copy() if algo else None
    trace = np.zeros((len(record_rounds), 7))
    rec_pos = 0
    chunk = chunk_length(d, machines)
    t = 1
    while t <= rounds:
        t_end = min(t + chunk, rounds + 1)
        noise_chunk = noise.blocks(t, t_end) if noise is not None else None
        rec_pos, diverged = kernel.run_rounds(
            algo,
            sched,
            gamma,
            eta,
            design,
            targets,
            gossip_stack,
            W,
            X,
            t,
            t_end,
            noise_chunk,
            x_star,
            f_star,
            np.ascontiguousarray(record_rounds, dtype=np.int64),
            rec_pos,
            trace,
            div_limit,
        )
        if diverged >= 0:
            raise DivergenceError(int(diverged))
        t = t_end
    return W, X, trace
