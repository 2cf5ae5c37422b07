"""Pure-numpy simulation kernel (fallback backend).

Mirrors the compiled kernel's contract exactly; see driver.py for the round
semantics.  State matrices are updated in place.
"""

from __future__ import annotations

import numpy as np

KERNEL_NAME = "python"

ALGO_DSGD = 0
ALGO_DATSGD = 1
SCHED_CONSTANT = 0
SCHED_LINEAR = 1
SCHED_FIXED_GAMMA = 2


def _grads(design, targets, Y):
    R = np.matmul(design, Y.T[:, :, None])[:, :, 0] - targets
    return np.matmul(design.transpose(0, 2, 1), R[:, :, None])[:, :, 0].T


def _spread(Y):
    diff = Y - Y.mean(axis=1, keepdims=True)
    return float(np.einsum("dm,dm->", diff, diff)) / Y.shape[1]


def _node_error(Y, ref):
    diff = Y - ref[:, None]
    return float(np.einsum("dm,dm->", diff, diff)) / Y.shape[1]


def run_rounds(
    algo,
    sched,
    gamma,
    eta,
    design,
    targets,
    gossip_stack,
    W,
    X,
    t_begin,
    t_end,
    noise_chunk,
    x_star,
    f_star,
    record_rounds,
    rec_pos,
    trace,
    div_limit,
):
    M = W.shape[1]
    period = gossip_stack.shape[0]
    n_rec = record_rounds.shape[0]
    for t in range(t_begin, t_end):
        P = gossip_stack[(t - 1) % period]
        Y = X if algo == ALGO_DATSGD else W
        G = _grads(design, targets, Y)
        if noise_chunk is not None:
            G += noise_chunk[t - t_begin]

        if rec_pos < n_rec and record_rounds[rec_pos] == t:
            ymean = Y.mean(axis=1)
            r = np.matmul(design, ymean) - targets
            loss = 0.5 * float(np.einsum("md,md->", r, r)) / M
            row = trace[rec_pos]
            row[0] = _spread(Y)
            row[1] = _spread(W)
            row[2] = _spread(G)
            row[3] = loss
            row[4] = loss - f_star
            row[5] = _node_error(Y, x_star)
            row[6] = _node_error(W, x_star)
            rec_pos += 1

        if sched == SCHED_LINEAR:
            step = eta * t
            delta = 2.0 / (t + 1)
        elif sched == SCHED_CONSTANT:
            step = eta
            delta = 1.0 / t
        else:
            step = eta
            delta = 1.0 - gamma

        if algo == ALGO_DSGD:
            W[:] = (W - eta * G) @ P
            peak = np.abs(W).max()
        else:
            W_half = W - step * G
            X_half = (1.0 - delta) * X + delta * W_half
            W[:] = W_half @ P
            X[:] = X_half @ P
            peak = max(np.abs(W).max(), np.abs(X).max())
        if not peak <= div_limit:
            return rec_pos, t
    return rec_pos, -1
