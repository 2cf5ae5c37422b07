import io

import numpy as np
import pytest

from gossipgrad import metrics, topology
from gossipgrad.metrics import (
    TRACE_COLUMNS,
    MetricsTrace,
    consensus_distance,
    excess_loss,
    gradient_consensus,
    per_node_error,
)
from gossipgrad.problem import generate


def test_consensus_distance_trivia():
    assert consensus_distance(np.ones((3, 4))) == 0.0
    assert consensus_distance(np.array([[0.0, 2.0]])) == pytest.approx(1.0, abs=0)
    assert consensus_distance(np.array([[1.0, 2.0, 3.0]])) == pytest.approx(2.0 / 3.0, abs=1e-15)


def test_gradient_consensus_trivia():
    assert gradient_consensus(np.tile([[1.0], [2.0]], (1, 5))) == 0.0
    assert gradient_consensus(np.array([[-1.0, 1.0]])) == pytest.approx(1.0, abs=0)


def test_gradient_consensus_zero_for_identical_machines():
    p = generate(4, 3, sigma=0.0, zeta=0.0, shared_design=True, seed=2)
    x = np.random.default_rng(0).standard_normal(4)
    G = np.stack([p.exact_grad(i, x) for i in range(3)], axis=1)
    assert gradient_consensus(G) == 0.0


def test_excess_loss_trivia():
    p = generate(5, 2, sigma=0.0, zeta=1.0, seed=4)
    x_star, _ = p.optimum
    assert excess_loss(p, x_star) <= 1e-10
    rng = np.random.default_rng(5)
    for _ in range(50):
        assert excess_loss(p, rng.standard_normal(5)) >= 0.0


def test_excess_loss_scalar_example():
    # f(x) = 0.5 x^2 with minimum 0 at 0: excess at x=2 is 2
    from gossipgrad.problem import LeastSquaresProblem

    p = LeastSquaresProblem(
        dimension=1,
        machines=1,
        design=np.ones((1, 1, 1)),
        targets=np.zeros((1, 1)),
        x_sharp=np.zeros(1),
        noise_std=0.0,
        heterogeneity=0.0,
        shared_design=False,
        seed=0,
    )
    assert excess_loss(p, np.array([2.0])) == pytest.approx(2.0, abs=1e-12)


def test_excess_loss_warns_when_strongly_negative():
    import dataclasses

    p = generate(3, 2, sigma=0.0, zeta=0.0, seed=1)
    x_star, _ = p.optimum
    # corrupt the cached optimum value to force a negative excess
    bad = dataclasses.replace(p)
    bad.__dict__["optimum"] = (x_star, p.loss(x_star) + 1e-6)
    with pytest.warns(RuntimeWarning):
        value = excess_loss(bad, x_star)
    assert value == 0.0


def test_per_node_error_trivia():
    x_star = np.zeros(1)
    assert per_node_error(np.zeros((1, 3)), x_star) == 0.0
    assert per_node_error(np.array([[1.0, -1.0]]), x_star) == pytest.approx(1.0, abs=0)


def test_per_node_error_decomposition_identity():
    rng = np.random.default_rng(6)
    for _ in range(200):
        Y = rng.standard_normal((4, 6))
        x_star = rng.standard_normal(4)
        lhs = per_node_error(Y, x_star)
        rhs = consensus_distance(Y) + float(np.sum((Y.mean(axis=1) - x_star) ** 2))
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_gossip_monotonicity():
    seq = topology.build(topology.Ring(6))
    P = seq.matrix_at(1)
    rho = topology.spectral_gap(P)
    rng = np.random.default_rng(7)
    for _ in range(200):
        Y = rng.standard_normal((3, 6))
        after = consensus_distance(topology.gossip_step(Y, P))
        assert after <= (1.0 - rho) * consensus_distance(Y) + 1e-9


def _tiny_trace() -> MetricsTrace:
    z = np.zeros(2)
    return MetricsTrace(
        rounds=np.array([1, 10], dtype=np.int64),
        gamma=np.array([0.5, 0.25]),
        xi=z + 1.0,
        psi=z + 2.0,
        loss_consensus=z + 3.0,
        excess_loss=z,
        per_node_error_x=z + 4.0,
        per_node_error_w=z + 5.0,
    )


def test_trace_csv_schema():
    text = _tiny_trace().to_csv_string()
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert lines[0] == "round,gamma,xi,psi,loss_consensus,excess_loss,per_node_error_x,per_node_error_w"
    assert lines[1].split(",")[0] == "1"
    assert lines[1].split(",")[1] == "0.5"
    assert len(lines) == 3


def test_trace_csv_is_reproducible():
    a, b = io.StringIO(), io.StringIO()
    _tiny_trace().to_csv(a)
    _tiny_trace().to_csv(b)
    assert a.getvalue() == b.getvalue()


def test_trace_length_mismatch_rejected():
    with pytest.raises(ValueError):
        MetricsTrace(
            rounds=np.array([1, 2], dtype=np.int64),
            gamma=np.zeros(3),
            xi=np.zeros(2),
            psi=np.zeros(2),
            loss_consensus=np.zeros(2),
            excess_loss=np.zeros(2),
            per_node_error_x=np.zeros(2),
            per_node_error_w=np.zeros(2),
        )
