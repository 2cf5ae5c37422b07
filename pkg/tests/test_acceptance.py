"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances are pinned in the assertions; runtime budgets are asserted
where the criterion states one.
"""

import math
import time

import numpy as np
import pytest

from gossipgrad import harness, metrics, theory, topology
from gossipgrad.errors import ZeroSpectralGapError
from gossipgrad.optim import (
    NetworkState,
    RunConfig,
    WeightSchedule,
    build_problem,
    datsgd_round,
    initial_state,
    run,
    weight_coeffs,
)
from gossipgrad.problem import GradientNoise, batched_exact_grads


def _report(criterion: int, detail: str) -> None:
    print(f"\n[criterion {criterion:2d}] PASS  {detail}")


def _contraction_cases():
    cases = []
    for m in (4, 8, 16):
        cases.append((f"ring({m})", topology.Ring(m)))
        cases.append((f"complete({m})", topology.Complete(m)))
        cases.append((f"onepeer({m})", topology.OnePeerExp(m)))
    cases.append(("torus(4x4)", topology.Torus(4, 4)))  # the only valid torus in {4,8,16}
    return cases


def _random_suite(machines: int, n: int = 1000, d: int = 5) -> np.ndarray:
    return np.random.default_rng(machines * 7919 + 13).standard_normal((n, d, machines))


def test_criterion_01_gossip_contraction():
    start = time.perf_counter()
    worst = 0.0
    for label, spec in _contraction_cases():
        seq = topology.build(spec)
        X = _random_suite(seq.machines)
        mean = X.mean(axis=2, keepdims=True)
        before = ((X - mean) ** 2).sum(axis=(1, 2))
        for P in seq.matrices:
            try:
                rho = topology.spectral_gap(P)
            except ZeroSpectralGapError:
                rho = 0.0  # single one-peer pairing matrices do not mix alone
            after = ((X @ P - mean) ** 2).sum(axis=(1, 2))
            slack = after - ((1.0 - rho) * before + 1e-9)
            assert np.all(slack <= 0.0), f"contraction violated for {label}"
            worst = max(worst, float(slack.max()))
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    _report(1, f"contraction holds on 1000 random matrices per topology ({elapsed:.1f}s)")


def test_criterion_02_validity_and_mean_preservation():
    for label, spec in _contraction_cases():
        seq = topology.build(spec)
        X = _random_suite(seq.machines)
        scale = max(1.0, float(np.abs(X).max()))
        for P in seq.matrices:
            report = topology.validate(P)
            assert report.ok, f"{label}: {report}"
            drift = np.abs((X @ P).mean(axis=2) - X.mean(axis=2)).max()
            assert drift <= 1e-12 * scale, f"mean drift {drift:.3g} for {label}"
    _report(2, "all built-in matrices validate clean; column means preserved to 1e-12")


def test_criterion_03_spectral_gaps():
    for m in (4, 8, 16):
        assert topology.spectral_gap(topology.build(topology.Complete(m)).matrix_at(1)) == 1.0
    ring4 = topology.spectral_gap(topology.build(topology.Ring(4)).matrix_at(1))
    assert abs(ring4 - 2.0 / 3.0) <= 1e-9
    for m in range(3, 65):
        lams = [(1.0 + 2.0 * math.cos(2.0 * math.pi * k / m)) / 3.0 for k in range(1, m)]
        oracle = 1.0 - max(abs(l) for l in lams)
        gap = topology.spectral_gap(topology.build(topology.Ring(m)).matrix_at(1))
        assert abs(gap - oracle) <= 1e-9, f"ring({m})"
    seq = topology.build(topology.OnePeerExp(8))
    prod = np.eye(8)
    for P in seq.matrices:
        prod = prod @ P
    assert np.abs(prod - 1.0 / 8.0).max() <= 1e-12
    _report(3, "complete gap exactly 1; ring gaps match the circulant spectrum; "
               "one-peer period product is uniform averaging")


def _anytime_reference(problem, w1, eta, schedule, grad_fn, rounds):
    """Centralized anytime loop; grad_fn(t, x) supplies the round's gradient."""
    w = w1.copy()
    x = w1.copy()
    cum = 0.0
    history = [(w.copy(), x.copy())]
    for t in range(1, rounds + 1):
        g = grad_fn(t, x)
        alpha, _, delta = weight_coeffs(schedule, t)
        step = eta if alpha is None else eta * alpha
        w = w - step * g
        x = (1.0 - delta) * x + delta * w
        history.append((w.copy(), x.copy()))
    return history


def test_criterion_04_reductions():
    # (a) M=1: engine vs an independent single-machine anytime loop, 1e-12
    d, rounds = 5, 1000
    config = RunConfig(
        algorithm="datsgd",
        topology=topology.Complete(1),
        learning_rate=1e-3,
        rounds=rounds,
        dimension=d,
        sigma=1.0,
        zeta=0.0,
        schedule=WeightSchedule.linear(),
        seed=21,
        metric_stride=rounds,
    )
    result = run(config)
    prob = result.problem
    noise = GradientNoise(config.seed, config.sigma, d, 1)
    ref = _anytime_reference(
        prob,
        np.zeros(d),
        config.learning_rate,
        config.schedule,
        lambda t, x: prob.exact_grad(0, x) + noise.block(t)[:, 0],
        rounds,
    )
    # replay the round ops to compare every round, then pin the engine's final
    state = initial_state(np.zeros(d), 1, "datsgd")
    seq = topology.build(config.topology)
    for t in range(1, rounds + 1):
        w_ref, x_ref = ref[t]
        state = datsgd_round(state, seq.matrix_at(t), prob, config.learning_rate,
                             config.schedule, noise)
        assert np.abs(state.iterates[:, 0] - w_ref).max() <= 1e-12
        assert np.abs(state.query_points[:, 0] - x_ref).max() <= 1e-12
    assert np.abs(result.final_state.iterates[:, 0] - ref[-1][0]).max() <= 1e-12
    assert np.abs(result.final_state.query_points[:, 0] - ref[-1][1]).max() <= 1e-12

    # (b) complete graph: matches centralized anytime minibatch SGD from round 2
    m, rounds_b = 8, 300
    config_b = config.with_overrides(
        topology=topology.Complete(m), rounds=rounds_b, seed=22, zeta=1.0
    )
    result_b = run(config_b)
    prob_b = result_b.problem
    noise_b = GradientNoise(config_b.seed, config_b.sigma, d, m)

    def minibatch_grad(t, x):
        block = noise_b.block(t)
        return np.mean(
            [prob_b.exact_grad(i, x) + block[:, i] for i in range(m)], axis=0
        )

    ref_b = _anytime_reference(
        prob_b, np.zeros(d), config_b.learning_rate, config_b.schedule,
        minibatch_grad, rounds_b,
    )
    state = initial_state(np.zeros(d), m, "datsgd")
    for t in range(1, rounds_b + 1):
        state = datsgd_round(state, np.full((m, m), 1.0 / m), prob_b,
                             config_b.learning_rate, config_b.schedule, noise_b)
        w_ref, x_ref = ref_b[t]
        assert metrics.consensus_distance(state.iterates) <= 1e-20
        assert np.abs(state.iterates - w_ref[:, None]).max() <= 1e-10
        assert np.abs(state.query_points - x_ref[:, None]).max() <= 1e-10
    assert np.abs(result_b.final_state.iterates - ref_b[-1][0][:, None]).max() <= 1e-10
    _report(4, "M=1 matches the single-machine reference to 1e-12 over 1000 rounds; "
               "complete(8) matches centralized minibatch to 1e-10")


@pytest.mark.parametrize("schedule", [WeightSchedule.linear(), WeightSchedule.constant()],
                         ids=["linear", "constant"])
def test_criterion_05_weighted_average_identity(schedule):
    d, m, rounds = 10, 8, 500
    prob = harness.optim.build_problem(
        RunConfig(
            algorithm="datsgd", topology=topology.Ring(m), learning_rate=1e-3,
            rounds=rounds, dimension=d, sigma=1.0, zeta=1.0, seed=31,
            schedule=schedule,
        )
    )
    seq = topology.build(topology.Ring(m))
    noise = GradientNoise(31, 1.0, d, m)
    state = initial_state(np.zeros(d), m, "datsgd")
    x_rec = state.query_points.mean(axis=1).copy()
    for t in range(1, rounds + 1):
        _, _, delta = weight_coeffs(schedule, t)
        state = datsgd_round(state, seq.matrix_at(t), prob, 1e-3, schedule, noise)
        # consensus-iterate recursion replay: x_bar' = (1-d) x_bar + d w_bar'
        x_rec = (1.0 - delta) * x_rec + delta * state.iterates.mean(axis=1)
    x_sim = state.query_points.mean(axis=1)
    rel = np.linalg.norm(x_rec - x_sim) / max(np.linalg.norm(x_sim), 1e-30)
    assert rel <= 1e-9
    _report(5, f"reconstructed consensus query point matches simulation "
               f"(rel err {rel:.2e}, {schedule.kind} weights)")


def test_criterion_06_pathwise_psi_bound():
    # literal configuration: noiseless homogeneous run from common init stays
    # in exact consensus, so the bound holds with both sides at zero
    config = RunConfig(
        algorithm="datsgd", topology=topology.Ring(8), learning_rate=1e-5,
        rounds=2000, dimension=10, sigma=0.0, zeta=0.0, shared_design=True,
        schedule=WeightSchedule.linear(), seed=41, metric_stride=10,
    )
    result = run(config)
    L = result.problem.smoothness
    assert np.all(result.trace.psi <= 10.0 * L**2 * result.trace.gamma + 1e-9)
    assert result.trace.psi.max() <= 1e-24 and result.trace.gamma.max() <= 1e-24

    # substantive check: disperse the machines and verify the bound bites
    prob = result.problem
    seq = topology.build(config.topology)
    rng = np.random.default_rng(42)
    start = rng.standard_normal((10, 8))
    state = NetworkState(iterates=start.copy(), query_points=start.copy())
    eta = 1.0 / (24.0 * L * 2000)
    checked = 0
    for t in range(1, 2001):
        G = batched_exact_grads(prob, state.query_points)
        psi = metrics.gradient_consensus(G)
        gamma = metrics.consensus_distance(state.query_points)
        assert psi <= 10.0 * L**2 * gamma + 1e-9, f"round {t}"
        checked += 1
        state = datsgd_round(state, seq.matrix_at(t), prob, eta, config.schedule)
    assert checked == 2000
    _report(6, "psi <= 10 L^2 gamma holds at every round, from common and "
               "dispersed starts (sigma=0, shared design)")


def test_criterion_07_noiseless_convergence():
    start = time.perf_counter()
    config = RunConfig(
        algorithm="dsgd", topology=topology.Ring(8), learning_rate=1e-3,
        rounds=10_000, dimension=10, sigma=0.0, zeta=0.0, shared_design=True,
        schedule=WeightSchedule.constant(), seed=3, metric_stride=10_000,
    )
    L = build_problem(config).smoothness
    best, _ = harness.grid_search(config, [0.25 / L, 0.5 / L, 1.0 / L, 1.9 / L], seeds=[1])
    final = run(config.with_overrides(learning_rate=best)).final_excess_loss()
    elapsed = time.perf_counter() - start
    assert final <= 1e-8
    assert elapsed < 30.0
    _report(7, f"grid-searched eta={best:.4g} reaches excess {final:.2e} "
               f"within 1e4 rounds ({elapsed:.1f}s)")


def test_criterion_08_expectation_bounds():
    start = time.perf_counter()
    config = RunConfig(
        algorithm="datsgd", topology=topology.Torus(4, 4), learning_rate=1e-3,
        rounds=5000, dimension=50, sigma=1.0, zeta=0.0, shared_design=True,
        schedule=WeightSchedule.linear(), seed=0, metric_stride=10,
    )
    inputs = harness.theory_inputs_for(config)
    eta = min(
        theory.gamma_threshold(inputs.rho, inputs.smoothness),
        theory.theoretical_lr(inputs),
    )
    report = harness.bound_check(config.with_overrides(learning_rate=eta), range(1, 21))
    elapsed = time.perf_counter() - start
    # strict <=, no tolerance credit
    assert report.gamma_max_ratio <= 1.0
    assert report.excess_ratio <= 1.0
    assert elapsed < 300.0
    _report(8, f"seed-mean gamma ratio {report.gamma_max_ratio:.3g}, "
               f"excess ratio {report.excess_ratio:.3g} ({elapsed:.0f}s, 20 seeds)")


@pytest.fixture(scope="module")
def figure1_sweep():
    base = RunConfig(
        algorithm="datsgd", topology=topology.Torus(3, 3), learning_rate=1e-3,
        rounds=20_000, dimension=50, sigma=1.0, zeta=1.0, shared_design=False,
        schedule=WeightSchedule.constant(), seed=0, metric_stride=20_000,
    )
    spec = harness.SweepSpec(
        base=base, machines=(9, 16, 25), topologies=("torus",),
        algorithms=("dsgd", "datsgd"), eta_grid=harness.DEFAULT_ETA_GRID,
        seeds=(1, 2, 3),
    )
    start = time.perf_counter()
    table = harness.sweep_machines(spec)
    return table, time.perf_counter() - start


def test_criterion_09_figure1_trends(figure1_sweep):
    table, elapsed = figure1_sweep
    mean = {
        (r.algorithm, r.machines): r.final_error for r in table.aggregate("mean")
    }
    assert elapsed < 900.0
    # (a) anytime error improves from 9 to 25 machines on the torus
    assert mean[("datsgd", 25)] < mean[("datsgd", 9)]
    # (b) anytime beats plain decentralized SGD at 25 machines
    assert mean[("datsgd", 25)] < mean[("dsgd", 25)]
    _report(9, "torus sweep: datsgd error improves 9->25 machines "
               f"({mean[('datsgd', 9)]:.3g} -> {mean[('datsgd', 25)]:.3g}) and beats "
               f"dsgd at 25 ({mean[('dsgd', 25)]:.3g}); {elapsed:.0f}s")


def test_criterion_10_formula_cross_checks():
    rng = np.random.default_rng(777)
    rel = 1e-12

    def close(a, b):
        return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)

    for _ in range(100):
        L = float(rng.uniform(0.05, 20.0))
        T = int(rng.integers(1, 100_000))
        rho = float(rng.uniform(1e-3, 1.0))
        M = int(rng.integers(1, 200))
        sigma = float(rng.uniform(0.0, 10.0))
        zeta = float(rng.uniform(0.0, 10.0))
        D1 = float(rng.uniform(1e-3, 10.0))
        eta = float(rng.uniform(1e-8, 1.0))
        gamma = float(rng.uniform(0.0, 10.0))
        N = float(rng.uniform(1.0, 1e9))
        inputs = theory.TheoryInputs(L, T, rho, M, sigma, zeta, D1)
        K = math.sqrt(5120.0) * L
        st = math.sqrt(2.0 * sigma * sigma + zeta * zeta)

        terms = [1.0 / (24.0 * L * T), rho * rho / K]
        if sigma > 0:
            terms.append(D1 * math.sqrt(M) / (math.sqrt(3.0) * sigma * T**1.5))
        if st > 0:
            terms.append(math.sqrt(D1 / (2.0 * K * st)) * rho / T)
        assert close(theory.theoretical_lr(inputs), min(terms))

        bound = (
            8.0 * math.sqrt(3.0) * D1 * sigma / math.sqrt(M * T)
            + 8.0 * math.sqrt(2.0) * D1**1.5 * math.sqrt(K * st) / (rho * T)
            + 96.0 * L * D1 * D1 / T
            + 4.0 * K * D1 * D1 / (rho * rho * T * T)
        )
        assert close(theory.convergence_bound(inputs), bound)
        assert close(
            theory.gamma_bound(eta, rho, sigma, zeta),
            2560.0 * (2.0 * sigma * sigma + zeta * zeta) * eta * eta / rho**4,
        )
        assert close(
            theory.psi_bound(sigma, zeta, L, gamma),
            5.0 * (2.0 * sigma * sigma + zeta * zeta) + 10.0 * L * L * gamma,
        )
        assert close(theory.transient_complexity(M, rho), M / (rho * rho))
        expected = {
            ("ring", "dsgd"): N ** 0.125,
            ("ring", "datsgd"): N ** (1.0 / 6.0),
            ("torus", "dsgd"): N ** (1.0 / 6.0),
            ("torus", "datsgd"): N ** 0.25,
            ("near_complete", "dsgd"): math.sqrt(rho) * N ** 0.25,
            ("near_complete", "datsgd"): rho * math.sqrt(N),
        }
        for (cls, algo), value in expected.items():
            assert close(theory.parallelism_bound(cls, N, rho, algo), value)
    _report(10, "all six formula families match independent term-by-term "
                "evaluation on 100 random inputs (rel 1e-12)")
