"""Experiment orchestration: seed replication, grid search, machine sweeps.

Seeding model: ``RunConfig.seed`` generates the problem instance (and the
initial point); the seed lists passed to the drivers below key the gradient
noise streams of the replicates.  Machine sweeps derive a fresh problem seed
per (master seed, machine count, topology kind) cell so sweeps are
self-contained.

CSV schemas (pinned):

- trace files: ``round,gamma,xi,psi,loss_consensus,excess_loss,
  per_node_error_x,per_node_error_w``
- result tables: ``topology,algorithm,machines,sigma,zeta,eta,seed,
  final_error,diverged`` with aggregate rows using seed ``mean`` / ``std``.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics, optim, theory, topology
from .errors import (
    ConfigError,
    DivergenceError,
    NoStableLearningRateError,
    ParameterError,
)

__all__ = [
    "DEFAULT_ETA_GRID",
    "SweepSpec",
    "ResultRow",
    "ResultTable",
    "BoundCheckReport",
    "run_seeds",
    "grid_search",
    "sweep_machines",
    "bound_check",
    "theory_inputs_for",
    "tuned_learning_rate",
    "load_run_config",
    "run_config_to_dict",
    "load_sweep_spec",
    "fingerprint",
]

# Default learning-rate grid for searches (7 values).
DEFAULT_ETA_GRID = (0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1)

RESULT_COLUMNS = (
    "topology",
    "algorithm",
    "machines",
    "sigma",
    "zeta",
    "eta",
    "seed",
    "final_error",
    "diverged",
)

_TOPO_CODES = {"ring": 1, "torus": 2, "complete": 3, "onepeer": 4, "custom": 5}


# --------------------------------------------------------------------------
# config documents

_MISSING = object()


def _require_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(where, f"unknown keys: {sorted(unknown)}")


def _get(doc: dict, key: str, kind, where: str, default=_MISSING):
    if key not in doc:
        if default is _MISSING:
            raise ConfigError(f"{where}.{key}", "missing required key")
        return default
    value = doc[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    bad_bool = isinstance(value, bool) and kind is not bool
    if bad_bool or not isinstance(value, kind):
        raise ConfigError(f"{where}.{key}", f"expected {kind.__name__}, got {value!r}")
    return value


def _parse_schedule(doc, where: str) -> optim.WeightSchedule:
    if isinstance(doc, str):
        doc = {"kind": doc}
    if not isinstance(doc, dict):
        raise ConfigError(where, f"expected a string or object, got {doc!r}")
    _require_keys(doc, {"kind", "gamma"}, where)
    kind = _get(doc, "kind", str, where)
    if kind not in optim.SCHEDULE_KINDS:
        raise ConfigError(f"{where}.kind", f"got {kind!r}, allowed values: {list(optim.SCHEDULE_KINDS)}")
    gamma = _get(doc, "gamma", float, where, default=None)
    try:
        return optim.WeightSchedule(kind, gamma)
    except ParameterError as exc:
        raise ConfigError(where, str(exc)) from exc


def load_run_config(doc: dict) -> optim.RunConfig:
    """Parse a RunConfig JSON document; unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("config", f"expected an object, got {type(doc).__name__}")
    _require_keys(
        doc,
        {
            "algorithm",
            "schedule",
            "learning_rate",
            "rounds",
            "topology",
            "problem",
            "seed",
            "metric_stride",
            "initial_point",
        },
        "config",
    )
    algorithm = _get(doc, "algorithm", str, "config")
    if algorithm not in optim.ALGORITHMS:
        raise ConfigError(
            "config.algorithm", f"got {algorithm!r}, allowed values: {list(optim.ALGORITHMS)}"
        )
    topo = topology.spec_from_dict(_get(doc, "topology", dict, "config"))

    pdoc = _get(doc, "problem", dict, "config")
    _require_keys(pdoc, {"dimension", "sigma", "zeta", "shared_design", "machines"}, "config.problem")
    machines = _get(pdoc, "machines", int, "config.problem", default=None)
    if machines is not None and machines != topo.machines:
        raise ConfigError(
            "config.problem.machines",
            f"problem declares {machines} machines but topology has {topo.machines}",
        )
    schedule = _parse_schedule(doc.get("schedule", "constant"), "config.schedule")
    try:
        return optim.RunConfig(
            algorithm=algorithm,
            topology=topo,
            learning_rate=_get(doc, "learning_rate", float, "config"),
            rounds=_get(doc, "rounds", int, "config"),
            dimension=_get(pdoc, "dimension", int, "config.problem"),
            sigma=_get(pdoc, "sigma", float, "config.problem", default=0.0),
            zeta=_get(pdoc, "zeta", float, "config.problem", default=0.0),
            shared_design=_get(pdoc, "shared_design", bool, "config.problem", default=False),
            schedule=schedule,
            seed=_get(doc, "seed", int, "config", default=0),
            metric_stride=_get(doc, "metric_stride", int, "config", default=10),
            initial_point=_get(doc, "initial_point", str, "config", default="zeros"),
        )
    except ParameterError as exc:
        raise ConfigError("config", str(exc)) from exc


def run_config_to_dict(config: optim.RunConfig) -> dict:
    doc = {
        "algorithm": config.algorithm,
        "schedule": {"kind": config.schedule.kind},
        "learning_rate": config.learning_rate,
        "rounds": config.rounds,
        "topology": topology.spec_to_dict(config.topology),
        "problem": {
            "dimension": config.dimension,
            "sigma": config.sigma,
            "zeta": config.zeta,
            "shared_design": config.shared_design,
        },
        "seed": config.seed,
        "metric_stride": config.metric_stride,
        "initial_point": config.initial_point,
    }
    if config.schedule.gamma is not None:
        doc["schedule"]["gamma"] = config.schedule.gamma
    return doc


def fingerprint(config: optim.RunConfig) -> str:
    blob = json.dumps(run_config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# result tables

@dataclass(frozen=True)
class ResultRow:
    topology: str
    algorithm: str
    machines: int
    sigma: float
    zeta: float
    eta: float
    seed: int | str
    final_error: float
    diverged: bool
    fingerprint: str


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)
    configs: dict[str, optim.RunConfig] = field(default_factory=dict)

    def extend(self, other: "ResultTable") -> None:
        self.rows.extend(other.rows)
        self.configs.update(other.configs)

    def config_for(self, row: ResultRow) -> optim.RunConfig:
        return self.configs[row.fingerprint]

    def aggregate(self, which: str = "mean") -> list[ResultRow]:
        return [r for r in self.rows if r.seed == which]

    def to_csv(self, path_or_buf) -> None:
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            fh.write(",".join(RESULT_COLUMNS) + "\n")
            for r in self.rows:
                err = "nan" if math.isnan(r.final_error) else repr(float(r.final_error))
                fh.write(
                    f"{r.topology},{r.algorithm},{r.machines},{r.sigma!r},{r.zeta!r},"
                    f"{r.eta!r},{r.seed},{err},{'true' if r.diverged else 'false'}\n"
                )
        finally:
            if own:
                fh.close()

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _topology_kind(spec: topology.TopologySpec) -> str:
    return topology.spec_to_dict(spec)["kind"]


def _row_for(config: optim.RunConfig, seed, error: float, diverged: bool, fp: str) -> ResultRow:
    return ResultRow(
        topology=_topology_kind(config.topology),
        algorithm=config.algorithm,
        machines=config.machines,
        sigma=config.sigma,
        zeta=config.zeta,
        eta=config.learning_rate,
        seed=seed,
        final_error=error,
        diverged=diverged,
        fingerprint=fp,
    )


def _run_cell(args):
    config, seed, backend = args
    try:
        result = optim.run(config, noise_seed=seed, backend=backend)
    except DivergenceError:
        return seed, float("nan"), True
    return seed, result.final_per_node_error(), False


def run_seeds(
    config: optim.RunConfig,
    seeds,
    *,
    backend: str | None = None,
    workers: int = 1,
) -> ResultTable:
    """One run per noise seed plus mean/std aggregate rows.

    The problem instance is shared across replicates (generated from
    ``config.seed``); diverged replicates are flagged in their row and
    excluded from the aggregates.  ``workers > 1`` fans runs out to processes
    with results identical to sequential execution.
    """
    seeds = list(seeds)
    if not seeds:
        raise ParameterError("seed list must be nonempty")
    fp = fingerprint(config)
    jobs = [(config, s, backend) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(j) for j in jobs]

    table = ResultTable(configs={fp: config})
    finals = []
    any_diverged = False
    for seed, error, diverged in outcomes:
        table.rows.append(_row_for(config, seed, error, diverged, fp))
        any_diverged = any_diverged or diverged
        if not diverged:
            finals.append(error)
    if finals:
        finals.sort()  # canonical reduction order: aggregates are exactly seed-order independent
        mean = float(np.mean(finals))
        std = float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0
    else:
        mean = std = float("nan")
    table.rows.append(_row_for(config, "mean", mean, any_diverged, fp))
    table.rows.append(_row_for(config, "std", std, any_diverged, fp))
    return table


def grid_search(
    config: optim.RunConfig,
    grid=DEFAULT_ETA_GRID,
    *,
    seeds=(1, 2, 3),
    backend: str | None = None,
    workers: int = 1,
) -> tuple[float, ResultTable]:
    """Pick the learning rate minimizing seed-mean final per-node error.

    The error is measured on the algorithm's output variable (query points
    for datsgd, iterates for dsgd).  Rates with any diverged replicate are
    disqualified; ties break toward the smaller rate.  Raises
    NoStableLearningRateError when nothing survives.
    """
    grid = sorted(set(float(g) for g in grid))
    if not grid or any(g <= 0 for g in grid):
        raise ParameterError("learning-rate grid must be nonempty and positive")
    table = ResultTable()
    candidates: list[tuple[float, float]] = []
    for eta in grid:
        sub = run_seeds(config.with_overrides(learning_rate=eta), seeds, backend=backend, workers=workers)
        table.extend(sub)
        mean_row = sub.aggregate("mean")[0]
        if not mean_row.diverged and not math.isnan(mean_row.final_error):
            candidates.append((mean_row.final_error, eta))
    if not candidates:
        raise NoStableLearningRateError(
            f"all {len(grid)} grid learning rates diverged for {fingerprint(config)}"
        )
    _, best = min(candidates)
    return best, table


def make_topology(kind: str, machines: int) -> topology.TopologySpec:
    """Topology spec for a sweep cell; errors name the violated constraint."""
    if kind == "ring":
        return topology.Ring(machines)
    if kind == "complete":
        return topology.Complete(machines)
    if kind == "onepeer":
        return topology.OnePeerExp(machines)
    if kind == "torus":
        side = int(round(math.sqrt(machines)))
        if side * side != machines or side < 3:
            raise ParameterError(
                f"torus machine count must be a perfect square with side >= 3, got {machines}"
            )
        return topology.Torus(side, side)
    raise ParameterError(f"cannot sweep machines over topology kind {kind!r}")


def derive_problem_seed(master_seed: int, machines: int, kind: str) -> int:
    """Stable per-(master, M, topology) problem seed for sweep cells."""
    code = _TOPO_CODES.get(kind)
    if code is None:
        raise ParameterError(f"unknown topology kind {kind!r}")
    return int(np.random.SeedSequence([master_seed, machines, code]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SweepSpec:
    """A machine-count sweep crossed with topologies, algorithms and noise.

    ``budget='fixed_rounds'`` runs base.rounds at every machine count;
    ``'fixed_samples'`` treats base.rounds as a total sample budget N and runs
    ``max(1, round(N / M))`` rounds.
    """

    base: optim.RunConfig
    machines: tuple[int, ...]
    topologies: tuple[str, ...] = ()
    algorithms: tuple[str, ...] = ("dsgd", "datsgd")
    eta_grid: tuple[float, ...] = DEFAULT_ETA_GRID
    noise_grid: tuple[tuple[float, float], ...] = ()
    seeds: tuple[int, ...] = (1, 2, 3)
    budget: str = "fixed_rounds"

    def __post_init__(self):
        if not self.machines:
            raise ParameterError("sweep needs at least one machine count")
        if self.budget not in ("fixed_rounds", "fixed_samples"):
            raise ParameterError(f"unknown budget mode {self.budget!r}")
        for algo in self.algorithms:
            if algo not in optim.ALGORITHMS:
                raise ParameterError(f"unknown algorithm {algo!r}")
        kinds = self.topologies or (_topology_kind(self.base.topology),)
        for kind in kinds:
            for m in self.machines:
                make_topology(kind, m)  # raises naming the constraint
        object.__setattr__(self, "topologies", tuple(kinds))
        if not self.noise_grid:
            object.__setattr__(self, "noise_grid", ((self.base.sigma, self.base.zeta),))


def sweep_machines(spec: SweepSpec, *, backend: str | None = None, workers: int = 1) -> ResultTable:
    """Grid-search every (topology, algorithm, machine count, noise) cell.

    Each cell regenerates its problem from a seed derived from the sweep's
    master seed, runs a learning-rate search per algorithm, and reports the
    per-seed finals plus mean/std at the selected rate.  Output rows are
    ordered by config fingerprint, so the table is reproducible regardless of
    execution order.
    """
    groups: list[tuple[str, ResultTable]] = []
    for kind in spec.topologies:
        for m in spec.machines:
            topo = make_topology(kind, m)
            seed = derive_problem_seed(spec.base.seed, m, kind)
            rounds = spec.base.rounds
            if spec.budget == "fixed_samples":
                rounds = max(1, round(spec.base.rounds / m))
            for sigma, zeta in spec.noise_grid:
                for algo in spec.algorithms:
                    cfg = spec.base.with_overrides(
                        topology=topo,
                        algorithm=algo,
                        sigma=float(sigma),
                        zeta=float(zeta),
                        seed=seed,
                        rounds=rounds,
                    )
                    best, full = grid_search(
                        cfg, spec.eta_grid, seeds=spec.seeds, backend=backend, workers=workers
                    )
                    selected = cfg.with_overrides(learning_rate=best)
                    fp = fingerprint(selected)
                    cell = ResultTable(configs={fp: selected})
                    cell.rows = [r for r in full.rows if r.fingerprint == fp]
                    groups.append((fp, cell))
    table = ResultTable()
    for _, cell in sorted(groups, key=lambda kv: kv[0]):
        table.extend(cell)
    return table


# --------------------------------------------------------------------------
# theory hooks

def theory_inputs_for(config: optim.RunConfig) -> theory.TheoryInputs:
    """Theory constants measured from the configured run.

    L comes from the generated problem, rho from the (static) topology, and
    D1 from the actual initial point; sigma and zeta are the config's values.
    """
    seq = topology.build(config.topology)
    if not seq.is_static:
        raise ParameterError(
            "theory inputs need a static topology (no per-round spectral gap "
            "is defined for time-varying sequences)"
        )
    rho = topology.spectral_gap(seq.matrix_at(1))
    prob = optim.build_problem(config)
    x_star, _ = prob.optimum
    d1 = float(np.linalg.norm(optim.initial_point(config) - x_star))
    return theory.TheoryInputs(
        smoothness=prob.smoothness,
        rounds=config.rounds,
        rho=rho,
        machines=config.machines,
        sigma=config.sigma,
        zeta=config.zeta,
        initial_distance=d1,
    )


def tuned_learning_rate(config: optim.RunConfig) -> float:
    """Theorem-prescribed rate for this config (linear weights)."""
    return theory.theoretical_lr(theory_inputs_for(config))


@dataclass(frozen=True)
class BoundCheckReport:
    rounds: np.ndarray
    mean_gamma: np.ndarray
    gamma_bound: float
    gamma_max_ratio: float
    mean_final_excess: float
    excess_bound: float
    excess_ratio: float
    learning_rate: float
    threshold: float
    rho: float
    smoothness: float
    initial_distance: float
    seeds: tuple[int, ...]

    @property
    def gamma_ok(self) -> bool:
        return self.gamma_max_ratio <= 1.0

    @property
    def excess_ok(self) -> bool:
        return self.excess_ratio <= 1.0

    def summary_lines(self) -> list[str]:
        return [
            f"seeds = {len(self.seeds)}, eta = {self.learning_rate:.6g} "
            f"(threshold {self.threshold:.6g}), rho = {self.rho:.6g}",
            f"gamma: max seed-mean {self.mean_gamma.max():.6g} vs bound "
            f"{self.gamma_bound:.6g} -> ratio {self.gamma_max_ratio:.6g} "
            f"[{'ok' if self.gamma_ok else 'VIOLATED'}]",
            f"excess: seed-mean final {self.mean_final_excess:.6g} vs bound "
            f"{self.excess_bound:.6g} -> ratio {self.excess_ratio:.6g} "
            f"[{'ok' if self.excess_ok else 'VIOLATED'}]",
        ]


# Consensus distances of bitwise-identical columns are not exactly zero:
# gossip row/column sums are off by ~1 ulp, leaving squared residue around
# (eps * scale)^2 ~ 1e-32.  Anything below this floor counts as zero when the
# bound itself vanishes.
_ZERO_FLOOR = 1e-24


def _ratio(value: float, bound: float) -> float:
    if bound > 0:
        return value / bound
    return 0.0 if value <= _ZERO_FLOOR else float("inf")


def bound_check(config: optim.RunConfig, seeds, *, backend: str | None = None) -> BoundCheckReport:
    """Compare seed-averaged consensus distance and final excess loss against
    their closed-form bounds.

    Requires datsgd with linear weights and a learning rate at or below the
    validity threshold rho^2 / (8 sqrt(80) L); both bound comparisons use the
    config's sigma/zeta as the assumption-level constants.
    """
    if config.algorithm != "datsgd" or config.schedule.kind != "linear":
        raise ParameterError("bound check requires datsgd with the linear weight schedule")
    seeds = tuple(seeds)
    if not seeds:
        raise ParameterError("seed list must be nonempty")
    inputs = theory_inputs_for(config)
    threshold = theory.gamma_threshold(inputs.rho, inputs.smoothness)
    if config.learning_rate > threshold:
        raise ParameterError(
            f"learning rate {config.learning_rate:.6g} exceeds the bound's validity "
            f"threshold rho^2/(8*sqrt(80)*L) = {threshold:.6g}"
        )

    gammas = []
    finals = []
    rounds = None
    for s in seeds:
        result = optim.run(config, noise_seed=s, backend=backend)
        if rounds is None:
            rounds = result.trace.rounds
        gammas.append(result.trace.gamma)
        finals.append(result.final_excess_loss())
    mean_gamma = np.mean(gammas, axis=0)
    g_bound = theory.gamma_bound(config.learning_rate, inputs.rho, config.sigma, config.zeta)
    gamma_ratio = max(_ratio(float(v), g_bound) for v in mean_gamma)
    mean_excess = float(np.mean(finals))
    e_bound = theory.convergence_bound(inputs)
    return BoundCheckReport(
        rounds=rounds,
        mean_gamma=mean_gamma,
        gamma_bound=g_bound,
        gamma_max_ratio=gamma_ratio,
        mean_final_excess=mean_excess,
        excess_bound=e_bound,
        excess_ratio=_ratio(mean_excess, e_bound),
        learning_rate=config.learning_rate,
        threshold=threshold,
        rho=inputs.rho,
        smoothness=inputs.smoothness,
        initial_distance=inputs.initial_distance,
        seeds=seeds,
    )


def load_sweep_spec(doc: dict) -> SweepSpec:
    """Parse a SweepSpec JSON document; unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("sweep", f"expected an object, got {type(doc).__name__}")
    _require_keys(
        doc,
        {"base", "machines", "topologies", "algorithms", "eta_grid", "noise_grid", "seeds", "budget"},
        "sweep",
    )
    base = load_run_config(_get(doc, "base", dict, "sweep"))
    machines = _get(doc, "machines", list, "sweep")
    noise_grid = []
    for k, cell in enumerate(_get(doc, "noise_grid", list, "sweep", default=[])):
        if not isinstance(cell, dict):
            raise ConfigError(f"sweep.noise_grid[{k}]", f"expected an object, got {cell!r}")
        _require_keys(cell, {"sigma", "zeta"}, f"sweep.noise_grid[{k}]")
        noise_grid.append(
            (
                _get(cell, "sigma", float, f"sweep.noise_grid[{k}]", default=base.sigma),
                _get(cell, "zeta", float, f"sweep.noise_grid[{k}]", default=base.zeta),
            )
        )
    try:
        return SweepSpec(
            base=base,
            machines=tuple(int(m) for m in machines),
            topologies=tuple(_get(doc, "topologies", list, "sweep", default=[])),
            algorithms=tuple(_get(doc, "algorithms", list, "sweep", default=["dsgd", "datsgd"])),
            eta_grid=tuple(float(e) for e in _get(doc, "eta_grid", list, "sweep", default=list(DEFAULT_ETA_GRID))),
            noise_grid=tuple(noise_grid),
            seeds=tuple(int(s) for s in _get(doc, "seeds", list, "sweep", default=[1, 2, 3])),
            budget=_get(doc, "budget", str, "sweep", default="fixed_rounds"),
        )
    except ParameterError as exc:
        raise ConfigError("sweep", str(exc)) from exc
