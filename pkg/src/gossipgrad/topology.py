"""Gossip matrices for standard network topologies.

A gossip matrix is a symmetric, doubly stochastic ``M x M`` mixing matrix:
one communication round replaces each node's vector with the ``P``-weighted
average of its neighbourhood, ``X <- X @ P`` for column-per-node ``X``.

Built-in constructions:

- ``Ring(machines)``: weight 1/3 on self and each of the two ring neighbours.
- ``Torus(rows, cols)``: weight 1/5 on self and the four wrap-around grid
  neighbours; requires both sides >= 3 so the neighbours are distinct.
- ``Complete(machines)``: uniform 1/M everywhere (consensus in one round).
- ``OnePeerExp(machines)``: time-varying; at round t node i averages with the
  single peer ``i XOR 2^((t-1) mod log2 M)`` at weight 1/2 each.  The period's
  log2(M) matrices multiply out to exact uniform averaging.
- ``Custom(adjacency)``: Metropolis-Hastings weights
  ``P_ij = 1 / (1 + max(deg_i, deg_j))`` on edges, residual mass on the
  diagonal.

All matrices are returned as read-only float64 arrays and are safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError, ZeroSpectralGapError

__all__ = [
    "Ring",
    "Torus",
    "Complete",
    "OnePeerExp",
    "Custom",
    "TopologySpec",
    "GossipSequence",
    "ValidationIssue",
    "ValidationReport",
    "build",
    "spectral_gap",
    "gossip_step",
    "validate",
    "spec_from_dict",
    "spec_to_dict",
]

# Absolute tolerance for the doubly-stochastic invariant.
STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class Ring:
    machines: int

    def __post_init__(self):
        if self.machines < 3:
            raise ParameterError(f"ring requires at least 3 machines, got {self.machines}")


@dataclass(frozen=True)
class Torus:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 3 or self.cols < 3:
            raise ParameterError(
                f"torus requires both sides >= 3 (distinct neighbours), got {self.rows}x{self.cols}"
            )

    @property
    def machines(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class Complete:
    machines: int

    def __post_init__(self):
        if self.machines < 1:
            raise ParameterError(f"complete graph needs at least 1 machine, got {self.machines}")


@dataclass(frozen=True)
class OnePeerExp:
    machines: int

    def __post_init__(self):
        m = self.machines
        if m < 2 or (m & (m - 1)) != 0:
            raise ParameterError(
                f"one-peer exponential graph requires a power-of-two machine count >= 2, got {m}"
            )


@dataclass(frozen=True, eq=False)
class Custom:
    """Arbitrary undirected graph given by a symmetric 0/1 adjacency matrix."""

    adjacency: np.ndarray = field(repr=False)

    def __eq__(self, other) -> bool:
        return isinstance(other, Custom) and np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self) -> int:
        return hash((self.adjacency.shape, self.adjacency.tobytes()))

    def __post_init__(self):
        adj = np.asarray(self.adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ParameterError(f"adjacency must be square, got shape {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ParameterError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ParameterError("adjacency must have no self-loops")
        vals = np.unique(adj)
        if not np.all(np.isin(vals, (0, 1))):
            raise ParameterError("adjacency entries must be 0 or 1")
        object.__setattr__(self, "adjacency", adj.astype(np.int64))

    @property
    def machines(self) -> int:
        return int(self.adjacency.shape[0])


TopologySpec = Ring | Torus | Complete | OnePeerExp | Custom


@dataclass(frozen=True)
class GossipSequence:
    """Mapping from 1-based round index to a gossip matrix.

    Static topologies hold a single matrix; the one-peer exponential graph
    cycles through its log2(M) pairing matrices.
    """

    matrices: tuple[np.ndarray, ...]

    @property
    def period(self) -> int:
        return len(self.matrices)

    @property
    def machines(self) -> int:
        return int(self.matrices[0].shape[0])

    @property
    def is_static(self) -> bool:
        return self.period == 1

    def matrix_at(self, t: int) -> np.ndarray:
        """Gossip matrix applied at round ``t >= 1``."""
        if t < 1:
            raise ParameterError(f"round index must be >= 1, got {t}")
        return self.matrices[(t - 1) % self.period]

    def stacked(self) -> np.ndarray:
        """(period, M, M) contiguous stack for the simulation kernels."""
        return np.ascontiguousarray(np.stack(self.matrices))


def _freeze(P: np.ndarray) -> np.ndarray:
    P = np.ascontiguousarray(P, dtype=np.float64)
    P.setflags(write=False)
    return P


def _ring_matrix(m: int) -> np.ndarray:
    P = np.zeros((m, m))
    for i in range(m):
        P[i, i] += 1.0 / 3.0
        P[i, (i - 1) % m] += 1.0 / 3.0
        P[i, (i + 1) % m] += 1.0 / 3.0
    return P


def _torus_matrix(rows: int, cols: int) -> np.ndarray:
    m = rows * cols
    P = np.zeros((m, m))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            P[i, i] = 1.0 / 5.0
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                j = (rr % rows) * cols + (cc % cols)
                P[i, j] += 1.0 / 5.0
    return P


def _onepeer_matrices(m: int) -> list[np.ndarray]:
    mats = []
    for e in range(m.bit_length() - 1):
        P = np.zeros((m, m))
        off = 1 << e
        for i in range(m):
            P[i, i] = 0.5
            P[i, i ^ off] = 0.5
        mats.append(P)
    return mats


def _metropolis_matrix(adj: np.ndarray) -> np.ndarray:
    deg = adj.sum(axis=1)
    m = adj.shape[0]
    P = np.zeros((m, m))
    rows, cols = np.nonzero(adj)
    P[rows, cols] = 1.0 / (1.0 + np.maximum(deg[rows], deg[cols]))
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def build(spec: TopologySpec) -> GossipSequence:
    """Construct the gossip sequence for a topology spec.

    Every returned matrix is symmetric and doubly stochastic by construction;
    ``validate`` reports an empty issue list for all of them.
    """
    if isinstance(spec, Ring):
        mats = [_ring_matrix(spec.machines)]
    elif isinstance(spec, Torus):
        mats = [_torus_matrix(spec.rows, spec.cols)]
    elif isinstance(spec, Complete):
        m = spec.machines
        mats = [np.full((m, m), 1.0 / m)]
    elif isinstance(spec, OnePeerExp):
        mats = _onepeer_matrices(spec.machines)
    elif isinstance(spec, Custom):
        mats = [_metropolis_matrix(spec.adjacency)]
    else:
        raise ParameterError(f"unknown topology spec: {spec!r}")
    return GossipSequence(tuple(_freeze(P) for P in mats))


def second_eigenvalue_magnitude(P: np.ndarray) -> float:
    """|lambda_2| of a symmetric mixing matrix (0.0 for the 1x1 case)."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError(f"gossip matrix must be square, got shape {P.shape}")
    if P.shape[0] == 1:
        return 0.0
    w = np.linalg.eigvalsh(P)  # ascending; top one is the ~1 eigenvalue
    return float(max(abs(w[0]), abs(w[-2])))


def spectral_gap(P: np.ndarray) -> float:
    """Spectral gap ``1 - |lambda_2|`` of a gossip matrix.

    Raises ZeroSpectralGapError when ``|lambda_2| >= 1 - 1e-12`` (the matrix
    is disconnected or periodic and never mixes).  Magnitudes below 1e-12 are
    snapped to zero so uniform averaging reports a gap of exactly 1.
    """
    lam2 = second_eigenvalue_magnitude(P)
    if lam2 >= 1.0 - 1e-12:
        raise ZeroSpectralGapError(
            f"second eigenvalue magnitude {lam2:.15f} leaves no spectral gap "
            "(disconnected or periodic mixing matrix)"
        )
    if lam2 < 1e-12:
        return 1.0
    return 1.0 - lam2


def gossip_step(X: np.ndarray, P: np.ndarray) -> np.ndarray:
    """One gossip round ``X @ P`` for a (d, M) column-per-node matrix.

    Column means are preserved up to floating-point accumulation because the
    columns of ``P`` each sum to one.
    """
    X = np.asarray(X, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"state matrix must be 2-D (d, M), got shape {X.shape}")
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError(f"gossip matrix must be square, got shape {P.shape}")
    if X.shape[1] != P.shape[0]:
        raise ShapeError(
            f"state has {X.shape[1]} columns but gossip matrix is {P.shape[0]}x{P.shape[1]}"
        )
    return X @ P


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    detail: str
    magnitude: float


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...]

    @property
    def ok(self) -> bool:
        return not self.issues

    def __str__(self) -> str:
        if self.ok:
            return "valid gossip matrix"
        return "; ".join(f"{i.kind}: {i.detail} (max deviation {i.magnitude:.3g})" for i in self.issues)


def validate(P: np.ndarray) -> ValidationReport:
    """Report every violated gossip-matrix invariant.

    Checks symmetry, row and column sums (tolerance 1e-12 absolute) and entry
    nonnegativity.  An empty report means the matrix is a valid gossip matrix.
    """
    P = np.asarray(P, dtype=np.float64)
    issues: list[ValidationIssue] = []
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return ValidationReport((ValidationIssue("shape", f"not square: {P.shape}", float("nan")),))
    if not np.all(np.isfinite(P)):
        issues.append(ValidationIssue("finite", "matrix contains non-finite entries", float("inf")))
        return ValidationReport(tuple(issues))

    asym = np.abs(P - P.T)
    if asym.max() > STOCHASTIC_TOL:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        issues.append(
            ValidationIssue("symmetry", f"P[{i},{j}] != P[{j},{i}]", float(asym.max()))
        )

    row_dev = np.abs(P.sum(axis=1) - 1.0)
    if row_dev.max() > STOCHASTIC_TOL:
        bad = np.nonzero(row_dev > STOCHASTIC_TOL)[0]
        issues.append(
            ValidationIssue("row_sums", f"rows {bad.tolist()} do not sum to 1", float(row_dev.max()))
        )

    col_dev = np.abs(P.sum(axis=0) - 1.0)
    if col_dev.max() > STOCHASTIC_TOL:
        bad = np.nonzero(col_dev > STOCHASTIC_TOL)[0]
        issues.append(
            ValidationIssue("col_sums", f"columns {bad.tolist()} do not sum to 1", float(col_dev.max()))
        )

    if P.min() < 0.0:
        i, j = np.unravel_index(np.argmin(P), P.shape)
        issues.append(
            ValidationIssue("negative_entry", f"P[{i},{j}] = {P.min():.3g} < 0", float(-P.min()))
        )
    return ValidationReport(tuple(issues))


_KIND_NAMES = {"ring": Ring, "torus": Torus, "complete": Complete, "onepeer": OnePeerExp, "custom": Custom}


def spec_from_dict(doc: dict) -> TopologySpec:
    """Parse a topology spec from its config-file form.

    Examples: ``{"kind": "ring", "machines": 16}``,
    ``{"kind": "torus", "rows": 4, "cols": 4}`` (or ``machines`` for a square
    torus), ``{"kind": "custom", "adjacency": [[0,1],[1,0]]}``.
    """
    from .errors import ConfigError

    if not isinstance(doc, dict):
        raise ConfigError("topology", f"expected an object, got {type(doc).__name__}")
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in _KIND_NAMES:
        raise ConfigError(
            "topology.kind", f"got {kind!r}, allowed values: {sorted(_KIND_NAMES)}"
        )
    try:
        if kind == "torus":
            if "machines" in doc and ("rows" in doc or "cols" in doc):
                raise ConfigError("topology", "give either machines or rows/cols, not both")
            if "machines" in doc:
                m = doc.pop("machines")
                side = int(round(float(m) ** 0.5))
                if side * side != m:
                    raise ConfigError(
                        "topology.machines", f"torus machine count must be a perfect square, got {m}"
                    )
                spec: TopologySpec = Torus(rows=side, cols=side)
            else:
                spec = Torus(rows=doc.pop("rows", -1), cols=doc.pop("cols", -1))
        elif kind == "custom":
            adj = doc.pop("adjacency", None)
            if adj is None:
                raise ConfigError("topology.adjacency", "custom topology requires an adjacency matrix")
            spec = Custom(adjacency=np.asarray(adj))
        else:
            if "machines" not in doc:
                raise ConfigError("topology.machines", f"{kind} topology requires a machine count")
            spec = _KIND_NAMES[kind](machines=doc.pop("machines"))
    except ParameterError as exc:
        raise ConfigError("topology", str(exc)) from exc
    if doc:
        raise ConfigError("topology", f"unknown keys: {sorted(doc)}")
    return spec


def spec_to_dict(spec: TopologySpec) -> dict:
    """Inverse of spec_from_dict (used for config fingerprints)."""
    if isinstance(spec, Ring):
        return {"kind": "ring", "machines": spec.machines}
    if isinstance(spec, Torus):
        return {"kind": "torus", "rows": spec.rows, "cols": spec.cols}
    if isinstance(spec, Complete):
        return {"kind": "complete", "machines": spec.machines}
    if isinstance(spec, OnePeerExp):
        return {"kind": "onepeer", "machines": spec.machines}
    if isinstance(spec, Custom):
        return {"kind": "custom", "adjacency": spec.adjacency.tolist()}
    raise ParameterError(f"unknown topology spec: {spec!r}")
