"""Network topologies and gossip mixing matrices.

A mixing matrix here is always symmetric and doubly stochastic with positive
spectral gap, so consensus averaging over the graph contracts toward the mean.
The spectral quantities (sorted eigenvalues, orthonormal eigenvectors, the gap
1 - max(|lam_2|, |lam_n|)) are computed once and cached on the object.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidTopologyError,
    NotPositiveSemidefiniteError,
    NumericError,
    WeightingError,
)

_STOCH_TOL = 1e-12
_EIG_TOL = 1e-10
_NEG_EIG_CLAMP = 1e-10


@dataclass(frozen=True)
class Topology:
    """Undirected connected graph over ``n`` agents, self-loops included."""

    n: int
    adjacency: np.ndarray  # (n, n) bool, symmetric, True on the diagonal

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if self.n < 1 or adj.shape != (self.n, self.n):
            raise InvalidTopologyError(f"adjacency must be {self.n}x{self.n}")
        if not np.array_equal(adj, adj.T):
            raise InvalidTopologyError("adjacency must be symmetric")
        if not adj.diagonal().all():
            raise InvalidTopologyError("every agent needs a self-loop")
        if not _connected(adj):
            raise InvalidTopologyError("graph is not connected")
        object.__setattr__(self, "adjacency", adj)

    def degrees(self, include_self: bool = True) -> np.ndarray:
        deg = self.adjacency.sum(axis=1)
        return deg if include_self else deg - 1

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    return bool(seen.all())


def build_ring(n: int) -> Topology:
    """Cycle over n agents; each agent talks to itself and its two cyclic neighbors."""
    if n < 3:
        raise InvalidTopologyError(f"ring needs n >= 3, got {n}")
    adj = np.eye(n, dtype=bool)
    idx = np.arange(n)
    adj[idx, (idx + 1) % n] = True
    adj[idx, (idx - 1) % n] = True
    return Topology(n, adj)


def build_complete(n: int) -> Topology:
    if n < 1:
        raise InvalidTopologyError(f"complete graph needs n >= 1, got {n}")
    return Topology(n, np.ones((n, n), dtype=bool))


def build_star(n: int) -> Topology:
    """Hub agent 0 connected to every leaf."""
    if n < 2:
        raise InvalidTopologyError(f"star needs n >= 2, got {n}")
    adj = np.eye(n, dtype=bool)
    adj[0, :] = True
    adj[:, 0] = True
    return Topology(n, adj)


def build_from_edge_file(path, n: int | None = None) -> Topology:
    """Load an undirected edge list: one 0-indexed ``i j`` pair per line.

    Blank lines and ``#`` comments are ignored. Self-loops are added for all
    agents. ``n`` defaults to 1 + the largest index seen.
    """
    edges = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InvalidTopologyError(f"{path}:{lineno}: expected 'i j', got {raw!r}")
            i, j = int(parts[0]), int(parts[1])
            if i < 0 or j < 0:
                raise InvalidTopologyError(f"{path}:{lineno}: negative agent index")
            edges.append((i, j))
    if not edges and n is None:
        raise InvalidTopologyError(f"{path}: no edges and no agent count given")
    size = n if n is not None else 1 + max(max(e) for e in edges)
    adj = np.eye(size, dtype=bool)
    for i, j in edges:
        if i >= size or j >= size:
            raise InvalidTopologyError(f"edge ({i},{j}) outside 0..{size - 1}")
        adj[i, j] = True
        adj[j, i] = True
    return Topology(size, adj)


_BUILDERS = {"ring": build_ring, "complete": build_complete, "star": build_star}


def build_topology(kind: str, n: int) -> Topology:
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise InvalidTopologyError(
            f"unknown topology {kind!r}; expected one of {sorted(_BUILDERS)}"
        ) from None
    return builder(n)


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly stochastic weights plus cached spectral data.

    ``eigenvalues`` are sorted descending, ``eigenvectors`` columns are an
    orthonormal basis matching that order, and ``spectral_gap`` is
    ``1 - max(|lam_2|, |lam_n|)``, the contraction margin of consensus steps.
    """

    w: np.ndarray
    topology: Topology
    eigenvalues: np.ndarray = field(init=False)
    eigenvectors: np.ndarray = field(init=False)
    spectral_gap: float = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        n = self.topology.n
        if w.shape != (n, n):
            raise WeightingError(f"weight matrix must be {n}x{n}")
        if np.abs(w - w.T).max() > _STOCH_TOL:
            raise WeightingError("weight matrix must be symmetric")
        ones = np.ones(n)
        if np.abs(w @ ones - ones).max() > _STOCH_TOL or np.abs(ones @ w - ones).max() > _STOCH_TOL:
            raise WeightingError("weight matrix must be doubly stochastic")
        if np.any((np.abs(w) > 0) & ~self.topology.adjacency):
            raise WeightingError("nonzero weight outside the edge set")
        object.__setattr__(self, "w", w)
        vals, vecs = eig(w)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)
        if abs(vals[0] - 1.0) > _EIG_TOL:
            raise WeightingError(f"leading eigenvalue {vals[0]} != 1")
        lam = self.lam
        gap = 1.0 - lam
        if not (0.0 < gap <= 1.0 + _EIG_TOL):
            raise WeightingError(f"spectral gap {gap} outside (0, 1]")
        object.__setattr__(self, "spectral_gap", gap)

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def lam(self) -> float:
        """Spectral norm of W - ones/n, i.e. max(|lam_2|, |lam_n|)."""
        if self.n == 1:
            return 0.0
        return float(max(abs(self.eigenvalues[1]), abs(self.eigenvalues[-1])))


def eig(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, sorted descending.

    The leading eigenvector is sign-fixed so that for a doubly stochastic
    input it equals +1/sqrt(n).
    """
    w = np.asarray(w, dtype=np.float64)
    try:
        vals, vecs = np.linalg.eigh(w)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"symmetric eigensolver failed: {exc}; "
            f"norm={np.linalg.norm(w):.3e}, asym={np.abs(w - w.T).max():.3e}"
        ) from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    for j in range(vecs.shape[1]):  # deterministic sign convention
        lead = vecs[np.argmax(np.abs(vecs[:, j])), j]
        if lead < 0:
            vecs[:, j] = -vecs[:, j]
    return vals, vecs


def uniform_weights(t: Topology) -> MixingMatrix:
    """Equal-neighbor weights 1/|N_i|; only valid on regular graphs."""
    deg = t.degrees(include_self=True)
    if not np.all(deg == deg[0]):
        raise WeightingError(
            "uniform weights need a regular graph (all degrees equal); "
            "use metropolis_weights for irregular graphs"
        )
    w = t.adjacency.astype(np.float64) / deg[0]
    return MixingMatrix(w, t)


def metropolis_weights(t: Topology) -> MixingMatrix:
    """Metropolis-Hastings rule: w_ij = 1/(1+max(deg_i, deg_j)) off-diagonal.

    Degrees exclude the self-loop. Valid on any connected graph.
    """
    deg = t.degrees(include_self=False)
    n = t.n
    w = np.zeros((n, n))
    for i in range(n):
        for j in t.neighbors(i):
            if j != i:
                w[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return MixingMatrix(w, t)


def lazy(w: MixingMatrix) -> MixingMatrix:
    """Half-step mixing (I + W)/2; the result is positive semi-definite."""
    half = (np.eye(w.n) + w.w) / 2.0
    return MixingMatrix(half, w.topology)


def sqrt_I_minus_W(w: MixingMatrix) -> np.ndarray:
    """Symmetric PSD square root of I - W, via the cached eigendecomposition.

    Requires W itself to be PSD (eigenvalues >= -1e-10; tiny negatives from
    rounding are clamped to zero), otherwise I - W can exceed the unit ball
    and the framework's B-matrix algebra breaks.
    """
    vals = w.eigenvalues
    if vals[-1] < -_NEG_EIG_CLAMP:
        raise NotPositiveSemidefiniteError(
            f"W has eigenvalue {vals[-1]:.3e} < 0; apply lazy() first to get a PSD matrix"
        )
    shifted = np.clip(1.0 - vals, 0.0, None)
    # snap rounding residue at the consensus eigenvalue to zero, else its
    # square root (~1e-8) leaks the matrix onto the all-ones direction
    shifted[shifted < 1e-12] = 0.0
    u = w.eigenvectors
    return (u * np.sqrt(shifted)) @ u.T


_WEIGHT_RULES = {
    "uniform": uniform_weights,
    "metropolis": metropolis_weights,
    "lazy-uniform": lambda t: lazy(uniform_weights(t)),
    "lazy-metropolis": lambda t: lazy(metropolis_weights(t)),
}


def build_weights(t: Topology, rule: str = "lazy-uniform") -> MixingMatrix:
    try:
        fn = _WEIGHT_RULES[rule]
    except KeyError:
        raise WeightingError(
            f"unknown weight rule {rule!r}; expected one of {sorted(_WEIGHT_RULES)}"
        ) from None
    return fn(t)
