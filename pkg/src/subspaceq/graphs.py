"""Topologies, subspace bases, combination matrices, and smooth targets.

The network is an undirected connected graph whose agents each hold a block of
the stacked parameter vector. A semi-unitary basis U spans the feasible
subspace; a combination matrix A mixes neighbor blocks while leaving Range(U)
invariant from both sides (A U = U, U^T A = U^T) and contracting everything
orthogonal to it (rho(A - U U^T) < 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

TOL_CONSTRAINT = 1e-8   # AU = U, U^T A = U^T residuals
TOL_ORTHO = 1e-10       # basis orthonormality
CONNECT_RETRY_BUDGET = 100

__all__ = [
    "Topology",
    "SubspaceBasis",
    "CombinationMatrix",
    "GroundTruth",
    "NotConnected",
    "InvalidEdgeList",
    "EigenFailure",
    "SpectralViolation",
    "InfeasibleConstraints",
    "SingularProjection",
    "build_topology",
    "save_topology",
    "load_topology",
    "laplacian",
    "subspace_consensus",
    "subspace_smooth",
    "metropolis_weights",
    "build_combination",
    "validate_combination",
    "smooth_signal",
    "compute_wopt",
    "projector",
    "spectral_radius",
    "save_matrix_csv",
]


class NotConnected(ValueError):
    """Graph has more than one connected component."""


class InvalidEdgeList(ValueError):
    """Edge list with out-of-range agent indices."""


class EigenFailure(RuntimeError):
    """Eigensolver did not converge."""


class SpectralViolation(ValueError):
    """rho(A - P_U) is not strictly below one."""


class InfeasibleConstraints(ValueError):
    """The sparsity pattern cannot satisfy the subspace constraints."""


class SingularProjection(ValueError):
    """U^T H U is singular; the constrained optimum is not unique."""


@dataclass(frozen=True, eq=False)
class Topology:
    n: int
    neighborhoods: tuple          # per-agent frozenset, always containing the agent
    edge_weights: np.ndarray      # symmetric 0/1 link indicator, zero diagonal

    def degree(self, k) -> int:
        return len(self.neighborhoods[k])


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    u: np.ndarray                 # M x P, semi-unitary
    block_dims: tuple
    p: int

    def __post_init__(self):
        m = self.u.shape[0]
        if sum(self.block_dims) != m:
            raise ValueError("block dimensions do not sum to the basis rows")
        if not self.p < m:
            raise ValueError("subspace dimension must be below the ambient one")
        gram = self.u.T @ self.u
        if np.max(np.abs(gram - np.eye(self.p))) > TOL_ORTHO:
            raise ValueError("basis is not semi-unitary")

    @property
    def m(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True, eq=False)
class CombinationMatrix:
    a: np.ndarray                 # M x M, block sparsity per topology
    topology: Topology
    block_dims: tuple


@dataclass(frozen=True, eq=False)
class GroundTruth:
    w_star: np.ndarray
    w_opt: np.ndarray


# ---------------------------------------------------------------------------
# topologies

def _from_neighbor_sets(n, sets):
    w = np.zeros((n, n))
    for k, nb in enumerate(sets):
        for j in nb:
            if j != k:
                w[k, j] = 1.0
    if not np.array_equal(w, w.T):
        raise InvalidEdgeList("directed edge in an undirected topology")
    ncomp, _ = connected_components(sp.csr_matrix(w + np.eye(n)), directed=False)
    if ncomp != 1:
        raise NotConnected(f"{ncomp} components")
    sets = tuple(frozenset(nb | {k}) for k, nb in enumerate(sets))
    return Topology(n, sets, w)


def build_topology(n, connectivity, seed=None) -> Topology:
    """Connected undirected topology with self-loops.

    ``connectivity`` is either an edge probability in (0, 1], in which case
    independent links are drawn and redrawn (up to a fixed retry budget) until
    the graph is connected, or an explicit edge list of 1-indexed pairs.
    """
    if n < 2:
        raise ValueError("need at least two agents")
    if np.isscalar(connectivity) and not isinstance(connectivity, (tuple, list)):
        prob = float(connectivity)
        if not 0 < prob <= 1:
            raise ValueError("edge probability must be in (0, 1]")
        rng = np.random.default_rng(seed)
        for _ in range(CONNECT_RETRY_BUDGET):
            iu = np.triu_indices(n, 1)
            draw = rng.random(len(iu[0])) < prob
            sets = [set() for _ in range(n)]
            for i, j, on in zip(*iu, draw):
                if on:
                    sets[i].add(int(j))
                    sets[j].add(int(i))
            try:
                return _from_neighbor_sets(n, sets)
            except NotConnected:
                continue
        raise NotConnected(f"no connected draw in {CONNECT_RETRY_BUDGET} attempts")
    sets = [set() for _ in range(n)]
    for k, j in connectivity:
        if not (1 <= k <= n and 1 <= j <= n):
            raise InvalidEdgeList(f"edge ({k}, {j}) outside 1..{n}")
        if k != j:
            sets[k - 1].add(j - 1)
            sets[j - 1].add(k - 1)
    return _from_neighbor_sets(n, sets)


def save_topology(path, topology: Topology):
    """Plain-text edge list, one 1-indexed "k l" pair per line, each edge once."""
    with open(path, "w") as fh:
        for k in range(topology.n):
            for j in sorted(topology.neighborhoods[k]):
                if j > k:
                    fh.write(f"{k + 1} {j + 1}\n")


def load_topology(path, n=None) -> Topology:
    edges = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, j = (int(t) for t in line.split())
            edges.append((k, j))
    if n is None:
        if not edges:
            raise InvalidEdgeList("empty edge list and no agent count given")
        n = max(max(k, j) for k, j in edges)
    return build_topology(n, edges)


def laplacian(topology: Topology, uniform_weight: float) -> np.ndarray:
    """Weighted graph Laplacian diag(C 1) - C with uniform link weight."""
    if uniform_weight <= 0:
        raise ValueError("weight must be positive")
    c = uniform_weight * topology.edge_weights
    return np.diag(c.sum(axis=1)) - c


# ---------------------------------------------------------------------------
# subspace bases

def subspace_consensus(n, l) -> SubspaceBasis:
    """Consensus basis: every agent block constrained to a common value."""
    if n < 1 or l < 1:
        raise ValueError("need n >= 1 and l >= 1")
    u = np.kron(np.full((n, 1), 1.0 / np.sqrt(n)), np.eye(l))
    return SubspaceBasis(u, (l,) * n, l)


def subspace_smooth(topology: Topology, p_vectors, l, weight) -> SubspaceBasis:
    """Basis spanned by the lowest Laplacian eigenvectors, one block per agent.

    Columns are the p_vectors eigenvectors of the weighted Laplacian with the
    smallest eigenvalues, Kronecker-expanded by an identity of size l, so the
    subspace holds signals that vary smoothly across the graph.
    """
    if not 1 <= p_vectors < topology.n:
        raise ValueError("p_vectors must be in 1..n-1 to leave a contracted complement")
    lap = laplacian(topology, weight)
    try:
        _, vecs = scipy.linalg.eigh(lap)
    except scipy.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    u = np.kron(vecs[:, :p_vectors], np.eye(l))
    return SubspaceBasis(u, (l,) * topology.n, p_vectors * l)


def projector(basis: SubspaceBasis) -> np.ndarray:
    return basis.u @ basis.u.T


def spectral_radius(mat) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


# ---------------------------------------------------------------------------
# combination matrices

def metropolis_weights(topology: Topology) -> np.ndarray:
    """Doubly stochastic scalar weights 1/max(|N_k|, |N_l|) off the diagonal."""
    n = topology.n
    a = np.zeros((n, n))
    for k in range(n):
        for j in topology.neighborhoods[k]:
            if j != k:
                a[k, j] = 1.0 / max(topology.degree(k), topology.degree(j))
        a[k, k] = 1.0 - a[k].sum()
    return a


def _block_slices(block_dims):
    offs = np.concatenate(([0], np.cumsum(block_dims)))
    return [slice(int(offs[k]), int(offs[k + 1])) for k in range(len(block_dims))]


def _is_consensus_basis(basis: SubspaceBasis) -> bool:
    l = basis.block_dims[0]
    if any(d != l for d in basis.block_dims) or basis.p != l:
        return False
    n = len(basis.block_dims)
    ref = np.kron(np.full((n, 1), 1.0 / np.sqrt(n)), np.eye(l))
    return np.allclose(basis.u, ref, atol=1e-12)


def _constrained_lsq(topology, basis):
    # minimize ||A - P_U||_F^2 over the free block entries subject to
    # A U = U and U^T A = U^T, via a lightly regularized sparse KKT system
    u = basis.u
    m, p = u.shape
    slices = _block_slices(basis.block_dims)
    free_rows, free_cols = [], []
    for k in range(topology.n):
        for j in sorted(topology.neighborhoods[k]):
            rk, cj = slices[k], slices[j]
            rr, cc = np.meshgrid(np.arange(rk.start, rk.stop),
                                 np.arange(cj.start, cj.stop), indexing="ij")
            free_rows.append(rr.ravel())
            free_cols.append(cc.ravel())
    free_rows = np.concatenate(free_rows)
    free_cols = np.concatenate(free_cols)
    nv = free_rows.size

    target = (u @ u.T)[free_rows, free_cols]

    # constraint rows: (row i, basis col q) then (col j, basis col q)
    rows, cols, vals = [], [], []
    d = np.empty(2 * m * p)
    for e in range(nv):
        i, j = free_rows[e], free_cols[e]
        # A U = U touches constraint block of row i
        rows.append(np.arange(i * p, (i + 1) * p))
        cols.append(np.full(p, e))
        vals.append(u[j])
        # U^T A = U^T touches constraint block of column j
        rows.append(m * p + np.arange(j * p, (j + 1) * p))
        cols.append(np.full(p, e))
        vals.append(u[i])
    C = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * m * p, nv),
    )
    d[: m * p] = u.ravel()
    d[m * p:] = u.ravel()

    # KKT with a tiny dual regularization; redundant constraints stay consistent
    eps = 1e-12
    kkt = sp.bmat([[sp.eye(nv), C.T], [C, -eps * sp.eye(2 * m * p)]], format="csc")
    rhs = np.concatenate([target, d])
    sol = sp.linalg.spsolve(kkt, rhs)
    a_free = sol[:nv]

    if np.max(np.abs(C @ a_free - d)) > TOL_CONSTRAINT:
        raise InfeasibleConstraints("sparsity pattern cannot hold the subspace fixed")
    a = np.zeros((m, m))
    a[free_rows, free_cols] = a_free
    return a


def validate_combination(a, topology, basis) -> dict:
    """Check the subspace eigen-conditions and the contraction off-subspace.

    Returns ``{"residual": ..., "rho": ...}``; raises InfeasibleConstraints if
    either A U = U or U^T A = U^T fails beyond tolerance, SpectralViolation if
    rho(A - P_U) is not strictly below one.
    """
    u = basis.u
    residual = max(np.max(np.abs(a @ u - u)), np.max(np.abs(u.T @ a - u.T)))
    if residual > TOL_CONSTRAINT:
        raise InfeasibleConstraints(f"subspace condition residual {residual:.3e}")
    rho = spectral_radius(a - u @ u.T)
    if rho >= 1.0 - 1e-6:
        raise SpectralViolation(f"rho(A - P_U) = {rho:.8f}")
    return {"residual": float(residual), "rho": rho}


def build_combination(topology, basis, mode="subspace-lsq") -> CombinationMatrix:
    """Combination matrix with the topology's sparsity satisfying the
    subspace eigen-conditions.

    mode "consensus-metropolis" expands doubly stochastic scalar weights by a
    block identity and requires the consensus basis; mode "subspace-lsq" fits
    the closest matrix to the projector P_U over the sparsity pattern subject
    to A U = U and U^T A = U^T, for any basis.
    """
    if mode == "consensus-metropolis":
        if not _is_consensus_basis(basis):
            raise ValueError("consensus-metropolis needs the consensus basis")
        a = np.kron(metropolis_weights(topology), np.eye(basis.block_dims[0]))
    elif mode == "subspace-lsq":
        a = _constrained_lsq(topology, basis)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    validate_combination(a, topology, basis)
    return CombinationMatrix(a, topology, tuple(basis.block_dims))


# ---------------------------------------------------------------------------
# ground truth

def smooth_signal(lap, raw=None, tau=3.0, l=1, seed=None) -> np.ndarray:
    """Diffuse a stacked signal through the graph heat kernel expm(-tau L).

    With ``raw`` omitted, the per-agent blocks are drawn i.i.d. from
    N(0.4, 1) using ``seed``. tau = 0 returns the raw signal unchanged.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    lap = np.asarray(lap)
    n = lap.shape[0]
    if raw is None:
        raw = np.random.default_rng(seed).normal(0.4, 1.0, size=n * l)
    raw = np.asarray(raw, dtype=float)
    kernel = scipy.linalg.expm(-tau * lap)
    return (kernel @ raw.reshape(n, l)).ravel()


def _expand_covariances(covariances, block_dims):
    blocks = []
    for k, d in enumerate(block_dims):
        r = covariances[k]
        r = np.asarray(r, dtype=float)
        if r.ndim == 0:
            r = float(r) * np.eye(d)
        if r.shape != (d, d):
            raise ValueError(f"covariance {k} has shape {r.shape}, expected ({d}, {d})")
        if not np.allclose(r, r.T):
            raise ValueError(f"covariance {k} is not symmetric")
        if np.linalg.eigvalsh(r)[0] <= 0:
            raise ValueError(f"covariance {k} is not positive definite")
        blocks.append(r)
    return blocks


def compute_wopt(basis: SubspaceBasis, covariances, w_star) -> np.ndarray:
    """Exact constrained optimum U (U^T H U)^{-1} U^T H w_star, H = diag(R_k).

    ``covariances`` is a sequence with one entry per agent, each either a
    scalar variance (isotropic block) or a full per-block matrix.
    """
    u = basis.u
    w_star = np.asarray(w_star, dtype=float)
    blocks = _expand_covariances(covariances, basis.block_dims)
    h = scipy.linalg.block_diag(*blocks)
    g = u.T @ h @ u
    if np.linalg.cond(g) > 1e12:
        raise SingularProjection("U^T H U is numerically singular")
    return u @ np.linalg.solve(g, u.T @ h @ w_star)


# ---------------------------------------------------------------------------
# matrix export

def save_matrix_csv(path, mat, header=None):
    """Row-major CSV at full decimal precision, optional '#' header line."""
    mat = np.atleast_2d(np.asarray(mat))
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for row in mat:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
