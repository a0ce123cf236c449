"""Spectral and probabilistic diagnostics of hybrid states.

The discrete hybrid operator of a state is the ``(N*M, N*M)`` matrix with
blocks ``W_ij`` (quantum index major).  A delta state carries ``1/(dq*dp)``, so
eigenvalues scale like densities; traces and probabilities use the discrete
measure ``dq*dp``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import eigsh

from ..errors import ContractError, NotPositiveError, NumericalError
from ..phasespace import ClassicalOperator
from .states import HybridDyadState, HybridGridState

HERMITIAN_RTOL = 1e-10
ENTROPY_NEG_TOL = 1e-10
DENSE_BLOCK_LIMIT = 2048


def _as_grid(state):
    if isinstance(state, HybridDyadState):
        return state.to_grid()
    if isinstance(state, HybridGridState):
        return state
    raise ContractError(f"expected a hybrid state, got {type(state).__name__}")


def hybrid_matrix(state):
    """Sparse CSR hybrid operator of a state."""
    g = _as_grid(state)
    n = g.dim
    return sp.bmat([[g[i, j].to_sparse() for j in range(n)] for i in range(n)], format="csr")


def _check_hermitian(mat):
    diff = mat - mat.conj().T
    scale = np.max(np.abs(mat.data)) if mat.nnz else 0.0
    if diff.nnz and np.max(np.abs(diff.data)) > HERMITIAN_RTOL * max(scale, 1.0):
        raise ContractError("hybrid state is not Hermitian")


def _blocks(mat):
    """Group the connected blocks of ``mat`` by size.

    Yields ``(size, dense_blocks)`` with ``dense_blocks`` of shape
    ``(count, size, size)``.  Indices carrying no entries form zero blocks of
    size one.
    """
    pattern = abs(mat)
    pattern.eliminate_zeros()
    n_comp, labels = csgraph.connected_components(pattern, directed=False)
    sizes = np.bincount(labels, minlength=n_comp)
    order = np.argsort(labels, kind="stable")
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    local = np.empty_like(labels)
    local[order] = np.arange(labels.size) - starts[labels[order]]
    coo = mat.tocoo()
    nz = coo.data != 0
    coo = sp.coo_matrix((coo.data[nz], (coo.row[nz], coo.col[nz])), shape=mat.shape)
    comp = labels[coo.row]
    for size in np.unique(sizes):
        members = np.flatnonzero(sizes == size)
        slot = np.full(n_comp, -1)
        slot[members] = np.arange(members.size)
        dense = np.zeros((members.size, size, size), dtype=complex)
        sel = sizes[comp] == size
        np.add.at(dense, (slot[comp[sel]], local[coo.row[sel]], local[coo.col[sel]]), coo.data[sel])
        yield int(size), dense


def spectrum(state):
    """All eigenvalues of the discrete hybrid operator, ascending.

    Block-diagonalizes over connected groups of (outcome, node) indices
    before any dense solve.  Unoccupied indices contribute zeros.
    """
    mat = hybrid_matrix(state)
    _check_hermitian(mat)
    out = []
    for size, dense in _blocks(mat):
        if size > DENSE_BLOCK_LIMIT:
            raise NumericalError(f"coupled block of size {size} is too large for a dense spectrum")
        out.append(np.linalg.eigvalsh(dense).ravel())
    return np.sort(np.concatenate(out))


def min_eigenvalue(state):
    """Smallest eigenvalue of the discrete hybrid operator."""
    mat = hybrid_matrix(state)
    _check_hermitian(mat)
    best = math.inf
    for size, dense in _blocks(mat):
        if size > DENSE_BLOCK_LIMIT:
            for k in range(dense.shape[0]):
                block = sp.csr_matrix(dense[k])
                val = eigsh(block, k=1, which="SA", return_eigenvectors=False)[0]
                best = min(best, float(val))
        else:
            best = min(best, float(np.linalg.eigvalsh(dense)[:, 0].min()))
    return best


def _check_projector(proj, dim):
    proj = np.asarray(proj, dtype=complex)
    if proj.shape != (dim, dim):
        raise ContractError(f"quantum projector must be {dim}x{dim}, got {proj.shape}")
    if not np.allclose(proj, proj.conj().T, atol=1e-12) or not np.allclose(proj @ proj, proj, atol=1e-10):
        raise ContractError("quantum part of the event is not an orthogonal projector")
    return proj


def event_probability(state, event):
    """``Tr(P rho)/Tr(rho)`` for ``P = projector (x) indicator(nodes)``.

    ``event`` is ``(projector, nodes)`` where ``nodes`` is an iterable of
    ``(k, l)`` node indices, or None for every node.  Negative values, which
    witness a non-positive state, are returned as they are.
    """
    g = _as_grid(state)
    try:
        proj, nodes = event
    except (TypeError, ValueError) as exc:
        raise ContractError("event must be a (projector, nodes) pair") from exc
    proj = _check_projector(proj, g.dim)
    grid = g.grid
    if nodes is None:
        mask = np.ones(grid.shape, dtype=bool)
    else:
        mask = np.zeros(grid.shape, dtype=bool)
        for node in nodes:
            k, l = node
            if not (0 <= k < grid.n_q and 0 <= l < grid.n_p):
                raise ContractError(f"node {tuple(node)} is outside the grid")
            mask[k, l] = True
    total = g.trace()
    if total == 0:
        raise ContractError("state has zero trace")
    value = 0j
    for i in range(g.dim):
        for j in range(g.dim):
            if proj[j, i] != 0:
                value += proj[j, i] * np.sum(np.asarray(g[i, j].diag)[mask]) * grid.cell
    return float(np.real(value / total))


def hybrid_purity_defect(state):
    """``||rho^2 dq dp - rho||_F / ||rho||_F``; zero exactly for pure states."""
    mat = hybrid_matrix(state)
    _check_hermitian(mat)
    g = _as_grid(state)
    norm = sp.linalg.norm(mat) if mat.nnz else 0.0
    if norm == 0:
        raise ContractError("purity defect of the zero state is undefined")
    diff = (mat @ mat) * g.grid.cell - mat
    return float(sp.linalg.norm(diff) / norm) if diff.nnz else 0.0


def von_neumann_entropy(state):
    """Entropy of the trace-normalized eigenvalues of the hybrid operator.

    Raises
    ------
    NotPositiveError
        If a normalized eigenvalue is below ``-1e-10``; entropy is undefined
        for operators that are not states.
    """
    vals = spectrum(state)
    total = vals.sum()
    if total <= 0:
        raise NotPositiveError("state has non-positive trace")
    lam = vals / total
    if lam.min() < -ENTROPY_NEG_TOL:
        raise NotPositiveError(f"state has a negative eigenvalue ({lam.min():.3g} after normalization)")
    lam = lam[lam > 0]
    return float(abs(np.sum(lam * np.log(lam))))


def reduce_qm(state):
    """Quantum marginal ``rho_qm[i, j] = Tr_cm W_ij``."""
    g = _as_grid(state)
    return np.array([[g[i, j].trace() for j in range(g.dim)] for i in range(g.dim)], dtype=complex)


def reduce_cm(state):
    """Classical marginal ``sum_i W_ii``."""
    g = _as_grid(state)
    out = ClassicalOperator(g.grid)
    for i in range(g.dim):
        out = out + g[i, i]
    return out


def node_of(state, point):
    """Grid node a sharp pointer at ``point`` projects to."""
    grid = state.grid
    return grid.snap(point, wrap=grid.boundary == "periodic")
