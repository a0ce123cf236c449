"""Hybrid equation of motion for the measurement Hamiltonian.

Because ``H_qm`` and ``V_qm`` are diagonal in the outcome basis, the hybrid
equation decouples per component::

    dW_ij/dt = -i/hbar (h_i - h_j) W_ij
               -i/hbar (v_i - v_j) V_cm . W_ij
               + {H_cm, W_ij} + (v_i + v_j)/2 {V_cm, W_ij}

``V_cm . W`` is the symmetrized classical product: pointwise on the diagonal
part and ``(V(a) + V(b))/2`` on a dyad ``|a><b|``.  Both brackets annihilate
dyads, so dyads only pick up phases.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError, UnsupportedStateError
from ..phasespace import (
    ClassicalOperator,
    PhasePoint,
    _bracket_nodal,
    _hamiltonian_field,
    check_stability,
    hamiltonian_flow,
    max_rate,
    resolve_scheme,
    rk4_step,
)
from .states import DyadTerm, HamiltonianSpec, HybridDyadState, HybridGridState


def _check_dims(spec, state):
    if spec.dim != state.dim:
        raise ContractError(f"spec dimension {spec.dim} does not match state dimension {state.dim}")
    if not isinstance(spec, HamiltonianSpec):
        raise ContractError("spec must be a HamiltonianSpec")


def _node_values(poly, grid):
    q, p = grid.mesh()
    return np.broadcast_to(np.asarray(poly(q, p), dtype=float), grid.shape)


def _dyad_rates(spec, i, j, op, v_nodes):
    """Per-dyad angular frequency of ``W_ij``'s nondiagonal part."""
    flat = v_nodes.ravel()
    v_sym = 0.5 * (flat[op.ket] + flat[op.bra])
    return ((spec.h[i] - spec.h[j]) + (spec.v[i] - spec.v[j]) * v_sym) / spec.hbar


def hybrid_rhs(spec, state, scheme=None):
    """Right-hand side of the hybrid equation, componentwise.

    Returns a `HybridGridState` holding ``dW_ij/dt``; it is Hermitian and
    traceless for Hermitian input.
    """
    _check_dims(spec, state)
    grid = state.grid
    scheme = resolve_scheme(grid, scheme)
    hbar = spec.hbar
    v_nodes = _node_values(spec.V_cm, grid)
    f_h = _hamiltonian_field(spec.H_cm, grid, scheme)
    f_v = _hamiltonian_field(spec.V_cm, grid, scheme)

    def component(i, j, op):
        w = np.asarray(op.diag, dtype=complex)
        out = -1j / hbar * (spec.h[i] - spec.h[j]) * w
        if spec.v[i] != spec.v[j]:
            out = out - 1j / hbar * (spec.v[i] - spec.v[j]) * v_nodes * w
        out = out + _bracket_nodal(f_h, w, grid, scheme)
        vbar = 0.5 * (spec.v[i] + spec.v[j])
        if vbar != 0.0:
            out = out + vbar * _bracket_nodal(f_v, w, grid, scheme)
        weight = -1j * _dyad_rates(spec, i, j, op, v_nodes) * op.weight
        return ClassicalOperator(grid, out, op.ket, op.bra, weight)

    return state.map(component)


def hybrid_rhs_tensor(spec, state, scheme=None):
    """Hybrid RHS assembled on the full tensor space, for cross-checking.

    ``rho`` becomes one ``(N*M, N*M)`` matrix (quantum index major).  Each
    product term ``A (x) B`` of the Hamiltonian contributes
    ``[A (x) I, (B~ rho + rho B~)/2]/(i hbar)`` with ``B~ = I (x) B``, plus the
    symmetrized product with ``A (x) I`` of the classical Poisson bracket
    superoperator applied block by block.  Dense; only meant for small grids.

    Returns the RHS as a dense ``(N*M, N*M)`` array.
    """
    _check_dims(spec, state)
    grid = state.grid
    scheme = resolve_scheme(grid, scheme)
    n, m = state.dim, grid.n_nodes
    rho = sp.bmat([[state[i, j].to_sparse() for j in range(n)] for i in range(n)]).toarray()
    eye_q = np.eye(n, dtype=complex)
    eye_c = np.eye(m, dtype=complex)
    v_cm = np.diag(_node_values(spec.V_cm, grid).ravel()).astype(complex)

    def qm_commutator_term(a_qm, b_cm):
        a = np.kron(a_qm, eye_c)
        b = np.kron(eye_q, b_cm)
        sym = 0.5 * (b @ rho + rho @ b)
        return (a @ sym - sym @ a) / (1j * spec.hbar)

    def bracket_superop(poly, x):
        fld = _hamiltonian_field(poly, grid, scheme)
        out = np.zeros_like(x)
        for i in range(n):
            for j in range(n):
                block = x[i * m:(i + 1) * m, j * m:(j + 1) * m]
                d = np.diagonal(block).reshape(grid.shape)
                out[i * m:(i + 1) * m, j * m:(j + 1) * m] = np.diag(_bracket_nodal(fld, d, grid, scheme).ravel())
        return out

    def cm_bracket_term(a_qm, poly):
        if poly.is_zero:
            return 0.0
        a = np.kron(a_qm, eye_c)
        br = bracket_superop(poly, rho)
        return 0.5 * (a @ br + br @ a)

    return (qm_commutator_term(spec.h_qm, eye_c)
            + cm_bracket_term(eye_q, spec.H_cm)
            + qm_commutator_term(spec.v_qm, v_cm)
            + cm_bracket_term(spec.v_qm, spec.V_cm))


def grid_state_to_dense(state):
    """Full ``(N*M, N*M)`` matrix of a grid state (quantum index major)."""
    n = state.dim
    return sp.bmat([[state[i, j].to_sparse() for j in range(n)] for i in range(n)]).toarray()


def stability_rate(spec, grid, scheme=None):
    """Bound on the RK4-integrated part of the hybrid generator over all components."""
    scheme = resolve_scheme(grid, scheme)
    v_max = float(np.max(np.abs(_node_values(spec.V_cm, grid))))
    rate = 0.0
    for i in range(spec.dim):
        for j in range(i, spec.dim):
            fld = _hamiltonian_field(spec.pair_hamiltonian(i, j), grid, scheme)
            phase = abs(spec.v[i] - spec.v[j]) * v_max / spec.hbar
            rate = max(rate, max_rate(fld, grid, scheme, extra=phase))
    return rate


def evolve_hybrid_grid(spec, state, t, steps, scheme=None):
    """Integrate the hybrid equation on the grid.

    The ``(h_i - h_j)`` phase is applied exactly as an integrating factor;
    the pointer transport and the ``V_cm`` phase use RK4 on the diagonal
    parts; dyads rotate with their exact constant frequency.  Only the upper
    triangle is integrated and the lower one mirrored, so the result is
    exactly Hermitian.

    Raises
    ------
    StabilityError
        When ``t/steps`` exceeds the RK4 bound.
    """
    _check_dims(spec, state)
    if steps < 1:
        raise ContractError("steps must be >= 1")
    if t == 0:
        return state
    grid = state.grid
    scheme = resolve_scheme(grid, scheme)
    dt = t / steps
    check_stability(stability_rate(spec, grid, scheme), dt, what="hybrid transport")
    hbar = spec.hbar
    v_nodes = _node_values(spec.V_cm, grid)
    upper = [(i, j) for i in range(spec.dim) for j in range(i, spec.dim)]
    fields = {ij: _hamiltonian_field(spec.pair_hamiltonian(*ij), grid, scheme) for ij in upper}
    new = {}
    for i, j in upper:
        op = state[i, j]
        fld = fields[(i, j)]
        dv = spec.v[i] - spec.v[j]
        phase = -1j / hbar * dv * v_nodes if dv != 0 else None

        def rhs(w, fld=fld, phase=phase):
            out = _bracket_nodal(fld, w, grid, scheme)
            return out if phase is None else out + phase * w

        w = np.array(op.diag, dtype=complex)
        if fld.hq is not None or fld.hp is not None or phase is not None:
            for _ in range(steps):
                w = rk4_step(rhs, w, dt)
        w = w * np.exp(-1j * (spec.h[i] - spec.h[j]) * t / hbar)
        if i == j:
            w = w.real
        weight = op.weight * np.exp(-1j * _dyad_rates(spec, i, j, op, v_nodes) * t)
        new[(i, j)] = ClassicalOperator(grid, w, op.ket, op.bra, weight)
    comps = tuple(tuple(new[(i, j)] if i <= j else new[(j, i)].adjoint() for j in range(spec.dim))
                  for i in range(spec.dim))
    return HybridGridState(grid, spec.dim, comps)


def evolve_hybrid_dyads(spec, state, t, max_step=1e-3):
    """Exact evolution of classically diagonal dyad terms.

    A term ``(i, j, c, z, z)`` moves along the characteristic of
    ``H_cm + (v_i + v_j)/2 V_cm`` and its coefficient rotates with
    ``dphi/dt = -[(h_i - h_j) + (v_i - v_j) V_cm(z(t))]/hbar``; ``|c|`` is
    constant.  The phase integral shares the leapfrog nodes of the transport.

    Raises
    ------
    UnsupportedStateError
        For a term whose ket and bra points differ: classically nondiagonal
        operators are not functions of ``q`` and ``p`` and the bracket
        cannot move them.
    """
    _check_dims(spec, state)
    for term in state.terms:
        if not term.classically_diagonal:
            raise UnsupportedStateError(
                f"term ({term.i}, {term.j}) has ket {tuple(term.ket)} != bra {tuple(term.bra)}; "
                "only classically diagonal dyads can be evolved")
    if t == 0:
        return state
    groups = {}
    for k, term in enumerate(state.terms):
        groups.setdefault((term.i, term.j), []).append(k)
    new_terms = [None] * len(state.terms)
    for (i, j), idx in groups.items():
        q0 = np.array([state.terms[k].ket.q for k in idx])
        p0 = np.array([state.terms[k].ket.p for k in idx])
        dv = spec.v[i] - spec.v[j]
        integrand = spec.V_cm if dv != 0 and not spec.V_cm.is_zero else None
        q, p, v_int = hamiltonian_flow(spec.pair_hamiltonian(i, j), q0, p0, t, max_step, integrand=integrand)
        phase = (spec.h[i] - spec.h[j]) * t
        if integrand is not None:
            phase = phase + dv * v_int
        rot = np.exp(-1j * np.asarray(phase) / spec.hbar) * np.ones(len(idx))
        for n, k in enumerate(idx):
            old = state.terms[k]
            z = PhasePoint(float(q[n]), float(p[n]))
            new_terms[k] = DyadTerm(i, j, complex(old.coeff * rot[n]), z, z)
    return HybridDyadState(state.grid, state.dim, tuple(new_terms))
