"""Candidate post-measurement states and their dynamical residuals.

Starting from ``|Psi><Psi| (x) |z0><z0|`` with ``Psi = sum_i c_i psi_i``:

``seven``
    Coherent mixture whose every classical ket and bra follows a single
    outcome: ``c_i c_j* |psi_i><psi_j| (x) |z_i(t)><z_j(t)|``.  Pure at all
    times.
``eight``
    The linear solution: every ``(i, j)`` sector sits at a single point
    ``z_ij(t)`` moved by ``H_cm + (v_i + v_j)/2 V_cm``, carrying a phase.
``nine``
    The collapsed, noncoherent mixture ``|c_i|^2 |psi_i><psi_i| (x) |z_i(t)><z_i(t)|``.

Sharp candidates are `HybridDyadState` objects.  For residuals a smoothed
pointer of width ``sigma`` replaces ``|z0><z0|`` so that time and phase-space
derivatives exist on the grid; the sharp candidates are its ``sigma -> 0``
limit.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from ..errors import ContractError, DomainError
from ..phasespace import ClassicalOperator, PhasePoint, hamiltonian_flow
from .dynamics import _check_dims, evolve_hybrid_dyads, hybrid_rhs
from .states import DyadTerm, HybridDyadState, HybridGridState


class Candidate(str, enum.Enum):
    """Candidate labels; see the module docstring."""

    SEVEN = "seven"
    EIGHT = "eight"
    NINE = "nine"


NORMALIZATION_ATOL = 1e-10
SMOOTHING_STEP = 1e-2


def _amplitudes(c, dim):
    c = np.asarray(c, dtype=complex).ravel()
    if c.size != dim:
        raise ContractError(f"expected {dim} amplitudes, got {c.size}")
    norm = float(np.vdot(c, c).real)
    if abs(norm - 1.0) > NORMALIZATION_ATOL:
        raise DomainError(f"amplitudes are not normalized (sum |c_i|^2 = {norm:.12g})")
    return c


def initial_state(spec, c, z0, grid):
    """Pure product ``|Psi><Psi| (x) |z0><z0|`` in dyad form."""
    c = _amplitudes(c, spec.dim)
    z0 = PhasePoint(*map(float, z0))
    if not grid.contains(z0):
        raise DomainError(f"pointer {tuple(z0)} lies outside the grid")
    terms = tuple(DyadTerm(i, j, complex(c[i] * np.conj(c[j])), z0, z0)
                  for i in range(spec.dim) for j in range(spec.dim) if c[i] * np.conj(c[j]) != 0)
    return HybridDyadState(grid, spec.dim, terms)


def collapse_map(state, v=None):
    """Drop coherences between distinct outcomes.

    Removes every ``i != j`` term (component).  With the outcome eigenvalues
    ``v`` given, coherences inside a degenerate block (``v_i == v_j``) are
    kept, since such outcomes share one pointer trajectory.  Idempotent and
    trace preserving.
    """
    def keep(i, j):
        return i == j or (v is not None and v[i] == v[j])

    if isinstance(state, HybridDyadState):
        return HybridDyadState(state.grid, state.dim, tuple(t for t in state.terms if keep(t.i, t.j)))
    if isinstance(state, HybridGridState):
        return state.map(lambda i, j, op: op if keep(i, j) else ClassicalOperator(state.grid))
    raise ContractError(f"cannot collapse {type(state).__name__}")


def make_candidate(kind, spec, c, z0, t, grid, max_step=1e-3):
    """Candidate state ``kind`` at time ``t >= 0`` (measurement starts at 0)."""
    kind = Candidate(kind)
    if t < 0:
        raise DomainError("candidates are defined for t >= 0")
    start = initial_state(spec, c, z0, grid)
    if kind is Candidate.EIGHT:
        return evolve_hybrid_dyads(spec, start, t, max_step)
    if kind is Candidate.NINE:
        return evolve_hybrid_dyads(spec, collapse_map(start, spec.v), t, max_step)
    # seven: each ket/bra follows its own outcome's pointer trajectory
    q0, p0 = map(float, z0)
    points = {}
    for i in range(spec.dim):
        q, p, _ = hamiltonian_flow(spec.outcome_hamiltonian(i), q0, p0, t, max_step)
        points[i] = PhasePoint(float(q), float(p))
    terms = tuple(
        DyadTerm(term.i, term.j,
                 complex(term.coeff * np.exp(-1j * (spec.h[term.i] - spec.h[term.j]) * t / spec.hbar)),
                 points[term.i], points[term.j])
        for term in start.terms)
    return HybridDyadState(grid, spec.dim, terms)


# --- smoothed projection ------------------------------------------------------

def default_width(grid):
    """Default pointer smoothing width: two grid cells."""
    return 2.0 * max(grid.dq, grid.dp)


def _pointer_density(grid, z0, width, q, p):
    """Normalized Gaussian pointer density at arbitrary points (minimum image on periodic grids)."""
    q0, p0 = z0
    dq_ = q - q0
    dp_ = p - p0
    if grid.boundary == "periodic":
        lq = grid.q_max - grid.q_min
        lp = grid.p_max - grid.p_min
        dq_ = (dq_ + lq / 2) % lq - lq / 2
        dp_ = (dp_ + lp / 2) % lp - lp / 2
    return np.exp(-(dq_**2 + dp_**2) / (2 * width**2)) / (2 * math.pi * width**2)


def _steps_for(t_ref, max_step):
    return max(1, math.ceil(abs(t_ref) / max_step))


def smoothed_candidate(kind, spec, c, z0, t, grid, width=None, max_step=SMOOTHING_STEP, n_steps=None):
    """Candidate ``kind`` grown from a Gaussian pointer of width ``width``.

    Each point of the smoothed initial pointer is treated as a sharp start and
    the resulting sharp candidates are superposed.  Classically diagonal
    sectors are evaluated on the nodes by pulling back along the sector's
    characteristics, including the position-dependent phase.  The off-diagonal
    sectors of ``seven`` are sheared dyads ``|z_i(t)><z_j(t)|`` deposited
    bilinearly on their bra side.

    ``n_steps`` fixes the leapfrog step count so that neighbouring times share
    one discrete flow map; by default it follows ``max_step``.
    """
    kind = Candidate(kind)
    c = _amplitudes(c, spec.dim)
    width = default_width(grid) if width is None else float(width)
    if width <= 0:
        raise DomainError("smoothing width must be positive")
    if t < 0:
        raise DomainError("candidates are defined for t >= 0")
    n_steps = _steps_for(t, max_step) if n_steps is None else n_steps
    hbar = spec.hbar
    qn, pn = grid.mesh()
    n = spec.dim
    comps = {}

    def keep(i, j):
        if kind is Candidate.NINE:
            return i == j or spec.degenerate(i, j)
        return True

    for i in range(n):
        for j in range(i, n):
            coef = c[i] * np.conj(c[j])
            if coef == 0 or not keep(i, j):
                comps[(i, j)] = ClassicalOperator(grid)
                continue
            if kind is Candidate.SEVEN and not spec.degenerate(i, j):
                comps[(i, j)] = _sheared_dyad(spec, i, j, coef, z0, t, grid, width, n_steps)
                continue
            dv = spec.v[i] - spec.v[j]
            integrand = spec.V_cm if dv != 0 and kind is not Candidate.SEVEN else None
            qb, pb, v_back = hamiltonian_flow(spec.pair_hamiltonian(i, j), qn, pn, -t,
                                              integrand=integrand, n_steps=n_steps)
            phase = (spec.h[i] - spec.h[j]) * t
            if integrand is not None:
                phase = phase - dv * v_back
            w = coef * _pointer_density(grid, z0, width, qb, pb) * np.exp(-1j * phase / hbar)
            comps[(i, j)] = ClassicalOperator(grid, w.real if i == j else w)
    rows = tuple(tuple(comps[(i, j)] if i <= j else comps[(j, i)].adjoint() for j in range(n))
                 for i in range(n))
    return HybridGridState(grid, n, rows)


def _sheared_dyad(spec, i, j, coef, z0, t, grid, width, n_steps):
    qn, pn = grid.mesh()
    q0, p0, _ = hamiltonian_flow(spec.outcome_hamiltonian(i), qn, pn, -t, n_steps=n_steps)
    qb, pb, _ = hamiltonian_flow(spec.outcome_hamiltonian(j), q0, p0, t, n_steps=n_steps)
    amp = coef * _pointer_density(grid, z0, width, q0, p0) * np.exp(-1j * (spec.h[i] - spec.h[j]) * t / spec.hbar)
    idx, wts = grid.bilinear(qb, pb)
    rows = np.repeat(np.arange(grid.n_nodes), 4)
    vals = (amp.ravel()[:, None] * wts).ravel()
    cols = idx.ravel()
    ok = cols >= 0
    return ClassicalOperator.from_entries(grid, rows[ok], cols[ok], vals[ok])


def residual_norm(spec, kind, c, z0, t, dt, grid, width=None, scheme=None, max_step=SMOOTHING_STEP):
    """Normalized defect of a candidate in the hybrid equation.

    Evaluates the smoothed candidate at ``t - dt``, ``t``, ``t + dt`` and
    returns ``||(W(t+dt) - W(t-dt))/(2 dt) - rhs(W(t))||_F / ||W(t)||_F``.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    if t - dt < 0:
        raise DomainError("residual needs t - dt >= 0 (measurement starts at t = 0)")
    _check_dims(spec, HybridDyadState(grid, spec.dim))
    n_steps = _steps_for(t + dt, max_step)
    states = [smoothed_candidate(kind, spec, c, z0, s, grid, width, n_steps=n_steps)
              for s in (t - dt, t, t + dt)]
    lhs = (states[2] - states[0]).scaled(1.0 / (2 * dt))
    rhs = hybrid_rhs(spec, states[1], scheme)
    return (lhs - rhs).frobenius() / states[1].frobenius()
