import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridlab.errors import ContractError, StabilityError, UnsupportedStateError
from hybridlab.phasespace import (
    ClassicalOperator,
    PhasePoint,
    PhaseSpaceGrid,
    gaussian_state,
    liouville_evolve,
    poisson_bracket,
)
from hybridlab.quantum import pure_state, von_neumann_evolve
from hybridlab.hybrid import (
    DyadTerm,
    HamiltonianSpec,
    HybridDyadState,
    HybridGridState,
    collapse_map,
    evolve_hybrid_dyads,
    evolve_hybrid_grid,
    grid_state_to_dense,
    hybrid_rhs,
    hybrid_rhs_tensor,
    smoothed_candidate,
)


def random_hermitian_state(grid, dim, rng, n_dyads=6):
    """Random Hermitian grid state with smooth-ish diagonals and a few dyads."""
    comps = {}
    for i in range(dim):
        for j in range(i, dim):
            diag = rng.normal(size=grid.shape) + (1j * rng.normal(size=grid.shape) if i != j else 0)
            ket = rng.integers(0, grid.n_nodes, n_dyads)
            bra = (ket + 1 + rng.integers(0, grid.n_nodes - 1, n_dyads)) % grid.n_nodes
            w = rng.normal(size=n_dyads) + 1j * rng.normal(size=n_dyads)
            op = ClassicalOperator(grid, diag, ket, bra, w)
            if i == j:
                op = ClassicalOperator.from_sparse(grid, 0.5 * (op.to_sparse() + op.adjoint().to_sparse()))
            comps[(i, j)] = op
    rows = [[comps[(i, j)] if i <= j else comps[(j, i)].adjoint() for j in range(dim)] for i in range(dim)]
    return HybridGridState(grid, dim, rows)


# --- componentwise reduction vs. full tensor construction ----------------------------------

@pytest.mark.parametrize("boundary", ["periodic", "clamped"])
def test_componentwise_rhs_matches_tensor_construction(boundary, rng):
    grid = PhaseSpaceGrid(-2.0, 2.0, -2.0, 2.0, 8, 8, boundary)
    spec = HamiltonianSpec((0.4, -0.9), (1.3, -0.6), "0.5*p^2 + 0.2*q^2", "q + 0.3*q*p")
    state = random_hermitian_state(grid, 2, rng)
    tensor = hybrid_rhs_tensor(spec, state)
    reduced = grid_state_to_dense(hybrid_rhs(spec, state))
    assert np.linalg.norm(tensor - reduced) <= 1e-10 * np.linalg.norm(tensor)


# --- hybrid_rhs examples and invariants ---------------------------------------------------------

def test_rhs_pure_streaming_per_component(ref_grid):
    spec = HamiltonianSpec((0, 0), (0, 0), "0.5*p^2", "q")
    rho = gaussian_state(ref_grid, (0.0, 1.0), 0.4)
    state = HybridGridState.product(np.diag([0.3, 0.7]), rho)
    out = hybrid_rhs(spec, state)
    stream = poisson_bracket(spec.H_cm, rho).diag
    assert np.allclose(out[0, 0].diag, 0.3 * stream)
    assert np.allclose(out[1, 1].diag, 0.7 * stream)
    assert np.all(out[0, 1].diag == 0)


def test_rhs_nondiagonal_dyad_is_inert(ref_grid):
    spec = HamiltonianSpec((0.5, 0.5), (2.0, 2.0), "0.5*p^2 + q^3", "q*p")
    dyad = ClassicalOperator.from_entries(ref_grid, [17], [900], [1 + 2j])
    zero = ClassicalOperator(ref_grid)
    state = HybridGridState(ref_grid, 2, ((zero, dyad), (dyad.adjoint(), zero)))
    out = hybrid_rhs(spec, state)
    assert out.frobenius() == 0.0


def test_rhs_zero_spec(rng):
    grid = PhaseSpaceGrid.square(2.0, 8)
    spec = HamiltonianSpec((0, 0, 0), (0, 0, 0), "0", "0")
    assert hybrid_rhs(spec, random_hermitian_state(grid, 3, rng)).frobenius() == 0.0


def test_rhs_dimension_mismatch(ref_grid):
    spec = HamiltonianSpec((0, 0, 0), (1, 0, -1), "0", "q")
    state = HybridGridState.product(np.eye(2) / 2, gaussian_state(ref_grid, (0, 0), 0.5))
    with pytest.raises(ContractError):
        hybrid_rhs(spec, state)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["periodic", "clamped"]))
def test_rhs_hermitian_and_traceless(seed, boundary):
    r = np.random.default_rng(seed)
    grid = PhaseSpaceGrid(-2.0, 2.0, -2.0, 2.0, 8, 8, boundary)
    spec = HamiltonianSpec(tuple(r.normal(size=2)), tuple(r.normal(size=2)), "0.5*p^2 + 0.5*q^2", "q")
    out = hybrid_rhs(spec, random_hermitian_state(grid, 2, r))
    assert out.is_hermitian(atol=1e-10)
    if boundary == "periodic":
        assert abs(out.trace()) <= 1e-10 * max(1.0, out.frobenius())


# --- grid engine --------------------------------------------------------------------------------

def test_grid_engine_zero_time(ref_grid, ref_spec):
    state = HybridGridState.product(np.eye(2) / 2, gaussian_state(ref_grid, (0, 0), 0.4))
    assert evolve_hybrid_grid(ref_spec, state, 0.0, 5) is state


def test_grid_engine_factorizes_without_coupling(ref_grid):
    spec = HamiltonianSpec((0.7, -0.4), (0.0, 0.0), "0.5*p^2 + 0.5*q^2", "q")
    rho_q = pure_state([0.6, 0.8j])
    rho_c = gaussian_state(ref_grid, (1.0, 0.0), 0.5)
    out = evolve_hybrid_grid(spec, HybridGridState.product(rho_q, rho_c), 1.0, 200)
    ref = HybridGridState.product(von_neumann_evolve(spec.h_qm, rho_q, 1.0),
                                  liouville_evolve(spec.H_cm, rho_c, 1.0, 200))
    assert out.distance(ref) <= 1e-6 * ref.frobenius()


def test_grid_engine_trace_and_hermiticity(ref_grid, ref_spec):
    state = smoothed_candidate("eight", ref_spec, (0.6, 0.8), (0.0, 0.0), 0.0, ref_grid)
    out = evolve_hybrid_grid(ref_spec, state, 1.0, 1000)
    assert abs(out.trace() - state.trace()) <= 1e-8
    assert out.is_hermitian(atol=0.0)


def test_grid_engine_stability_error(ref_grid, ref_spec):
    state = smoothed_candidate("eight", ref_spec, (0.6, 0.8), (0.0, 0.0), 0.0, ref_grid)
    with pytest.raises(StabilityError) as err:
        evolve_hybrid_grid(ref_spec, state, 1.0, 1)
    assert err.value.suggested_dt < 0.1


def test_grid_engine_diagonal_mixture_separates(ref_grid, ref_spec, equal_amplitudes):
    start = collapse_map(smoothed_candidate("eight", ref_spec, equal_amplitudes, (0, 0), 0.0, ref_grid))
    out = evolve_hybrid_grid(ref_spec, start, 1.0, 1000)
    target = smoothed_candidate("nine", ref_spec, equal_amplitudes, (0, 0), 1.0, ref_grid)
    assert out.distance(target) <= 1e-6 * target.frobenius()
    # outcome 1 pointer pushed to p = -1, outcome 2 to p = +1
    for i, p_expect in ((0, -1.0), (1, 1.0)):
        k, l = np.unravel_index(np.argmax(np.real(out[i, i].diag)), ref_grid.shape)
        assert ref_grid.point((k, l)).p == pytest.approx(p_expect)


# --- dyad engine --------------------------------------------------------------------------------

def test_dyad_engine_diagonal_term(ref_grid, ref_spec):
    z0 = PhasePoint(0.5, 0.25)
    state = HybridDyadState(ref_grid, 2, (DyadTerm(0, 0, 1.0, z0, z0),))
    (term,) = evolve_hybrid_dyads(ref_spec, state, 0.8).terms
    assert (term.ket.q, term.ket.p) == pytest.approx((0.5, 0.25 - 0.8), abs=1e-12)
    assert term.coeff == 1.0


def test_dyad_engine_coherence_phase(ref_grid, ref_spec):
    z0 = PhasePoint(0.75, -0.5)
    state = HybridDyadState(ref_grid, 2, (DyadTerm(0, 1, 0.5, z0, z0), DyadTerm(1, 0, 0.5, z0, z0)))
    t = 1.3
    out = evolve_hybrid_dyads(ref_spec, state, t)
    for term in out.terms:
        assert term.ket == z0
    # d(phi)/dt = -(v1 - v2) q0 / hbar = -2 q0 for the (1, 2) term
    assert out.terms[0].coeff == pytest.approx(0.5 * np.exp(-2j * 0.75 * t), abs=1e-12)
    assert out.terms[1].coeff == pytest.approx(np.conj(out.terms[0].coeff), abs=1e-15)


def test_dyad_engine_phase_with_hbar_and_h(ref_grid):
    spec = HamiltonianSpec((1.0, 2.0), (1.0, -1.0), "0", "q", hbar=0.5)
    z0 = PhasePoint(0.75, 0.0)
    state = HybridDyadState(ref_grid, 2, (DyadTerm(0, 1, 1.0, z0, z0),))
    out = evolve_hybrid_dyads(spec, state, 1.0)
    assert out.terms[0].coeff == pytest.approx(np.exp(-1j * ((1 - 2) + 2 * 0.75) / 0.5), abs=1e-12)


def test_dyad_engine_moving_midpoint_phase(ref_grid):
    # midpoint Hamiltonian p^2/2 moves q0 -> q0 + p0 t, so the phase integral is quadratic in t
    spec = HamiltonianSpec((0, 0), (1.0, -1.0), "0.5*p^2", "q")
    z0 = PhasePoint(0.25, 0.5)
    out = evolve_hybrid_dyads(spec, HybridDyadState(ref_grid, 2, (DyadTerm(0, 1, 1.0, z0, z0),)), 2.0)
    integral = 0.25 * 2.0 + 0.5 * 0.5 * 2.0**2
    assert out.terms[0].coeff == pytest.approx(np.exp(-2j * integral), abs=1e-10)
    assert abs(out.terms[0].coeff) == pytest.approx(1.0, abs=1e-14)


def test_dyad_engine_zero_time(ref_grid, ref_spec):
    z0 = PhasePoint(0.0, 0.0)
    state = HybridDyadState(ref_grid, 2, (DyadTerm(0, 0, 1.0, z0, z0),))
    assert evolve_hybrid_dyads(ref_spec, state, 0.0) is state


def test_dyad_engine_rejects_nondiagonal(ref_grid, ref_spec):
    a, b = PhasePoint(0.0, -1.0), PhasePoint(0.0, 1.0)
    state = HybridDyadState(ref_grid, 2, (DyadTerm(0, 1, 0.5, a, b), DyadTerm(1, 0, 0.5, b, a)))
    with pytest.raises(UnsupportedStateError):
        evolve_hybrid_dyads(ref_spec, state, 1.0)


def test_engines_agree(ref_grid, ref_spec):
    """Dyad engine on a cloud of sharp terms, projected, vs. the grid engine on the same start."""
    c = np.array([0.6, 0.8])
    width = 0.3
    pointer = gaussian_state(ref_grid, (0.0, 0.0), width)
    q, p = ref_grid.mesh()
    weights = np.asarray(pointer.diag) * ref_grid.cell
    keep = weights > 1e-14 * weights.max()
    terms = []
    for w, qq, pp in zip(weights[keep], q[keep], p[keep]):
        z = PhasePoint(float(qq), float(pp))
        for i in range(2):
            for j in range(2):
                terms.append(DyadTerm(i, j, complex(c[i] * c[j] * w), z, z))
    cloud = HybridDyadState(ref_grid, 2, tuple(terms))
    start = cloud.to_grid()
    t = 1.0
    by_dyads = evolve_hybrid_dyads(ref_spec, cloud, t).to_grid()
    by_grid = evolve_hybrid_grid(ref_spec, start, t, 1000)
    assert by_grid.distance(by_dyads) <= 0.05 * by_dyads.frobenius()
    for i in range(2):
        peak_d = np.unravel_index(np.argmax(np.real(by_dyads[i, i].diag)), ref_grid.shape)
        peak_g = np.unravel_index(np.argmax(np.real(by_grid[i, i].diag)), ref_grid.shape)
        assert max(abs(a - b) for a, b in zip(peak_d, peak_g)) <= 1
