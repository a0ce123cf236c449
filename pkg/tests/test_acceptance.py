"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Reference scenario: qubit with c = (1/sqrt2, 1/sqrt2), h = (0, 0), v = (1, -1),
H_cm = 0, V_cm = q, 64x64 grid on [-4, 4]^2, t_final = 1, dt = 1e-3.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from hybridlab.cli import main
from hybridlab.hybrid import (
    HamiltonianSpec,
    HybridGridState,
    event_probability,
    evolve_hybrid_grid,
    hybrid_matrix,
    hybrid_purity_defect,
    make_candidate,
    min_eigenvalue,
    node_of,
    residual_norm,
    von_neumann_entropy,
)
from hybridlab.phasespace import PhaseSpaceGrid, gaussian_state, liouville_evolve
from hybridlab.quantum import (
    bipartite_split_residual,
    pure_state,
    random_density_matrix,
    random_hermitian,
    von_neumann_evolve,
)
from hybridlab.scenario import ScenarioConfig, run_scenario

Z0 = (0.0, 0.0)
C_EQUAL = (2 ** -0.5, 2 ** -0.5)
DT = 1e-3
REFERENCE = Path(__file__).resolve().parents[1] / "configs" / "reference.cfg"
pytestmark = pytest.mark.acceptance

EXPECTED_VERDICT = ("seven_rejected_dynamics", "eight_rejected_positivity", "nine_accepted")


def square(n):
    return PhaseSpaceGrid.square(4.0, n)


def test_criterion_1_liouville_returns_after_one_period(record_criterion):
    grid = square(64)
    rho0 = gaussian_state(grid, (1.0, 0.0), 0.5)
    H = "0.5*q^2 + 0.5*p^2"
    period = 2 * math.pi
    out = liouville_evolve(H, rho0, period, 1000, scheme="spectral")
    err = np.linalg.norm(out.diag - rho0.diag) / np.linalg.norm(rho0.diag)
    # half a period maps the centre along its characteristic to (-1, 0)
    half = liouville_evolve(H, rho0, period / 2, 500, scheme="spectral")
    mirror = gaussian_state(grid, (-1.0, 0.0), 0.5)
    err_half = np.linalg.norm(half.diag - mirror.diag) / np.linalg.norm(mirror.diag)
    ok = err <= 0.02 and err_half <= 0.02
    record_criterion(1, "classical oracle equivalence", ok,
                     f"relative L2 error {err:.2e} after one period, {err_half:.2e} at half period")
    assert ok


def test_criterion_2_bipartite_split_identity(record_criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in range(100):
        d1, d2 = (2, 3) if k % 2 else (3, 2)
        if k % 4 == 0:
            d1 = d2 = 2 + (k // 4) % 2
        worst = max(worst, bipartite_split_residual(
            random_hermitian(d1, rng), random_hermitian(d2, rng),
            random_density_matrix(d1, rng), random_density_matrix(d2, rng)))
    ok = worst <= 1e-12
    record_criterion(2, "commutator split identity", ok, f"max residual {worst:.1e} over 100 instances")
    assert ok


def test_criterion_3_factorization_without_coupling(record_criterion):
    grid = square(64)
    spec = HamiltonianSpec((0.7, -0.4), (0.0, 0.0), "0.5*p^2 + 0.5*q^2", "q")
    rho_q = pure_state([0.6, 0.8j])
    rho_c = gaussian_state(grid, (1.0, 0.0), 0.5)
    steps = 200
    out = evolve_hybrid_grid(spec, HybridGridState.product(rho_q, rho_c), 1.0, steps)
    ref = HybridGridState.product(von_neumann_evolve(spec.h_qm, rho_q, 1.0),
                                  liouville_evolve(spec.H_cm, rho_c, 1.0, steps))
    err = out.distance(ref)
    ok = err <= 1e-6
    record_criterion(3, "factorization without interaction", ok, f"Frobenius error {err:.1e}")
    assert ok


def test_criterion_4_seven_pure_but_violates_dynamics(ref_spec, record_criterion):
    defects = [hybrid_purity_defect(make_candidate("seven", ref_spec, C_EQUAL, Z0, t, square(64)))
               for t in (0.0, 0.5, 1.0)]
    residuals = {n: [residual_norm(ref_spec, "seven", C_EQUAL, Z0, t, DT, square(n)) for t in (0.5, 1.0)]
                 for n in (32, 64, 128)}
    low = min(min(r) for r in residuals.values())
    ok = max(defects) <= 1e-10 and low >= 0.5
    record_criterion(4, "candidate seven pure, dynamics violated", ok,
                     f"max purity defect {max(defects):.1e}; min residual {low:.3g} over 32^2..128^2")
    assert ok


def test_criterion_5_eight_satisfies_dynamics_not_positive(ref_spec, ref_grid, record_criterion):
    res = [residual_norm(ref_spec, "eight", C_EQUAL, Z0, t, DT, ref_grid) for t in (0.5, 1.0)]
    refined = [residual_norm(ref_spec, "eight", C_EQUAL, Z0, 1.0, dt, square(n))
               for n, dt in ((32, 4e-3), (64, 1e-3), (128, 2.5e-4))]
    decreasing = refined[0] > refined[1] > refined[2]
    eight = make_candidate("eight", ref_spec, C_EQUAL, Z0, 1.0, ref_grid)
    lam = min_eigenvalue(eight)
    target = -0.5 / ref_grid.cell
    node = node_of(eight, (0.0, 0.0))
    p_pointer = event_probability(eight, (np.eye(2), [node]))
    c12 = next(term.coeff for term in eight.terms if (term.i, term.j) == (0, 1))
    phase = np.array([1.0, -np.exp(-1j * np.angle(c12))]) / math.sqrt(2)
    p_phase = event_probability(eight, (np.outer(phase, phase.conj()), [node]))
    ok = (max(res) <= 0.05 and decreasing and abs(lam - target) <= 0.01 * abs(target)
          and abs(p_pointer) <= 1e-10 and p_phase <= -0.4)
    record_criterion(5, "candidate eight dynamic but not positive", ok,
                     f"residual {max(res):.1e}; refined {', '.join(f'{r:.2e}' for r in refined)}; "
                     f"min eigenvalue {lam:.4g} vs {target:.4g}; pointer event {p_pointer:.1e}; "
                     f"phase event {p_phase:.3f}")
    assert ok


def test_criterion_6_nine_accepted(ref_spec, ref_grid, record_criterion):
    res = [residual_norm(ref_spec, "nine", C_EQUAL, Z0, t, DT, ref_grid) for t in (0.5, 1.0)]
    nine = make_candidate("nine", ref_spec, C_EQUAL, Z0, 1.0, ref_grid)
    lam = min_eigenvalue(nine)
    probs = [event_probability(nine, (np.diag(np.eye(2)[i]), None)) for i in range(2)]
    entropy = von_neumann_entropy(nine)
    ok = (max(res) <= 0.05 and lam >= -1e-10 and all(abs(p - 0.5) <= 1e-10 for p in probs)
          and abs(entropy - math.log(2)) <= 1e-10)
    record_criterion(6, "candidate nine consistent and positive", ok,
                     f"residual {max(res):.1e}; min eigenvalue {lam:.1e}; probabilities "
                     f"{probs[0]:.12f}, {probs[1]:.12f}; entropy {entropy:.12f}")
    assert ok


def test_criterion_7_verdict_stable_across_grids(ref_spec, record_criterion):
    verdicts = {n: run_scenario(ScenarioConfig(ref_spec, C_EQUAL, Z0, square(n), dt=DT)).verdict
                for n in (32, 64, 128)}
    ok = all(v == EXPECTED_VERDICT for v in verdicts.values())
    record_criterion(7, "verdict identical at 32^2, 64^2, 128^2", ok,
                     "; ".join(f"{n}: {','.join(v)}" for n, v in verdicts.items()))
    assert ok


def test_criterion_8_eigenstate_unchanged(ref_spec, ref_grid, record_criterion):
    c = (1.0, 0.0)
    mats = {k: hybrid_matrix(make_candidate(k, ref_spec, c, Z0, 1.0, ref_grid))
            for k in ("seven", "eight", "nine")}
    gap = max(abs(mats["seven"] - mats[k]).max() for k in ("eight", "nine"))
    res = max(residual_norm(ref_spec, k, c, Z0, t, DT, ref_grid)
              for k in ("seven", "eight", "nine") for t in (0.5, 1.0))
    ent = [von_neumann_entropy(make_candidate(k, ref_spec, c, Z0, t, ref_grid))
           for k in ("seven", "eight", "nine") for t in (0.0, 0.5, 1.0)]
    ok = gap == 0 and res <= 0.05 and all(e == 0.0 for e in ent)
    record_criterion(8, "eigenstate left unchanged", ok,
                     f"candidate gap {gap:.1e}; max residual {res:.1e}; max entropy {max(ent):.1e}")
    assert ok


def test_criterion_9_byte_identical_outputs(tmp_path, record_criterion):
    codes = [main(["scenario", str(REFERENCE), str(tmp_path / tag)]) for tag in ("a", "b")]
    names = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    ok = codes == [0, 0] and same and len(names) > 1
    record_criterion(9, "deterministic CSV output", ok, f"{len(names)} CSV files compared")
    assert ok
