"""Measurement scenario: a quantum system coupled to a classical pointer.

`run_scenario` evaluates the three candidate post-measurement states on a
time series, runs the grid engine in the requested mode, and condenses the
diagnostics into a verdict.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, HybridLabError, NotPositiveError
from .phasespace import PhasePoint, PhaseSpaceGrid, classical_expectation, resolve_scheme
from .polynomial import PolynomialObservable
from .hybrid import (
    Candidate,
    HamiltonianSpec,
    collapse_map,
    evolve_hybrid_grid,
    event_probability,
    hybrid_purity_defect,
    make_candidate,
    min_eigenvalue,
    reduce_cm,
    residual_norm,
    smoothed_candidate,
    von_neumann_entropy,
)

MODES = ("linear", "collapse", "trial")
VERDICT_LABELS = ("seven_rejected_dynamics", "eight_rejected_positivity", "nine_accepted")
_MODE_TARGET = {"linear": Candidate.EIGHT, "collapse": Candidate.NINE, "trial": Candidate.SEVEN}


class PeriodicPointerWarning(UserWarning):
    """An outcome's pointer orbit closes within the run time."""


def build_measurement_hamiltonian(h, v, H_cm="0", V_cm="q", hbar=1.0):
    """Hamiltonian ``H_qm (x) I + I (x) H_cm + V_qm (x) V_cm`` with diagonal ``H_qm``, ``V_qm``."""
    if len(h) != len(v):
        raise ContractError(f"h and v lengths differ ({len(h)} vs {len(v)})")
    return HamiltonianSpec(tuple(h), tuple(v), H_cm, V_cm, hbar)


def closed_orbit_periods(spec):
    """Orbit period of each outcome Hamiltonian that is an elliptic quadratic, else inf.

    Only the quadratic part decides: ``a q^2 + b q p + c p^2`` with
    ``4ac > b^2`` has closed orbits of period ``2 pi / sqrt(4ac - b^2)``.
    """
    out = []
    for i in range(spec.dim):
        H = spec.outcome_hamiltonian(i)
        a, b, c = H.quadratic_form()
        disc = 4 * a * c - b * b
        out.append(2 * math.pi / math.sqrt(disc) if H.degree == 2 and disc > 0 else math.inf)
    return out


@dataclass
class ScenarioConfig:
    spec: HamiltonianSpec
    amplitudes: tuple
    pointer: PhasePoint
    grid: PhaseSpaceGrid
    t_final: float = 1.0
    n_samples: int = 11
    mode: str = "collapse"
    dt: float = 1e-3
    scheme: str | None = None
    residual_threshold: float = 0.1
    positivity_tolerance: float = 1e-8
    probability_tolerance: float = 1e-10
    smoothing_width: float | None = None

    def __post_init__(self):
        self.amplitudes = tuple(complex(x) for x in self.amplitudes)
        self.pointer = PhasePoint(*map(float, self.pointer))
        if len(self.amplitudes) != self.spec.dim:
            raise ContractError(f"{len(self.amplitudes)} amplitudes for a {self.spec.dim}-level system")
        norm = sum(abs(x) ** 2 for x in self.amplitudes)
        if abs(norm - 1.0) > 1e-10:
            raise DomainError(f"amplitudes are not normalized (sum |c|^2 = {norm:.12g})")
        if not self.grid.contains(self.pointer):
            raise DomainError(f"pointer {tuple(self.pointer)} lies outside the grid")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.t_final < 0:
            raise DomainError("t_final must be nonnegative")
        if self.n_samples < 1:
            raise DomainError("n_samples must be >= 1")
        if self.dt <= 0:
            raise DomainError("dt must be positive")
        self.scheme = resolve_scheme(self.grid, self.scheme)

    def times(self):
        if self.n_samples == 1:
            return np.array([self.t_final])
        return np.linspace(0.0, self.t_final, self.n_samples)

    @property
    def positivity_floor(self):
        """Eigenvalue threshold: tolerance in units of a delta's height ``1/(dq dp)``."""
        return -self.positivity_tolerance / self.grid.cell


@dataclass
class Sample:
    t: float
    residual: float
    purity_defect: float
    min_eigenvalue: float
    entropy: float
    probabilities: tuple
    pointer_mean: tuple
    q_marginal: np.ndarray = field(repr=False)
    p_marginal: np.ndarray = field(repr=False)


@dataclass
class ScenarioReport:
    config: ScenarioConfig
    series: dict
    errors: dict
    engine: dict
    flags: dict
    warnings: list

    @property
    def verdict(self):
        return tuple(label for label in VERDICT_LABELS if self.flags.get(label))


def _marginals(state):
    """Pointer marginals in q and p and the pointer mean."""
    rho = reduce_cm(state)
    grid = rho.grid
    dens = np.real(np.asarray(rho.diag))
    qm = dens.sum(axis=1) * grid.dp
    pm = dens.sum(axis=0) * grid.dq
    try:
        mean = (classical_expectation(PolynomialObservable.parse("q"), rho),
                classical_expectation(PolynomialObservable.parse("p"), rho))
    except ZeroDivisionError:
        mean = (math.nan, math.nan)
    return qm, pm, tuple(float(np.real(x)) for x in mean)


def _sample(cfg, kind, t):
    spec, c, z0, grid = cfg.spec, cfg.amplitudes, cfg.pointer, cfg.grid
    state = make_candidate(kind, spec, c, z0, t, grid)
    if t > 0:
        dt = min(cfg.dt, t / 2)
        res = residual_norm(spec, kind, c, z0, t, dt, grid, cfg.smoothing_width, cfg.scheme)
    else:
        res = math.nan
    try:
        ent = von_neumann_entropy(state)
    except NotPositiveError:
        ent = math.nan
    probs = []
    for i in range(spec.dim):
        proj = np.zeros((spec.dim, spec.dim))
        proj[i, i] = 1.0
        probs.append(event_probability(state, (proj, None)))
    qm, pm, mean = _marginals(state)
    return Sample(float(t), float(res), hybrid_purity_defect(state), min_eigenvalue(state), ent,
                  tuple(probs), mean, qm, pm)


def _engine_run(cfg):
    """Grid engine from the smoothed initial state, compared with the mode's candidate."""
    spec, c, z0, grid = cfg.spec, cfg.amplitudes, cfg.pointer, cfg.grid
    target = _MODE_TARGET[cfg.mode]
    state = smoothed_candidate(Candidate.EIGHT, spec, c, z0, 0.0, grid, cfg.smoothing_width)
    if cfg.mode == "collapse":
        state = collapse_map(state, spec.v)
    times = cfg.times()
    out = []
    t_prev = 0.0
    for t in times:
        span = t - t_prev
        if span > 0:
            steps = max(1, math.ceil(span / cfg.dt - 1e-9))
            state = evolve_hybrid_grid(spec, state, span, steps, cfg.scheme)
        ref = smoothed_candidate(target, spec, c, z0, t, grid, cfg.smoothing_width)
        out.append((float(t), state.distance(ref) / ref.frobenius(), float(np.real(state.trace()))))
        t_prev = t
    return {"target": target.value, "samples": out}


def run_scenario(cfg):
    """Evaluate all candidates over the time series and decide the verdict.

    A failure inside one candidate's diagnostics marks that candidate as
    errored; a stability failure of the grid engine aborts the run.
    """
    report_warnings = []
    for i, period in enumerate(closed_orbit_periods(cfg.spec)):
        if period <= cfg.t_final:
            msg = (f"pointer orbit of outcome {i + 1} closes after t = {period:.6g} <= t_final; "
                   "outcomes may not stay distinguishable")
            warnings.warn(msg, PeriodicPointerWarning, stacklevel=2)
            report_warnings.append(msg)
    engine = _engine_run(cfg)
    series, errors = {}, {}
    for kind in Candidate:
        try:
            series[kind.value] = [_sample(cfg, kind, t) for t in cfg.times()]
        except HybridLabError as exc:
            series[kind.value] = []
            errors[kind.value] = f"{type(exc).__name__}: {exc}"
    flags = _decide(cfg, series, errors)
    return ScenarioReport(cfg, series, errors, engine, flags, report_warnings)


def _decide(cfg, series, errors):
    floor = cfg.positivity_floor
    target = np.abs(np.asarray(cfg.amplitudes)) ** 2

    def residuals(kind):
        return [s.residual for s in series[kind] if s.t > 0]

    seven = "seven" not in errors and any(r > cfg.residual_threshold for r in residuals("seven"))
    eight = "eight" not in errors and any(s.min_eigenvalue < floor for s in series["eight"])
    nine = ("nine" not in errors and bool(series["nine"])
            and all(r <= cfg.residual_threshold for r in residuals("nine"))
            and all(s.min_eigenvalue >= floor for s in series["nine"])
            and all(np.max(np.abs(np.asarray(s.probabilities) - target)) <= cfg.probability_tolerance
                    for s in series["nine"]))
    return {"seven_rejected_dynamics": bool(seven), "eight_rejected_positivity": bool(eight),
            "nine_accepted": bool(nine), "collapsed": bool(seven and eight and nine)}


def entropy_arrow(cfg):
    """Entropy of the collapse-mode state at each sample time.

    The pre-measurement state (t = 0) is pure; from t = 0+ on the state is
    the collapsed mixture, whose entropy stays constant under transport.
    """
    if cfg.mode != "collapse":
        raise ContractError("entropy_arrow needs mode = collapse")
    out = []
    for t in cfg.times():
        if t == 0:
            out.append((0.0, 0.0))
            continue
        state = make_candidate(Candidate.NINE, cfg.spec, cfg.amplitudes, cfg.pointer, t, cfg.grid)
        out.append((float(t), von_neumann_entropy(state)))
    return out
