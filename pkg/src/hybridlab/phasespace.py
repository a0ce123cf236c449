"""Operator form of classical mechanics on a discretized phase plane.

Classical states and observables are operators on the discrete stand-in for
``H^q (x) H^p``: one basis vector per grid node.  Functions of ``q`` and ``p``
are diagonal; classically nondiagonal dyads ``|a><b|`` (``a != b``) are kept in
a sparse side list.

Conventions
-----------
- Grid Kronecker deltas carry ``1/(dq*dp)``, so ``delta(0)**2 <-> 1/(dq*dp)``.
- The plain matrix product is the operator product; purity reads
  ``rho @ rho * (dq*dp) == rho``.
- The discrete trace is ``sum(diag) * dq * dp``.
- Derivatives: spectral on periodic grids, second-order central on clamped
  grids (``scheme`` overrides).  The bracket is evaluated in flux form
  ``d/dp(H_q A) - d/dq(H_p A)``, which equals the advective form for any
  Hamiltonian field and conserves the discrete trace on periodic grids.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
import scipy.fft
import scipy.sparse as sp

from .errors import ContractError, DomainError, NumericalError, StabilityError
from .polynomial import PolynomialObservable

Boundary = Literal["periodic", "clamped"]
Scheme = Literal["spectral", "central"]

# RK4 stays stable for purely imaginary rates |lambda*dt| <= 2*sqrt(2); keep a margin.
RK4_STABILITY_LIMIT = 2.5


def fft_workers():
    """Worker count for FFTs, capped by ``HYBRIDLAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("HYBRIDLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float

    def __iter__(self):
        yield self.q
        yield self.p

    def distance(self, other):
        return math.hypot(self.q - other.q, self.p - other.p)


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Uniform ``n_q x n_p`` node lattice on ``[q_min, q_max) x [p_min, p_max)``.

    Node ``(i, j)`` sits at ``(q_min + i*dq, p_min + j*dp)``.
    """

    q_min: float
    q_max: float
    p_min: float
    p_max: float
    n_q: int
    n_p: int
    boundary: Boundary = "periodic"

    def __post_init__(self):
        if int(self.n_q) < 1 or int(self.n_p) < 1:
            raise DomainError("grid counts must be positive")
        if not (self.q_max > self.q_min and self.p_max > self.p_min):
            raise DomainError("grid bounds must satisfy max > min")
        if self.boundary not in ("periodic", "clamped"):
            raise DomainError(f"unknown boundary {self.boundary!r}")
        object.__setattr__(self, "n_q", int(self.n_q))
        object.__setattr__(self, "n_p", int(self.n_p))

    @classmethod
    def square(cls, half_width, n, boundary="periodic"):
        return cls(-half_width, half_width, -half_width, half_width, n, n, boundary)

    @property
    def dq(self):
        return (self.q_max - self.q_min) / self.n_q

    @property
    def dp(self):
        return (self.p_max - self.p_min) / self.n_p

    @property
    def cell(self):
        """Phase-space area per node, ``dq*dp``."""
        return self.dq * self.dp

    @property
    def shape(self):
        return (self.n_q, self.n_p)

    @property
    def n_nodes(self):
        return self.n_q * self.n_p

    @property
    def default_scheme(self) -> Scheme:
        return "spectral" if self.boundary == "periodic" else "central"

    def q_nodes(self):
        return self.q_min + self.dq * np.arange(self.n_q)

    def p_nodes(self):
        return self.p_min + self.dp * np.arange(self.n_p)

    def mesh(self):
        return np.meshgrid(self.q_nodes(), self.p_nodes(), indexing="ij")

    def contains(self, point):
        q, p = point
        return self.q_min <= q <= self.q_max and self.p_min <= p <= self.p_max

    def point(self, node):
        i, j = node
        return PhasePoint(self.q_min + i * self.dq, self.p_min + j * self.dp)

    def flat(self, node):
        i, j = node
        return i * self.n_p + j

    def unflat(self, index):
        return divmod(int(index), self.n_p)

    def _snap_axis(self, x, lo, d, n):
        u = (x - lo) / d
        i = math.ceil(u - 0.5)  # nearest node, ties toward the lower index
        if self.boundary == "periodic":
            return i % n
        return min(max(i, 0), n - 1)

    def wrap(self, point):
        """Map a point into the fundamental cell of a periodic grid."""
        q, p = point
        lq = self.q_max - self.q_min
        lp = self.p_max - self.p_min
        return PhasePoint(self.q_min + (q - self.q_min) % lq, self.p_min + (p - self.p_min) % lp)

    def snap(self, point, wrap=False):
        """Nearest node ``(i, j)`` of an in-bounds point.

        With ``wrap=True`` on a periodic grid, points outside the bounds are
        first folded back into the fundamental cell.
        """
        if wrap and self.boundary == "periodic":
            point = self.wrap(point)
        if not self.contains(point):
            raise DomainError(f"point {tuple(point)} lies outside the grid bounds")
        q, p = point
        return (self._snap_axis(q, self.q_min, self.dq, self.n_q),
                self._snap_axis(p, self.p_min, self.dp, self.n_p))

    def bilinear(self, q, p):
        """Bilinear deposition of points onto nodes.

        Returns ``(index, weight)`` arrays of shape ``(K, 4)`` with flat node
        indices.  On clamped grids, weight falling outside the lattice is
        dropped (index set to ``-1``).
        """
        q = np.asarray(q, dtype=float).ravel()
        p = np.asarray(p, dtype=float).ravel()
        u = (q - self.q_min) / self.dq
        w = (p - self.p_min) / self.dp
        i0 = np.floor(u).astype(np.int64)
        j0 = np.floor(w).astype(np.int64)
        fu = u - i0
        fw = w - j0
        idx = np.empty((q.size, 4), dtype=np.int64)
        wts = np.empty((q.size, 4))
        for k, (di, dj) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
            ii = i0 + di
            jj = j0 + dj
            wts[:, k] = (fu if di else 1 - fu) * (fw if dj else 1 - fw)
            if self.boundary == "periodic":
                ii %= self.n_q
                jj %= self.n_p
                idx[:, k] = ii * self.n_p + jj
            else:
                ok = (ii >= 0) & (ii < self.n_q) & (jj >= 0) & (jj < self.n_p)
                idx[:, k] = np.where(ok, ii * self.n_p + jj, -1)
                wts[~ok, k] = 0.0
        return idx, wts


class ClassicalOperator:
    """Operator on the classical sector: diagonal part plus sparse dyads.

    Parameters
    ----------
    grid : PhaseSpaceGrid
    diag : array_like, shape ``grid.shape``
        Value of the diagonal (function) part at each node.
    ket, bra : array_like of int, optional
        Flat node indices of the nondiagonal dyads ``|ket><bra|``; ``ket != bra``.
    weight : array_like of complex, optional
        Matrix entry of each dyad.

    Instances are immutable; arrays are stored read-only.
    """

    __slots__ = ("grid", "diag", "ket", "bra", "weight")

    def __init__(self, grid, diag=None, ket=(), bra=(), weight=()):
        if diag is None:
            diag = np.zeros(grid.shape)
        diag = np.array(diag, copy=True)
        if diag.shape != grid.shape:
            raise ContractError(f"diag shape {diag.shape} does not match grid {grid.shape}")
        ket = np.array(ket, dtype=np.int64).ravel()
        bra = np.array(bra, dtype=np.int64).ravel()
        weight = np.array(weight, dtype=complex).ravel()
        if not (ket.size == bra.size == weight.size):
            raise ContractError("dyad arrays must have equal length")
        if np.any(ket == bra):
            raise ContractError("dyads must connect distinct nodes; put diagonal entries in diag")
        for arr in (diag, ket, bra, weight):
            arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "ket", ket)
        object.__setattr__(self, "bra", bra)
        object.__setattr__(self, "weight", weight)

    def __setattr__(self, name, value):
        raise AttributeError("ClassicalOperator is immutable")

    @classmethod
    def from_entries(cls, grid, rows, cols, values):
        """Build from COO matrix entries; duplicates are summed, zeros dropped."""
        mat = sp.coo_matrix(
            (np.asarray(values, dtype=complex), (np.asarray(rows), np.asarray(cols))),
            shape=(grid.n_nodes, grid.n_nodes),
        )
        return cls.from_sparse(grid, mat)

    @classmethod
    def from_sparse(cls, grid, mat):
        mat = sp.coo_matrix(mat)
        mat.sum_duplicates()
        on = mat.row == mat.col
        diag = np.zeros(grid.n_nodes, dtype=complex)
        np.add.at(diag, mat.row[on], mat.data[on])
        off = ~on & (mat.data != 0)
        if not np.any(diag.imag):
            diag = diag.real
        return cls(grid, diag.reshape(grid.shape), mat.row[off], mat.col[off], mat.data[off])

    @property
    def dyads(self):
        """Nondiagonal part as a list of ``(ket_node, bra_node, weight)``."""
        g = self.grid
        return [(g.unflat(a), g.unflat(b), complex(w))
                for a, b, w in zip(self.ket, self.bra, self.weight)]

    @property
    def has_dyads(self):
        return self.ket.size > 0

    def to_sparse(self):
        n = self.grid.n_nodes
        idx = np.arange(n)
        rows = np.concatenate([idx, self.ket])
        cols = np.concatenate([idx, self.bra])
        vals = np.concatenate([self.diag.ravel().astype(complex), self.weight])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def to_dense(self):
        return self.to_sparse().toarray()

    def adjoint(self):
        return ClassicalOperator(self.grid, np.conj(self.diag), self.bra, self.ket, np.conj(self.weight))

    def is_hermitian(self, atol=1e-12):
        if np.iscomplexobj(self.diag) and np.max(np.abs(self.diag.imag), initial=0.0) > atol:
            return False
        diff = self.to_sparse() - self.adjoint().to_sparse()
        return diff.nnz == 0 or np.max(np.abs(diff.data), initial=0.0) <= atol

    def scaled(self, factor):
        return ClassicalOperator(self.grid, self.diag * factor, self.ket, self.bra, self.weight * factor)

    def with_diag(self, diag):
        return ClassicalOperator(self.grid, diag, self.ket, self.bra, self.weight)

    def trace(self):
        """Discrete trace with the phase-space measure."""
        return complex(np.sum(self.diag)) * self.grid.cell

    def frobenius(self):
        return math.sqrt(float(np.sum(np.abs(self.diag) ** 2) + np.sum(np.abs(self.weight) ** 2)))

    def __add__(self, other):
        if not (self.has_dyads or other.has_dyads):
            return ClassicalOperator(self.grid, self.diag + other.diag)
        return ClassicalOperator.from_sparse(self.grid, self.to_sparse() + other.to_sparse())

    def __sub__(self, other):
        if not (self.has_dyads or other.has_dyads):
            return ClassicalOperator(self.grid, self.diag - other.diag)
        return ClassicalOperator.from_sparse(self.grid, self.to_sparse() - other.to_sparse())

    def __matmul__(self, other):
        if not (self.has_dyads or other.has_dyads):
            return ClassicalOperator(self.grid, self.diag * other.diag)
        return ClassicalOperator.from_sparse(self.grid, self.to_sparse() @ other.to_sparse())

    def __repr__(self):
        return (f"ClassicalOperator(grid={self.grid.n_q}x{self.grid.n_p}, "
                f"nonzero_diag={int(np.count_nonzero(self.diag))}, dyads={self.ket.size})")


def commutator(a, b):
    """Classical operator commutator ``ab - ba``."""
    if not (a.has_dyads or b.has_dyads):
        return ClassicalOperator(a.grid, a.diag * b.diag - b.diag * a.diag)
    return ClassicalOperator.from_sparse(a.grid, a.to_sparse() @ b.to_sparse() - b.to_sparse() @ a.to_sparse())


def delta_state(grid, at):
    """Pure classical state sharp at ``at``: ``1/(dq*dp)`` on the snapped node."""
    i, j = grid.snap(at)
    diag = np.zeros(grid.shape)
    diag[i, j] = 1.0 / grid.cell
    return ClassicalOperator(grid, diag)


def gaussian_state(grid, center, width):
    """Isotropic Gaussian density normalized to unit discrete trace."""
    if width <= 0:
        raise DomainError("width must be positive")
    q, p = grid.mesh()
    q0, p0 = center
    dq_ = q - q0
    dp_ = p - p0
    if grid.boundary == "periodic":
        lq = grid.q_max - grid.q_min
        lp = grid.p_max - grid.p_min
        dq_ = (dq_ + lq / 2) % lq - lq / 2
        dp_ = (dp_ + lp / 2) % lp - lp / 2
    rho = np.exp(-(dq_**2 + dp_**2) / (2 * width**2))
    return ClassicalOperator(grid, rho / (rho.sum() * grid.cell))


def resolve_scheme(grid, scheme=None) -> Scheme:
    scheme = scheme or grid.default_scheme
    if scheme not in ("spectral", "central"):
        raise ContractError(f"unknown difference scheme {scheme!r}")
    if scheme == "spectral" and grid.boundary != "periodic":
        raise ContractError("spectral differences require a periodic grid")
    return scheme


def derivative(f, axis, grid, scheme=None):
    """Partial derivative of nodal values along ``axis`` (0 = q, 1 = p).

    ``f`` may carry extra leading axes; ``axis`` counts from the last two.
    """
    scheme = resolve_scheme(grid, scheme)
    ax = f.ndim - 2 + axis
    n = grid.shape[axis]
    h = grid.dq if axis == 0 else grid.dp
    if scheme == "spectral":
        k = 2 * np.pi * scipy.fft.fftfreq(n, d=h)
        if n % 2 == 0:
            k[n // 2] = 0.0
        shape = [1] * f.ndim
        shape[ax] = n
        fk = scipy.fft.fft(f, axis=ax, workers=fft_workers())
        out = scipy.fft.ifft(1j * k.reshape(shape) * fk, axis=ax, workers=fft_workers())
        return out if np.iscomplexobj(f) else out.real
    if grid.boundary == "periodic":
        return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * h)
    if n < 3:
        raise ContractError("central differences on a clamped grid need at least 3 nodes per axis")
    return np.gradient(f, h, axis=ax, edge_order=2)


class _Field(NamedTuple):
    """Nodal samples of ``dH/dq`` and ``dH/dp``; ``None`` marks an identically zero field."""

    hq: np.ndarray | None
    hp: np.ndarray | None


def _hamiltonian_field(H, grid, scheme):
    if isinstance(H, PolynomialObservable):
        q, p = grid.mesh()
        hq, hp = H.dq(), H.dp()
        return _Field(None if hq.is_zero else np.broadcast_to(hq(q, p), grid.shape),
                      None if hp.is_zero else np.broadcast_to(hp(q, p), grid.shape))
    if isinstance(H, ClassicalOperator):
        if H.has_dyads:
            raise ContractError("the bracket generator must be a function of q and p (no dyads)")
        h = np.asarray(H.diag)
        return _Field(derivative(h, 0, grid, scheme), derivative(h, 1, grid, scheme))
    raise ContractError(f"unsupported generator type {type(H).__name__}")


def _bracket_nodal(fld, f, grid, scheme):
    out = np.zeros(np.broadcast_shapes(f.shape), dtype=np.result_type(f, float))
    if fld.hq is not None:
        out = out + derivative(fld.hq * f, 1, grid, scheme)
    if fld.hp is not None:
        out = out - derivative(fld.hp * f, 0, grid, scheme)
    return out


def poisson_bracket(H, A, scheme=None):
    """Poisson bracket ``{H, A} = H_q A_p - H_p A_q`` on the diagonal part of ``A``.

    Nondiagonal dyads of ``A`` are annihilated: phase-space derivatives of an
    operator that is not a function of ``q`` and ``p`` vanish, so the result
    is always purely diagonal.

    Parameters
    ----------
    H : PolynomialObservable or ClassicalOperator
        Generator.  Polynomials are differentiated exactly; sampled operators
        with the difference scheme.  Must not carry dyads.
    A : ClassicalOperator
    scheme : {"spectral", "central"}, optional
    """
    grid = A.grid
    scheme = resolve_scheme(grid, scheme)
    fld = _hamiltonian_field(H, grid, scheme)
    return ClassicalOperator(grid, _bracket_nodal(fld, np.asarray(A.diag), grid, scheme))


def max_rate(fld, grid, scheme, extra=0.0):
    """Largest modulus of the semi-discrete transport generator's eigenvalues (bound)."""
    kq = math.pi / grid.dq if scheme == "spectral" else 1.0 / grid.dq
    kp = math.pi / grid.dp if scheme == "spectral" else 1.0 / grid.dp
    rate = np.zeros(grid.shape)
    if fld.hp is not None:
        rate = rate + np.abs(fld.hp) * kq
    if fld.hq is not None:
        rate = rate + np.abs(fld.hq) * kp
    return float(np.max(rate)) + float(extra)


def check_stability(rate, dt, what="transport"):
    if rate * abs(dt) > RK4_STABILITY_LIMIT:
        raise StabilityError(
            f"{what}: rate {rate:.4g} times dt {abs(dt):.4g} exceeds the RK4 bound {RK4_STABILITY_LIMIT}",
            suggested_dt=0.9 * RK4_STABILITY_LIMIT / rate,
        )


def rk4_step(rhs, y, dt):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def liouville_evolve(H, rho, t, steps, scheme=None):
    """Evolve ``d rho/dt = {H, rho}`` with classical RK4.

    Parameters
    ----------
    H : PolynomialObservable
    rho : ClassicalOperator
        Hermitian state.  Its dyads are carried along unchanged.
    t : float
    steps : int
        Number of RK4 steps, ``dt = t/steps``.

    Raises
    ------
    StabilityError
        If ``dt`` exceeds the RK4 bound for the transport speeds on the grid.
    """
    if steps < 1:
        raise ContractError("steps must be >= 1")
    if not rho.is_hermitian():
        raise ContractError("rho must be Hermitian")
    grid = rho.grid
    scheme = resolve_scheme(grid, scheme)
    if isinstance(H, str):
        H = PolynomialObservable.parse(H)
    fld = _hamiltonian_field(H, grid, scheme)
    if t == 0 or (fld.hq is None and fld.hp is None):
        return rho
    dt = t / steps
    check_stability(max_rate(fld, grid, scheme), dt)
    f = np.array(rho.diag, dtype=float if not np.iscomplexobj(rho.diag) else complex)
    for _ in range(steps):
        f = rk4_step(lambda y: _bracket_nodal(fld, y, grid, scheme), f, dt)
    return rho.with_diag(f)


# --- characteristics --------------------------------------------------------

_FIXED_POINT_TOL = 1e-15
_FIXED_POINT_MAXITER = 100


def _solve_fixed_point(update, x0):
    x = x0
    for _ in range(_FIXED_POINT_MAXITER):
        x_new = update(x)
        if np.all(np.abs(x_new - x) <= _FIXED_POINT_TOL * (1.0 + np.abs(x_new))):
            return x_new
        x = x_new
    raise NumericalError("implicit leapfrog stage did not converge; reduce the step size")


def _leapfrog_step(hq, hp, q, p, h):
    """One generalized Stormer-Verlet step for ``H(q, p)``; explicit when ``H`` is separable."""
    half = 0.5 * h
    if hq.depends_on_p():
        ph = _solve_fixed_point(lambda x: p - half * hq(q, x), p - half * hq(q, p))
    else:
        ph = p - half * hq(q, p)
    vq = hp(q, ph)
    if hp.depends_on_q():
        qn = _solve_fixed_point(lambda x: q + half * (vq + hp(x, ph)), q + h * vq)
    else:
        qn = q + h * vq
    pn = ph - half * hq(qn, ph)
    return qn, pn


def hamiltonian_flow(H, q, p, t, max_step=1e-3, integrand=None, n_steps=None, observe=None):
    """Integrate Hamilton's equations from arrays of start points.

    Parameters
    ----------
    H : PolynomialObservable
    q, p : array_like
        Start points (broadcast together).
    t : float
        Signed flow time.
    max_step : float
        Largest leapfrog step.  Ignored for Hamiltonians of degree <= 1, whose
        flow a single step integrates exactly.
    integrand : PolynomialObservable, optional
        If given, ``int_0^t integrand(z(s)) ds`` is accumulated with the
        trapezoid rule on the leapfrog nodes.
    n_steps : int, optional
        Force a step count.
    observe : callable, optional
        Called as ``observe(q, p)`` after every step.

    Returns
    -------
    q, p : ndarray
    integral : ndarray or None
    """
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    q, p = np.broadcast_arrays(q, p)
    q, p = q.copy(), p.copy()
    integral = None if integrand is None else np.zeros(q.shape)
    if t == 0:
        return q, p, integral
    if n_steps is None:
        exact = H.degree <= 1 and (integrand is None or integrand.degree <= 1)
        n_steps = 1 if exact else max(1, math.ceil(abs(t) / max_step))
    h = t / n_steps
    hq, hp = H.dq(), H.dp()
    g_prev = None if integrand is None else integrand(q, p)
    for _ in range(n_steps):
        q, p = _leapfrog_step(hq, hp, q, p, h)
        if integrand is not None:
            g = integrand(q, p)
            integral = integral + 0.5 * h * (g_prev + g)
            g_prev = g
        if observe is not None:
            observe(q, p)
    return q, p, integral


class Characteristic(NamedTuple):
    """End point of a characteristic and whether it ever left a clamped grid."""

    point: PhasePoint
    excursion: bool

    @property
    def q(self):
        return self.point.q

    @property
    def p(self):
        return self.point.p


def characteristics_evolve(H, z0, t, grid=None, max_step=1e-3):
    """Follow one phase point along ``dq/dt = H_p``, ``dp/dt = -H_q``.

    The excursion flag is raised when ``grid`` is clamped and the trajectory
    leaves its bounds at any step.
    """
    if isinstance(H, str):
        H = PolynomialObservable.parse(H)
    if not math.isfinite(t):
        raise DomainError("t must be finite")
    out_of_bounds = [False]

    def watch(q, p):
        if not grid.contains((float(q), float(p))):
            out_of_bounds[0] = True

    clamped = grid is not None and grid.boundary == "clamped"
    q, p, _ = hamiltonian_flow(H, z0[0], z0[1], t, max_step, observe=watch if clamped else None)
    if clamped and not grid.contains((float(q), float(p))):
        out_of_bounds[0] = True
    return Characteristic(PhasePoint(float(q), float(p)), out_of_bounds[0])


# --- expectations and purity ---------------------------------------------------

def classical_expectation(f, rho):
    """Mean of ``f`` in state ``rho``: ``Tr(f rho) / Tr(rho)`` with the discrete measure."""
    if isinstance(f, str):
        f = PolynomialObservable.parse(f)
    grid = rho.grid
    q, p = grid.mesh()
    trace = np.sum(rho.diag) * grid.cell
    if trace == 0:
        raise ZeroDivisionError("state has zero trace")
    val = np.sum(f(q, p) * rho.diag) * grid.cell / trace
    return float(np.real(val))


def frobenius_sparse(mat):
    mat = sp.csr_matrix(mat)
    return math.sqrt(float(np.sum(np.abs(mat.data) ** 2)))


def purity_defect(rho):
    """``||rho @ rho * dq*dp - rho||_F / ||rho||_F``; zero exactly for sharp states."""
    norm = rho.frobenius()
    if norm == 0:
        raise DomainError("purity defect is undefined for the zero operator")
    if not rho.has_dyads:
        d = rho.diag * rho.diag * rho.grid.cell - rho.diag
        return float(np.sqrt(np.sum(np.abs(d) ** 2)) / norm)
    m = rho.to_sparse()
    return frobenius_sparse(m @ m * rho.grid.cell - m) / norm
