"""Hybrid Hamiltonians and the two interchangeable hybrid state forms.

A hybrid state is ``sum_ij |psi_i><psi_j| (x) W_ij`` with classical-sector
operators ``W_ij``, written in the common eigenbasis of the quantum
Hamiltonian and the measured observable.

- `HybridGridState` stores every ``W_ij`` as a `ClassicalOperator`.
- `HybridDyadState` stores a short list of weighted classical dyads
  ``c |psi_i><psi_j| (x) |a><b|`` with off-grid points ``a``, ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DomainError
from ..phasespace import ClassicalOperator, PhasePoint, PhaseSpaceGrid
from ..polynomial import PolynomialObservable


@dataclass(frozen=True)
class HamiltonianSpec:
    """``H_qm (x) I + I (x) H_cm + V_qm (x) V_cm`` with diagonal ``H_qm``, ``V_qm``.

    ``h`` and ``v`` are the eigenvalues of the quantum Hamiltonian and of the
    measured observable in their shared eigenbasis, so the two commute by
    construction.
    """

    h: tuple
    v: tuple
    H_cm: PolynomialObservable = field(default_factory=PolynomialObservable)
    V_cm: PolynomialObservable = field(default_factory=PolynomialObservable)
    hbar: float = 1.0

    def __post_init__(self):
        h = tuple(float(x) for x in self.h)
        v = tuple(float(x) for x in self.v)
        if len(h) != len(v) or not h:
            raise ContractError(f"h and v must have the same nonzero length, got {len(h)} and {len(v)}")
        if self.hbar <= 0:
            raise DomainError("hbar must be positive")
        for name in ("H_cm", "V_cm"):
            val = getattr(self, name)
            if isinstance(val, str):
                val = PolynomialObservable.parse(val)
            if not isinstance(val, PolynomialObservable):
                raise ContractError(f"{name} must be a polynomial observable")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "v", v)

    @property
    def dim(self):
        return len(self.h)

    @property
    def h_qm(self):
        return np.diag(np.asarray(self.h, dtype=complex))

    @property
    def v_qm(self):
        return np.diag(np.asarray(self.v, dtype=complex))

    def pair_hamiltonian(self, i, j):
        """Classical generator of the ``(i, j)`` sector, ``H_cm + (v_i + v_j)/2 V_cm``."""
        return self.H_cm + 0.5 * (self.v[i] + self.v[j]) * self.V_cm

    def outcome_hamiltonian(self, i):
        """Pointer Hamiltonian conditioned on outcome ``i``, ``H_cm + v_i V_cm``."""
        return self.pair_hamiltonian(i, i)

    def degenerate(self, i, j):
        return self.v[i] == self.v[j]


@dataclass(frozen=True)
class DyadTerm:
    """``coeff |psi_i><psi_j| (x) |ket><bra|`` with 0-based outcome indices."""

    i: int
    j: int
    coeff: complex
    ket: PhasePoint
    bra: PhasePoint

    @property
    def classically_diagonal(self):
        return self.ket == self.bra

    def adjoint(self):
        return DyadTerm(self.j, self.i, complex(np.conj(self.coeff)), self.bra, self.ket)


@dataclass(frozen=True)
class HybridDyadState:
    grid: PhaseSpaceGrid
    dim: int
    terms: tuple = ()

    def __post_init__(self):
        terms = tuple(self.terms)
        for term in terms:
            if not (0 <= term.i < self.dim and 0 <= term.j < self.dim):
                raise ContractError(f"term indices ({term.i}, {term.j}) out of range for dim {self.dim}")
        object.__setattr__(self, "terms", terms)

    def is_hermitian(self, atol=1e-12):
        """Every term must have its adjoint partner (summed coefficients compared)."""
        table = {}
        for t in self.terms:
            key = (t.i, t.j, t.ket, t.bra)
            table[key] = table.get(key, 0j) + t.coeff
        for (i, j, a, b), c in table.items():
            if abs(table.get((j, i, b, a), 0j) - np.conj(c)) > atol * max(1.0, abs(c)):
                return False
        return True

    def node(self, point):
        return self.grid.snap(point, wrap=self.grid.boundary == "periodic")

    def to_grid(self):
        """Sharp projection: each term adds ``c/(dq*dp)`` at entry ``(snap(ket), snap(bra))``."""
        g = self.grid
        entries = {}
        for t in self.terms:
            a = g.flat(self.node(t.ket))
            b = g.flat(self.node(t.bra))
            rows, cols, vals = entries.setdefault((t.i, t.j), ([], [], []))
            rows.append(a)
            cols.append(b)
            vals.append(t.coeff / g.cell)
        comps = []
        for i in range(self.dim):
            row = []
            for j in range(self.dim):
                if (i, j) in entries:
                    row.append(ClassicalOperator.from_entries(g, *entries[(i, j)]))
                else:
                    row.append(ClassicalOperator(g))
            comps.append(tuple(row))
        return HybridGridState(g, self.dim, tuple(comps))


@dataclass(frozen=True)
class HybridGridState:
    grid: PhaseSpaceGrid
    dim: int
    components: tuple

    def __post_init__(self):
        comps = tuple(tuple(row) for row in self.components)
        if len(comps) != self.dim or any(len(row) != self.dim for row in comps):
            raise ContractError(f"components must be a {self.dim}x{self.dim} array")
        for row in comps:
            for op in row:
                if op.grid != self.grid:
                    raise ContractError("all components must live on the state's grid")
        object.__setattr__(self, "components", comps)

    def __getitem__(self, ij):
        i, j = ij
        return self.components[i][j]

    @classmethod
    def product(cls, rho_qm, rho_cm):
        """``rho_qm (x) rho_cm``."""
        rho_qm = np.asarray(rho_qm, dtype=complex)
        n = rho_qm.shape[0]
        comps = tuple(tuple(rho_cm.scaled(rho_qm[i, j]) for j in range(n)) for i in range(n))
        return cls(rho_cm.grid, n, comps)

    @classmethod
    def from_diag_stack(cls, grid, stack):
        """From a ``(N, N, n_q, n_p)`` array of diagonal parts (no dyads)."""
        n = stack.shape[0]
        return cls(grid, n, tuple(tuple(ClassicalOperator(grid, stack[i, j]) for j in range(n))
                                  for i in range(n)))

    def diag_stack(self):
        return np.stack([np.stack([np.asarray(op.diag, dtype=complex) for op in row]) for row in self.components])

    @property
    def has_dyads(self):
        return any(op.has_dyads for row in self.components for op in row)

    def is_hermitian(self, atol=1e-10):
        scale = max(self.frobenius(), 1.0)
        for i in range(self.dim):
            for j in range(i, self.dim):
                diff = self[i, j].to_sparse() - self[j, i].adjoint().to_sparse()
                if diff.nnz and np.max(np.abs(diff.data)) > atol * scale:
                    return False
        return True

    def trace(self):
        """Discrete hybrid trace ``sum_i Tr_cm W_ii``."""
        return sum(self[i, i].trace() for i in range(self.dim))

    def frobenius(self):
        return math.sqrt(sum(op.frobenius() ** 2 for row in self.components for op in row))

    def map(self, fn):
        return HybridGridState(self.grid, self.dim,
                               tuple(tuple(fn(i, j, self[i, j]) for j in range(self.dim))
                                     for i in range(self.dim)))

    def __sub__(self, other):
        return self.map(lambda i, j, op: op - other[i, j])

    def __add__(self, other):
        return self.map(lambda i, j, op: op + other[i, j])

    def scaled(self, factor):
        return self.map(lambda i, j, op: op.scaled(factor))

    def distance(self, other):
        """Frobenius norm of the difference."""
        return (self - other).frobenius()
