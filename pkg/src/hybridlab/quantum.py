"""Finite-dimensional quantum sector.

Operators are plain complex ``(N, N)`` numpy arrays.  Density matrices are
the Hermitian, unit-trace, positive semidefinite ones.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DomainError

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-12
EIGEN_ATOL = 1e-10


def as_operator(a):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    return a


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a, atol=HERMITIAN_ATOL):
    a = as_operator(a)
    return bool(np.allclose(a, dagger(a), rtol=0.0, atol=atol))


def check_density_matrix(rho):
    """Raise `ContractError` unless ``rho`` is a valid density matrix."""
    rho = as_operator(rho)
    if not is_hermitian(rho):
        raise ContractError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > TRACE_ATOL:
        raise ContractError(f"density matrix trace {np.trace(rho).real:.15g} != 1")
    if np.linalg.eigvalsh(rho).min() < -EIGEN_ATOL:
        raise ContractError("density matrix has a negative eigenvalue")
    return rho


def pure_state(amplitudes):
    """``|psi><psi|`` for a normalized amplitude vector."""
    c = np.asarray(amplitudes, dtype=complex).ravel()
    if abs(np.vdot(c, c).real - 1.0) > 1e-10:
        raise DomainError("amplitudes must be normalized")
    return np.outer(c, np.conj(c))


def _same_dims(a, b):
    a, b = as_operator(a), as_operator(b)
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def commutator(a, b):
    """``ab - ba``."""
    a, b = _same_dims(a, b)
    return a @ b - b @ a


def sym_product(a, b):
    """Symmetrized product ``(ab + ba)/2``."""
    a, b = _same_dims(a, b)
    return 0.5 * (a @ b + b @ a)


def von_neumann_rhs(h, rho, hbar=1.0):
    return commutator(h, rho) / (1j * hbar)


def von_neumann_evolve(h, rho, t, steps=1, hbar=1.0, method="exact"):
    """Evolve ``d rho/dt = [H, rho]/(i hbar)``.

    ``method="exact"`` conjugates with ``exp(-iHt/hbar)`` from one
    diagonalization (``steps`` is then irrelevant); ``method="rk4"`` takes
    ``steps`` classical Runge-Kutta steps and is kept as a cross-check.
    """
    h, rho = _same_dims(h, rho)
    if not is_hermitian(h):
        raise ContractError("Hamiltonian must be Hermitian")
    if steps < 1:
        raise ContractError("steps must be >= 1")
    if t == 0:
        return rho.copy()
    if method == "exact":
        energies, vecs = np.linalg.eigh(h)
        u = (vecs * np.exp(-1j * energies * t / hbar)) @ dagger(vecs)
        return u @ rho @ dagger(u)
    if method == "rk4":
        dt = t / steps
        y = rho.copy()
        for _ in range(steps):
            k1 = von_neumann_rhs(h, y, hbar)
            k2 = von_neumann_rhs(h, y + 0.5 * dt * k1, hbar)
            k3 = von_neumann_rhs(h, y + 0.5 * dt * k2, hbar)
            k4 = von_neumann_rhs(h, y + dt * k3, hbar)
            y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return y
    raise ContractError(f"unknown method {method!r}")


def bipartite_split_residual(h1, h2, rho1, rho2, hbar=1.0):
    """Frobenius gap of the bipartite commutator split for one product term.

    Compares ``[H1 (x) H2, rho1 (x) rho2]/(i hbar)`` with
    ``[H1, rho1]/(i hbar) (x) sym(H2, rho2) + sym(H1, rho1) (x) [H2, rho2]/(i hbar)``.
    The two agree identically, so the result is pure roundoff.
    """
    h1, rho1 = _same_dims(h1, rho1)
    h2, rho2 = _same_dims(h2, rho2)
    full = commutator(np.kron(h1, h2), np.kron(rho1, rho2)) / (1j * hbar)
    split = (np.kron(commutator(h1, rho1) / (1j * hbar), sym_product(h2, rho2))
             + np.kron(sym_product(h1, rho1), commutator(h2, rho2) / (1j * hbar)))
    return float(np.linalg.norm(full - split))


def purity(rho):
    rho = as_operator(rho)
    return float(np.real(np.trace(rho @ rho)))


def random_hermitian(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (a + dagger(a))


def random_density_matrix(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ dagger(a)
    return rho / np.trace(rho).real
