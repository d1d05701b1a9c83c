"""Zero-skipping Cholesky factorization and triangular solves.

The factor's nonzero structure (pattern plus fill-in) is computed once per
``(N, A)`` and cached. The numeric phase is left-looking and only touches
entries inside that structure. Every multiply-accumulate it performs is
counted, so dense and structured runs can be compared by operation count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import IndefiniteMatrixError, InvalidArgument
from .hessian import HessianPattern, StructuredHessian, build_pattern


@dataclass(frozen=True)
class SymbolicFactor:
    lower: np.ndarray          # (n, n) bool, structure of L including the diagonal
    column_macs: np.ndarray    # MACs needed to finish each column

    @property
    def total_macs(self):
        return int(self.column_macs.sum())

    @property
    def nnz(self):
        return int(self.lower.sum())


def symbolic_cholesky(elements: np.ndarray) -> SymbolicFactor:
    """Fill-in structure of L for a symmetric boolean pattern."""
    n = elements.shape[0]
    L = np.tril(elements).copy()
    np.fill_diagonal(L, True)
    macs = np.zeros(n, dtype=np.int64)
    for j in range(n):
        K = np.flatnonzero(L[j, :j])
        if len(K):
            L[j + 1:, j] |= L[j + 1:, K].any(axis=1)
        rows = np.flatnonzero(L[j + 1:, j]) + j + 1
        macs[j] = len(K) + int(L[np.ix_(rows, K)].sum())
    L.setflags(write=False)
    return SymbolicFactor(L, macs)


@lru_cache(maxsize=32)
def symbolic_for(n_states: int, age: int) -> SymbolicFactor:
    return symbolic_cholesky(build_pattern(n_states, age).elements)


def dense_cholesky_macs(n: int) -> int:
    """MACs of a dense left-looking factorization: sum_j j*(n-j)."""
    j = np.arange(n, dtype=np.int64)
    return int((j * (n - j)).sum())


@dataclass
class CholeskyFactor:
    L: np.ndarray
    symbolic: SymbolicFactor
    macs: int
    skipped_macs: int

    @property
    def dim(self):
        return self.L.shape[0]


def _symbolic_of(H):
    if isinstance(H, StructuredHessian):
        p = H.pattern
        return H.to_dense(), symbolic_for(p.n_states, p.age)
    A = np.asarray(H, float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgument("matrix must be square")
    # a plain array is taken on its own nonzero structure
    return A, symbolic_cholesky(A != 0.0)


def cholesky_sparse(H, pattern: HessianPattern | None = None) -> CholeskyFactor:
    """Factor ``H = L L^T`` visiting only the structural nonzeros of ``L``.

    ``H`` is a :class:`StructuredHessian` or a dense array. A dense array with
    an explicit ``pattern`` is treated as living on that pattern.
    """
    if pattern is not None:
        A = np.asarray(H, float)
        sym = symbolic_for(pattern.n_states, pattern.age)
    else:
        A, sym = _symbolic_of(H)
    n = A.shape[0]
    if sym.lower.shape[0] != n:
        raise InvalidArgument("pattern dimension does not match matrix")
    S = sym.lower
    L = np.zeros((n, n))
    for j in range(n):
        K = np.flatnonzero(S[j, :j])
        lj = L[j, K]
        d = A[j, j] - lj @ lj
        if not d > 0:
            raise IndefiniteMatrixError(j, float(d))
        L[j, j] = np.sqrt(d)
        rows = np.flatnonzero(S[j + 1:, j]) + j + 1
        if len(rows):
            L[rows, j] = (A[rows, j] - L[np.ix_(rows, K)] @ lj) / L[j, j]
    macs = sym.total_macs
    return CholeskyFactor(L, sym, macs, dense_cholesky_macs(n) - macs)


def back_substitute(factor: CholeskyFactor, eps):
    """Solve ``L L^T dx = eps``; returns ``(dx, macs)``."""
    eps = np.asarray(eps, float)
    if eps.shape != (factor.dim,):
        raise InvalidArgument(f"rhs has shape {eps.shape}, expected ({factor.dim},)")
    y = solve_triangular(factor.L, eps, lower=True, check_finite=False)
    x = solve_triangular(factor.L.T, y, lower=False, check_finite=False)
    offdiag = factor.symbolic.nnz - factor.dim
    return x, 2 * offdiag


def solve(H, eps, pattern=None):
    f = cholesky_sparse(H, pattern)
    return back_substitute(f, eps)[0]
