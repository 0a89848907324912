"""Poisson solve backends (sparse direct or Jacobi-preconditioned CG)."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla


class BackendError(RuntimeError):
    pass


class PoissonBackend:
    """Repeated solves with one SPD sparse matrix.

    Parameters
    ----------
    A : sparse matrix
        SPD system matrix.
    variant : {"direct", "iterative"}
        ``direct`` factorizes once with SuperLU in symmetric mode;
        ``iterative`` runs diagonally preconditioned CG to ``tol``.
    """

    def __init__(self, A, variant: str = "direct", tol: float = 1e-12):
        self.A = sp.csc_matrix(A)
        self.n = self.A.shape[0]
        self.variant = variant
        self.tol = tol
        if variant == "direct":
            if self.n == 0:
                self._lu = None
            else:
                try:
                    self._lu = sla.splu(self.A, permc_spec="MMD_AT_PLUS_A",
                                        diag_pivot_thresh=0.0,
                                        options={"SymmetricMode": True})
                except RuntimeError as exc:
                    raise BackendError(f"factorization failed: {exc}") from exc
        elif variant == "iterative":
            d = self.A.diagonal()
            self._jacobi = sla.LinearOperator(self.A.shape, matvec=lambda r: r / d, dtype=float)
        else:
            raise ValueError(f"unknown backend variant {variant!r}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros_like(b)
        if self.variant == "direct":
            return self._lu.solve(b)
        if b.ndim == 2:
            return np.column_stack([self.solve(col) for col in b.T])
        if not np.any(b):
            return np.zeros_like(b)
        x, info = sla.cg(self.A, b, rtol=self.tol, atol=0.0, M=self._jacobi,
                         maxiter=10 * self.n)
        if info != 0:
            raise BackendError(f"CG did not converge (info={info})")
        return x

    __call__ = solve
