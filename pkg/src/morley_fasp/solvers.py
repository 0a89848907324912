"""PCG, smoothers and the auxiliary-space preconditioners.

All preconditioners map dual (residual) vectors to primal coefficient
vectors. For the Morley problems

    B = R + P K^{-1} P^T

where ``R`` is a symmetric smoother for the Morley stiffness, ``P`` the
coefficient matrix of a P1-to-Morley transfer and ``K^{-1}`` the inverse of
an auxiliary operator on V_h0:

* ``Bh2``:  P = Pi_2, K^{-1} = A_D^{-1} M_0 A_D^{-1}   (squared Delta_{h,2})
* ``Bh1p``: P = Pi_1, K^{-1} = A_D^{-1} M_0 A_D^{-1}
* ``Bh1``:  P = Pi_1, K^{-1} = (A_mix^T M_N^{-1} A_mix)^{-1}, evaluated by
  the decoupled mixed solve (two Dirichlet solves and one boundary solve).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.sparse.linalg import LinearOperator

from .assembly import P1Matrices, assemble_morley, assemble_p1, load_vector
from .backend import BackendError, PoissonBackend
from .mesh import Mesh
from .operators import (BoundaryOperatorSet, HarmonicExtender, build_boundary_operators,
                        s_operator, transfer_Pi)
from .spaces import build_morley

log = logging.getLogger(__name__)

PRECONDITIONERS = ("Bh1", "Bh1p", "Bh2", "T1", "T2", "T3", "smoother")


class IndefiniteError(ArithmeticError):
    """PCG met a non-positive curvature or preconditioned residual."""


class SolverError(RuntimeError):
    pass


def _as_apply(op):
    if op is None:
        return lambda x: x.copy()
    if callable(op) and not isinstance(op, LinearOperator):
        return op
    if isinstance(op, np.ndarray):
        return lambda x: op @ x
    return op.dot


# ----------------------------------------------------------------------
@dataclass
class PcgOutcome:
    x: np.ndarray
    iterations: int
    history: list = field(default_factory=list)
    converged: bool = False


def pcg(A, B, b, tol: float = 1e-8, maxit: int = 1000, x0=None,
        flexible: bool = False, callback=None) -> PcgOutcome:
    """Preconditioned conjugate gradients.

    Stops when ``||r||_2 / ||b||_2 <= tol``. ``A`` and ``B`` may be sparse
    or dense matrices, LinearOperators or callables; ``B=None`` means no
    preconditioning. With ``flexible=True`` the Polak-Ribiere update is
    used, which tolerates a slightly varying preconditioner.
    """
    A, B = _as_apply(A), _as_apply(B)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return PcgOutcome(np.zeros_like(b), 0, [0.0], True)
    r = b - A(x) if x0 is not None else b.copy()
    history = [np.linalg.norm(r) / bnorm]
    if history[-1] <= tol:
        return PcgOutcome(x, 0, history, True)
    z = B(r)
    rz = r @ z
    if rz <= 0:
        raise IndefiniteError("preconditioner is not positive definite")
    p = z.copy()
    for it in range(1, maxit + 1):
        q = A(p)
        pq = p @ q
        if pq <= 0:
            raise IndefiniteError("operator is not positive definite")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        history.append(np.linalg.norm(r) / bnorm)
        if callback is not None:
            callback(x)
        if history[-1] <= tol:
            return PcgOutcome(x, it, history, True)
        z_new = B(r)
        rz_new = r @ z_new
        if rz_new <= 0:
            raise IndefiniteError("preconditioner is not positive definite")
        beta = (rz_new - r @ z) / rz if flexible else rz_new / rz
        z, rz = z_new, rz_new
        p = z + beta * p
    return PcgOutcome(x, maxit, history, False)


# ----------------------------------------------------------------------
class Smoother:
    """``sweeps`` symmetric Gauss-Seidel or damped Jacobi iterations from zero.

    The resulting map r -> x is symmetric positive definite for an SPD
    matrix (Jacobi needs an odd sweep count or a convergent damping).
    """

    def __init__(self, A, variant: str = "sgs", sweeps: int = 3, damping: float = 0.7):
        self.A = sp.csr_matrix(A)
        self.variant = variant
        self.sweeps = sweeps
        self.damping = damping
        if variant == "sgs":
            # natural-order LU of a triangular matrix is the matrix itself
            opts = dict(permc_spec="NATURAL", diag_pivot_thresh=0.0)
            self._lower = sla.splu(sp.tril(self.A, format="csc"), **opts)
            self._upper = sla.splu(sp.triu(self.A, format="csc"), **opts)
        elif variant == "jacobi":
            self._dinv = 1.0 / self.A.diagonal()
        else:
            raise ValueError(f"unknown smoother {variant!r}")

    def apply(self, r: np.ndarray) -> np.ndarray:
        A = self.A
        if self.variant == "sgs":
            x = self._lower.solve(r)
            x += self._upper.solve(r - A @ x)
            for _ in range(self.sweeps - 1):
                x += self._lower.solve(r - A @ x)
                x += self._upper.solve(r - A @ x)
            return x
        x = self.damping * self._dinv * r
        for _ in range(self.sweeps - 1):
            x += self.damping * self._dinv * (r - A @ x)
        return x

    __call__ = apply


# ----------------------------------------------------------------------
class Preconditioner(LinearOperator):
    """Additive preconditioner ``sum(parts)`` with a structure tag."""

    def __init__(self, tag: str, n: int, smoother=None, transfer=None):
        super().__init__(dtype=float, shape=(n, n))
        self.tag = tag
        self.smoother = smoother
        self.transfer = transfer

    def smoother_part(self, r):
        return self.smoother(r) if self.smoother is not None else np.zeros_like(r)

    def transfer_part(self, r):
        return self.transfer(r) if self.transfer is not None else np.zeros_like(r)

    def _matvec(self, r):
        r = np.ravel(r)
        return self.smoother_part(r) + self.transfer_part(r)

    def _adjoint(self):
        return self


def interface_matrix(ops: BoundaryOperatorSet, j: int) -> np.ndarray:
    """Dense dual-to-primal matrix of T_{h,j}.

    T1 and T2 act block-diagonally: the ring block is
    ``M_L^{-1} Q M_L^{-1}`` (Q = D for T1, F restricted to ring for T2), the
    corner block ``h^{-1} M_L^{-1}``. T3 is ``M_L^{-1} F M_L^{-1}`` on all dofs.
    """
    w = ops.weights
    n = ops.ndof
    T = np.zeros((n, n))
    if j == 3:
        return ops.F / np.outer(w, w)
    ring, corner = ops.ring, ops.corner
    if j == 1:
        Q = ops.D
    elif j == 2:
        Q = ops.F[np.ix_(ring, ring)]
    else:
        raise ValueError("interface preconditioner index must be 1, 2 or 3")
    wr = w[ring]
    T[np.ix_(ring, ring)] = Q / np.outer(wr, wr)
    T[corner, corner] = 1.0 / (ops.h * w[corner])
    return T


def interface_preconditioner(ops: BoundaryOperatorSet, j: int) -> Preconditioner:
    T = interface_matrix(ops, j)
    return Preconditioner(f"T{j}", ops.ndof, transfer=lambda r: T @ r)


def apply_T(ops: BoundaryOperatorSet, j: int, r: np.ndarray) -> np.ndarray:
    return interface_matrix(ops, j) @ r


# ----------------------------------------------------------------------
class MixedInverse:
    """(A_mix^T M_N^{-1} A_mix)^{-1} on V_h0 by decoupled Poisson solves.

    Steps: A_D w = g; S lam = -E^T M_N w; A_D u = (M_N (w + E lam))|_interior.
    The boundary system is solved by a Cholesky factor of the dense S
    (``mode="dense"``) or by PCG with a T_{h,j} preconditioner
    (``mode="nested"``).
    """

    def __init__(self, p1: P1Matrices, extender: HarmonicExtender,
                 ops: BoundaryOperatorSet | None = None, mode: str = "dense",
                 interface_pc: str = "T1", inner_tol: float = 1e-10,
                 flexible: bool = False):
        if mode not in ("dense", "nested"):
            raise ValueError(f"unknown interface mode {mode!r}")
        self.p1 = p1
        self.extender = extender
        self.poisson = extender.A_II
        self.mode = mode
        self.inner_tol = inner_tol
        self.flexible = flexible
        self.inner_iterations = []
        if ops is None:
            ops = build_boundary_operators(extender)
        self.ops = ops
        if mode == "dense":
            self._chol = la.cho_factor(ops.S, lower=True)
        else:
            self._S = s_operator(extender)
            self._T = interface_preconditioner(ops, int(interface_pc[-1]))

    def solve_full(self, g: np.ndarray):
        """Return (u, wbar, lam); wbar = w + E lam lives on V_h."""
        p1 = self.p1
        w = p1.extend_interior(self.poisson.solve(g))
        rhs = -self.extender.adjoint(p1.M_N @ w)
        if self.mode == "dense":
            lam = la.cho_solve(self._chol, rhs)
        else:
            out = pcg(self._S, self._T, rhs, tol=self.inner_tol, maxit=10 * len(rhs) + 10,
                      flexible=self.flexible)
            if not out.converged:
                raise SolverError("interface PCG did not converge")
            self.inner_iterations.append(out.iterations)
            lam = out.x
        wbar = w + self.extender.extend(lam)
        u = self.poisson.solve((p1.M_N @ wbar)[p1.interior])
        return u, wbar, lam

    def __call__(self, g: np.ndarray) -> np.ndarray:
        return self.solve_full(g)[0]


def mixed_inverse(p1: P1Matrices, g: np.ndarray, interface_pc: str = "T1",
                  mode: str = "dense") -> np.ndarray:
    return MixedInverse(p1, HarmonicExtender(p1), mode=mode, interface_pc=interface_pc)(g)


def coupled_mixed_solve(p1: P1Matrices, g: np.ndarray):
    """Direct solve of the coupled mixed system for (u, wbar).

    Unknowns u in V_h0 and wbar in V_h:
        M_N wbar - A_mix u = 0
        A_mix^T wbar       = g
    """
    n_int = p1.n_interior
    K = sp.bmat([[-p1.A_mix, p1.M_N], [sp.csr_matrix((n_int, n_int)), p1.A_mix.T]])
    rhs = np.concatenate([np.zeros(p1.mesh.n_vertices), g])
    sol = la.solve(K.toarray(), rhs)
    return sol[:n_int], sol[n_int:]


# ----------------------------------------------------------------------
class BiharmonicProblem:
    """Morley discretization of a biharmonic problem with its solver pieces.

    Parameters
    ----------
    mesh : Mesh
    kind : {"first", "second"}
    smoother : {"sgs", "jacobi"}
    sweeps : int
    backend : {"direct", "iterative"}
    interface_mode : {"dense", "nested"}
        How the boundary system inside ``Bh1`` is solved.
    interface_pc : {"T1", "T2", "T3"}
        Boundary preconditioner used in nested mode.
    """

    def __init__(self, mesh: Mesh, kind: str, smoother: str = "sgs", sweeps: int = 3,
                 backend: str = "direct", interface_mode: str = "dense",
                 interface_pc: str = "T1", inner_tol: float = 1e-10,
                 backend_tol: float = 1e-12):
        if kind not in ("first", "second"):
            raise ValueError("kind must be 'first' or 'second'")
        self.mesh = mesh
        self.kind = kind
        self.smoother_variant = smoother
        self.sweeps = sweeps
        self.backend_variant = backend
        self.backend_tol = backend_tol
        self.interface_mode = interface_mode
        self.interface_pc = interface_pc
        self.inner_tol = inner_tol
        self.space = build_morley(mesh, kind)
        self.A = assemble_morley(self.space)

    @property
    def ndof(self) -> int:
        return self.space.ndof

    @cached_property
    def p1(self) -> P1Matrices:
        return assemble_p1(self.mesh)

    @cached_property
    def poisson(self) -> PoissonBackend:
        return PoissonBackend(self.p1.A_D, self.backend_variant, self.backend_tol)

    @cached_property
    def extender(self) -> HarmonicExtender:
        return HarmonicExtender(self.p1, self.poisson)

    @cached_property
    def boundary_ops(self) -> BoundaryOperatorSet:
        return build_boundary_operators(self.extender)

    @cached_property
    def smoother(self) -> Smoother:
        return Smoother(self.A, self.smoother_variant, self.sweeps)

    def transfer(self, k: int) -> sp.csr_matrix:
        return transfer_Pi(self.space, k)

    def squared_laplacian2_inverse(self, g):
        """A_D^{-1} M_0 A_D^{-1} g, the dual-to-primal inverse of Delta_{h,2}^2."""
        return self.poisson.solve(self.p1.M_0 @ self.poisson.solve(g))

    @cached_property
    def mixed(self) -> MixedInverse:
        return MixedInverse(self.p1, self.extender, self.boundary_ops,
                            mode=self.interface_mode, interface_pc=self.interface_pc,
                            inner_tol=self.inner_tol)

    def preconditioner(self, tag: str) -> Preconditioner:
        R = self.smoother
        if tag == "smoother":
            return Preconditioner(tag, self.ndof, smoother=R)
        if tag == "Bh2":
            if self.kind != "second":
                raise ValueError("Bh2 needs the second-kind problem")
            P, inner = self.transfer(2), self.squared_laplacian2_inverse
        elif tag == "Bh1p":
            if self.kind != "first":
                raise ValueError("Bh1p needs the first-kind problem")
            P, inner = self.transfer(1), self.squared_laplacian2_inverse
        elif tag == "Bh1":
            if self.kind != "first":
                raise ValueError("Bh1 needs the first-kind problem")
            P, inner = self.transfer(1), self.mixed
        else:
            raise ValueError(f"unknown biharmonic preconditioner {tag!r}")
        PT = P.T.tocsr()
        return Preconditioner(tag, self.ndof, smoother=R,
                              transfer=lambda r: P @ inner(PT @ r))

    def rhs(self, f=None) -> np.ndarray:
        if f is None:
            f = lambda x: np.ones(len(x))  # noqa: E731
        return load_vector(self.mesh, f, self.space)

    def solve(self, tag: str, f=None, tol: float = 1e-8, maxit: int = 500) -> PcgOutcome:
        return pcg(self.A, self.preconditioner(tag), self.rhs(f), tol=tol, maxit=maxit)


class InterfaceProblem:
    """The boundary operator S_h of a mesh and its T_{h,j} preconditioners."""

    def __init__(self, mesh: Mesh, backend: str = "direct", backend_tol: float = 1e-12):
        self.mesh = mesh
        self.p1 = assemble_p1(mesh)
        self.poisson = PoissonBackend(self.p1.A_D, backend, backend_tol)
        self.extender = HarmonicExtender(self.p1, self.poisson)

    @property
    def ndof(self) -> int:
        return self.p1.boundary.ndof

    @cached_property
    def ops(self) -> BoundaryOperatorSet:
        return build_boundary_operators(self.extender)

    @property
    def S(self) -> np.ndarray:
        return self.ops.S

    def preconditioner(self, tag: str) -> Preconditioner:
        if tag not in ("T1", "T2", "T3"):
            raise ValueError(f"unknown interface preconditioner {tag!r}")
        return interface_preconditioner(self.ops, int(tag[1]))

    def rhs(self, f=None) -> np.ndarray:
        """Boundary right-hand side -E^T M_N w for A_D w = (f, .)."""
        if f is None:
            f = lambda x: np.ones(len(x))  # noqa: E731
        g = load_vector(self.mesh, f)[self.p1.interior]
        w = self.p1.extend_interior(self.poisson.solve(g))
        return -self.extender.adjoint(self.p1.M_N @ w)

    def solve(self, tag: str, f=None, tol: float = 1e-8, maxit: int = 2000) -> PcgOutcome:
        return pcg(s_operator(self.extender), self.preconditioner(tag), self.rhs(f),
                   tol=tol, maxit=maxit)


__all__ = [
    "BackendError", "BiharmonicProblem", "IndefiniteError", "InterfaceProblem",
    "MixedInverse", "PcgOutcome", "PoissonBackend", "Preconditioner", "Smoother",
    "SolverError", "apply_T", "coupled_mixed_solve", "interface_matrix",
    "interface_preconditioner", "mixed_inverse", "pcg",
]
