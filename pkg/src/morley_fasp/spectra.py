"""Extremal eigenvalues and (effective) condition numbers of preconditioned operators.

A preconditioned operator ``X = B A`` is self-adjoint in the inner product
given by ``A``; the routines here take the operator as an ``apply``
callable and the inner product as an SPD matrix (or ``None`` for the
Euclidean one).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

DENSE_BUDGET = 4096


class SpectrumError(ValueError):
    pass


@dataclass
class SpectrumReport:
    """Eigenvalue summary of a self-adjoint operator.

    In ``dense`` mode ``eigenvalues`` holds the full spectrum in ascending
    order. In ``lanczos`` mode it holds the smallest Ritz value followed by
    the converged top Ritz values, ascending; ``top_converged`` counts the
    trustworthy top values.
    """

    eigenvalues: np.ndarray
    mode: str
    dim: int
    top_converged: int = 0
    min_converged: bool = True
    iterations: int = 0
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def lam_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lam_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def kappa(self) -> float:
        return self.lam_max / self.lam_min

    def top(self, count: int) -> np.ndarray:
        """Largest ``count`` eigenvalues, descending."""
        return self.eigenvalues[::-1][:count].copy()

    def effective_condition(self, m: int) -> float:
        return effective_condition(self, m)


def effective_condition(report: SpectrumReport, m: int) -> float:
    """lambda_{n-m} / lambda_1."""
    if m < 0:
        raise ValueError("m must be non-negative")
    available = len(report.eigenvalues) - 1 if report.mode == "dense" else report.top_converged
    if m + 1 > available or (report.mode == "lanczos" and not report.min_converged):
        raise SpectrumError(f"need {m + 1} converged top eigenvalues, have {available}")
    return float(report.eigenvalues[-1 - m] / report.eigenvalues[0])


def _as_inner(inner):
    if inner is None:
        return lambda x: x
    if callable(inner) and not hasattr(inner, "shape"):
        return inner
    return lambda x: inner @ x


def check_self_adjoint(apply, dim: int, inner=None, pairs: int = 20, tol: float = 1e-8,
                       seed: int = 0) -> float:
    """Largest relative asymmetry |<Xx,y>_M - <x,Xy>_M| over random pairs.

    Raises :class:`SpectrumError` when it exceeds ``tol``.
    """
    M = _as_inner(inner)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        x, y = rng.standard_normal(dim), rng.standard_normal(dim)
        Xx, Xy = apply(x), apply(y)
        a, b = Xx @ M(y), x @ M(Xy)
        scale = math.sqrt(abs(Xx @ M(Xx)) * abs(y @ M(y))) + 1e-300
        worst = max(worst, abs(a - b) / scale)
    if worst > tol:
        raise SpectrumError(f"operator is not self-adjoint (relative defect {worst:.2e})")
    return worst


def materialize(apply, dim: int) -> np.ndarray:
    X = np.empty((dim, dim))
    e = np.zeros(dim)
    for j in range(dim):
        e[j] = 1.0
        X[:, j] = apply(e)
        e[j] = 0.0
    return X


def dense_spectrum(apply, dim: int, inner=None, budget: int = DENSE_BUDGET) -> SpectrumReport:
    """Full spectrum of an operator self-adjoint in ``inner``.

    The operator is materialized column by column and symmetrized as
    ``L^T X L^{-T}`` with ``inner = L L^T``.
    """
    if dim > budget:
        raise SpectrumError(f"dimension {dim} exceeds the dense budget {budget}")
    X = apply if isinstance(apply, np.ndarray) else materialize(apply, dim)
    if inner is not None:
        Mi = inner.toarray() if hasattr(inner, "toarray") else np.asarray(inner)
        try:
            L = la.cholesky(Mi, lower=True)
        except la.LinAlgError as exc:
            raise SpectrumError("inner-product matrix is not SPD") from exc
        X = la.solve_triangular(L, (L.T @ X).T, lower=True).T
    ev = la.eigvalsh(0.5 * (X + X.T))
    return SpectrumReport(np.sort(ev), "dense", dim, top_converged=dim - 1)


def lanczos_extremal(apply, dim: int, inner=None, iterations: int | None = None,
                     want_top: int = 1, tol: float = 1e-6, seed: int = 0,
                     check_every: int = 5, stall: float = 1e-2) -> SpectrumReport:
    """Lanczos with full reorthogonalization in the ``inner`` product.

    Runs until the smallest Ritz value and the ``want_top`` largest ones
    are flagged converged or the iteration budget (default
    ``min(dim, 300)``) is spent. A Ritz value is converged when its
    residual bound is below ``tol`` relative, or when it moved by less than
    ``stall * tol`` relative since the previous check (clustered extremes
    settle long before their residual bound does). A happy breakdown
    returns the exact spectrum of the invariant subspace reached.
    """
    M = _as_inner(inner)
    k_max = min(dim, 300) if iterations is None else min(iterations, dim)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    Mv = M(v)
    nv = math.sqrt(v @ Mv)
    V = np.empty((k_max + 1, dim))
    MV = np.empty((k_max + 1, dim))
    V[0], MV[0] = v / nv, Mv / nv
    alpha, beta = [], []
    prev = None
    ok, checked_at = None, -1
    k = 0
    breakdown = False
    for j in range(k_max):
        w = apply(V[j])
        a = w @ MV[j]
        w -= a * V[j]
        if j > 0:
            w -= beta[-1] * V[j - 1]
        for _ in range(2):
            w -= V[:j + 1].T @ (MV[:j + 1] @ w)
        Mw = M(w)
        b = math.sqrt(max(w @ Mw, 0.0))
        alpha.append(a)
        k = j + 1
        scale = max(abs(x) for x in alpha) if alpha else 1.0
        if b <= 1e-12 * scale:
            beta.append(0.0)
            breakdown = True
            break
        beta.append(b)
        V[j + 1], MV[j + 1] = w / b, Mw / b
        if (k % check_every == 0 or k == k_max) and k >= want_top + 1:
            theta, s = la.eigh_tridiagonal(np.array(alpha), np.array(beta[:-1]))
            ok = _flags(theta, np.abs(beta[-1] * s[-1, :]), prev, want_top, tol, stall)
            prev, checked_at = theta, k
            if ok[0] and np.all(ok[-want_top:]):
                break
    theta, s = la.eigh_tridiagonal(np.array(alpha), np.array(beta[:k - 1]))
    res = np.zeros_like(theta) if breakdown else np.abs(beta[k - 1] * s[-1, :])
    if breakdown or checked_at != k:
        ok = _flags(theta, res, None if breakdown else prev, want_top, tol, stall)
    top_ok = 0
    for flag in ok[::-1]:
        if not flag:
            break
        top_ok += 1
    top_ok = min(top_ok, len(theta) - 1)
    n_keep = max(top_ok, min(want_top, len(theta) - 1))
    ev = np.concatenate([theta[:1], theta[len(theta) - n_keep:]])
    return SpectrumReport(ev, "lanczos", dim, top_converged=top_ok,
                          min_converged=bool(ok[0]), iterations=k,
                          residuals=np.concatenate([res[:1], res[len(res) - n_keep:]]))


def _flags(theta, res, prev, want_top, tol, stall):
    ok = res <= tol * np.abs(theta)
    if prev is not None and len(prev) > want_top:
        count = min(want_top, len(prev) - 1)
        idx = np.r_[0, np.arange(len(theta) - count, len(theta))]
        pidx = np.r_[0, np.arange(len(prev) - count, len(prev))]
        moved = np.abs(theta[idx] - prev[pidx]) <= stall * tol * np.abs(theta[idx])
        ok[idx] |= moved
    return ok


@dataclass
class BoundCheck:
    constant: float
    bound: float
    passed: bool
    suspicious: bool


def iteration_bound_check(report: SpectrumReport, observed: int, tol: float,
                          m_b: int = 0, limit: float = 3.0) -> BoundCheck:
    """Compare PCG iterations against m_b + |ln tol| sqrt(kappa_eff).

    ``constant`` is observed / bound; it should stay below ``limit``.
    """
    keff = effective_condition(report, m_b)
    bound = m_b + abs(math.log(tol)) * math.sqrt(keff)
    c = observed / bound
    return BoundCheck(c, bound, c <= limit, c > limit)
