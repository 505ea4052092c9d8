"""Dense small-matrix linear algebra and scalar root finding.

Everything here targets the small symmetric matrices (order <= ~10) that
appear in quadratic stability certificates: a cyclic Jacobi eigensolver, a
positive-definiteness predicate, the symmetric-pencil maximum eigenvalue
lambda_max(B^{-1/2} A B^{-1/2}), and a bracketed root finder with secant
acceleration.  All functions are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DomainError, NumericalFailure

ArrayLike = Union[np.ndarray, "SymMatrix", list, tuple]

_JACOBI_MAX_SWEEPS = 100
_DEFAULT_ROOT_TOL = 1e-12
_ROOT_MAX_ITER = 256


class SymMatrix:
    """Symmetric real matrix, symmetric by construction.

    The constructor validates squareness and finiteness, rejects inputs whose
    asymmetry exceeds ``sym_tol`` relative to their norm, and stores the exact
    symmetrization 0.5*(S + S^T), so entry (i, j) == entry (j, i) holds bitwise.
    """

    __slots__ = ("_m",)

    def __init__(self, entries: ArrayLike, sym_tol: float = 1e-9):
        m = np.array(getattr(entries, "mat", entries), dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DomainError(f"expected a square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DomainError("matrix entries must be finite")
        skew = np.abs(m - m.T).max()
        if skew > sym_tol * (1.0 + np.abs(m).max()):
            raise DomainError(f"matrix is not symmetric (max asymmetry {skew:g})")
        self._m = 0.5 * (m + m.T)
        self._m.setflags(write=False)

    @property
    def mat(self) -> np.ndarray:
        return self._m

    @property
    def order(self) -> int:
        return self._m.shape[0]

    def entry(self, i: int, j: int) -> float:
        return float(self._m[i, j])

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self._m))

    @staticmethod
    def identity(n: int) -> "SymMatrix":
        return SymMatrix(np.eye(n))

    @staticmethod
    def zeros(n: int) -> "SymMatrix":
        return SymMatrix(np.zeros((n, n)))

    def __repr__(self) -> str:
        return f"SymMatrix({self._m!r})"


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted ascending with matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


@dataclass(frozen=True)
class Bracket:
    """Sign-changing interval [lo, hi] with cached endpoint values."""

    lo: float
    hi: float
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or not self.lo < self.hi:
            raise DomainError(f"invalid bracket endpoints [{self.lo}, {self.hi}]")
        if not (np.isfinite(self.f_lo) and np.isfinite(self.f_hi)):
            raise DomainError("bracket endpoint values must be finite")
        if self.f_lo * self.f_hi > 0.0:
            raise DomainError("bracket endpoints do not straddle a sign change")


def bracket_root(f: Callable[[float], float], lo: float, hi: float) -> Bracket:
    """Evaluate f at the endpoints and build a Bracket (validating the sign change)."""
    return Bracket(lo, hi, float(f(lo)), float(f(hi)))


def _as_sym_array(s: ArrayLike, sym_tol: float = 1e-9) -> np.ndarray:
    if isinstance(s, SymMatrix):
        return s.mat
    return SymMatrix(s, sym_tol=sym_tol).mat


def sym_eig(s: ArrayLike) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues ascending; the eigenvector matrix V satisfies
    V^T V = I and S = V diag(w) V^T to ~1e-14 relative accuracy.

    Raises NumericalFailure if the off-diagonal mass has not annihilated after
    the sweep cap (does not happen for finite symmetric input at these orders).
    """
    a = _as_sym_array(s).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return EigenDecomposition(a[0, :1].copy(), v)

    scale = np.abs(a).max() or 1.0
    stop = 1e-16 * scale
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= stop * n:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-20 * scale:
                    continue
                # stable rotation: t = sign(theta)/(|theta| + sqrt(theta^2+1))
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(t, 1.0)
                sn = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - sn * rq
                a[q, :] = sn * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - sn * cq
                a[:, q] = sn * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    else:
        raise NumericalFailure("Jacobi eigensolver did not converge within the sweep cap")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], v[:, order])


def lam_max(s: ArrayLike) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    return float(sym_eig(s).eigenvalues[-1])


def lam_min(s: ArrayLike) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(sym_eig(s).eigenvalues[0])


def is_pos_def(s: ArrayLike, tol: float = 0.0) -> bool:
    """True iff the smallest eigenvalue exceeds ``tol`` (tol >= 0)."""
    if tol < 0.0:
        raise DomainError("tol must be nonnegative")
    return lam_min(s) > tol


def pencil_max_eig(a: ArrayLike, b: ArrayLike) -> float:
    """Largest generalized eigenvalue of the symmetric pencil (A, B) with B > 0.

    Returns lambda_max(B^{-1/2} A B^{-1/2}), the least lam with A <= lam*B.
    """
    am = _as_sym_array(a)
    eb = sym_eig(b)
    if eb.eigenvalues[0] <= 0.0:
        raise DomainError("pencil denominator must be positive definite")
    w_inv_sqrt = (eb.eigenvectors / np.sqrt(eb.eigenvalues)) @ eb.eigenvectors.T
    m = w_inv_sqrt @ am @ w_inv_sqrt
    return lam_max(0.5 * (m + m.T))


def find_root(
    f: Callable[[float], float],
    bracket: Bracket,
    tol: float = _DEFAULT_ROOT_TOL,
    max_iter: int = _ROOT_MAX_ITER,
) -> float:
    """Root of f inside a sign-changing bracket.

    Bisection with a secant acceleration step; terminates when the bracket
    width falls below ``tol`` (absolute, on the argument) or an exact zero is
    hit.  The returned root never leaves the initial bracket.
    """
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    lo, hi, flo, fhi = bracket.lo, bracket.hi, bracket.f_lo, bracket.f_hi
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi

    for _ in range(max_iter):
        # stop at tol, or at the floating-point spacing of the endpoints
        if hi - lo <= max(tol, 4.0 * np.finfo(float).eps * max(abs(lo), abs(hi))):
            return 0.5 * (lo + hi)
        width = hi - lo
        x = 0.5 * (lo + hi)
        if fhi != flo:
            sec = (lo * fhi - hi * flo) / (fhi - flo)
            # accept the secant point only if it is safely interior
            gap = 0.01 * width
            if lo + gap < sec < hi - gap:
                x = sec
        fx = float(f(x))
        if fx == 0.0:
            return x
        if flo * fx < 0.0:
            hi, fhi = x, fx
        else:
            lo, flo = x, fx
        if hi - lo > 0.5 * width:
            # secant made poor progress; force a bisection step
            mid = 0.5 * (lo + hi)
            fm = float(f(mid))
            if fm == 0.0:
                return mid
            if flo * fm < 0.0:
                hi, fhi = mid, fm
            else:
                lo, flo = mid, fm
    raise NumericalFailure(f"root finder exceeded {max_iter} iterations (width {hi - lo:g})")
