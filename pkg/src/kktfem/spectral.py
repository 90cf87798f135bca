"""Spectrum of the preconditioned system and the three-interval bound.

For every alpha the generalized eigenvalues of (system, preconditioner
inverse) are real and avoid a neighborhood of zero: they are confined to

    [r1, q1]  union  [r2, 1]  union  [q2, r3]

where q1 < q2 are the roots of q(t) = 1 + t(1 - t) and r1 < r2 < r3 the
roots of r(t) = (1 - t) - t*q(t) = t^3 - t^2 - 2t + 1.  The intervals do
not depend on alpha or on the operators, so the spectral condition number
is bounded by r3/r2 (attained whenever the observation block is singular).

The expanded cubic is re-verified against its defining combination at
random points before its roots are used, so a transcription error cannot
silently shift the intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

DENSE_DIM_LIMIT = 20_000


def _p(t):
    return 1.0 - t


def _q(t):
    return 1.0 + t * _p(t)


def _r_expanded(t):
    return t**3 - t**2 - 2.0 * t + 1.0


@dataclass(frozen=True)
class SpectralIntervals:
    """Roots of the bounding polynomials and the intervals they delimit."""

    q_roots: tuple[float, float]
    r_roots: tuple[float, float, float]
    intervals: tuple[tuple[float, float], ...]

    @property
    def kappa_bound(self) -> float:
        return self.r_roots[2] / self.r_roots[1]


def containment_intervals() -> SpectralIntervals:
    """Compute the three spectrum-containment intervals from scratch."""
    rng = np.random.default_rng(7)
    t = rng.uniform(-3.0, 3.0, size=100)
    mismatch = np.abs(_r_expanded(t) - (_p(t) - t * _q(t))).max()
    if mismatch > 1e-12:
        raise AssertionError("expanded cubic disagrees with its defining combination")

    q1 = (1.0 - np.sqrt(5.0)) / 2.0
    q2 = (1.0 + np.sqrt(5.0)) / 2.0
    r1 = brentq(_r_expanded, -2.0, -1.0, xtol=1e-15, rtol=8.9e-16)
    r2 = brentq(_r_expanded, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16)
    r3 = brentq(_r_expanded, 1.0, 2.0, xtol=1e-15, rtol=8.9e-16)
    return SpectralIntervals(
        q_roots=(q1, q2),
        r_roots=(r1, r2, r3),
        intervals=((r1, q1), (r2, 1.0), (q2, r3)),
    )


@dataclass
class SpectrumReport:
    """Eigenvalues of one preconditioned system (full set or extremes)."""

    alpha: float
    h: float | None
    eigenvalues: np.ndarray
    mode: str  # "dense" or "extremes"

    @property
    def min_abs(self) -> float:
        return float(np.abs(self.eigenvalues).min())

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.eigenvalues).max())

    @property
    def kappa(self) -> float:
        return self.max_abs / self.min_abs


def dense_generalized_eigs(system: np.ndarray, riesz_inv: np.ndarray) -> np.ndarray:
    """All real eigenvalues of system*x = lambda*riesz_inv*x (riesz_inv SPD).

    Both matrices are symmetrically rescaled to a unit diagonal on the
    right-hand side first; the congruence leaves the eigenvalues unchanged
    but keeps the factorization accurate when the weights span many orders
    of magnitude.
    """
    scale = 1.0 / np.sqrt(np.diag(riesz_inv))
    balance = np.outer(scale, scale)
    return sla.eigh(system * balance, riesz_inv * balance, eigvals_only=True)


def _lanczos_extremes(apply_op, inner_mat, n, seed=0, tol=1e-9, max_steps=200):
    """Extreme eigenvalues of an operator self-adjoint in the inner_mat product.

    Fully reorthogonalized Lanczos; stops when both extreme Ritz values
    stagnate to relative ``tol``.  The spectra handled here carry large
    clusters at their endpoints, which makes the extremes converge in a few
    dozen steps.
    """
    from scipy.linalg import eigvalsh_tridiagonal

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    nv = inner_mat @ v
    v /= np.sqrt(v @ nv)
    basis = np.zeros((n, max_steps + 1))
    inner_basis = np.zeros((n, max_steps + 1))
    basis[:, 0] = v
    inner_basis[:, 0] = inner_mat @ v
    alphas: list[float] = []
    betas: list[float] = []
    lo_prev = hi_prev = None
    for j in range(max_steps):
        w = apply_op(basis[:, j])
        alpha = float(inner_basis[:, j] @ w)
        alphas.append(alpha)
        w = w - alpha * basis[:, j]
        if j:
            w = w - betas[-1] * basis[:, j - 1]
        w = w - basis[:, : j + 1] @ (inner_basis[:, : j + 1].T @ w)
        nw = inner_mat @ w
        beta = float(np.sqrt(max(w @ nw, 0.0)))
        if j >= 1:
            ev = eigvalsh_tridiagonal(np.asarray(alphas), np.asarray(betas))
            lo, hi = float(ev[0]), float(ev[-1])
            if (
                lo_prev is not None
                and abs(lo - lo_prev) <= tol * abs(lo)
                and abs(hi - hi_prev) <= tol * abs(hi)
            ):
                return lo, hi
            lo_prev, hi_prev = lo, hi
        if beta <= 1e-13 * max(abs(alpha), 1.0):  # Krylov space exhausted
            break
        betas.append(beta)
        basis[:, j + 1] = w / beta
        inner_basis[:, j + 1] = nw / beta
    if lo_prev is None:
        return alphas[0], alphas[0]
    return lo_prev, hi_prev


def extreme_generalized_eigs(system, precond) -> np.ndarray:
    """Eigenvalues deciding the condition number, without a dense solve.

    Runs Lanczos on the preconditioned operator (self-adjoint in the inner
    product of the preconditioner inverse) for the signed extremes, and on
    its square for the smallest magnitude.  The near-zero extreme is
    reported by magnitude (as a positive number).
    """
    n = system.shape[0]
    inner = precond.inv_matrix

    def apply_g(x):
        return precond @ (system @ x)

    lo, hi = _lanczos_extremes(apply_g, inner, n)
    lo_sq, _ = _lanczos_extremes(lambda x: apply_g(apply_g(x)), inner, n, seed=1)
    min_abs = float(np.sqrt(max(lo_sq, 0.0)))
    return np.sort(np.array([lo, min_abs, hi]))


def generalized_spectrum(kkt, precond, mode: str = "auto") -> SpectrumReport:
    """Spectrum of the exact-preconditioned optimality system.

    ``mode='dense'`` computes every eigenvalue (refused above
    ``DENSE_DIM_LIMIT`` unknowns); ``'extremes'`` computes only the
    eigenvalues deciding the condition number.
    """
    n = kkt.n_total
    if mode == "auto":
        mode = "dense" if n <= 4000 else "extremes"
    if mode == "dense":
        if n > DENSE_DIM_LIMIT:
            raise ValueError(f"dense spectrum refused for dimension {n} > {DENSE_DIM_LIMIT}")
        eigs = dense_generalized_eigs(kkt.matrix.toarray(), precond.inv_matrix.toarray())
    elif mode == "extremes":
        eigs = extreme_generalized_eigs(kkt.matrix, precond)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return SpectrumReport(alpha=kkt.alpha, h=kkt.h, eigenvalues=np.asarray(eigs), mode=mode)


@dataclass(frozen=True)
class ContainmentVerdict:
    contained: bool
    violators: tuple[tuple[int, float], ...] = field(default_factory=tuple)
    tol: float = 0.0

    def __bool__(self) -> bool:
        return self.contained


def check_containment(report: SpectrumReport, intervals: SpectralIntervals, tol: float | None = None) -> ContainmentVerdict:
    """Check every eigenvalue against the three intervals.

    The default tolerance is 1e-8 of the largest eigenvalue magnitude, so
    the verdict is scale-free.
    """
    eigs = np.asarray(report.eigenvalues, dtype=float)
    if tol is None:
        tol = 1e-8 * float(np.abs(eigs).max()) if eigs.size else 0.0
    inside = np.zeros(eigs.shape, dtype=bool)
    for lo, hi in intervals.intervals:
        inside |= (eigs >= lo - tol) & (eigs <= hi + tol)
    violators = tuple((int(i), float(eigs[i])) for i in np.flatnonzero(~inside))
    return ContainmentVerdict(contained=not violators, violators=violators, tol=tol)
