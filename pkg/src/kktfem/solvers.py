"""Preconditioned MINRES, stationary smoothers and condition estimation.

The iterative pieces used by the experiments:

* :func:`minres` is the preconditioned minimum-residual method with the
  termination test (r_k, P r_k) / (r_0, P r_0) <= eps on the preconditioned
  residual, valid because every preconditioner here is SPD.
* :func:`symmetric_gauss_seidel` returns the SPD operator performed by k
  forward/backward (block) Gauss-Seidel sweeps started from zero.
* :func:`multigrid_vcycle` builds a symmetric V-cycle on a matrix hierarchy,
  smoothed by one symmetric vertex-block sweep before and after coarse-grid
  correction, with a direct solve on the coarsest level.
* :func:`estimate_condition_cg_normal` estimates the condition number of a
  preconditioned symmetric (possibly indefinite) operator from the Lanczos
  tridiagonal of conjugate gradients on the normal equations.

Triangular (block-)solves are performed through SuperLU factorizations of
the lower/upper parts with natural ordering, which keeps every sweep a pair
of cheap sparse solves instead of a Python loop over rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass
class SolverReport:
    """Outcome of one Krylov solve.

    residual_history holds the preconditioned residual norm ratios
    |r_k|_P / |r_0|_P, starting at 1.0 for the initial guess; the final
    entry is at most the requested tolerance when converged is set.
    """

    iterations: int
    residual_history: list
    converged: bool
    solution: np.ndarray | None = None
    cond_estimate: float | None = None
    breakdown: str | None = None


@dataclass(frozen=True)
class MultigridConfig:
    """Shape of the V-cycle; defaults keep the cycle operator symmetric."""

    n_vcycles: int = 1
    pre_sweeps: int = 1
    post_sweeps: int = 1


def _triangular_factor(mat: sp.spmatrix, lower: bool, block_ids=None):
    coo = mat.tocoo()
    if block_ids is None:
        keep = coo.row >= coo.col if lower else coo.row <= coo.col
    else:
        ids = np.asarray(block_ids)
        keep = ids[coo.row] >= ids[coo.col] if lower else ids[coo.row] <= ids[coo.col]
    tri = sp.csc_matrix(
        (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=mat.shape
    )
    return spla.splu(tri, permc_spec="NATURAL", diag_pivot_thresh=0.0)


class SymmetricGaussSeidelOperator(spla.LinearOperator):
    """k symmetric (block) Gauss-Seidel sweeps on S, as an SPD operator."""

    def __init__(self, mat: sp.spmatrix, sweeps: int = 1, block_ids=None):
        if sweeps < 1:
            raise ValueError("sweeps must be at least 1")
        diag = mat.diagonal()
        if np.any(diag == 0.0):
            raise ValueError("matrix has zero diagonal entries")
        self._mat = mat.tocsr()
        self.sweeps = sweeps
        self._lower = _triangular_factor(mat, lower=True, block_ids=block_ids)
        self._upper = _triangular_factor(mat, lower=False, block_ids=block_ids)
        super().__init__(dtype=float, shape=mat.shape)

    def _matvec(self, b: np.ndarray) -> np.ndarray:
        x = self._lower.solve(b)
        x = x + self._upper.solve(b - self._mat @ x)
        for _ in range(self.sweeps - 1):
            x = x + self._lower.solve(b - self._mat @ x)
            x = x + self._upper.solve(b - self._mat @ x)
        return x


def symmetric_gauss_seidel(mat: sp.spmatrix, sweeps: int = 1, block_ids=None):
    """SPD approximation of S^-1 by k symmetric Gauss-Seidel sweeps.

    With ``block_ids`` given, DOFs sharing an id are updated jointly
    (block Gauss-Seidel); ids must be constant on contiguous index ranges.
    """
    return SymmetricGaussSeidelOperator(mat, sweeps=sweeps, block_ids=block_ids)


class MultigridOperator(spla.LinearOperator):
    """Symmetric V-cycle approximation of the inverse of the finest matrix."""

    def __init__(self, matrices, prolongations, config, block_ids_per_level=None):
        if len(matrices) != len(prolongations) + 1:
            raise ValueError("need exactly one prolongation between consecutive levels")
        self.matrices = [m.tocsr() for m in matrices]
        self.prolongations = list(prolongations)
        self.config = config
        if block_ids_per_level is None:
            block_ids_per_level = [None] * len(matrices)
        try:
            self._coarse = spla.splu(self.matrices[0].tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as err:
            raise ValueError(f"coarse matrix is singular: {err}") from err
        self._pre = [None] + [
            SymmetricGaussSeidelOperator(m, config.pre_sweeps, ids)
            for m, ids in zip(self.matrices[1:], block_ids_per_level[1:])
        ]
        if config.post_sweeps == config.pre_sweeps:
            self._post = self._pre
        else:
            self._post = [None] + [
                SymmetricGaussSeidelOperator(m, config.post_sweeps, ids)
                for m, ids in zip(self.matrices[1:], block_ids_per_level[1:])
            ]
        super().__init__(dtype=float, shape=self.matrices[-1].shape)

    def _cycle(self, level: int, b: np.ndarray) -> np.ndarray:
        if level == 0:
            return self._coarse.solve(b)
        mat = self.matrices[level]
        x = self._pre[level]._matvec(b)
        coarse_res = self.prolongations[level - 1].T @ (b - mat @ x)
        x = x + self.prolongations[level - 1] @ self._cycle(level - 1, coarse_res)
        return x + self._post[level]._matvec(b - mat @ x)

    def _matvec(self, b: np.ndarray) -> np.ndarray:
        top = len(self.matrices) - 1
        x = self._cycle(top, b)
        for _ in range(self.config.n_vcycles - 1):
            x = x + self._cycle(top, b - self.matrices[-1] @ x)
        return x


def multigrid_vcycle(matrices, prolongations, config: MultigridConfig | None = None, block_ids_per_level=None):
    """V-cycle operator for an SPD hierarchy (coarsest first)."""
    return MultigridOperator(matrices, prolongations, config or MultigridConfig(), block_ids_per_level)


class ScaledOperator(spla.LinearOperator):
    def __init__(self, op, factor: float):
        self._op = op
        self._factor = factor
        super().__init__(dtype=float, shape=op.shape)

    def _matvec(self, x):
        return self._factor * (self._op @ x)


class BlockDiagonalOperator(spla.LinearOperator):
    """Apply independent operators to consecutive slices of a vector."""

    def __init__(self, operators):
        self.operators = list(operators)
        sizes = [op.shape[0] for op in self.operators]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)])
        n = int(self._offsets[-1])
        super().__init__(dtype=float, shape=(n, n))

    def _matvec(self, x):
        parts = [
            op @ x[self._offsets[k] : self._offsets[k + 1]]
            for k, op in enumerate(self.operators)
        ]
        return np.concatenate(parts)


class FactorizedSolveOperator(spla.LinearOperator):
    """Exact sparse solve as an operator (used for exact-block variants)."""

    def __init__(self, mat: sp.spmatrix):
        self._fac = spla.splu(mat.tocsc(), permc_spec="MMD_AT_PLUS_A")
        super().__init__(dtype=float, shape=mat.shape)

    def _matvec(self, x):
        return self._fac.solve(x)


def build_approx_preconditioner(kkt, levels, prolongations, config: MultigridConfig | None = None, gs_sweeps: int = 2):
    """Inexpensive SPD replacement of the exact Riesz-map preconditioner.

    Control and multiplier blocks: ``gs_sweeps`` symmetric Gauss-Seidel
    sweeps on the (block-diagonal) control mass.  State block: one V-cycle
    on the hierarchy of alpha*R + K matrices with a symmetric vertex-block
    Gauss-Seidel smoother and a direct coarsest solve.

    ``levels``/``prolongations`` come from :func:`assembly.assemble_hierarchy`
    and must end at the grid the system was assembled on.
    """
    config = config or MultigridConfig()
    if len(levels) > 1 and levels[0].grid.n_cells_per_side < 8:
        raise ValueError("multigrid hierarchies must not coarsen below 8x8 cells")
    if levels[-1].mass_dg.shape != kkt.blocks.mass_dg.shape:
        raise ValueError("hierarchy does not end at the system's grid")
    alpha = kkt.alpha
    mass_gs = symmetric_gauss_seidel(kkt.blocks.mass_dg, sweeps=gs_sweeps)
    state_mats = [alpha * lv.regularity + lv.boundary_mass for lv in levels]
    block_ids = [lv.vertex_block_ids for lv in levels]
    state_block = multigrid_vcycle(state_mats, prolongations, config, block_ids)
    return BlockDiagonalOperator(
        [
            ScaledOperator(mass_gs, 1.0 / alpha),
            state_block,
            ScaledOperator(mass_gs, alpha),
        ]
    )


def minres(op, precond, b, x0=None, eps: float = 1e-12, max_iter: int | None = None) -> SolverReport:
    """Preconditioned MINRES for a symmetric operator and SPD preconditioner.

    Iterates until the preconditioned residual norm ratio |r_k|_P / |r_0|_P
    drops below ``eps`` or ``max_iter`` is reached.  The report's residual
    history is exactly that ratio sequence; its solution field holds the
    last iterate.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 5 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    v = b - op @ x
    z = precond @ v
    gamma_sq = float(v @ z)
    if gamma_sq < 0:
        return SolverReport(0, [1.0], False, solution=x, breakdown="preconditioner is not positive definite")
    gamma0 = np.sqrt(gamma_sq)
    if gamma0 == 0.0:
        return SolverReport(0, [0.0], True, solution=x)

    v_prev = np.zeros(n)
    gamma_prev, gamma = 1.0, gamma0
    eta = gamma0
    s_prev = s_cur = 0.0
    c_prev = c_cur = 1.0
    w_prev = np.zeros(n)
    w_cur = np.zeros(n)
    history = [1.0]

    for it in range(1, max_iter + 1):
        z = z / gamma
        az = op @ z
        delta = float(z @ az)
        v_next = az - (delta / gamma) * v - (gamma / gamma_prev) * v_prev
        z_next = precond @ v_next
        gamma_next_sq = float(z_next @ v_next)
        if not np.isfinite(gamma_next_sq):
            return SolverReport(it, history, False, solution=x, breakdown="NaN/inf in Lanczos recurrence")
        if gamma_next_sq < -1e-13 * gamma0**2:
            return SolverReport(it, history, False, solution=x, breakdown="preconditioner is not positive definite")
        gamma_next = np.sqrt(max(gamma_next_sq, 0.0))

        a0 = c_cur * delta - c_prev * s_cur * gamma
        a1 = np.sqrt(a0**2 + gamma_next**2)
        a2 = s_cur * delta + c_prev * c_cur * gamma
        a3 = s_prev * gamma
        c_prev, c_cur = c_cur, a0 / a1
        s_prev, s_cur = s_cur, gamma_next / a1
        w_next = (z - a3 * w_prev - a2 * w_cur) / a1
        x = x + (c_cur * eta) * w_next
        eta = -s_cur * eta

        ratio = abs(eta) / gamma0
        history.append(float(ratio))
        if not np.isfinite(ratio):
            return SolverReport(it, history, False, solution=x, breakdown="NaN/inf in residual recurrence")
        if ratio <= eps:
            return SolverReport(it, history, True, solution=x)
        if gamma_next == 0.0:  # Krylov space exhausted without meeting eps
            return SolverReport(it, history, False, solution=x, breakdown="Krylov space exhausted")

        v_prev, v = v, v_next
        z = z_next
        gamma_prev, gamma = gamma, gamma_next
        w_prev, w_cur = w_cur, w_next

    return SolverReport(max_iter, history, False, solution=x)


def _lanczos_extremes(alphas, betas):
    from scipy.linalg import eigvalsh_tridiagonal

    k = len(alphas)
    diag = np.empty(k)
    diag[0] = 1.0 / alphas[0]
    off = np.empty(max(k - 1, 0))
    for j in range(1, k):
        diag[j] = 1.0 / alphas[j] + betas[j - 1] / alphas[j - 1]
        off[j - 1] = np.sqrt(betas[j - 1]) / alphas[j - 1]
    if k == 1:
        return diag[0], diag[0]
    ev = eigvalsh_tridiagonal(diag, off)
    return float(ev[0]), float(ev[-1])


def _pcg_extremes(apply_op, apply_prec, n, seed, tol, max_iter):
    """Extreme Ritz values of precond*op from preconditioned CG coefficients."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(-1.0, 1.0, size=n)
    x = np.zeros(n)
    z = apply_prec(r)
    rz = float(r @ z)
    if rz <= 0:
        raise ValueError("preconditioner is not positive definite")
    p = z.copy()
    alphas: list[float] = []
    betas: list[float] = []
    lo_prev = hi_prev = None
    rz0 = rz
    for _ in range(max_iter):
        q = apply_op(p)
        pq = float(p @ q)
        if pq <= 0:
            raise ValueError("operator is not positive definite on the Krylov space")
        alpha = rz / pq
        alphas.append(alpha)
        x = x + alpha * p
        r = r - alpha * q
        z = apply_prec(r)
        rz_new = float(r @ z)
        lo, hi = _lanczos_extremes(alphas, betas)
        if lo_prev is not None:
            stagnated = abs(lo - lo_prev) <= tol * abs(lo) and abs(hi - hi_prev) <= tol * abs(hi)
            if stagnated:
                return lo, hi, True
        lo_prev, hi_prev = lo, hi
        if rz_new <= 1e-28 * rz0:  # CG converged; Ritz values are final
            return lo, hi, True
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    return lo_prev, hi_prev, False


def estimate_condition_pcg(mat, precond, seed: int = 0, tol: float = 1e-6, max_iter: int = 200) -> float:
    """Condition number of precond*mat for SPD pairs, via CG Ritz values."""
    lo, hi, _ = _pcg_extremes(
        lambda v: mat @ v, lambda v: precond @ v, mat.shape[0], seed, tol, max_iter
    )
    return hi / lo


def estimate_condition_cg_normal(op, precond, seed: int = 0, tol: float = 1e-6, max_iter: int = 200) -> float:
    """Condition number of precond*op for symmetric op and SPD precond.

    Runs conjugate gradients on the normal equations op*precond*op,
    preconditioned by the same operator; the Lanczos tridiagonal then
    estimates the extreme eigenvalues of (precond*op)^2.
    """

    def apply_normal(v):
        return op @ (precond @ (op @ v))

    lo, hi, _ = _pcg_extremes(
        apply_normal, lambda v: precond @ v, op.shape[0], seed, tol, max_iter
    )
    return float(np.sqrt(hi / lo))
