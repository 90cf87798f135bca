"""The 3x3 saddle-point optimality system and its Riesz-map preconditioner.

Unknowns are the control f and the multiplier w (both in the discontinuous
space) and the state u.  The system reads

    [ alpha*M   0    M  ] [f]   [ 0 ]
    [   0       K    A' ] [u] = [ g ]
    [   M       A    0  ] [w]   [ 0 ]

with M the control-space mass, K the observation block (boundary trace mass
by default), A the strong-form state operator and g the boundary moment
vector of the observed data.  The preconditioner is the inverse of

    diag(alpha*M, alpha*R + K, M/alpha)

which is the Riesz map of the alpha-weighted norms

    |f|^2 = alpha*f'Mf,   |u|^2 = u'(alpha*R + K)u,   |w|^2 = w'Mw/alpha.

Because the discontinuous space contains the image of the state space under
(1 - lap), the grid operator R of the squared-operator form coincides with
A' M^-1 A to round-off; the preconditioner block reuses R.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    LevelOperators,
    assemble_regularity_form,
    assemble_state_operator,
    moments_dg,
)

VARIANTS = ("boundary_obs", "full_obs", "laplace_state")


@dataclass(frozen=True)
class KktBlocks:
    """The four matrices entering one optimality system."""

    mass_dg: sp.csr_matrix
    obs_mass: sp.csr_matrix
    state: sp.csr_matrix
    regularity: sp.csr_matrix


def kkt_blocks(ops: LevelOperators, variant: str = "boundary_obs") -> KktBlocks:
    """Select the block matrices for one of the model variants.

    ``full_obs`` swaps the boundary observation for the full domain mass;
    ``laplace_state`` drops the zero-order term from the state operator and
    uses the matching pure second-order form in the preconditioner block.
    """
    if variant == "boundary_obs":
        return KktBlocks(ops.mass_dg, ops.boundary_mass, ops.state, ops.regularity)
    if variant == "full_obs":
        return KktBlocks(ops.mass_dg, ops.mass_state, ops.state, ops.regularity)
    if variant == "laplace_state":
        state = assemble_state_operator(ops.grid, ops.bfs_map, ops.dg_map, with_mass_term=False)
        reg = assemble_regularity_form(ops.grid, ops.bfs_map, with_lower_order=False)
        return KktBlocks(ops.mass_dg, ops.boundary_mass, state, reg)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


@dataclass
class KktSystem:
    """Assembled saddle-point system for one value of alpha."""

    alpha: float
    blocks: KktBlocks
    rhs: np.ndarray
    h: float | None = None
    _matrix: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        n_w = self.blocks.mass_dg.shape[0]
        n_u = self.blocks.obs_mass.shape[0]
        return (n_w, n_u, n_w)

    @property
    def n_total(self) -> int:
        return sum(self.dims)

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            b = self.blocks
            self._matrix = sp.bmat(
                [
                    [self.alpha * b.mass_dg, None, b.mass_dg],
                    [None, b.obs_mass, b.state.T],
                    [b.mass_dg, b.state, None],
                ],
                format="csr",
            )
        return self._matrix

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def split(self, x: np.ndarray):
        n_f, n_u, _ = self.dims
        return x[:n_f], x[n_f : n_f + n_u], x[n_f + n_u :]


def build_kkt(blocks: KktBlocks, alpha: float, obs_rhs=None, h: float | None = None) -> KktSystem:
    """Assemble the optimality system; rejects alpha <= 0 and bad shapes."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    n_w, n_u = blocks.state.shape
    if blocks.mass_dg.shape != (n_w, n_w):
        raise ValueError("control mass block does not match the state operator rows")
    if blocks.obs_mass.shape != (n_u, n_u):
        raise ValueError("observation block does not match the state operator columns")
    if blocks.regularity.shape != (n_u, n_u):
        raise ValueError("regularity block does not match the state operator columns")
    if obs_rhs is None:
        obs_rhs = np.zeros(n_u)
    obs_rhs = np.asarray(obs_rhs, dtype=float)
    if obs_rhs.shape != (n_u,):
        raise ValueError("observation right-hand side has the wrong length")
    rhs = np.concatenate([np.zeros(n_w), obs_rhs, np.zeros(n_w)])
    return KktSystem(alpha=alpha, blocks=blocks, rhs=rhs, h=h)


@dataclass(frozen=True)
class WeightedNorm:
    """The alpha-weighted norm on (control, state, multiplier) triples."""

    alpha: float
    blocks: KktBlocks

    def norm_sq(self, x: np.ndarray) -> float:
        n_w = self.blocks.mass_dg.shape[0]
        n_u = self.blocks.obs_mass.shape[0]
        f, u, w = x[:n_w], x[n_w : n_w + n_u], x[n_w + n_u :]
        b = self.blocks
        return float(
            self.alpha * f @ (b.mass_dg @ f)
            + u @ ((self.alpha * (b.regularity @ u)) + b.obs_mass @ u)
            + (w @ (b.mass_dg @ w)) / self.alpha
        )

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(self.norm_sq(x)))


class RieszPreconditioner(spla.LinearOperator):
    """Exact block-diagonal Riesz-map preconditioner.

    ``matvec`` applies the inverse of diag(alpha*M, alpha*R + K, M/alpha)
    through cached sparse factorizations; ``inv_matrix`` exposes the forward
    (un-inverted) block diagonal for norm identities and eigenproblems.
    """

    def __init__(self, blocks: KktBlocks, alpha: float):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.alpha = alpha
        self.blocks = blocks
        n = 2 * blocks.mass_dg.shape[0] + blocks.obs_mass.shape[0]
        super().__init__(dtype=float, shape=(n, n))
        try:
            self._mass_solve = spla.splu(blocks.mass_dg.tocsc(), permc_spec="MMD_AT_PLUS_A")
            self._state_solve = spla.splu(
                (alpha * blocks.regularity + blocks.obs_mass).tocsc(),
                permc_spec="MMD_AT_PLUS_A",
            )
        except RuntimeError as err:  # singular factor: an assembly bug upstream
            raise ValueError(f"preconditioner block is not positive definite: {err}") from err
        self._inv_matrix = None

    @property
    def inv_matrix(self) -> sp.csr_matrix:
        if self._inv_matrix is None:
            b = self.blocks
            self._inv_matrix = sp.block_diag(
                [
                    self.alpha * b.mass_dg,
                    self.alpha * b.regularity + b.obs_mass,
                    b.mass_dg / self.alpha,
                ],
                format="csr",
            )
        return self._inv_matrix

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        n_w = self.blocks.mass_dg.shape[0]
        n_u = self.blocks.obs_mass.shape[0]
        f = x[:n_w]
        u = x[n_w : n_w + n_u]
        w = x[n_w + n_u :]
        return np.concatenate(
            [
                self._mass_solve.solve(f) / self.alpha,
                self._state_solve.solve(u),
                self.alpha * self._mass_solve.solve(w),
            ]
        )


def build_exact_preconditioner(blocks: KktBlocks, alpha: float) -> RieszPreconditioner:
    return RieszPreconditioner(blocks, alpha)


def forward_solve(blocks: KktBlocks, f: np.ndarray) -> np.ndarray:
    """State reproducing the control f in the least-squares sense.

    Solves R u = -A' f, the normal equation of A u = -M f in the dual norm
    of the control space.  When -(f + lap u - u) is representable in the
    discontinuous space the constraint residual is zero to round-off.
    """
    rhs = -(blocks.state.T @ np.asarray(f, dtype=float))
    fac = spla.splu(blocks.regularity.tocsc(), permc_spec="MMD_AT_PLUS_A")
    u = fac.solve(rhs)
    # one refinement step: the fourth-order form is ill-conditioned in h
    u += fac.solve(rhs - blocks.regularity @ u)
    return u


def manufacture_observation(ops: LevelOperators, blocks: KktBlocks, f_true) -> np.ndarray:
    """Boundary moment vector of the state driven by a known control.

    ``f_true`` is a callable (x, y) -> value; it is L2-projected onto the
    discontinuous space, pushed through :func:`forward_solve`, and the trace
    of the resulting state is converted to a right-hand side.  The trace of
    a state-space function is integrated exactly by the boundary mass.
    """
    moments = moments_dg(ops.grid, ops.dg_map, f_true)
    f_dg = spla.spsolve(blocks.mass_dg.tocsc(), moments)
    u_true = forward_solve(blocks, f_dg)
    return blocks.obs_mass @ u_true


@dataclass(frozen=True)
class SaddleStability:
    """Measured stability constants of one system in its weighted norms."""

    inf_sup: float
    kernel_coercivity: float
    operator_norm: float


def measure_saddle_stability(kkt: KktSystem) -> SaddleStability:
    """Dense measurement of the three stability constants.

    inf-sup: smallest singular value of the constraint rows [M A] mapping the
    weighted (f, u) space into the weighted multiplier space.  Coercivity:
    smallest Rayleigh quotient of the leading 2x2 block on the kernel of
    [M A].  Boundedness: largest generalized eigenvalue magnitude of the
    preconditioned system.  Intended for coarse grids only.
    """
    import scipy.linalg as sla

    b = kkt.blocks
    alpha = kkt.alpha
    mass = b.mass_dg.toarray()
    state = b.state.toarray()
    obs = b.obs_mass.toarray()
    reg = b.regularity.toarray()

    x_f = alpha * mass
    x_u = alpha * reg + obs
    y_w = mass / alpha

    minv_a = sla.solve(mass, state, assume_a="pos")
    # inf-sup^2 = smallest eigenvalue of (M X_f^-1 M + A X_u^-1 A', Y)
    c = mass @ sla.solve(x_f, mass, assume_a="pos") + state @ sla.solve(
        x_u, state.T, assume_a="pos"
    )
    inf_sup = float(np.sqrt(max(sla.eigvalsh(c, y_w).min(), 0.0)))

    # Kernel of [M A] parameterized by u: f = -M^-1 A u.
    numer = alpha * state.T @ minv_a + obs
    denom = alpha * state.T @ minv_a + x_u
    coercivity = float(sla.eigvalsh(0.5 * (numer + numer.T), 0.5 * (denom + denom.T)).min())

    precond = build_exact_preconditioner(b, alpha)
    eigs = sla.eigvalsh(kkt.matrix.toarray(), precond.inv_matrix.toarray())
    operator_norm = float(np.abs(eigs).max())
    return SaddleStability(inf_sup=inf_sup, kernel_coercivity=coercivity, operator_norm=operator_norm)
