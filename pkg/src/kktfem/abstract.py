"""Generic operator triples and randomized verification of the spectral bounds.

The saddle-point structure only needs three finite-dimensional operators:
an SPD mass M on the control/multiplier space, a state map A into its dual,
and a symmetric PSD observation form K = T'T.  Everything proved for the
concrete problem holds at this level: with the weighted norms

    |f|^2 = alpha*f'Mf,  |u|^2 = alpha*u'A'M^-1Au + u'Ku,  |w|^2 = w'Mw/alpha

the block system is uniformly bounded and invertible, and the spectrum of
the Riesz-preconditioned operator stays inside the three fixed intervals of
:mod:`kktfem.spectral` for every alpha.  This module measures those
statements on small dense instances, including randomly generated ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


@dataclass(frozen=True)
class OperatorTriple:
    """Dense (M, K, A) triple with a regularization weight.

    M acts on the control/multiplier space (dimension n_w), A maps the state
    space (dimension n_u) into the dual of the control space, K is the
    observation form on the state space.  When the factor T with K = T'T is
    known it can be attached as ``obs_factor``; eigenvalue computations then
    use a scaling-robust factored path.
    """

    mass: np.ndarray
    obs: np.ndarray
    state: np.ndarray
    alpha: float
    obs_factor: np.ndarray | None = None

    @property
    def n_w(self) -> int:
        return self.mass.shape[0]

    @property
    def n_u(self) -> int:
        return self.state.shape[1]

    def normal_state_form(self) -> np.ndarray:
        """R = A' M^-1 A, the squared-operator form in the dual mass norm."""
        return self.state.T @ sla.solve(self.mass, self.state, assume_a="pos")

    def system_matrix(self) -> np.ndarray:
        n_w, n_u = self.n_w, self.n_u
        top = np.hstack([self.alpha * self.mass, np.zeros((n_w, n_u)), self.mass])
        mid = np.hstack([np.zeros((n_u, n_w)), self.obs, self.state.T])
        bot = np.hstack([self.mass, self.state, np.zeros((n_w, n_w))])
        return np.vstack([top, mid, bot])

    def riesz_inverse(self) -> np.ndarray:
        """Block diagonal of the weighted inner products (the inverse preconditioner)."""
        return sla.block_diag(
            self.alpha * self.mass,
            self.alpha * self.normal_state_form() + self.obs,
            self.mass / self.alpha,
        )


@dataclass(frozen=True)
class AssumptionReport:
    ok: bool
    failures: tuple[str, ...]
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


def validate_assumptions(triple: OperatorTriple, tol: float = 1e-10) -> AssumptionReport:
    """Spectral checks of the well-posedness assumptions.

    Checks that M is symmetric positive definite, K symmetric positive
    semi-definite, K + A'M^-1A positive definite, and that the observation
    form is definite on the kernel of A (in finite dimensions the
    closed-range condition reduces to reporting the smallest nonzero
    singular value of A).
    """
    failures = []
    details = {}
    m, k, a = triple.mass, triple.obs, triple.state

    if not np.array_equal(m, m.T):
        failures.append("mass operator is not symmetric")
    mass_min = float(sla.eigvalsh(0.5 * (m + m.T)).min())
    details["mass_min_eig"] = mass_min
    if mass_min <= 0:
        failures.append("mass operator is not positive definite")

    if not np.allclose(k, k.T, atol=tol, rtol=0.0):
        failures.append("observation form is not symmetric")
    obs_min = float(sla.eigvalsh(0.5 * (k + k.T)).min())
    details["obs_min_eig"] = obs_min
    scale = max(float(np.abs(k).max()), 1.0)
    if obs_min < -tol * scale:
        failures.append("observation form is not positive semi-definite")

    if mass_min > 0:
        combined = 0.5 * (k + k.T) + triple.normal_state_form()
        combined_min = float(sla.eigvalsh(0.5 * (combined + combined.T)).min())
        details["obs_plus_normal_min_eig"] = combined_min
        if combined_min <= tol * scale:
            failures.append("observation plus squared-state form is not positive definite")

    svals = sla.svd(a, compute_uv=False)
    rank = int(np.sum(svals > tol * max(svals[0], 1.0))) if svals.size else 0
    details["state_min_nonzero_sv"] = float(svals[rank - 1]) if rank else 0.0
    null_dim = triple.n_u - rank
    details["state_null_dim"] = null_dim
    if null_dim > 0:
        _, _, vt = sla.svd(a)
        null_basis = vt[rank:].T
        on_kernel = null_basis.T @ (0.5 * (k + k.T)) @ null_basis
        kernel_min = float(sla.eigvalsh(0.5 * (on_kernel + on_kernel.T)).min())
        details["obs_min_eig_on_state_kernel"] = kernel_min
        if kernel_min <= tol * scale:
            failures.append("observation form is not definite on the kernel of the state map")

    return AssumptionReport(ok=not failures, failures=tuple(failures), details=details)


class DenseBlockSolve:
    """Apply the inverse of a dense SPD block diagonal via Cholesky factors."""

    def __init__(self, blocks):
        self._factors = [sla.cho_factor(b) for b in blocks]
        self._sizes = [b.shape[0] for b in blocks]
        n = sum(self._sizes)
        self.shape = (n, n)

    def __matmul__(self, x):
        out = []
        start = 0
        for fac, size in zip(self._factors, self._sizes):
            out.append(sla.cho_solve(fac, x[start : start + size]))
            start += size
        return np.concatenate(out)

    def matvec(self, x):
        return self @ x


def build_general_preconditioner(triple: OperatorTriple) -> DenseBlockSolve:
    """Riesz-map preconditioner of the weighted norms, as a dense solve."""
    try:
        return DenseBlockSolve(
            [
                triple.alpha * triple.mass,
                triple.alpha * triple.normal_state_form() + triple.obs,
                triple.mass / triple.alpha,
            ]
        )
    except sla.LinAlgError as err:
        raise ValueError(f"preconditioner block is not positive definite: {err}") from err


@dataclass(frozen=True)
class StabilityReport:
    """Measured inf-sup, kernel coercivity and boundedness in weighted norms."""

    inf_sup: float
    kernel_coercivity: float
    boundedness: float


def measure_stability(triple: OperatorTriple) -> StabilityReport:
    """Measure the three stability constants of one triple.

    inf-sup: smallest singular value of the weighted constraint rows [M A];
    coercivity: smallest Rayleigh quotient of diag(alpha*M, K) over the
    kernel of [M A]; boundedness: largest weighted singular value of the
    whole system, i.e. the largest generalized eigenvalue magnitude.
    """
    m, k, a, alpha = triple.mass, triple.obs, triple.state, triple.alpha
    reg = triple.normal_state_form()
    x_f = alpha * m
    x_u = alpha * reg + k
    y_w = m / alpha

    constraint_gram = m @ sla.solve(x_f, m, assume_a="pos") + a @ sla.solve(
        x_u, a.T, assume_a="pos"
    )
    inf_sup = float(np.sqrt(max(sla.eigvalsh(constraint_gram, y_w).min(), 0.0)))

    minv_a = sla.solve(m, a, assume_a="pos")
    numer = alpha * a.T @ minv_a + k
    denom = alpha * a.T @ minv_a + x_u
    coercivity = float(
        sla.eigvalsh(0.5 * (numer + numer.T), 0.5 * (denom + denom.T)).min()
    )

    eigs = sla.eigh(triple.system_matrix(), triple.riesz_inverse(), eigvals_only=True)
    boundedness = float(np.abs(eigs).max())
    return StabilityReport(inf_sup=inf_sup, kernel_coercivity=coercivity, boundedness=boundedness)


def random_instance(seed: int, dims, ker_k_dim: int = 0, alpha: float = 1.0) -> OperatorTriple:
    """Reproducible random triple satisfying all well-posedness assumptions.

    ``dims`` is either a single state-space dimension or a pair
    (state dim, control dim) with control dim >= state dim; the observation
    form is built as T'T with an exactly prescribed kernel dimension.
    """
    if np.isscalar(dims):
        n_u = int(dims)
        n_w = n_u
    else:
        n_u, n_w = map(int, dims)
    if n_u < 1 or n_w < n_u:
        raise ValueError("need control dimension >= state dimension >= 1")
    if not 0 <= ker_k_dim < n_u:
        raise ValueError("observation kernel dimension must be in [0, state dim)")

    rng = np.random.default_rng(seed)
    factor = rng.standard_normal((n_w, n_w))
    mass = factor @ factor.T + np.eye(n_w)
    state = rng.standard_normal((n_w, n_u))
    basis, _ = sla.qr(rng.standard_normal((n_u, n_u)))
    live = basis[:, ker_k_dim:]
    obs_map = rng.standard_normal((n_u - ker_k_dim + 2, n_u - ker_k_dim)) @ live.T
    obs = obs_map.T @ obs_map
    return OperatorTriple(
        mass=mass,
        obs=0.5 * (obs + obs.T),
        state=state,
        alpha=float(alpha),
        obs_factor=obs_map,
    )


def _factored_spectrum(triple: OperatorTriple) -> np.ndarray:
    """Spectrum via explicit whitening of the weighted inner products.

    With L the Cholesky factor of M, S = L^-1 A and F = [T; sqrt(alpha) S],
    the congruence by diag(L'^-1/sqrt(alpha), V Sigma^-1, sqrt(alpha) L'^-1)
    (V, Sigma from the SVD of F) turns the inverse preconditioner into the
    identity exactly, so a standard symmetric eigensolve applies.  Working
    with the factors keeps full accuracy even when alpha is tiny and the
    observation form is singular, where the direct generalized solve loses
    roughly eps/alpha.
    """
    alpha = triple.alpha
    lower = sla.cholesky(triple.mass, lower=True)
    s = sla.solve_triangular(lower, triple.state, lower=True)
    f = np.vstack([triple.obs_factor, np.sqrt(alpha) * s])
    _, sigma, vt = sla.svd(f, full_matrices=False)
    if sigma.size < triple.n_u or sigma[-1] <= 0:
        raise ValueError("observation plus squared-state form is singular")
    w_state = vt.T / sigma  # columns: V Sigma^-1
    g_obs = triple.obs_factor @ w_state
    g_state = s @ w_state
    n_w, n_u = triple.n_w, triple.n_u
    eye = np.eye(n_w)
    c = np.zeros((2 * n_w + n_u, 2 * n_w + n_u))
    c[:n_w, :n_w] = eye
    c[:n_w, n_w + n_u :] = eye
    c[n_w + n_u :, :n_w] = eye
    c[n_w : n_w + n_u, n_w : n_w + n_u] = g_obs.T @ g_obs
    c[n_w : n_w + n_u, n_w + n_u :] = np.sqrt(alpha) * g_state.T
    c[n_w + n_u :, n_w : n_w + n_u] = np.sqrt(alpha) * g_state
    return sla.eigvalsh(0.5 * (c + c.T))


def preconditioned_spectrum(triple: OperatorTriple) -> np.ndarray:
    """All generalized eigenvalues of the preconditioned triple system."""
    if triple.obs_factor is not None:
        return _factored_spectrum(triple)
    from .spectral import dense_generalized_eigs

    return dense_generalized_eigs(triple.system_matrix(), triple.riesz_inverse())
