"""Reference-cell shape functions and quadrature.

Two finite element families are used, both on the reference square
[0, 1] x [0, 1]:

* a C1 bicubic Hermite rectangle for the state space, with four degrees
  of freedom per vertex (value, d/dx, d/dy, d2/dxdy), and
* a discontinuous bicubic Lagrange element on equispaced nodes for the
  control and multiplier spaces, with 16 cell-local degrees of freedom.

All tables here are unscaled: on a physical cell of width ``h`` the
Hermite basis function attached to a derivative degree of freedom picks
up a factor ``h**p`` (``p`` = number of differentiations in the DOF
functional), and every evaluated derivative divides by ``h`` per order.
Callers apply those powers; see :data:`BFS_DOF_H_POWER`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss

# Local vertex order on a cell: SW, SE, NW, NE (lexicographic in (y, x)).
VERTEX_OFFSETS = ((0, 0), (1, 0), (0, 1), (1, 1))

# Per-vertex DOF components: value, d/dx, d/dy, d2/dxdy.
COMP_DERIV = ((0, 0), (1, 0), (0, 1), (1, 1))

# h-power attached to each of the 16 local Hermite DOFs (vertex-major order).
BFS_DOF_H_POWER = np.array([cx + cy for _ in VERTEX_OFFSETS for (cx, cy) in COMP_DERIV])

# Cubic Hermite basis on [0, 1]: value/derivative interpolants at both ends,
# ordered (value@0, deriv@0, value@1, deriv@1).
_HERMITE = (
    Polynomial([1.0, 0.0, -3.0, 2.0]),
    Polynomial([0.0, 1.0, -2.0, 1.0]),
    Polynomial([0.0, 0.0, 3.0, -2.0]),
    Polynomial([0.0, 0.0, -1.0, 1.0]),
)

# Nodes of the discontinuous cubic Lagrange basis.
DG_NODES_1D = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])


def _lagrange_polys(nodes):
    polys = []
    for j, xj in enumerate(nodes):
        p = Polynomial([1.0])
        for m, xm in enumerate(nodes):
            if m != j:
                p *= Polynomial([-xm, 1.0]) / (xj - xm)
        polys.append(p)
    return tuple(polys)


_LAGRANGE = _lagrange_polys(DG_NODES_1D)


@dataclass(frozen=True)
class QuadratureRule:
    """1-D Gauss-Legendre rule on [0, 1], exact through ``order``."""

    points: np.ndarray
    weights: np.ndarray
    order: int


def gauss_legendre_01(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule mapped to [0, 1]."""
    x, w = leggauss(n)
    return QuadratureRule(points=0.5 * (x + 1.0), weights=0.5 * w, order=2 * n - 1)


def _eval_family(polys, t, deriv):
    t = np.asarray(t, dtype=float)
    out = np.empty((len(polys), t.size))
    for k, p in enumerate(polys):
        out[k] = p.deriv(deriv)(t.ravel()) if deriv else p(t.ravel())
    return out


def hermite_values(t, deriv: int = 0) -> np.ndarray:
    """(4, n) table of the cubic Hermite basis (or a derivative) at ``t``."""
    return _eval_family(_HERMITE, t, deriv)


def lagrange_values(t, deriv: int = 0) -> np.ndarray:
    """(4, n) table of the equispaced cubic Lagrange basis at ``t``."""
    return _eval_family(_LAGRANGE, t, deriv)


def bfs_basis_2d(xi, eta, dx: int = 0, dy: int = 0) -> np.ndarray:
    """Evaluate the 16 unscaled Hermite tensor basis functions.

    Parameters
    ----------
    xi, eta : array_like
        Matching 1-D arrays of reference coordinates.
    dx, dy : int
        Derivative orders in each direction.

    Returns
    -------
    (16, n) array in vertex-major DOF order.
    """
    xi = np.asarray(xi, dtype=float).ravel()
    eta = np.asarray(eta, dtype=float).ravel()
    hx = hermite_values(xi, dx)
    hy = hermite_values(eta, dy)
    out = np.empty((16, xi.size))
    for k in range(16):
        v, c = divmod(k, 4)
        a, b = VERTEX_OFFSETS[v]
        cx, cy = COMP_DERIV[c]
        out[k] = hx[2 * a + cx] * hy[2 * b + cy]
    return out


def dg_basis_2d(xi, eta, dx: int = 0, dy: int = 0) -> np.ndarray:
    """Evaluate the 16 tensor Lagrange basis functions, node-major order."""
    xi = np.asarray(xi, dtype=float).ravel()
    eta = np.asarray(eta, dtype=float).ravel()
    lx = lagrange_values(xi, dx)
    ly = lagrange_values(eta, dy)
    out = np.empty((16, xi.size))
    for j in range(16):
        jy, jx = divmod(j, 4)
        out[j] = lx[jx] * ly[jy]
    return out
