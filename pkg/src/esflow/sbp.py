"""Diagonal-norm Legendre-Gauss-Lobatto SBP operators and the complementary flux-point grid.

For a polynomial order p there are N = p+1 collocation nodes (the LGL points,
roots of (1-xi^2)*P'_p), a diagonal quadrature P with sum(P) = 2, a stiffness
matrix Q with Q + Q^T = B = diag(-1, 0, ..., 0, 1), and the derivative matrix
D = P^{-1} Q, exact on polynomials up to degree p.  The flux points form a
staggered grid whose spacings are the quadrature weights; on it, D f can be
rewritten as a telescoping difference of interface fluxes, which is what makes
finite-volume style positivity arguments possible on a spectral element.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_ORDER = 12


class InvalidOrderError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class LglOperatorSet:
    """Immutable bundle of 1D operators for one polynomial order."""

    p: int
    nodes: np.ndarray        # (N,) ascending in [-1, 1]
    weights: np.ndarray      # (N,) diagonal of P, positive, sums to 2
    qmat: np.ndarray         # (N, N) stiffness, Q + Q^T = B
    dmat: np.ndarray         # (N, N) derivative, D = P^{-1} Q
    bmat: np.ndarray         # (N, N) boundary matrix diag(-1, 0, ..., 0, 1)
    flux_points: np.ndarray  # (N+1,) staggered grid, spacing = weights
    delta: np.ndarray        # (N, N+1) two-point backward difference
    # Interior telescoping weights for the entropy-conservative flux form:
    # ec_weights[i, l, m] = 2*Q[l, m] if l <= i < m else 0, for flux point i+1.
    ec_weights: np.ndarray = field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return self.p + 1


def _legendre_and_derivative(p: int, x: np.ndarray):
    """P_p(x) and P'_p(x) by the three-term recurrence."""
    pk_m1 = np.ones_like(x)
    if p == 0:
        return pk_m1, np.zeros_like(x)
    pk = x.copy()
    for k in range(1, p):
        pk_p1 = ((2 * k + 1) * x * pk - k * pk_m1) / (k + 1)
        pk_m1, pk = pk, pk_p1
    dpk = p * (x * pk - pk_m1) / (x**2 - 1.0 + 1e-300)
    return pk, dpk


def lgl_nodes_weights(p: int):
    """LGL nodes (roots of (1-x^2) P'_p) and quadrature weights.

    Newton iteration on P'_p with Chebyshev-Gauss-Lobatto initial guesses;
    deterministic and accurate to ~1e-15 for p <= 12.
    """
    n = p + 1
    if p == 1:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    x = -np.cos(np.pi * np.arange(n) / p)
    for _ in range(100):
        pk, dpk = _legendre_and_derivative(p, x[1:-1])
        # P''_p from the Legendre ODE: (1-x^2) P'' = 2x P' - p(p+1) P
        d2pk = (2.0 * x[1:-1] * dpk - p * (p + 1) * pk) / (1.0 - x[1:-1] ** 2)
        dx = dpk / d2pk
        x[1:-1] -= dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    pk, _ = _legendre_and_derivative(p, x)
    w = 2.0 / (p * (p + 1) * pk**2)
    # enforce exact symmetry of the node/weight sets
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


def _lgl_derivative_matrix(p: int, nodes: np.ndarray) -> np.ndarray:
    """Closed-form LGL differentiation matrix."""
    n = p + 1
    pk, _ = _legendre_and_derivative(p, nodes)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                d[i, j] = pk[i] / (pk[j] * (nodes[i] - nodes[j]))
    # negative row sums reproduce the analytic diagonal (-+p(p+1)/4 at the
    # endpoints, 0 inside) while making constants differentiate to exact zero
    for i in range(n):
        d[i, i] = -np.sum(d[i])
    return d


def _ec_weight_tensor(qmat: np.ndarray) -> np.ndarray:
    """W[i, l, m] = 2 Q[l, m] for l <= i < m, else 0 (interior flux point i+1).

    Contracting W with a two-point flux table F[l, m] yields the telescoped
    high-order flux at the interior flux points.
    """
    n = qmat.shape[0]
    w = np.zeros((n - 1, n, n))
    for i in range(n - 1):
        for l in range(i + 1):
            for m in range(i + 1, n):
                w[i, l, m] = 2.0 * qmat[l, m]
    return w


def build_lgl_operators(p: int) -> LglOperatorSet:
    """Construct the order-p operator set; raises InvalidOrderError outside 1..12."""
    if not isinstance(p, (int, np.integer)) or p < 1 or p > MAX_ORDER:
        raise InvalidOrderError(f"polynomial order must be in 1..{MAX_ORDER}, got {p}")
    nodes, weights = lgl_nodes_weights(p)
    dmat = _lgl_derivative_matrix(p, nodes)
    qmat = weights[:, None] * dmat
    n = p + 1
    bmat = np.zeros((n, n))
    bmat[0, 0] = -1.0
    bmat[-1, -1] = 1.0
    flux_points = np.concatenate(([-1.0], -1.0 + np.cumsum(weights)))
    flux_points[-1] = 1.0
    delta = np.zeros((n, n + 1))
    for i in range(n):
        delta[i, i] = -1.0
        delta[i, i + 1] = 1.0
    return LglOperatorSet(
        p=p,
        nodes=nodes,
        weights=weights,
        qmat=qmat,
        dmat=dmat,
        bmat=bmat,
        flux_points=flux_points,
        delta=delta,
        ec_weights=_ec_weight_tensor(qmat),
    )


def apply_derivative(ops: LglOperatorSet, values: np.ndarray, axis: int = -1) -> np.ndarray:
    """D @ values along the given axis."""
    values = np.asarray(values)
    if values.shape[axis] != ops.n_nodes:
        raise DimensionError(
            f"expected {ops.n_nodes} nodal values on axis {axis}, got {values.shape[axis]}"
        )
    moved = np.moveaxis(values, axis, -1)
    out = moved @ ops.dmat.T
    return np.moveaxis(out, -1, axis)


def telescope_divergence(ops: LglOperatorSet, flux_values: np.ndarray, axis: int = -1) -> np.ndarray:
    """P^{-1} Delta applied to a flux-point vector: node i gets (fbar_{i+1}-fbar_i)/P_ii."""
    flux_values = np.asarray(flux_values)
    if flux_values.shape[axis] != ops.n_nodes + 1:
        raise DimensionError(
            f"expected {ops.n_nodes + 1} flux-point values on axis {axis}, "
            f"got {flux_values.shape[axis]}"
        )
    moved = np.moveaxis(flux_values, axis, -1)
    diff = (moved[..., 1:] - moved[..., :-1]) / ops.weights
    return np.moveaxis(diff, -1, axis)
