"""Cartesian tensor-product meshes of LGL elements.

Element spacings are per-direction 1D arrays (optionally jittered), so the
metric Jacobian J = prod_d h_d/2 is constant per element and the contravariant
scale factors ahat_d = J * (2/h_d) are single-valued at element interfaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PERIODIC = "periodic"
DIRICHLET = "dirichlet"


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    dim: int
    p: int
    edges: tuple           # per direction: (n_d+1,) element edge coordinates
    bc: tuple              # per direction: "periodic" | "dirichlet"

    @property
    def counts(self):
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def n_elem(self) -> int:
        return int(np.prod(self.counts))

    @property
    def widths(self):
        return tuple(np.diff(e) for e in self.edges)

    def element_widths(self) -> np.ndarray:
        """Per-element widths, shape (n_elem, dim), C-order element indexing."""
        grids = np.meshgrid(*self.widths, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=-1)

    def jacobians(self) -> np.ndarray:
        """Metric Jacobian per element, shape (n_elem,)."""
        return np.prod(self.element_widths() / 2.0, axis=1)

    def ahat(self) -> np.ndarray:
        """Contravariant factors per element, shape (n_elem, dim)."""
        h = self.element_widths() / 2.0
        jac = np.prod(h, axis=1, keepdims=True)
        return jac / h

    def node_coords(self, ops) -> np.ndarray:
        """Physical node coordinates, shape (dim, n_elem) + (p+1,)*dim."""
        xi = ops.nodes
        n = ops.n_nodes
        out = np.empty((self.dim, self.n_elem) + (n,) * self.dim)
        hw = self.element_widths()
        lows = np.meshgrid(*[e[:-1] for e in self.edges], indexing="ij")
        lows = np.stack([g.reshape(-1) for g in lows], axis=-1)
        for d in range(self.dim):
            shape = (1,) * d + (n,) + (1,) * (self.dim - 1 - d)
            line = xi.reshape(shape)
            centers = lows[:, d] + 0.5 * hw[:, d]
            x = centers.reshape((-1,) + (1,) * self.dim) \
                + 0.5 * hw[:, d].reshape((-1,) + (1,) * self.dim) * line
            out[d] = x
        return out

    def boundary_mask(self, d: int, side: str) -> np.ndarray:
        """Boolean mask over flat elements touching the domain boundary."""
        idx = np.unravel_index(np.arange(self.n_elem), self.counts)[d]
        return idx == (0 if side == "left" else self.counts[d] - 1)


def roll_elems(mesh: Mesh, arr: np.ndarray, elem_axis: int, d: int, shift: int) -> np.ndarray:
    """Roll an array along the element grid in direction d (periodic shift)."""
    shape = arr.shape
    grid_shape = shape[:elem_axis] + mesh.counts + shape[elem_axis + 1:]
    rolled = np.roll(arr.reshape(grid_shape), shift, axis=elem_axis + d)
    return rolled.reshape(shape)


def make_mesh(dim: int, n_elems, extents, p: int, bc=PERIODIC,
              jitter: float = 0.0, seed=None) -> Mesh:
    """Build a tensor-product mesh.

    n_elems: int or per-direction sequence; extents: (lo, hi) or per-direction
    list of pairs; bc: one tag or per-direction tags; jitter perturbs interior
    element edges by a uniform fraction of the local spacing (seeded).
    """
    if dim < 1 or dim > 3:
        raise MeshError(f"dimension must be 1..3, got {dim}")
    if np.isscalar(n_elems):
        n_elems = (int(n_elems),) * dim
    if np.isscalar(extents[0]):
        extents = (tuple(extents),) * dim
    if isinstance(bc, str):
        bc = (bc,) * dim
    if any(n < 1 for n in n_elems):
        raise MeshError("need at least one element per direction")
    rng = np.random.default_rng(seed)
    edges = []
    for d in range(dim):
        lo, hi = extents[d]
        e = np.linspace(lo, hi, n_elems[d] + 1)
        if jitter > 0.0 and n_elems[d] > 1:
            spacing = (hi - lo) / n_elems[d]
            e[1:-1] += rng.uniform(-jitter, jitter, n_elems[d] - 1) * spacing
        if np.any(np.diff(e) <= 0):
            raise MeshError("jitter produced a non-monotone edge set")
        edges.append(e)
    return Mesh(dim=dim, p=p, edges=tuple(edges), bc=tuple(bc))
