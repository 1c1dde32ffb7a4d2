"""Structured simplicial background meshes and their topology/geometry."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or len(lo) not in (2, 3):
            raise ValueError("box corners must both be 2D or both be 3D points")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def surface(self) -> float:
        ext = np.subtract(self.hi, self.lo)
        if self.dim == 2:
            return float(2 * ext.sum())
        return float(2 * (ext[0] * ext[1] + ext[1] * ext[2] + ext[0] * ext[2]))

    @classmethod
    def cube(cls, a: float, b: float, dim: int) -> "BoundingBox":
        return cls((a,) * dim, (b,) * dim)


class MeshError(ValueError):
    pass


class Mesh:
    """Conforming simplicial mesh.

    ``cells[c, i]`` is the i-th vertex of cell ``c``; local facet ``i`` of a
    cell is the one opposite to its local vertex ``i``.  Facets are stored
    as sorted vertex tuples with an owner cell (the lower cell index) and a
    neighbour (``-1`` on the mesh boundary).
    """

    def __init__(self, vertices, cells, beta: float | None = None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        self.dim = self.vertices.shape[1]
        if self.cells.shape[1] != self.dim + 1:
            raise MeshError("cells must have dim + 1 vertices")
        self.vertices.setflags(write=False)
        self.cells.setflags(write=False)
        self._build_topology()
        if np.any(self.volumes <= 0):
            bad = int(np.flatnonzero(self.volumes <= 0)[0])
            raise MeshError(f"cell {bad} is degenerate or negatively oriented")
        self.beta = float(self.inradius.min() / self.h_max) if beta is None else beta

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_facets(self) -> int:
        return len(self.facets)

    def _build_topology(self):
        nc, nv = self.cells.shape
        local = np.array([[j for j in range(nv) if j != i] for i in range(nv)])
        all_f = np.sort(self.cells[:, local], axis=-1).reshape(-1, nv - 1)
        facets, first, inverse = np.unique(all_f, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        counts = np.bincount(inverse, minlength=len(facets))
        if counts.max() > 2:
            raise MeshError("non-manifold facet with more than two cells")
        cell_of = np.repeat(np.arange(nc), nv)
        order = np.argsort(inverse, kind="stable")
        facet_cells = np.full((len(facets), 2), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        facet_cells[:, 0] = cell_of[order[starts]]
        two = counts == 2
        facet_cells[two, 1] = cell_of[order[starts[two] + 1]]
        self.facets = facets
        self.facet_cells = facet_cells
        self.cell_facets = inverse.reshape(nc, nv)
        for arr in (self.facets, self.facet_cells, self.cell_facets):
            arr.setflags(write=False)

    @cached_property
    def jacobians(self) -> np.ndarray:
        x = self.vertices[self.cells]
        return np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))

    @cached_property
    def detJ(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    @cached_property
    def volumes(self) -> np.ndarray:
        return self.detJ / factorial(self.dim)

    @cached_property
    def inv_transpose(self) -> np.ndarray:
        return np.transpose(np.linalg.inv(self.jacobians), (0, 2, 1))

    @cached_property
    def diameters(self) -> np.ndarray:
        x = self.vertices[self.cells]
        pairs = list(itertools.combinations(range(self.dim + 1), 2))
        d = [np.linalg.norm(x[:, i] - x[:, j], axis=1) for i, j in pairs]
        return np.max(d, axis=0)

    @cached_property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def facet_areas(self) -> np.ndarray:
        x = self.vertices[self.facets]
        if self.dim == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)

    @cached_property
    def facet_normals(self) -> np.ndarray:
        """Unit normals pointing out of the owner cell."""
        x = self.vertices[self.facets]
        if self.dim == 2:
            t = x[:, 1] - x[:, 0]
            n = np.column_stack([t[:, 1], -t[:, 0]])
        else:
            n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        n /= np.linalg.norm(n, axis=1)[:, None]
        owner = self.facet_cells[:, 0]
        centroid = self.vertices[self.cells[owner]].mean(axis=1)
        flip = np.einsum("fd,fd->f", n, x[:, 0] - centroid) < 0
        n[flip] *= -1
        n.setflags(write=False)
        return n

    @cached_property
    def inradius(self) -> np.ndarray:
        per_cell = self.facet_areas[self.cell_facets].sum(axis=1)
        return self.dim * self.volumes / per_cell

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    @cached_property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] >= 0)

    def cell_neighbors(self) -> np.ndarray:
        """``(ncells, dim + 1)`` array of the cell across each local facet, -1 if none."""
        fc = self.facet_cells[self.cell_facets]
        me = np.arange(self.num_cells)[:, None]
        return np.where(fc[..., 0] == me, fc[..., 1], fc[..., 0])

    def affine_map(self, cell: int):
        """Return ``(J, J^{-T}, volume)`` of the map from the reference simplex to ``cell``."""
        J = self.jacobians[cell]
        det = np.linalg.det(J)
        if abs(det) <= 1e-300:
            raise MeshError(f"cell {cell} is degenerate")
        return J, np.linalg.inv(J).T, abs(det) / factorial(self.dim)

    def to_physical(self, cells, ref_points) -> np.ndarray:
        """Map reference points to physical points, shape ``(ncells, npts, dim)``."""
        cells = np.asarray(cells)
        x0 = self.vertices[self.cells[cells, 0]]
        return x0[:, None, :] + np.einsum("cij,pj->cpi", self.jacobians[cells], ref_points)

    def to_reference(self, cell: int, points) -> np.ndarray:
        x0 = self.vertices[self.cells[cell, 0]]
        return np.linalg.solve(self.jacobians[cell], (np.atleast_2d(points) - x0).T).T

    def facet_local_vertices(self, facet_ids, cells) -> np.ndarray:
        """Cell-local indices of each facet vertex (facet vertex order preserved)."""
        fv = self.facets[np.asarray(facet_ids)]
        cv = self.cells[np.asarray(cells)]
        match = fv[:, :, None] == cv[:, None, :]
        if not np.all(match.any(axis=2)):
            raise MeshError("facet is not a facet of the given cell")
        return match.argmax(axis=2)

    def write_text(self, path) -> None:
        """Plain-text dump (vertices, then cells); for debugging only."""
        with open(path, "w") as fh:
            fh.write(f"{self.num_vertices} {self.dim}\n")
            for v in self.vertices:
                fh.write(" ".join(repr(float(c)) for c in v) + "\n")
            fh.write(f"{self.num_cells} {self.dim + 1}\n")
            for c in self.cells:
                fh.write(" ".join(str(int(i)) for i in c) + "\n")


def _kuhn_offsets(dim: int):
    """Vertex offsets of the Kuhn simplices of the unit cube."""
    out = []
    for perm in itertools.permutations(range(dim)):
        path = [np.zeros(dim, dtype=np.int64)]
        for axis in perm:
            nxt = path[-1].copy()
            nxt[axis] = 1
            path.append(nxt)
        out.append(np.array(path))
    return out


def build_background_mesh(box: BoundingBox, n: int) -> Mesh:
    """Uniform grid of ``n`` subdivisions per axis, split into simplices.

    In 2D each square is cut along its lower-left to upper-right diagonal;
    in 3D each cube is split into the 6 Kuhn tetrahedra sharing the main
    diagonal.  Vertices and cells are numbered lexicographically with the
    x index running fastest.
    """
    if int(n) != n or n < 1:
        raise MeshError(f"need n >= 1 subdivisions, got {n}")
    n = int(n)
    dim = box.dim
    lo, hi = np.array(box.lo), np.array(box.hi)
    axes = [lo[d] + (hi[d] - lo[d]) * np.arange(n + 1) / n for d in range(dim)]
    grid = np.meshgrid(*axes, indexing="ij")
    # x fastest: reverse axis order in ravel
    vertices = np.column_stack([g.transpose().ravel() for g in grid])
    strides = (n + 1) ** np.arange(dim)

    if dim == 2:
        local = [np.array([[0, 0], [1, 0], [1, 1]]), np.array([[0, 0], [1, 1], [0, 1]])]
    else:
        local = _kuhn_offsets(3)
    corners = np.array(list(itertools.product(range(n), repeat=dim)))[:, ::-1]  # x fastest
    cells = []
    for c in corners:
        for off in local:
            cells.append(((c + off) @ strides).tolist())
    cells = np.array(cells, dtype=np.int64)

    # fix orientation so that every cell has positive signed volume
    x = vertices[cells]
    det = np.linalg.det(np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1)))
    neg = det < 0
    cells[neg, 1], cells[neg, 2] = cells[neg, 2].copy(), cells[neg, 1].copy()
    return Mesh(vertices, cells)
