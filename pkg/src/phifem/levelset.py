"""Discrete level-sets and the active/cut/inside decomposition of the mesh."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import lagrange_basis, lagrange_dofmap, lattice_points
from .mesh import Mesh

EXCLUDED, INSIDE, CUT = 0, 1, 2
ZERO_TOL = 1e-14
SAMPLING_RULES = ("lattice", "vertices")


class DomainNotCapturedError(ValueError):
    pass


@dataclass
class LevelSetSpec:
    """Analytic level-set: the domain is ``{phi < 0}``.

    ``func`` and ``grad`` take points of shape ``(..., dim)`` and return
    arrays of shape ``(...)`` and ``(..., dim)`` respectively.
    """

    func: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    degree: int = 2

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("level-set degree must be >= 1")


class LevelSetField:
    """Continuous degree-``l`` Lagrange interpolant of a level-set on a mesh."""

    def __init__(self, mesh: Mesh, degree: int, cell_dofs, values, coords=None):
        self.mesh = mesh
        self.degree = degree
        self.basis = lagrange_basis(mesh.dim, degree)
        self.cell_dofs = cell_dofs
        self.values = np.asarray(values, dtype=float)
        self.coords = coords

    def coefficients(self, cells) -> np.ndarray:
        return self.values[self.cell_dofs[np.asarray(cells)]]

    def eval(self, cells, ref_points) -> np.ndarray:
        """phi_h at reference points of the given cells, shape ``(ncells, npts)``."""
        return self.coefficients(cells) @ self.basis.values(ref_points).T

    def grad(self, cells, ref_points) -> np.ndarray:
        """Physical gradient of phi_h, shape ``(ncells, npts, dim)``."""
        cells = np.asarray(cells)
        gref = self.basis.gradients(ref_points)
        invT = self.mesh.inv_transpose[cells]
        return np.einsum("cb,pbk,cjk->cpj", self.coefficients(cells), gref, invT)


def interpolate_levelset(spec: LevelSetSpec, mesh: Mesh) -> LevelSetField:
    """Nodal interpolation of ``spec.func`` on the whole background mesh."""
    cell_dofs, ndofs, coords = lagrange_dofmap(mesh.cells, spec.degree, mesh.vertices)
    values = np.asarray(spec.func(coords), dtype=float).reshape(ndofs)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ValueError(f"level-set is not finite at node {int(bad[0])} {coords[bad[0]].tolist()}")
    return LevelSetField(mesh, spec.degree, cell_dofs, values, coords)


def sampling_points(dim: int, degree: int, rule: str = "lattice") -> np.ndarray:
    """Reference points where the sign of phi_h is sampled.

    ``"lattice"``: Lagrange nodes of degree ``degree`` plus the order
    ``max(2l, 4)`` lattice.  ``"vertices"``: cell vertices only.
    """
    if rule == "vertices":
        return lattice_points(dim, 1)
    if rule != "lattice":
        raise ValueError(f"unknown sampling rule {rule!r}; expected one of {SAMPLING_RULES}")
    pts = np.vstack([lagrange_basis(dim, degree).nodes, lattice_points(dim, max(2 * degree, 4))])
    return np.unique(np.round(pts, 14), axis=0)


@dataclass
class DomainDecomposition:
    """Cell classification of the background mesh.

    Attributes
    ----------
    status : ndarray of {EXCLUDED, INSIDE, CUT} per background cell
    active, cut, inside : sorted background cell ids
    boundary_facets : facets of the active mesh boundary
    boundary_cells : the active (necessarily cut) cell owning each boundary facet
    gamma_facets : facets separating an inside cell from a cut cell
    active_index, cut_index : background cell -> position in ``active``/``cut`` (-1 if absent)
    """

    mesh: Mesh
    status: np.ndarray
    boundary_facets: np.ndarray
    boundary_cells: np.ndarray
    gamma_facets: np.ndarray
    active: np.ndarray = field(init=False)
    cut: np.ndarray = field(init=False)
    inside: np.ndarray = field(init=False)
    active_index: np.ndarray = field(init=False)
    cut_index: np.ndarray = field(init=False)

    def __post_init__(self):
        self.active = np.flatnonzero(self.status != EXCLUDED)
        self.cut = np.flatnonzero(self.status == CUT)
        self.inside = np.flatnonzero(self.status == INSIDE)
        nc = self.mesh.num_cells
        self.active_index = np.full(nc, -1, dtype=np.int64)
        self.active_index[self.active] = np.arange(len(self.active))
        self.cut_index = np.full(nc, -1, dtype=np.int64)
        self.cut_index[self.cut] = np.arange(len(self.cut))

    @property
    def active_to_cut(self) -> np.ndarray:
        return self.cut_index[self.active]

    def counts(self) -> dict:
        return {
            "inside": int(len(self.inside)),
            "cut": int(len(self.cut)),
            "excluded": int(self.mesh.num_cells - len(self.active)),
        }


def classify_cells(field: LevelSetField, sampling: str = "lattice") -> DomainDecomposition:
    """Split the background cells into inside / cut / excluded.

    A cell is active when phi_h is negative at some sampling point.  An
    active cell is cut when phi_h is also non-negative somewhere on it, or
    when it owns a facet of the active-mesh boundary (promotion).
    ``sampling="vertices"`` decides by vertex signs alone, which can miss
    cells where phi_h changes sign between vertices.
    """
    mesh = field.mesh
    pts = sampling_points(mesh.dim, field.degree, sampling)
    samples = field.eval(np.arange(mesh.num_cells), pts)
    tol = ZERO_TOL * mesh.diameters[:, None]
    negative = samples < -tol
    active = negative.any(axis=1)
    if not active.any():
        raise DomainNotCapturedError("domain not captured by mesh: phi_h >= 0 everywhere")
    cut = active & (~negative).any(axis=1)

    fc = mesh.facet_cells
    a0 = active[fc[:, 0]]
    a1 = np.where(fc[:, 1] >= 0, active[np.maximum(fc[:, 1], 0)], False)
    bnd = np.flatnonzero(a0 != a1)
    bnd_cells = np.where(a0[bnd], fc[bnd, 0], fc[bnd, 1])
    cut[bnd_cells] = True

    status = np.full(mesh.num_cells, EXCLUDED, dtype=np.int8)
    status[active] = INSIDE
    status[cut] = CUT

    interior = mesh.interior_facets
    s0, s1 = status[fc[interior, 0]], status[fc[interior, 1]]
    gamma = interior[((s0 == INSIDE) & (s1 == CUT)) | ((s0 == CUT) & (s1 == INSIDE))]
    return DomainDecomposition(mesh, status, bnd, bnd_cells, gamma)


@dataclass
class PatchReport:
    max_size: int
    max_path: int
    distances: dict
    unreachable: list
    passed: bool

    def to_dict(self) -> dict:
        return {
            "max_size": self.max_size,
            "max_path": self.max_path,
            "num_failing": len(self.unreachable),
            "failing_cells": [int(c) for c in self.unreachable],
            "passed": self.passed,
        }


def check_patch_condition(decomp: DomainDecomposition, max_size: int = 4) -> PatchReport:
    """Facet-path distance from every cut cell to the nearest inside cell.

    The path runs through cut cells only.  Cut cells farther than
    ``max_size`` steps (or not connected at all) are reported as failing.
    """
    mesh = decomp.mesh
    nbrs = mesh.cell_neighbors()
    status = decomp.status
    dist = {}
    queue = deque()
    for c in decomp.cut:
        if np.any(status[nbrs[c][nbrs[c] >= 0]] == INSIDE):
            dist[int(c)] = 1
            queue.append(int(c))
    while queue:
        c = queue.popleft()
        for nb in nbrs[c]:
            if nb >= 0 and status[nb] == CUT and int(nb) not in dist:
                dist[int(nb)] = dist[c] + 1
                queue.append(int(nb))
    failing = [int(c) for c in decomp.cut if dist.get(int(c), max_size + 1) > max_size]
    max_path = max(dist.values()) if dist else -1
    return PatchReport(max_size, max_path, dist, failing, not failing)


def min_gradient_norm(field: LevelSetField, decomp: DomainDecomposition) -> float:
    """Smallest ``|grad phi_h|`` over the sampling points of the cut cells."""
    if len(decomp.cut) == 0:
        return float("nan")
    pts = sampling_points(field.mesh.dim, field.degree)
    g = field.grad(decomp.cut, pts)
    return float(np.linalg.norm(g, axis=-1).min())


def diagnostics(field: LevelSetField, decomp: DomainDecomposition, max_size: int = 4) -> dict:
    """JSON-serialisable summary of the decomposition."""
    out = decomp.counts()
    out["min_grad_phi_h"] = min_gradient_norm(field, decomp)
    out["patch"] = check_patch_condition(decomp, max_size).to_dict()
    return out
