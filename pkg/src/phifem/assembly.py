"""Assembly of the phi-FEM block system for Neumann and Robin problems.

Unknowns are ``(u_h, y_h, p_h)``: a continuous ``P_k`` field on the active
mesh, a continuous vector ``P_k`` field on the cut cells approximating
``-grad u``, and a discontinuous ``P_{k-1}`` multiplier on the cut cells.
The global vector stores the V block first, then Z (node-major, components
interleaved), then Q (cell by cell).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fem import facet_points_in_cell, facet_quadrature, lagrange_basis, lagrange_dofmap, quadrature, reference_measure
from .levelset import DomainDecomposition, LevelSetField

MATRIX_TERMS = ("stiffness", "mass", "boundary", "div", "grad", "penalty", "ghost")
RHS_TERMS = ("rhs_source", "rhs_div", "rhs_bc")
TERMS = MATRIX_TERMS + RHS_TERMS

# cut cells are processed in chunks to bound the size of the point-wise operators
CHUNK = 2048


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class NeumannHomogeneous:
    pass


@dataclass(frozen=True)
class Neumann:
    """``du/dn = g`` on the boundary; ``g`` is an extension to the cut strip."""

    g: Callable


@dataclass(frozen=True)
class Robin:
    """``du/dn + alpha u = g`` on the boundary."""

    alpha: float
    g: Callable


@dataclass
class PhiFemParams:
    k: int = 1
    l: int = 3
    gamma_div: float = 10.0
    gamma_u: float = 10.0
    gamma_p: float = 10.0
    sigma: float = 0.01
    bc: object = field(default_factory=NeumannHomogeneous)

    def __post_init__(self):
        for name in ("gamma_div", "gamma_u", "gamma_p", "sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.l < self.k + 1:
            warnings.warn(f"level-set degree l={self.l} < k+1={self.k + 1}; convergence theory needs l >= k+1",
                          stacklevel=2)
        if not isinstance(self.bc, (NeumannHomogeneous, Neumann, Robin)):
            raise TypeError(f"unknown boundary condition {self.bc!r}")


@dataclass
class ProblemData:
    f: Callable
    u: Callable | None = None
    grad_u: Callable | None = None


class DofLayout:
    """Block DOF numbering of ``V_h x Z_h x Q_h``."""

    def __init__(self, decomp: DomainDecomposition, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(decomp.cut) == 0:
            raise AssemblyError("no cut cells: the auxiliary fields have no support")
        mesh = decomp.mesh
        self.decomp = decomp
        self.k = k
        self.dim = mesh.dim
        self.v_cell_dofs, self.n_v, self.v_coords = lagrange_dofmap(mesh.cells[decomp.active], k, mesh.vertices)
        self.z_cell_nodes, self.n_z_nodes, self.z_coords = lagrange_dofmap(mesh.cells[decomp.cut], k, mesh.vertices)
        self.q_local = len(lagrange_basis(mesh.dim, k - 1))
        self.n_z = self.dim * self.n_z_nodes
        self.n_q = self.q_local * len(decomp.cut)
        self.offsets = {"V": 0, "Z": self.n_v, "Q": self.n_v + self.n_z}

    @property
    def size(self) -> int:
        return self.n_v + self.n_z + self.n_q

    def block(self, name: str) -> slice:
        start = self.offsets[name]
        length = {"V": self.n_v, "Z": self.n_z, "Q": self.n_q}[name]
        return slice(start, start + length)

    def v_dofs(self, cells) -> np.ndarray:
        """Global V dofs of background cells (which must be active)."""
        idx = self.decomp.active_index[np.asarray(cells)]
        if np.any(idx < 0):
            raise AssemblyError("V dofs requested on a non-active cell")
        return self.v_cell_dofs[idx]

    def z_dofs(self, cells) -> np.ndarray:
        """Global Z dofs, ordered node-major with interleaved components."""
        idx = self.decomp.cut_index[np.asarray(cells)]
        if np.any(idx < 0):
            raise AssemblyError("Z dofs requested on a non-cut cell")
        nodes = self.z_cell_nodes[idx]
        d = self.dim
        g = self.offsets["Z"] + d * nodes[:, :, None] + np.arange(d)
        return g.reshape(len(idx), -1)

    def q_dofs(self, cells) -> np.ndarray:
        idx = self.decomp.cut_index[np.asarray(cells)]
        if np.any(idx < 0):
            raise AssemblyError("Q dofs requested on a non-cut cell")
        return self.offsets["Q"] + self.q_local * idx[:, None] + np.arange(self.q_local)

    def split(self, x):
        """Return ``(u, y, p)`` coefficient arrays; ``y`` has shape ``(n_z_nodes, dim)``."""
        x = np.asarray(x)
        return x[self.block("V")], x[self.block("Z")].reshape(-1, self.dim), x[self.block("Q")]

    def sizes(self) -> dict:
        return {"V": self.n_v, "Z": self.n_z, "Q": self.n_q}


def build_dof_layout(decomp: DomainDecomposition, k: int) -> DofLayout:
    return DofLayout(decomp, k)


def interpolate_v(layout: DofLayout, func) -> np.ndarray:
    """Nodal interpolant of ``func`` in the V block."""
    return np.asarray(func(layout.v_coords), dtype=float).reshape(layout.n_v)


@dataclass
class BlockSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: DofLayout

    def write_matrix_market(self, matrix_path, rhs_path=None) -> None:
        scipy.io.mmwrite(matrix_path, self.matrix)
        if rhs_path is not None:
            scipy.io.mmwrite(rhs_path, self.rhs[:, None])


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.rhs_idx, self.rhs_vals = [], []

    def add_matrix(self, rdofs, cdofs, elem):
        r = np.broadcast_to(rdofs[:, :, None], elem.shape)
        c = np.broadcast_to(cdofs[:, None, :], elem.shape)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(elem.ravel())

    def add_rhs(self, dofs, vec):
        self.rhs_idx.append(dofs.ravel())
        self.rhs_vals.append(vec.ravel())

    def build(self, layout: DofLayout) -> BlockSystem:
        n = layout.size
        if self.rows:
            rows, cols, vals = (np.concatenate(a) for a in (self.rows, self.cols, self.vals))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        rhs = np.zeros(n)
        if self.rhs_idx:
            np.add.at(rhs, np.concatenate(self.rhs_idx), np.concatenate(self.rhs_vals))
        return BlockSystem(mat, rhs, layout)


def _check_finite(values, cells, term):
    bad = ~np.isfinite(values)
    if bad.any():
        c = np.argwhere(bad)[0][0]
        raise AssemblyError(f"non-finite integrand in term '{term}' on cell {int(cells[c])}")


def _chunks(cells):
    for start in range(0, len(cells), CHUNK):
        yield cells[start:start + CHUNK]


class _Assembler:
    def __init__(self, decomp, field_, params, data, layout):
        self.decomp = decomp
        self.mesh = decomp.mesh
        self.phi = field_
        self.params = params
        self.data = data
        self.layout = layout
        self.h = self.mesh.h_max
        self.dim = self.mesh.dim
        self.vb = lagrange_basis(self.dim, params.k)
        self.qb = lagrange_basis(self.dim, params.k - 1)
        self.cell_degree = 2 * (params.k + params.l)

    # -- helpers -----------------------------------------------------------------
    def _phys_grads(self, cells, gref):
        return np.einsum("pbk,cjk->cpbj", gref, self.mesh.inv_transpose[cells])

    def _cell_weights(self, cells, rule):
        return np.abs(self.mesh.detJ[cells])[:, None] * rule.weights[None, :]

    def _cut_operators(self, cells, rule):
        """Point-wise least-squares residual operators on cut cells.

        Each returned array has shape ``(ncells, nqp, nloc)`` with the local
        layout ``[u (nk) | y (nk*dim, interleaved) | p (nq)]``.
        """
        p = self.params
        d, nk, nq = self.dim, len(self.vb), len(self.qb)
        nloc = nk + d * nk + nq
        N = self.vb.values(rule.points)
        G = self._phys_grads(cells, self.vb.gradients(rule.points))
        P = self.qb.values(rule.points)
        C, Q = len(cells), len(rule)
        ys = slice(nk, nk + d * nk)

        div = np.zeros((C, Q, nloc))
        div[:, :, :nk] = N
        div[:, :, ys] = G.reshape(C, Q, nk * d)

        grads = []
        for j in range(d):
            r = np.zeros((C, Q, nloc))
            r[:, :, :nk] = G[:, :, :, j]
            r[:, :, nk + j:nk + d * nk:d] = N
            grads.append(r)

        phi = self.phi.eval(cells, rule.points)
        gphi = self.phi.grad(cells, rule.points)
        pen = np.zeros((C, Q, nloc))
        pen[:, :, ys] = (N[None, :, :, None] * gphi[:, :, None, :]).reshape(C, Q, nk * d)
        pen[:, :, nk + d * nk:] = (phi / self.h)[:, :, None] * P[None]
        if isinstance(p.bc, Robin):
            gnorm = np.linalg.norm(gphi, axis=-1)
            pen[:, :, :nk] = -p.bc.alpha * gnorm[:, :, None] * N[None]
        return div, grads, pen, phi, gphi

    def _cut_dofs(self, cells):
        lay = self.layout
        return np.hstack([lay.v_dofs(cells), lay.z_dofs(cells), lay.q_dofs(cells)])

    # -- terms ---------------------------------------------------------------------
    def active_cell_term(self, out, term):
        k = self.params.k
        cells = self.decomp.active
        if term == "rhs_source":
            rule = quadrature(self.dim, self.cell_degree)
        else:
            rule = quadrature(self.dim, 2 * k)
        w = self._cell_weights(cells, rule)
        N = self.vb.values(rule.points)
        dofs = self.layout.v_dofs(cells)
        if term == "stiffness":
            G = self._phys_grads(cells, self.vb.gradients(rule.points))
            out.add_matrix(dofs, dofs, np.einsum("cq,cqid,cqjd->cij", w, G, G))
        elif term == "mass":
            out.add_matrix(dofs, dofs, np.einsum("cq,qi,qj->cij", w, N, N))
        else:
            f = np.asarray(self.data.f(self.mesh.to_physical(cells, rule.points)), dtype=float)
            _check_finite(f, cells, term)
            out.add_rhs(dofs, np.einsum("cq,cq,qi->ci", w, f, N))

    def cut_cell_term(self, out, term):
        p = self.params
        rule = quadrature(self.dim, self.cell_degree)
        for cells in _chunks(self.decomp.cut):
            w = self._cell_weights(cells, rule)
            div, grads, pen, phi, gphi = self._cut_operators(cells, rule)
            dofs = self._cut_dofs(cells)
            if term == "div":
                out.add_matrix(dofs, dofs, p.gamma_div * np.einsum("cq,cqa,cqb->cab", w, div, div))
            elif term == "grad":
                elem = sum(np.einsum("cq,cqa,cqb->cab", w, r, r) for r in grads)
                out.add_matrix(dofs, dofs, p.gamma_u * elem)
            elif term == "penalty":
                out.add_matrix(dofs, dofs, p.gamma_p / self.h ** 2 * np.einsum("cq,cqa,cqb->cab", w, pen, pen))
            elif term == "rhs_div":
                f = np.asarray(self.data.f(self.mesh.to_physical(cells, rule.points)), dtype=float)
                _check_finite(f, cells, term)
                out.add_rhs(dofs, p.gamma_div * np.einsum("cq,cq,cqa->ca", w, f, div))
            elif term == "rhs_bc":
                if isinstance(p.bc, NeumannHomogeneous):
                    return
                g = np.asarray(p.bc.g(self.mesh.to_physical(cells, rule.points)), dtype=float)
                _check_finite(g, cells, term)
                gnorm = np.linalg.norm(gphi, axis=-1)
                coef = -p.gamma_p / self.h ** 2
                out.add_rhs(dofs, coef * np.einsum("cq,cq,cqa->ca", w, g * gnorm, pen))

    def _facet_setup(self, facets, cells, degree):
        rule = facet_quadrature(self.dim, degree)
        local = self.mesh.facet_local_vertices(facets, cells)
        ref = facet_points_in_cell(rule, local)
        scale = self.mesh.facet_areas[facets] / reference_measure(self.dim - 1)
        w = scale[:, None] * rule.weights[None, :]
        return rule, ref, w

    def _values_at(self, ref):
        F, Q, d = ref.shape
        return self.vb.values(ref.reshape(-1, d)).reshape(F, Q, -1)

    def _grads_at(self, cells, ref):
        F, Q, d = ref.shape
        gref = self.vb.gradients(ref.reshape(-1, d)).reshape(F, Q, -1, d)
        return np.einsum("fqbk,fjk->fqbj", gref, self.mesh.inv_transpose[cells])

    def boundary_term(self, out):
        facets = self.decomp.boundary_facets
        cells = self.decomp.boundary_cells
        if len(facets) == 0:
            return
        _, ref, w = self._facet_setup(facets, cells, 2 * self.params.k)
        N = self._values_at(ref)
        n = self.mesh.facet_normals[facets].copy()
        n[self.mesh.facet_cells[facets, 0] != cells] *= -1
        # B[v_i, (y_m, j)] = int N_i N_m n_j
        elem = np.einsum("fq,fqi,fqm,fj->fimj", w, N, N, n)
        F, nk = N.shape[0], N.shape[2]
        out.add_matrix(self.layout.v_dofs(cells), self.layout.z_dofs(cells), elem.reshape(F, nk, nk * self.dim))

    def ghost_term(self, out):
        facets = self.decomp.gamma_facets
        if len(facets) == 0:
            return
        c0, c1 = self.mesh.facet_cells[facets, 0], self.mesh.facet_cells[facets, 1]
        deg = 2 * (self.params.k - 1)
        _, ref0, w = self._facet_setup(facets, c0, deg)
        _, ref1, _ = self._facet_setup(facets, c1, deg)
        n = self.mesh.facet_normals[facets]
        dn0 = np.einsum("fqbj,fj->fqb", self._grads_at(c0, ref0), n)
        dn1 = np.einsum("fqbj,fj->fqb", self._grads_at(c1, ref1), n)
        jump = np.concatenate([dn0, -dn1], axis=-1)
        dofs = np.hstack([self.layout.v_dofs(c0), self.layout.v_dofs(c1)])
        coef = self.params.sigma * self.h
        out.add_matrix(dofs, dofs, coef * np.einsum("fq,fqa,fqb->fab", w, jump, jump))

    def add(self, out, term):
        if term in ("stiffness", "mass", "rhs_source"):
            self.active_cell_term(out, term)
        elif term in ("div", "grad", "penalty", "rhs_div", "rhs_bc"):
            self.cut_cell_term(out, term)
        elif term == "boundary":
            self.boundary_term(out)
        elif term == "ghost":
            self.ghost_term(out)
        else:
            raise KeyError(f"unknown term id '{term}', expected one of {TERMS}")


def _prepare(decomp, field_, params, data, layout):
    if layout is None:
        layout = build_dof_layout(decomp, params.k)
    elif layout.decomp is not decomp or layout.k != params.k:
        raise AssemblyError("DOF layout does not match the decomposition / degree")
    if field_.mesh is not decomp.mesh:
        raise AssemblyError("level-set field lives on a different mesh")
    return _Assembler(decomp, field_, params, data, layout), layout


def assemble(decomp: DomainDecomposition, field_: LevelSetField, params: PhiFemParams,
             data: ProblemData, layout: DofLayout | None = None) -> BlockSystem:
    """Assemble the full phi-FEM matrix and right-hand side."""
    asm, layout = _prepare(decomp, field_, params, data, layout)
    out = _Triplets()
    for term in TERMS:
        asm.add(out, term)
    return out.build(layout)


def assemble_term(decomp: DomainDecomposition, field_: LevelSetField, params: PhiFemParams,
                  data: ProblemData, term_id: str, layout: DofLayout | None = None) -> BlockSystem:
    """Assemble a single named term (matrix or right-hand side contribution)."""
    if term_id not in TERMS:
        raise KeyError(f"unknown term id '{term_id}', expected one of {TERMS}")
    asm, layout = _prepare(decomp, field_, params, data, layout)
    out = _Triplets()
    asm.add(out, term_id)
    return out.build(layout)
