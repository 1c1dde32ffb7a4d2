"""Reference-simplex machinery: Lagrange bases, quadrature rules and DOF maps.

All geometric quantities here live on the reference simplex with vertices
``0, e_1, ..., e_d``.  Physical quantities are obtained through the affine
maps exposed by :mod:`phifem.mesh`.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = {2: 4, 3: 3}
MAX_QUADRATURE_DEGREE = 30


def reference_vertices(dim: int) -> np.ndarray:
    """Vertices of the reference simplex, shape ``(dim + 1, dim)``."""
    return np.vstack([np.zeros(dim), np.eye(dim)])


def reference_measure(dim: int) -> float:
    return 1.0 / factorial(dim)


def lattice_indices(dim: int, order: int) -> np.ndarray:
    """Barycentric multi-indices of the order-``order`` lattice.

    Vertices come first (in vertex order), then edge points, face points,
    and interior points; this mirrors the usual entity ordering of Lagrange
    elements so that the P1 basis functions coincide with the vertex hats.
    """
    if order == 0:
        raise ValueError("lattice order must be positive")
    idx = [a for a in itertools.product(range(order + 1), repeat=dim + 1) if sum(a) == order]
    idx.sort(key=lambda a: (sum(1 for v in a if v), tuple(-v for v in a)))
    return np.array(idx, dtype=np.int64)


def lattice_points(dim: int, order: int) -> np.ndarray:
    """Reference coordinates of the barycentric lattice of a given order."""
    alpha = lattice_indices(dim, order)
    return alpha @ reference_vertices(dim) / order


def _monomial_exponents(dim: int, degree: int) -> np.ndarray:
    exps = [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), tuple(-v for v in e)))
    return np.array(exps, dtype=np.int64)


def _monomials(points: np.ndarray, exps: np.ndarray) -> np.ndarray:
    # (npts, nmono)
    return np.prod(points[:, None, :] ** exps[None, :, :], axis=-1)


def _monomial_gradients(points: np.ndarray, exps: np.ndarray) -> np.ndarray:
    npts, dim = points.shape
    out = np.zeros((npts, len(exps), dim))
    for d in range(dim):
        e = exps.copy()
        coef = e[:, d].astype(float)
        e[:, d] = np.maximum(e[:, d] - 1, 0)
        out[:, :, d] = coef * _monomials(points, e)
    return out


class LagrangeBasis:
    """Nodal ``P_k`` basis on the reference simplex.

    Degree 0 is allowed and gives the constant function (used for the
    discontinuous multiplier space when ``k = 1``).
    """

    def __init__(self, dim: int, degree: int):
        if dim not in MAX_DEGREE:
            raise ValueError(f"unsupported dimension {dim}")
        if degree < 0 or degree > MAX_DEGREE[dim]:
            raise ValueError(f"unsupported degree {degree} for dim={dim} (max {MAX_DEGREE[dim]})")
        self.dim = dim
        self.degree = degree
        if degree == 0:
            self.multi_indices = np.zeros((1, dim + 1), dtype=np.int64)
            self.nodes = np.full((1, dim), 1.0 / (dim + 1))
        else:
            self.multi_indices = lattice_indices(dim, degree)
            self.nodes = lattice_points(dim, degree)
        self._exps = _monomial_exponents(dim, degree)
        vdm = _monomials(self.nodes, self._exps)
        self._coeffs = np.linalg.inv(vdm)
        self.nodes.setflags(write=False)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def size(self) -> int:
        return comb(self.degree + self.dim, self.dim)

    def values(self, points) -> np.ndarray:
        """Basis values at reference points, shape ``(npts, nbasis)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return _monomials(pts, self._exps) @ self._coeffs

    def gradients(self, points) -> np.ndarray:
        """Reference gradients, shape ``(npts, nbasis, dim)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = _monomial_gradients(pts, self._exps)
        return np.einsum("pmd,mb->pbd", g, self._coeffs)

    def __repr__(self) -> str:
        return f"LagrangeBasis(dim={self.dim}, degree={self.degree})"


@lru_cache(maxsize=None)
def lagrange_basis(dim: int, degree: int) -> LagrangeBasis:
    return LagrangeBasis(dim, degree)


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, func) -> float:
        """Integrate a vectorised function over the reference simplex."""
        return float(np.dot(self.weights, func(self.points)))


def _gauss_jacobi_01(npts: int, alpha: int):
    # nodes/weights on [0, 1] for the weight (1 - t)**alpha
    s, w = roots_jacobi(npts, alpha, 0)
    return (s + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def quadrature(dim: int, degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi rule on the reference ``dim``-simplex.

    The rule integrates every polynomial of total degree ``<= degree``
    exactly (up to rounding).
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if degree < 0 or degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")
    m = max(1, (degree + 2) // 2)
    if dim == 1:
        t, w = _gauss_jacobi_01(m, 0)
        pts, wts = t[:, None], w
    elif dim == 2:
        t0, w0 = _gauss_jacobi_01(m, 1)
        t1, w1 = _gauss_jacobi_01(m, 0)
        a, b = np.meshgrid(t0, t1, indexing="ij")
        pts = np.column_stack([a.ravel(), (b * (1 - a)).ravel()])
        wts = np.outer(w0, w1).ravel()
    else:
        t0, w0 = _gauss_jacobi_01(m, 2)
        t1, w1 = _gauss_jacobi_01(m, 1)
        t2, w2 = _gauss_jacobi_01(m, 0)
        a, b, c = np.meshgrid(t0, t1, t2, indexing="ij")
        pts = np.column_stack([
            a.ravel(),
            (b * (1 - a)).ravel(),
            (c * (1 - a) * (1 - b)).ravel(),
        ])
        wts = np.einsum("i,j,k->ijk", w0, w1, w2).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(dim, pts, wts, degree)


def facet_quadrature(dim: int, degree: int) -> QuadratureRule:
    """Quadrature on the reference facet of a ``dim``-simplex.

    The reference facet is the ``(dim - 1)``-simplex; weights sum to its
    measure (1 for the unit interval, 1/2 for the reference triangle).
    """
    return quadrature(dim - 1, degree)


def facet_barycentric(rule: QuadratureRule) -> np.ndarray:
    """Barycentric coordinates of facet quadrature points w.r.t. the facet vertices."""
    p = rule.points
    return np.column_stack([1.0 - p.sum(axis=1), p])


def facet_points_in_cell(rule: QuadratureRule, local_vertices: np.ndarray) -> np.ndarray:
    """Embed facet quadrature points into cell reference coordinates.

    Parameters
    ----------
    rule : QuadratureRule
        Rule on the reference facet.
    local_vertices : ndarray, shape (nfacets, dim)
        For each facet, the cell-local index of each facet vertex, listed in
        the facet's own (global) vertex order.  Using the global order on
        both sides makes owner and neighbour embeddings land on the same
        physical points.

    Returns
    -------
    ndarray, shape (nfacets, nqp, dim)
    """
    local_vertices = np.asarray(local_vertices)
    dim = local_vertices.shape[1]
    ref = reference_vertices(dim)[local_vertices]  # (F, dim, dim)
    lam = facet_barycentric(rule)
    return np.einsum("qj,fjk->fqk", lam, ref)


def lagrange_dofmap(cells: np.ndarray, degree: int, vertices: np.ndarray | None = None):
    """Global continuous ``P_degree`` numbering over a set of simplices.

    A Lagrange node with barycentric multi-index ``alpha`` on a cell is the
    multiset of cell vertices where vertex ``i`` appears ``alpha_i`` times.
    That multiset is shared by every cell containing the node, so it serves
    as a geometry-free key.  Nodes are numbered in order of first appearance
    when cells and local nodes are scanned in order.

    Returns
    -------
    cell_dofs : ndarray, shape (ncells, nlocal)
    ndofs : int
    coords : ndarray or None
        Node coordinates when ``vertices`` is given.
    """
    cells = np.asarray(cells, dtype=np.int64)
    ncells, nv = cells.shape
    dim = nv - 1
    if degree < 1:
        raise ValueError("continuous Lagrange numbering needs degree >= 1")
    alpha = lattice_indices(dim, degree)
    nloc = len(alpha)
    keys = np.empty((ncells, nloc, degree), dtype=np.int64)
    for j, a in enumerate(alpha):
        cols = np.repeat(np.arange(nv), a)
        keys[:, j, :] = cells[:, cols]
    keys.sort(axis=-1)
    flat = keys.reshape(-1, degree)
    uniq, first, inverse = np.unique(flat, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(first, kind="stable")
    renum = np.empty(len(uniq), dtype=np.int64)
    renum[order] = np.arange(len(uniq))
    cell_dofs = renum[inverse].reshape(ncells, nloc)
    coords = None
    if vertices is not None:
        coords = np.asarray(vertices)[uniq[order]].mean(axis=1)
    return cell_dofs, len(uniq), coords
