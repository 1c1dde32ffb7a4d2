"""Relative error norms on the interior cells and convergence-rate fitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import DofLayout
from .fem import lagrange_basis, quadrature


@dataclass
class ErrorReport:
    h: float
    err_L2_rel: float
    err_H1_rel: float
    dofs: dict = field(default_factory=dict)
    residual: float = float("nan")
    cond2: float = float("nan")


def error_integrals(u_coeffs, layout: DofLayout, u, grad_u, degree: int | None = None):
    """Squared norms on the inside cells.

    Returns ``(|u - u_h|_0^2, |grad(u - u_h)|_0^2, |u|_0^2, |grad u|_0^2)``.
    """
    decomp = layout.decomp
    cells = decomp.inside
    if len(cells) == 0:
        raise ValueError("no inside cells: mesh too coarse to measure interior errors")
    mesh = decomp.mesh
    k = layout.k
    rule = quadrature(mesh.dim, 2 * k + 4 if degree is None else degree)
    basis = lagrange_basis(mesh.dim, k)
    coef = np.asarray(u_coeffs)[layout.v_dofs(cells)]
    uh = coef @ basis.values(rule.points).T
    guh = np.einsum("cb,pbk,cjk->cpj", coef, basis.gradients(rule.points), mesh.inv_transpose[cells])
    x = mesh.to_physical(cells, rule.points)
    ue, gue = u(x), grad_u(x)
    w = np.abs(mesh.detJ[cells])[:, None] * rule.weights
    e0 = np.sum(w * (ue - uh) ** 2)
    e1 = np.sum(w * np.sum((gue - guh) ** 2, axis=-1))
    n0 = np.sum(w * ue ** 2)
    n1 = np.sum(w * np.sum(gue ** 2, axis=-1))
    return float(e0), float(e1), float(n0), float(n1)


def compute_errors(u_coeffs, layout: DofLayout, u, grad_u) -> ErrorReport:
    """Relative L2 and H1 errors of ``u_h`` on the union of inside cells."""
    e0, e1, n0, n1 = error_integrals(u_coeffs, layout, u, grad_u)
    l2 = np.sqrt(e0 / n0)
    h1 = np.sqrt((e0 + e1) / (n0 + n1))
    return ErrorReport(layout.decomp.mesh.h_max, float(l2), float(h1), layout.sizes())


def fit_rate(points) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("need at least two (h, error) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("h and error values must be positive and finite")
    slope, _ = np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)
    return float(slope)
