"""Manufactured test problems for -Δu + u = f with natural boundary conditions.

All callables take points of shape ``(..., dim)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import Neumann, NeumannHomogeneous, ProblemData, Robin
from .levelset import LevelSetSpec
from .mesh import BoundingBox

SERIES_CUTOFF = 1e-4


@dataclass
class TestCase:
    __test__ = False  # not a pytest class

    name: str
    box: BoundingBox
    phi: Callable
    grad_phi: Callable
    u: Callable
    grad_u: Callable
    f: Callable
    bc_kind: str = "neumann"
    alpha: float = 0.0
    g: Callable | None = None
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.box.dim

    def levelset(self, degree: int) -> LevelSetSpec:
        return LevelSetSpec(self.phi, self.grad_phi, degree)

    def boundary_condition(self):
        if self.bc_kind == "neumann0":
            return NeumannHomogeneous()
        if self.bc_kind == "neumann":
            return Neumann(self.g)
        if self.bc_kind == "robin":
            return Robin(self.alpha, self.g)
        raise ValueError(f"unknown boundary condition kind {self.bc_kind!r}")

    def data(self) -> ProblemData:
        return ProblemData(self.f, self.u, self.grad_u)


def extend_boundary_data(phi, grad_phi, u, grad_u, alpha: float = 0.0, perturb: bool = True):
    """Extension ``grad u . grad phi / |grad phi| + alpha u (+ u phi)`` of the boundary datum.

    The ``u phi`` term vanishes on the boundary; it makes the extension
    differ from the natural one away from it.
    """

    def g(x):
        gp = grad_phi(x)
        norm = np.linalg.norm(gp, axis=-1)
        safe = np.where(norm > 0, norm, 1.0)
        val = np.where(norm > 0, np.sum(grad_u(x) * gp, axis=-1) / safe, 0.0)
        uv = u(x)
        if alpha:
            val = val + alpha * uv
        if perturb:
            val = val + uv * phi(x)
        return val

    return g


def manufactured(name, box, phi, grad_phi, u, grad_u, lap_u, bc_kind="neumann", alpha=0.0,
                 perturb=True, params=None) -> TestCase:
    """Build a test case from an exact solution and its Laplacian."""

    def f(x):
        return u(x) - lap_u(x)

    g = None
    if bc_kind in ("neumann", "robin"):
        g = extend_boundary_data(phi, grad_phi, u, grad_u, alpha if bc_kind == "robin" else 0.0, perturb)
    return TestCase(name, box, phi, grad_phi, u, grad_u, f, bc_kind, alpha, g, dict(params or {}))


# -- test case 1: flower ----------------------------------------------------------

FLOWER_R = 0.47


def flower_levelset(theta0: float = 0.0, R: float = FLOWER_R):
    def phi(x):
        x0, x1 = x[..., 0], x[..., 1]
        r2 = x0 ** 2 + x1 ** 2
        th = np.arctan2(x1, x0)
        s = 5 + 3 * np.sin(7 * (th - theta0) + 7 * np.pi / 36)
        return r2 ** 2 * s / 2 - R ** 4

    def grad_phi(x):
        x0, x1 = x[..., 0], x[..., 1]
        r2 = x0 ** 2 + x1 ** 2
        th = np.arctan2(x1, x0)
        arg = 7 * (th - theta0) + 7 * np.pi / 36
        s = 5 + 3 * np.sin(arg)
        c = 10.5 * np.cos(arg)
        return np.stack([r2 * (2 * s * x0 - c * x1), r2 * (2 * s * x1 + c * x0)], axis=-1)

    return phi, grad_phi


def _sin_exp():
    def u(x):
        return np.sin(x[..., 0]) * np.exp(x[..., 1])

    def grad_u(x):
        e = np.exp(x[..., 1])
        return np.stack([np.cos(x[..., 0]) * e, np.sin(x[..., 0]) * e], axis=-1)

    def lap_u(x):
        return np.zeros(np.shape(x)[:-1])

    return u, grad_u, lap_u


def test_case_1(theta0: float = 0.0, bc: str = "neumann", alpha: float = 1.0) -> TestCase:
    """Flower domain in (-0.5, 0.5)^2 with u = sin(x) exp(y).

    ``bc`` is ``"neumann"`` or ``"robin"`` (with ``alpha``).
    """
    if bc not in ("neumann", "robin"):
        raise ValueError(f"test case 1 supports neumann or robin, got {bc!r}")
    phi, grad_phi = flower_levelset(theta0)
    u, grad_u, lap_u = _sin_exp()
    box = BoundingBox((-0.5, -0.5), (0.5, 0.5))
    case = manufactured("flower" if bc == "neumann" else "flower-robin", box, phi, grad_phi, u, grad_u, lap_u,
                        bc_kind=bc, alpha=alpha if bc == "robin" else 0.0,
                        params={"theta0": theta0, "R": FLOWER_R})
    # f = u exactly since u is harmonic
    case.f = u
    return case


def constant_case(c: float = 1.0, theta0: float = 0.0) -> TestCase:
    """Flower geometry with u = c and homogeneous Neumann data (patch test)."""
    phi, grad_phi = flower_levelset(theta0)

    def u(x):
        return np.full(np.shape(x)[:-1], float(c))

    def grad_u(x):
        return np.zeros(np.shape(x))

    box = BoundingBox((-0.5, -0.5), (0.5, 0.5))
    return TestCase("constant", box, phi, grad_phi, u, grad_u, u, "neumann0", 0.0, None,
                    {"theta0": theta0, "c": float(c)})


# -- test case 2: rotated rectangle -----------------------------------------------

RECT_BOX_R = 1.1 * np.sqrt(5.0)


def _rotation(theta0):
    c, s = np.cos(theta0), np.sin(theta0)
    return np.array([[c, -s], [s, c]])


def test_case_2(theta0: float = np.pi / 8) -> TestCase:
    """Rectangle (-1,1)x(-2,2) under the rotation by ``theta0``; homogeneous Neumann.

    The level-set is only Lipschitz (a max of affine pieces).
    """
    Pi = _rotation(theta0)

    def rot(x):
        return x @ Pi.T

    def phi(x):
        X = rot(x)
        return np.maximum(np.abs(X[..., 0]), np.abs(X[..., 1]) / 2) - 1

    def grad_phi(x):
        X = rot(x)
        ax, ay = np.abs(X[..., 0]), np.abs(X[..., 1]) / 2
        gX = np.where(ax >= ay, np.sign(X[..., 0]), 0.0)
        gY = np.where(ax >= ay, 0.0, np.sign(X[..., 1]) / 2)
        return np.stack([gX, gY], axis=-1) @ Pi

    def u(x):
        X = rot(x)
        return np.cos(np.pi * X[..., 0]) * np.cos(np.pi * X[..., 1] / 2)

    def grad_u(x):
        X = rot(x)
        a, b = np.pi * X[..., 0], np.pi * X[..., 1] / 2
        gU = np.stack([-np.pi * np.sin(a) * np.cos(b), -np.pi / 2 * np.cos(a) * np.sin(b)], axis=-1)
        return gU @ Pi

    def f(x):
        return (1 + 5 * np.pi ** 2 / 4) * u(x)

    box = BoundingBox((-RECT_BOX_R,) * 2, (RECT_BOX_R,) * 2)
    return TestCase("rectangle", box, phi, grad_phi, u, grad_u, f, "neumann0", 0.0, None,
                    {"theta0": theta0})


# -- test case 3: ball ------------------------------------------------------------

BALL_R = 0.75


def sinc_over_r(r):
    """``sin(r) / r`` with the series branch near 0."""
    r = np.asarray(r, dtype=float)
    small = r < SERIES_CUTOFF
    safe = np.where(small, 1.0, r)
    return np.where(small, 1 - r ** 2 / 6 + r ** 4 / 120, np.sin(safe) / safe)


def test_case_3(R: float = BALL_R) -> TestCase:
    """Ball of radius ``R`` in (-1, 1)^3 with u = cos(|x|)."""

    def phi(x):
        return np.sum(x ** 2, axis=-1) - R ** 2

    def grad_phi(x):
        return 2 * np.asarray(x, dtype=float)

    def u(x):
        return np.cos(np.linalg.norm(x, axis=-1))

    def grad_u(x):
        r = np.linalg.norm(x, axis=-1)
        return -sinc_over_r(r)[..., None] * x

    def lap_u(x):
        r = np.linalg.norm(x, axis=-1)
        return -np.cos(r) - 2 * sinc_over_r(r)

    box = BoundingBox.cube(-1.0, 1.0, 3)
    case = manufactured("ball", box, phi, grad_phi, u, grad_u, lap_u, "neumann", params={"R": R})

    def f(x):
        r = np.linalg.norm(x, axis=-1)
        return 2 * np.cos(r) + 2 * sinc_over_r(r)

    case.f = f
    return case


CASES = {
    "flower": lambda theta0=0.0: test_case_1(theta0),
    "flower-robin": lambda theta0=0.0: test_case_1(theta0, bc="robin", alpha=1.0),
    "rectangle": lambda theta0=np.pi / 8: test_case_2(theta0),
    "ball": lambda theta0=0.0: test_case_3(),
    "constant": lambda theta0=0.0: constant_case(1.0, theta0),
}


def get_case(name: str, theta0: float | None = None) -> TestCase:
    """Look a test case up by name; ``theta0=None`` keeps the case default."""
    try:
        factory = CASES[name]
    except KeyError:
        raise ValueError(f"unknown test case {name!r}; choose from {sorted(CASES)}") from None
    return factory() if theta0 is None else factory(theta0)

# keep pytest from collecting the catalog constructors when imported into tests
for _fn in (test_case_1, test_case_2, test_case_3):
    _fn.__test__ = False
