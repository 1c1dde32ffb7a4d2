import numpy as np
import pytest

from phifem import problems
from phifem.assembly import build_dof_layout, interpolate_v
from phifem.levelset import LevelSetSpec, classify_cells, interpolate_levelset
from phifem.mesh import BoundingBox, build_background_mesh
from phifem.postproc import compute_errors, error_integrals, fit_rate


def layout_for(case, n, k, l=3):
    mesh = build_background_mesh(case.box, n)
    return build_dof_layout(classify_cells(interpolate_levelset(case.levelset(l), mesh)), k)


@pytest.mark.parametrize("k", [1, 2])
def test_interpolant_of_polynomial_is_exact(k):
    case = problems.test_case_1()
    lay = layout_for(case, 8, k)
    u = lambda x: 1 + x[..., 0] - 2 * x[..., 1] + (k - 1) * x[..., 0] * x[..., 1]
    grad_u = lambda x: np.stack([1 + (k - 1) * x[..., 1], -2 + (k - 1) * x[..., 0]], axis=-1)
    err = compute_errors(interpolate_v(lay, u), lay, u, grad_u)
    assert err.err_L2_rel <= 1e-12 and err.err_H1_rel <= 1e-12


def test_zero_against_one():
    case = problems.test_case_1()
    lay = layout_for(case, 8, 1)
    one = lambda x: np.ones(x.shape[:-1])
    err = compute_errors(np.zeros(lay.n_v), lay, one, lambda x: np.zeros(x.shape))
    assert abs(err.err_L2_rel - 1.0) < 1e-14 and abs(err.err_H1_rel - 1.0) < 1e-14


def test_error_integrals_denominator_is_interior_area():
    case = problems.test_case_1()
    lay = layout_for(case, 16, 1)
    one = lambda x: np.ones(x.shape[:-1])
    _, _, n0, n1 = error_integrals(np.ones(lay.n_v), lay, one, lambda x: np.zeros(x.shape))
    mesh = lay.decomp.mesh
    assert abs(n0 - mesh.volumes[lay.decomp.inside].sum()) < 1e-14 and n1 == 0


def test_no_inside_cells():
    spec = LevelSetSpec(lambda x: x[..., 0] - 0.25, lambda x: np.broadcast_to([1.0, 0], x.shape).copy(), 1)
    mesh = build_background_mesh(BoundingBox((0, 0), (1, 1)), 2)
    lay = build_dof_layout(classify_cells(interpolate_levelset(spec, mesh)), 1)
    with pytest.raises(ValueError, match="inside"):
        compute_errors(np.zeros(lay.n_v), lay, lambda x: x[..., 0], lambda x: x)


@pytest.mark.parametrize("k", [1, 2])
def test_interpolation_rate(k):
    case = problems.test_case_1()
    pts = []
    for n in (8, 16, 32):
        lay = layout_for(case, n, k)
        err = compute_errors(interpolate_v(lay, case.u), lay, case.u, case.grad_u)
        pts.append((err.h, err.err_L2_rel))
    assert fit_rate(pts) >= k + 0.9


def test_fit_rate_examples():
    assert abs(fit_rate([(0.1, 1e-2), (0.05, 2.5e-3)]) - 2.0) < 1e-12
    assert abs(fit_rate([(0.1, 1e-1), (0.05, 5e-2)]) - 1.0) < 1e-12


def test_fit_rate_published_series():
    # published k=1, l=2 L2 series for the flower case
    series = [(0.176777, 0.13861), (0.0883883, 0.0219174), (0.0441942, 0.00316592), (0.0220971, 0.000654107),
              (0.0110485, 9.83797e-05), (0.00552427, 2.09779e-05), (0.00276214, 4.66225e-06)]
    all_pts = fit_rate(series)
    last4 = fit_rate(series[-4:])
    assert abs(all_pts - 2.4) < 0.1
    assert abs(last4 - 2.4) < 0.25


@pytest.mark.parametrize("bad", [[(0.1, 1.0)], [(0.1, 0.0), (0.05, 1.0)], [(-0.1, 1.0), (0.05, 1.0)],
                                 [(0.1, np.nan), (0.05, 1.0)]])
def test_fit_rate_rejects(bad):
    with pytest.raises(ValueError):
        fit_rate(bad)
