import numpy as np
import pytest

from hexcube import shapes
from hexcube.area_flow import (FOUR_PI, SphereDensity, area_correct, compute_area_density,
                               integrate_area_flow, moser_sphere_field, poisson_rhs,
                               solve_sphere_poisson, sphere_gradient, sphere_laplacian)
from hexcube.conformal import SphereMap, conformal_to_sphere, spherical_triangle_areas
from hexcube.errors import IncompatibleRHS


def test_moser_field_examples():
    g = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    mu = np.array([2.0, 0.5])
    assert np.allclose(moser_sphere_field(g, mu, 0.0), [[-0.5, 0, 0], [0, -4.0, 0]])
    assert np.allclose(moser_sphere_field(g, mu, 1.0), -g)
    assert np.allclose(moser_sphere_field(g, mu, 0.5), [[-1 / 1.5, 0, 0], [0, -2 / 0.75, 0]])


def test_identity_map_has_unit_density_and_no_flow():
    mesh = shapes.icosphere(3)
    smap = SphereMap(mesh, mesh.vertices.copy(), 0)
    d = compute_area_density(mesh, smap)
    # chord areas over spherical areas, rescaled to mean 1
    assert d.weighted_mean() == pytest.approx(1.0, abs=1e-12)
    out = area_correct(smap)
    assert np.abs(out.positions - smap.positions).max() < 5e-3


def test_mismatched_density_is_rejected():
    mesh = shapes.icosphere(2)
    smap = SphereMap(mesh, mesh.vertices.copy(), 0)
    d = compute_area_density(mesh, smap)
    bad = SphereDensity(d.per_triangle * 1.01, d.per_vertex * 1.01, d.sphere_areas, smap)
    with pytest.raises(IncompatibleRHS):
        solve_sphere_poisson(smap, bad)


def test_gradient_of_height_function():
    # the tangential gradient of z on the unit sphere is e_z - z p
    mesh = shapes.icosphere(4)
    p = mesh.vertices
    _, gv = sphere_gradient(p, mesh.triangles, p[:, 2].copy())
    exact = np.array([0.0, 0.0, 1.0]) - p[:, 2:3] * p
    rms = np.sqrt(np.mean(np.sum((gv - exact) ** 2, axis=1)) / np.mean(np.sum(exact ** 2, axis=1)))
    assert rms < 0.05


def test_poisson_solution_residual_and_mean():
    mesh = shapes.ellipsoid(level=3)
    smap = conformal_to_sphere(mesh, hint=[0, 0, 2])
    d = compute_area_density(mesh, smap)
    theta = solve_sphere_poisson(smap, d)
    L = sphere_laplacian(smap)
    rhs = poisson_rhs(d)
    assert np.linalg.norm(L @ theta - rhs) / np.linalg.norm(rhs) <= 1e-8


def test_flow_equalizes_ellipsoid_density_without_flips():
    mesh = shapes.ellipsoid((2.0, 1.0, 1.0), level=4)
    smap = conformal_to_sphere(mesh, hint=[0, 0, 1])
    d0 = compute_area_density(mesh, smap)
    log = []
    out = integrate_area_flow(smap, solve_sphere_poisson(smap, d0), d0, 20, area_log=log)
    areas = spherical_triangle_areas(out.positions, mesh.triangles)
    assert np.all(areas > 0)
    assert max(abs(a - FOUR_PI) for a in log) <= 1e-6
    d1 = compute_area_density(mesh, out)
    assert d1.variance() <= 0.1 * d0.variance()
