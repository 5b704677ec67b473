import math

import numpy as np
import pytest

from principal_config import catalog, geometry
from principal_config.errors import (CriticalPointError, RegularityError,
                                     UmbilicReferenceError)
from principal_config.geometry import (MAXIMAL, MINIMAL, chart_bundle,
                                       curvature_gradients,
                                       fundamental_forms,
                                       implicit_principal_data,
                                       normal_curvature, principal_at,
                                       principal_data,
                                       principal_direction_fast)


def test_sphere_equator_forms():
    s = catalog.sphere_chart(1.0)
    f = fundamental_forms(s, (0.3, math.pi / 2))
    assert f.E == pytest.approx(1.0, abs=1e-12)
    assert f.F == pytest.approx(0.0, abs=1e-12)
    assert f.G == pytest.approx(1.0, abs=1e-12)
    assert f.e == pytest.approx(1.0, abs=1e-12)   # inward normal convention
    assert f.f == pytest.approx(0.0, abs=1e-12)
    assert f.g == pytest.approx(1.0, abs=1e-12)


def test_plane_graph_second_form_vanishes():
    flat = catalog.monge_graph_chart(0.0, 0.0, 0.0, 0.0)
    f = fundamental_forms(flat, (0.1, -0.2))
    assert f.e == 0.0 and f.f == 0.0 and f.g == 0.0


def test_paraboloid_origin_forms():
    g = catalog.monge_graph_chart(1.0, 0.0, 0.0, 0.0)
    f = fundamental_forms(g, (0.0, 0.0))
    assert (f.E, f.F, f.G) == (1.0, 0.0, 1.0)
    assert f.e == pytest.approx(1.0) and f.g == pytest.approx(1.0)
    assert f.f == pytest.approx(0.0)


def test_sphere_principal_data_umbilic():
    s = catalog.sphere_chart(2.0)
    pd = principal_at(s, 1.0, 1.2)
    assert pd.k1 == pytest.approx(0.5, rel=1e-12)
    assert pd.k2 == pytest.approx(0.5, rel=1e-12)
    assert not pd.directions_defined
    with pytest.raises(UmbilicReferenceError):
        normal_curvature(pd, 0.3)


def test_cylinder_principal_values():
    # hand-built cylinder of radius 2 with inward-style normal
    from principal_config.jets import Const, Poly, Wave, wave_sin
    cyl = geometry.SurfaceChart(
        [(Wave(1.0, amp=2.0), Const(1.0), np.array([1.0, 0, 0])),
         (wave_sin(1.0, amp=2.0), Const(1.0), np.array([0, 1.0, 0])),
         (Const(1.0), Poly([0.0, 1.0]), np.array([0, 0, 1.0]))],
        ((0, 2 * math.pi), (-1.0, 1.0)), periodic_u=True, orientation=-1,
        name="cylinder", diameter_hint=4.0)
    pd = principal_at(cyl, 0.7, 0.1)
    assert pd.k1 == pytest.approx(0.0, abs=1e-12)
    assert pd.k2 == pytest.approx(0.5, rel=1e-12)
    # axis direction pairs with curvature 0
    assert abs(pd.d1_xyz @ np.array([0, 0, 1.0])) == pytest.approx(1.0)


def test_ellipsoid_symmetry_point_directions(ellipsoid):
    pd = principal_at(ellipsoid, 0.0, math.pi / 2)   # world point (3,0,0)
    assert pd.k1 == pytest.approx(3.0 / 4.0, rel=1e-12)
    assert pd.k2 == pytest.approx(3.0, rel=1e-12)
    assert abs(pd.d1_xyz @ np.array([0, 1.0, 0])) == pytest.approx(1.0)
    assert abs(pd.d2_xyz @ np.array([0, 0, 1.0])) == pytest.approx(1.0)


def test_ellipsoid_directions_match_normal_curvature_scan(ellipsoid):
    # independent oracle: scan normal curvature over directions; extremes
    # must sit at the reported principal directions
    u, v = 0.0, math.pi / 2
    f = fundamental_forms(ellipsoid, (u, v))
    pd = principal_data(f)
    thetas = np.linspace(0, math.pi, 720, endpoint=False)
    vals = []
    for th in thetas:
        w = math.cos(th) * pd.d1_uv + math.sin(th) * pd.d2_uv
        num = f.e * w[0] ** 2 + 2 * f.f * w[0] * w[1] + f.g * w[1] ** 2
        den = f.E * w[0] ** 2 + 2 * f.F * w[0] * w[1] + f.G * w[1] ** 2
        vals.append(num / den)
    vals = np.array(vals)
    assert vals.min() == pytest.approx(pd.k1, rel=1e-6)
    assert vals.max() == pytest.approx(pd.k2, rel=1e-6)
    assert thetas[np.argmin(vals)] == pytest.approx(0.0, abs=0.01)


def test_euler_formula_against_forms_ratio(ellipsoid, torus, rng):
    # normal_curvature(theta) must equal II(w,w)/I(w,w) for w at angle theta
    for surf in (ellipsoid, torus):
        (u0, u1), (v0, v1) = surf.domain
        for _ in range(100):
            u = rng.uniform(u0 + 0.2, u1 - 0.2)
            v = rng.uniform(v0 + 0.2, v1 - 0.2)
            f = fundamental_forms(surf, (u, v))
            pd = principal_data(f)
            if not pd.directions_defined:
                continue
            th = rng.uniform(0, 2 * math.pi)
            w = math.cos(th) * pd.d1_uv + math.sin(th) * pd.d2_uv
            num = f.e * w[0] ** 2 + 2 * f.f * w[0] * w[1] + f.g * w[1] ** 2
            den = f.E * w[0] ** 2 + 2 * f.F * w[0] * w[1] + f.G * w[1] ** 2
            kn = normal_curvature(pd, th)
            assert kn == pytest.approx(num / den, rel=1e-9, abs=1e-12)


def test_normal_curvature_endpoints_and_umbilic_limit():
    g = catalog.monge_graph_chart(1.0, 1.5, 1.0, 0.2)
    pd = principal_at(g, 0.3, 0.2)
    assert normal_curvature(pd, 0.0) == pytest.approx(pd.k1)
    assert normal_curvature(pd, math.pi / 2) == pytest.approx(pd.k2)
    c = 0.5 * (pd.k1 + pd.k2)
    mid = normal_curvature(pd, math.pi / 4)
    assert mid == pytest.approx(c, rel=1e-12)


def test_orthogonality_and_hk_identities(ellipsoid, rng):
    for _ in range(60):
        u = rng.uniform(0.2, 6.0)
        v = rng.uniform(0.2, 2.9)
        f = fundamental_forms(ellipsoid, (u, v))
        pd = principal_data(f)
        # metric inner product of the two directions
        ip = (f.E * pd.d1_uv[0] * pd.d2_uv[0]
              + f.F * (pd.d1_uv[0] * pd.d2_uv[1]
                       + pd.d1_uv[1] * pd.d2_uv[0])
              + f.G * pd.d1_uv[1] * pd.d2_uv[1])
        assert abs(ip) < 1e-9
        assert pd.H == pytest.approx(0.5 * (pd.k1 + pd.k2), rel=1e-12)
        assert pd.K == pytest.approx(pd.k1 * pd.k2, rel=1e-12)
        assert pd.H ** 2 - pd.K >= -1e-15


def test_orientation_flip_swaps_curvatures(ellipsoid, rng):
    flipped = ellipsoid.with_orientation(-1)
    for _ in range(20):
        u = rng.uniform(0.2, 6.0)
        v = rng.uniform(0.2, 2.9)
        pd = principal_at(ellipsoid, u, v)
        qd = principal_at(flipped, u, v)
        assert qd.k1 == -pd.k2 and qd.k2 == -pd.k1
        # direction roles exchange (up to the free sign of a line)
        assert min(np.linalg.norm(qd.d1_xyz - pd.d2_xyz),
                   np.linalg.norm(qd.d1_xyz + pd.d2_xyz)) < 1e-11
        assert min(np.linalg.norm(qd.d2_xyz - pd.d1_xyz),
                   np.linalg.norm(qd.d2_xyz + pd.d1_xyz)) < 1e-11


def test_regularity_error_at_chart_pole(ellipsoid):
    with pytest.raises(RegularityError):
        fundamental_forms(ellipsoid, (0.3, 0.0))


def test_fast_direction_path_matches_bundle(perturbed_torus, rng):
    s = perturbed_torus
    for _ in range(25):
        u = rng.uniform(0, 2 * math.pi)
        v = rng.uniform(0, 2 * math.pi)
        b = chart_bundle(s, u, v)
        for minimal, ku, kx in ((True, "d1_uv", "d1_xyz"),
                                (False, "d2_uv", "d2_xyz")):
            duv, r, dxyz, n = principal_direction_fast(s, u, v, minimal)
            assert np.allclose(r, b["r"], atol=1e-13)
            assert np.allclose(n, b["normal"], atol=1e-12)
            assert min(np.linalg.norm(dxyz - b[kx]),
                       np.linalg.norm(dxyz + b[kx])) < 1e-10


def test_implicit_sphere_and_paraboloid():
    def f(p):
        return np.sum(np.asarray(p) ** 2, axis=-1) - 1.0

    def grad(p):
        return 2.0 * np.asarray(p)

    def hess(p):
        shape = np.asarray(p).shape[:-1]
        return np.broadcast_to(2.0 * np.eye(3), shape + (3, 3)).copy()

    sph = geometry.ImplicitSurface(f, grad, hess, orientation=-1,
                                   name="unit-sphere")
    pd = implicit_principal_data(sph, np.array([0.0, 0.0, 1.0]))
    assert pd.k1 == pytest.approx(1.0) and pd.k2 == pytest.approx(1.0)
    assert not pd.directions_defined

    # z = (x^2 + y^2)/2 as the level set z - (x^2+y^2)/2 = 0
    def f2(p):
        p = np.asarray(p)
        return p[..., 2] - 0.5 * (p[..., 0] ** 2 + p[..., 1] ** 2)

    def grad2(p):
        p = np.asarray(p)
        return np.stack([-p[..., 0], -p[..., 1],
                         np.ones_like(p[..., 2])], axis=-1)

    def hess2(p):
        shape = np.asarray(p).shape[:-1]
        H = np.zeros(shape + (3, 3))
        H[..., 0, 0] = -1.0
        H[..., 1, 1] = -1.0
        return H

    par = geometry.ImplicitSurface(f2, grad2, hess2, orientation=1,
                                   name="paraboloid")
    pd2 = implicit_principal_data(par, np.zeros(3))
    assert pd2.k1 == pytest.approx(1.0) and pd2.k2 == pytest.approx(1.0)


def test_implicit_critical_point_rejected():
    s = catalog.cubic_levelset_surface(0.05, 3.0, 2.0)
    with pytest.raises(CriticalPointError):
        implicit_principal_data(s, np.zeros(3))


def test_chart_vs_implicit_cross_check(ellipsoid, rng):
    s_rho = catalog.cubic_levelset_surface(0.0, 3.0, 2.0)
    for _ in range(20):
        u = rng.uniform(0.3, 5.9)
        v = rng.uniform(0.3, 2.8)
        p = ellipsoid.point(u, v)
        pdc = principal_at(ellipsoid, u, v)
        pdi = implicit_principal_data(s_rho, p)
        assert pdi.k1 == pytest.approx(pdc.k1, abs=1e-8)
        assert pdi.k2 == pytest.approx(pdc.k2, abs=1e-8)
        if pdc.directions_defined:
            assert abs(abs(pdc.d1_xyz @ pdi.d1_xyz) - 1.0) < 1e-8


def test_curvature_gradients_match_finite_differences(ellipsoid):
    h = 1e-5
    for (u, v) in [(0.7, 1.0), (2.2, 1.9), (4.4, 0.8)]:
        g = curvature_gradients(ellipsoid, u, v)

        def H_at(uu, vv):
            b = chart_bundle(ellipsoid, uu, vv)
            return float(b["H"]), float(b["K"])

        Hu = (H_at(u + h, v)[0] - H_at(u - h, v)[0]) / (2 * h)
        Kv = (H_at(u, v + h)[1] - H_at(u, v - h)[1]) / (2 * h)
        assert float(g["H_u"]) == pytest.approx(Hu, rel=1e-5, abs=1e-8)
        assert float(g["K_v"]) == pytest.approx(Kv, rel=1e-5, abs=1e-8)


def test_finite_difference_chart_fallback(torus):
    # user-supplied point function; partials from stencils
    R, r = 2.0, 1.0

    def fn(u, v):
        u = np.asarray(u)
        v = np.asarray(v)
        return np.stack([(R + r * np.cos(v)) * np.cos(u),
                         (R + r * np.cos(v)) * np.sin(u),
                         r * np.sin(v)], axis=-1)

    fd = geometry.FiniteDifferenceChart(
        fn, ((0, 2 * math.pi), (0, 2 * math.pi)), periodic_u=True,
        periodic_v=True, scale=1.0, diameter_hint=6.0)
    J_fd = fd.jet(1.1, 0.7)
    J_an = torus.jet(1.1, 0.7)
    assert np.allclose(J_fd[1, 0], J_an[1, 0], atol=1e-8)
    assert np.allclose(J_fd[2, 0], J_an[2, 0], atol=1e-6)
    assert np.allclose(J_fd[3, 0], J_an[3, 0], atol=1e-4)
    assert np.allclose(J_fd[2, 1], J_an[2, 1], atol=1e-4)
