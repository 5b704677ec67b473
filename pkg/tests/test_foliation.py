import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from principal_config import catalog, foliation, umbilics
from principal_config.foliation import (DomainSection, KnownFeatures,
                                        TraceOptions, WorldPlaneSection,
                                        omega_limit_classify,
                                        separatrix_connection_scan, trace)
from principal_config.geometry import MAXIMAL, MINIMAL


def polyline_distance(points, polyline):
    """Max distance from points to a densified polyline."""
    seg = np.diff(polyline, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    dense = [polyline[0]]
    for i, L in enumerate(lengths):
        n = max(1, int(L / 1e-3))
        for t in np.linspace(0, 1, n + 1)[1:]:
            dense.append(polyline[i] + t * seg[i])
    tree = cKDTree(np.asarray(dense))
    d, _ = tree.query(points)
    return float(d.max())


def test_torus_parallel_closes_with_exact_length(torus):
    traj = trace(torus, (0.3, 0.9), MAXIMAL, TraceOptions())
    assert traj.termination == "Closed"
    expected = 2 * math.pi * (2.0 + math.cos(0.9))
    assert traj.closed_length == pytest.approx(expected, rel=1e-6)


def test_torus_meridian_closes_with_exact_length(torus):
    traj = trace(torus, (0.3, 0.9), MINIMAL, TraceOptions())
    assert traj.termination == "Closed"
    assert traj.closed_length == pytest.approx(2 * math.pi, rel=1e-6)


def test_step_halving_changes_closed_length_consistently(torus):
    t1 = trace(torus, (0.3, 0.9), MAXIMAL,
               TraceOptions(max_step_factor=0.04))
    t2 = trace(torus, (0.3, 0.9), MAXIMAL,
               TraceOptions(max_step_factor=0.02))
    assert abs(t1.closed_length - t2.closed_length) < 1e-8


def test_ellipsoid_principal_lines_close(ellipsoid):
    for fol in (MINIMAL, MAXIMAL):
        traj = trace(ellipsoid, (0.8, 1.1), fol, TraceOptions())
        assert traj.termination == "Closed"
        assert traj.closed_length > 1.0


def test_tangency_along_trajectory(torus):
    traj = trace(torus, (0.3, 0.9), MAXIMAL, TraceOptions())
    seg = np.diff(traj.points_xyz, axis=0)
    seg = seg / np.linalg.norm(seg, axis=1, keepdims=True)
    mid = 0.5 * (traj.tangents[:-1] + traj.tangents[1:])
    mid = mid / np.linalg.norm(mid, axis=1, keepdims=True)
    ang = np.degrees(np.arccos(np.clip(np.abs(np.sum(seg * mid, axis=1)),
                                       0, 1)))
    assert ang.max() < 0.5


def test_reversal_symmetry(torus):
    fwd = trace(torus, (0.3, 0.9), MAXIMAL, TraceOptions())
    rev = trace(torus, (0.3, 0.9), MAXIMAL, TraceOptions(initial_sign=-1))
    assert rev.termination == "Closed"
    assert float(np.dot(rev.tangents[0], fwd.tangents[0])) < -0.999999
    assert rev.closed_length == pytest.approx(fwd.closed_length, rel=1e-9)
    # both runs traverse the same analytic circle (z and axis distance
    # constant), one forward, one backward
    for traj in (fwd, rev):
        z = traj.points_xyz[:, 2]
        rho = np.linalg.norm(traj.points_xyz[:, :2], axis=1)
        assert np.allclose(z, math.sin(0.9), atol=1e-7)
        assert np.allclose(rho, 2.0 + math.cos(0.9), atol=1e-7)


def test_foliation_orthogonal_crossing(ellipsoid):
    a = trace(ellipsoid, (0.8, 1.1), MINIMAL, TraceOptions())
    b = trace(ellipsoid, (0.8, 1.1), MAXIMAL, TraceOptions())
    cosang = abs(float(np.dot(a.tangents[0], b.tangents[0])))
    assert math.degrees(math.acos(min(cosang, 1.0))) > 89.5


def test_hit_umbilic_termination(ellipsoid, ellipsoid_records):
    rec = ellipsoid_records[0]
    fr = rec.monge.frame
    ang = rec.separatrices["maximal"][0] + 3e-4
    ray = math.cos(ang) * fr.e1 + math.sin(ang) * fr.e2
    start = foliation.chart_point_near(
        ellipsoid, rec.xyz + 0.02 * ray, rec.uv)
    traj = trace(ellipsoid, start, MAXIMAL,
                 TraceOptions(known_umbilics=ellipsoid_records,
                              detect_closure=False, max_length=30.0))
    assert traj.termination == "HitUmbilic"


def test_domain_exit_on_open_chart():
    g = catalog.monge_graph_chart(1.0, 4.0, 1.0, 0.0, extent=0.5)
    traj = trace(g, (0.3, 0.1), MINIMAL, TraceOptions(max_length=10.0))
    assert traj.termination == "DomainExit"


def test_section_crossings_on_torus(torus):
    sec = DomainSection("meridian", "u", 0.0)
    opts = TraceOptions(sections=(sec,), max_crossings=4)
    traj = trace(torus, (0.3, 0.9), MAXIMAL,
                 TraceOptions(sections=(sec,), detect_closure=False,
                              max_length=80.0, max_crossings=6))
    assert len(traj.crossings) >= 4
    coords = [c.coordinate for c in traj.crossings]
    # a parallel crosses the meridian section at its own latitude
    assert np.allclose(coords, 0.9 / (2 * math.pi), atol=1e-6)
    del opts


def test_pole_rebase_keeps_world_points_smooth(ellipsoid):
    # a minimal line through the polar region must continue smoothly
    start = foliation.chart_point_near(
        ellipsoid, np.array([0.05, 0.0, 1.0001]), (0.03, 0.05))
    traj = trace(ellipsoid, (0.01, 0.3), MINIMAL,
                 TraceOptions(detect_closure=False, max_length=8.0))
    gaps = np.linalg.norm(np.diff(traj.points_xyz, axis=0), axis=1)
    assert gaps.max() < 0.3 * ellipsoid.diameter()
    assert traj.termination in ("MaxLength", "HitUmbilic")
    del start


def test_separatrix_connections_ellipsoid(ellipsoid, ellipsoid_records):
    scan = separatrix_connection_scan(ellipsoid, ellipsoid_records)
    assert len(scan.connections) == 4
    assert scan.undetermined == []
    # adjacency pattern: each umbilic appears in exactly two connections,
    # never paired with its antipode
    xyz = [r.xyz for r in ellipsoid_records]
    counts = {i: 0 for i in range(4)}
    for i, j, _fol in scan.connections:
        counts[i] += 1
        counts[j] += 1
        assert np.linalg.norm(xyz[i] + xyz[j]) > 1e-3
    assert all(v == 2 for v in counts.values())


def test_separatrix_connections_break_under_perturbation():
    pe = catalog.perturbed_ellipsoid_chart(3, 2, 1, 8e-3, seed=11)
    recs = umbilics.analyze_umbilics(pe, grid=32)
    assert len(recs) == 4
    assert all(r.type == "D1" for r in recs)
    scan = separatrix_connection_scan(pe, recs)
    assert scan.connections == []


def test_connection_scan_empty_without_umbilics(torus):
    scan = separatrix_connection_scan(torus, [])
    assert scan.connections == [] and scan.launches == 0


def test_omega_limit_direct_mappings(torus, ellipsoid, ellipsoid_records):
    closed = trace(torus, (0.3, 0.9), MAXIMAL, TraceOptions())
    res = omega_limit_classify(torus, closed)
    assert res.verdict == "Cycle"

    rec = ellipsoid_records[0]
    fr = rec.monge.frame
    ang = rec.separatrices["maximal"][0] + 3e-4
    ray = math.cos(ang) * fr.e1 + math.sin(ang) * fr.e2
    start = foliation.chart_point_near(ellipsoid, rec.xyz + 0.02 * ray,
                                       rec.uv)
    hit = trace(ellipsoid, start, MAXIMAL,
                TraceOptions(known_umbilics=ellipsoid_records,
                             detect_closure=False, max_length=30.0))
    res2 = omega_limit_classify(ellipsoid, hit)
    assert res2.verdict == "Umbilic"


def test_omega_limit_cycle_convergence(perturbed_torus):
    from principal_config import cycles as cyc_mod
    found = cyc_mod.find_cycles(perturbed_torus, [(0.4, 1.5)], MAXIMAL)
    assert found
    cyc = found[0]
    # start near the cycle and watch the approach
    start = (cyc.anchor_uv[0] + 0.02, cyc.anchor_uv[1] + 0.02)
    traj = trace(perturbed_torus, start, MAXIMAL,
                 TraceOptions(detect_closure=False, max_length=260.0))
    known = KnownFeatures(cycles=[cyc])
    res = omega_limit_classify(perturbed_torus, traj, known)
    assert res.verdict in ("Cycle", "RecurrentOrUndetermined")


def test_world_plane_section_on_implicit():
    s = catalog.cubic_levelset_surface(0.05, 3.0, 2.0)
    sec = WorldPlaneSection("z0", normal=(0, 0, 1), offset=0.0,
                            axes=((1, 0, 0), (0, 1, 0)))
    start = np.array([3.0 * math.cos(0.4), 2.0 * math.sin(0.4), 0.0])
    traj = trace(s, start, MAXIMAL,
                 TraceOptions(sections=(sec,), detect_closure=False,
                              max_length=60.0, max_crossings=8,
                              rel_tol=1e-7))
    assert len(traj.crossings) >= 6
    assert all(abs(c.xyz[2]) < 1e-6 for c in traj.crossings)
