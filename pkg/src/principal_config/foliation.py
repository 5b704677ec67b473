"""Principal line-field integration and limit-behavior classification.

Principal foliations are line fields: the eigendirection has no global
sign.  The tracer integrates with a Dormand-Prince 5(4) embedded pair and
transports the eigen-sign along the curve (each stage picks the sign that
maximizes the dot product with the tangent at the step start), which is the
mechanism that lets a single trajectory pass through regions where no
consistent global orientation exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import RegularityError, TransversalityError
from .geometry import (MAXIMAL, MINIMAL, ImplicitSurface, SurfaceChart,
                       chart_bundle, implicit_bundle)

TERM_CLOSED = "Closed"
TERM_HIT_UMBILIC = "HitUmbilic"
TERM_DOMAIN_EXIT = "DomainExit"
TERM_MAX_LENGTH = "MaxLength"
TERM_STEP_FAILURE = "StepFailure"


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

class DomainSection:
    """Closed transversal curve {coordinate == value} in chart coordinates.

    ``axis`` is "u" or "v"; the crossing coordinate is the other chart
    coordinate as a fraction of its 2 pi period.
    """

    def __init__(self, section_id, axis, value):
        self.section_id = section_id
        self.axis = axis
        self.value = float(value)
        self._idx = 0 if axis == "u" else 1

    def offset(self, uv, xyz):
        d = uv[self._idx] - self.value
        return (d + math.pi) % (2 * math.pi) - math.pi

    def coordinate(self, uv, xyz):
        other = uv[1 - self._idx]
        return (other / (2 * math.pi)) % 1.0


class WorldPlaneSection:
    """Plane cut {normal . p == offset}; coordinate is the polar angle of
    the projection onto the two in-plane reference axes."""

    def __init__(self, section_id, normal, offset=0.0, axes=None):
        self.section_id = section_id
        n = np.asarray(normal, dtype=float)
        self.normal = n / np.linalg.norm(n)
        self.offset_value = float(offset)
        if axes is None:
            t1, t2 = _plane_basis(self.normal)
        else:
            t1 = np.asarray(axes[0], dtype=float)
            t2 = np.asarray(axes[1], dtype=float)
        self.ax1, self.ax2 = t1, t2

    def offset(self, uv, xyz):
        return float(np.dot(self.normal, xyz) - self.offset_value)

    def coordinate(self, uv, xyz):
        ang = math.atan2(float(np.dot(xyz, self.ax2)),
                         float(np.dot(xyz, self.ax1)))
        return (ang / (2 * math.pi)) % 1.0


def _plane_basis(n):
    k = int(np.argmin(np.abs(n)))
    seed = np.zeros(3)
    seed[k] = 1.0
    t1 = seed - np.dot(seed, n) * n
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


@dataclass(frozen=True)
class SectionCrossing:
    section_id: str
    coordinate: float        # arclength/angle fraction in [0, 1)
    direction: int           # sign of d(offset)/ds at the crossing
    arclength: float
    xyz: np.ndarray = None


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    foliation_id: str
    points_uv: np.ndarray        # (N, 2) unwrapped chart coords (or xyz copy)
    points_xyz: np.ndarray       # (N, 3)
    tangents: np.ndarray         # (N, 3) unit world tangents
    normals: np.ndarray          # (N, 3) unit surface normals
    arclength: np.ndarray        # (N,) cumulative, equals the ODE parameter
    termination: str
    crossings: list = field(default_factory=list)
    hit_umbilic_index: int | None = None
    closed_length: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def length(self):
        return float(self.arclength[-1]) if len(self.arclength) else 0.0

    def late_points(self, fraction=0.25):
        n = max(2, int(len(self.points_xyz) * fraction))
        return self.points_xyz[-n:]


@dataclass(frozen=True)
class TraceOptions:
    rel_tol: float = 1e-8
    max_step_factor: float = 0.04        # times surface diameter
    min_step_factor: float = 1e-12
    max_length: float | None = None      # default 50 * diameter
    max_steps: int = 400000
    initial_sign: int = 1
    known_umbilics: Sequence = ()
    exclusion_radius_factor: float = 1e-3
    detect_closure: bool = True
    closure_tol_factor: float = 1e-5
    capture_factor: float = 1e-3
    min_closed_length_factor: float = 2e-2
    angle_tol_deg: float = 0.5
    sections: tuple = ()
    max_crossings: int | None = None
    precise_crossings: bool = False
    record_every: int = 1                # keep every n-th accepted point

    def with_sections(self, sections):
        return replace(self, sections=tuple(sections))


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192,
                   -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


class _FieldEval:
    """Direction-field sample: state velocity plus world data."""

    __slots__ = ("vel", "xyz", "tangent", "normal")

    def __init__(self, vel, xyz, tangent, normal):
        self.vel = vel
        self.xyz = xyz
        self.tangent = tangent
        self.normal = normal


def _chart_field(surface, foliation_id):
    from .geometry import principal_direction_fast

    minimal = foliation_id == MINIMAL

    def f(y, ref):
        duv, r, dxyz, n = principal_direction_fast(
            surface, float(y[0]), float(y[1]), minimal)
        if ref is not None and float(dxyz @ ref) < 0.0:
            duv = -duv
            dxyz = -dxyz
        return _FieldEval(duv, r, dxyz, n)

    return f


def _implicit_field(surface, foliation_id):
    key = "d1_xyz" if foliation_id == MINIMAL else "d2_xyz"

    def f(p, ref):
        b = implicit_bundle(surface, p, check_on_surface=False)
        d = b[key]
        if ref is not None and float(np.dot(d, ref)) < 0.0:
            d = -d
        return _FieldEval(d, b["r"], d, b["normal"])

    return f


def trace(surface, start, foliation_id, opts=None):
    """Integrate one principal line from ``start``.

    ``start`` is a chart point (u, v) for charts, or a world point for
    implicit surfaces (projected onto the level set first).  Termination,
    section crossings and closure refinement follow the options record;
    results are deterministic for fixed options.
    """
    if foliation_id not in (MINIMAL, MAXIMAL):
        raise ValueError(f"unknown foliation id {foliation_id!r}")
    opts = opts or TraceOptions()
    if isinstance(surface, ImplicitSurface):
        return _trace_core(surface, np.asarray(
            surface.project(np.asarray(start, dtype=float))),
            foliation_id, opts, implicit=True)
    return _trace_core(surface, np.asarray(start, dtype=float),
                       foliation_id, opts, implicit=False)


def _trace_core(surface, y0, foliation_id, opts, implicit):
    diam = surface.diameter()
    fld = (_implicit_field if implicit else _chart_field)(surface,
                                                          foliation_id)
    max_len = opts.max_length if opts.max_length is not None else 50.0 * diam
    h_max = opts.max_step_factor * diam
    h_min = opts.min_step_factor * diam
    excl = opts.exclusion_radius_factor * diam
    closure_tol = opts.closure_tol_factor * diam
    capture = max(opts.capture_factor * diam, 4.0 * closure_tol,
                  0.02 * diam)
    min_closed = opts.min_closed_length_factor * diam
    cos_tol = math.cos(math.radians(opts.angle_tol_deg))

    umb_pts = _umbilic_points(opts.known_umbilics)

    y = np.array(y0, dtype=float)
    ev = fld(y, None)
    if opts.initial_sign < 0:
        ev = _FieldEval(-ev.vel, ev.xyz, -ev.tangent, ev.normal)
    p0, t0 = ev.xyz.copy(), ev.tangent.copy()

    ys = [y.copy()]
    ps = [ev.xyz.copy()]
    ts = [ev.tangent.copy()]
    ns = [ev.normal.copy()]
    ss = [0.0]
    crossings = []
    sec_offsets = [sec.offset(y, ev.xyz) for sec in opts.sections]

    termination = TERM_MAX_LENGTH
    hit_idx = None
    closed_len = None
    s = 0.0
    h = min(1e-3 * diam, h_max)
    k1 = ev
    steps = 0
    rejected_in_row = 0

    while steps < opts.max_steps:
        steps += 1
        if s + h > max_len:
            h = max_len - s
            if h <= h_min:
                termination = TERM_MAX_LENGTH
                break
        try:
            y_new, err, stages = _dp_step(fld, y, k1, h)
        except (FloatingPointError, RegularityError):
            # a stage landed on a chart singularity; shorter steps dodge
            # it unless the path runs exactly through the point
            h *= 0.25
            if h < h_min:
                termination = TERM_STEP_FAILURE
                break
            continue
        tol = opts.rel_tol * max(h, 1e-3 * h_max)
        err_world = _world_err(err, stages[0], diam)
        if not np.isfinite(err_world) or err_world > tol:
            h = max(h * max(0.2, 0.9 * (tol / max(err_world, 1e-300))
                            ** 0.25), h_min * 1.01)
            rejected_in_row += 1
            if rejected_in_row > 60 or h <= h_min * 1.02:
                termination = TERM_STEP_FAILURE
                break
            continue
        rejected_in_row = 0

        ref = stages[0].tangent
        try:
            k_new = fld(y_new, ref)
        except Exception:
            termination = TERM_STEP_FAILURE
            break
        if implicit:
            proj = surface.project(y_new)
            if not np.allclose(proj, y_new, atol=1e-14 + 1e-9 * diam):
                y_new = proj
                k_new = fld(y_new, ref)

        s_new = s + h
        p_new = k_new.xyz

        # section crossings
        stop_on_crossings = False
        for i, sec in enumerate(opts.sections):
            g_old = sec_offsets[i]
            g_new = sec.offset(y_new, p_new)
            if g_old * g_new < 0.0 and abs(g_old) + abs(g_new) < math.pi:
                cross = _refine_crossing(
                    fld, sec, y, k1, h, g_old, g_new, s, opts)
                if cross is not None:
                    crossings.append(cross)
                    if (opts.max_crossings is not None
                            and len(crossings) >= opts.max_crossings):
                        stop_on_crossings = True
            sec_offsets[i] = g_new

        # umbilic exclusion
        if len(umb_pts):
            d = np.linalg.norm(umb_pts - p_new, axis=1)
            j = int(np.argmin(d))
            if d[j] < excl:
                termination = TERM_HIT_UMBILIC
                hit_idx = j
                _append(ys, ps, ts, ns, ss, y_new, k_new, s_new)
                break

        # closure against the start section
        if opts.detect_closure and s_new > min_closed:
            g0_old = float(np.dot(ps[-1] - p0, t0))
            g0_new = float(np.dot(p_new - p0, t0))
            if g0_old < 0.0 <= g0_new:
                t_lin = g0_old / (g0_old - g0_new)
                p_lin = ps[-1] + t_lin * (p_new - ps[-1])
                if np.linalg.norm(p_lin - p0) < capture:
                    y_c, ev_c, s_c = _refine_plane_hit(
                        fld, y, k1, h, s, p0, t0)
                    dist = float(np.linalg.norm(ev_c.xyz - p0))
                    align = float(np.dot(ev_c.tangent, t0))
                    if dist < closure_tol and align > cos_tol:
                        _append(ys, ps, ts, ns, ss, y_c, ev_c, s_c)
                        termination = TERM_CLOSED
                        closed_len = s_c
                        break

        # domain exit for charts
        if not implicit:
            exited = _domain_violation(surface, y_new)
            if exited:
                _append(ys, ps, ts, ns, ss, y_new, k_new, s_new)
                termination = TERM_DOMAIN_EXIT
                break
        else:
            if not surface.in_box(p_new):
                _append(ys, ps, ts, ns, ss, y_new, k_new, s_new)
                termination = TERM_DOMAIN_EXIT
                break

        # chart handoff across a coordinate pole (double-covered strip)
        if not implicit:
            rebase = getattr(surface, "rebase_state", None)
            if rebase is not None:
                moved = rebase(y_new[0], y_new[1])
                if moved is not None:
                    y_new = np.array(moved, dtype=float)
                    k_new = fld(y_new, k_new.tangent)
                    for i, sec in enumerate(opts.sections):
                        sec_offsets[i] = sec.offset(y_new, k_new.xyz)

        _append(ys, ps, ts, ns, ss, y_new, k_new, s_new)
        y, k1, s = y_new, k_new, s_new
        if stop_on_crossings:
            termination = TERM_MAX_LENGTH
            break
        if s >= max_len:
            termination = TERM_MAX_LENGTH
            break
        h = min(h * min(4.0, 0.9 * (tol / max(err_world, 1e-300)) ** 0.25),
                h_max)

    uv = np.asarray(ys)
    return Trajectory(
        foliation_id=foliation_id,
        points_uv=uv if not implicit else uv.copy(),
        points_xyz=np.asarray(ps),
        tangents=np.asarray(ts),
        normals=np.asarray(ns),
        arclength=np.asarray(ss),
        termination=termination,
        crossings=crossings,
        hit_umbilic_index=hit_idx,
        closed_length=closed_len,
        meta={"steps": steps, "surface": surface.name},
    )


def _append(ys, ps, ts, ns, ss, y, ev, s):
    ys.append(np.array(y, dtype=float))
    ps.append(ev.xyz.copy())
    ts.append(ev.tangent.copy())
    ns.append(ev.normal.copy())
    ss.append(float(s))


def _umbilic_points(known):
    pts = []
    for item in known or ():
        if hasattr(item, "xyz"):
            pts.append(np.asarray(item.xyz, dtype=float))
        else:
            pts.append(np.asarray(item, dtype=float))
    return np.asarray(pts) if pts else np.zeros((0, 3))


def _dp_step(fld, y, k1, h):
    ref = k1.tangent
    ks = [k1]
    for i in range(1, 7):
        yi = y + h * sum(a * ks[j].vel for j, a in enumerate(_DP_A[i]))
        ks.append(fld(yi, ref))
    y5 = y + h * sum(b * k.vel for b, k in zip(_DP_B5, ks))
    y4 = y + h * sum(b * k.vel for b, k in zip(_DP_B4, ks))
    return y5, y5 - y4, ks


def _world_err(err_state, k1, diam):
    if err_state.shape[-1] == 3:
        return float(np.linalg.norm(err_state))
    # chart state: push the (du, dv) error to world scale via the jacobian
    # hidden in the unit-speed velocity; |a_u|, |a_v| from the tangent
    # decomposition are not stored, so approximate with the velocity norm
    vel = k1.vel
    scale = np.linalg.norm(k1.tangent) / max(np.linalg.norm(vel), 1e-300)
    return float(np.linalg.norm(err_state) * scale)


def _hermite(y0, f0, y1, f1, h, t):
    """Cubic Hermite interpolation of the state across one step."""
    t2, t3 = t * t, t * t * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _refine_crossing(fld, sec, y_old, k_old, h, g_old, g_new, s_old, opts):
    """Locate a section crossing inside the accepted step."""
    ref = k_old.tangent
    y1, _, stages = _dp_step(fld, y_old, k_old, h)
    k_end = fld(y1, ref)

    def offset_at(t):
        yt = _hermite(y_old, k_old.vel, y1, k_end.vel, h, t)
        ev = fld(yt, ref)
        return sec.offset(yt, ev.xyz), yt, ev

    lo, hi, g_lo = 0.0, 1.0, g_old
    yt, ev = y_old, k_old
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        g_mid, yt, ev = offset_at(mid)
        if g_mid == 0.0:
            break
        if math.copysign(1.0, g_mid) == math.copysign(1.0, g_lo):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    t_star = 0.5 * (lo + hi)
    if opts.precise_crossings:
        # re-step exactly to the crossing parameter for integrator accuracy
        y_star, _, _ = _dp_step(fld, y_old, k_old, h * t_star)
        ev = fld(y_star, ref)
        yt = y_star
    tangent_rate = abs(g_new - g_old) / max(h, 1e-300)
    if tangent_rate < 1e-7:
        raise TransversalityError(
            f"tangential crossing of section {sec.section_id}")
    direction = 1 if g_new > g_old else -1
    return SectionCrossing(
        section_id=sec.section_id,
        coordinate=float(sec.coordinate(yt, ev.xyz)),
        direction=direction,
        arclength=float(s_old + h * t_star),
        xyz=np.asarray(ev.xyz, dtype=float))


def _refine_plane_hit(fld, y_old, k_old, h, s_old, p0, t0):
    """Exact re-step onto the plane (p - p0) . t0 = 0 inside the step."""
    ref = k_old.tangent
    lo, hi = 0.0, 1.0
    y_best, ev_best, t_best = y_old, k_old, 0.0
    g_lo = float(np.dot(k_old.xyz - p0, t0))
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        y_mid, _, _ = _dp_step(fld, y_old, k_old, h * mid)
        ev_mid = fld(y_mid, ref)
        g_mid = float(np.dot(ev_mid.xyz - p0, t0))
        y_best, ev_best, t_best = y_mid, ev_mid, mid
        if g_mid == 0.0 or (hi - lo) < 1e-14:
            break
        if math.copysign(1.0, g_mid) == math.copysign(1.0, g_lo):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return y_best, ev_best, s_old + h * t_best


def _domain_violation(surface, y):
    (u0, u1), (v0, v1) = surface.domain
    if not surface.periodic_u and not (u0 <= y[0] <= u1):
        return True
    if not surface.periodic_v and not (v0 <= y[1] <= v1):
        return True
    return False


# ---------------------------------------------------------------------------
# omega-limit classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KnownFeatures:
    umbilics: Sequence = ()
    cycles: Sequence = ()


@dataclass(frozen=True)
class OmegaLimitResult:
    verdict: str                 # "Umbilic" | "Cycle" | "RecurrentOrUndetermined"
    recurrent_evidence: bool
    detail: str
    returns: int = 0
    cycle_index: int | None = None


def omega_limit_classify(surface, traj, known=None,
                         epsilon_factor=1e-2, min_returns=20):
    """Heuristic limit-set verdict for a finished trajectory.

    HitUmbilic maps to Umbilic and Closed to Cycle(self).  Otherwise the
    late trajectory is compared against the known cycles (monotone
    approach implies Cycle) and an epsilon-ball recurrence count is taken;
    at least ``min_returns`` passes with non-shrinking gaps yield
    RecurrentOrUndetermined with the recurrence evidence flag set.  The
    verdict never claims more than the finite data supports.
    """
    known = known or KnownFeatures()
    if traj.termination == TERM_HIT_UMBILIC:
        return OmegaLimitResult("Umbilic", False,
                                f"entered umbilic exclusion ball "
                                f"{traj.hit_umbilic_index}")
    if traj.termination == TERM_CLOSED:
        return OmegaLimitResult("Cycle", False, "closed onto itself")

    diam = surface.diameter()
    # convergence toward a known cycle
    for idx, cyc in enumerate(known.cycles or ()):
        pts = getattr(cyc, "points_xyz", None)
        if pts is None and hasattr(cyc, "curve"):
            pts = cyc.curve.points_xyz
        if pts is None or len(pts) < 2:
            continue
        late = traj.late_points(0.3)
        d = _min_dist_series(late, pts)
        n = len(d)
        if n >= 8:
            first, last = float(np.mean(d[: n // 3])), float(
                np.mean(d[-n // 3:]))
            if last < 3e-3 * diam and last < 0.6 * first:
                return OmegaLimitResult(
                    "Cycle", False,
                    f"approaching known cycle {idx} "
                    f"(mean dist {first:.2e} -> {last:.2e})",
                    cycle_index=idx)

    # epsilon-ball recurrence
    eps = epsilon_factor * diam
    passes, gaps = _ball_returns(traj, eps)
    evidence = False
    detail = f"{passes} return(s) to an eps-ball (eps = {eps:.3g})"
    if passes >= min_returns and len(gaps) >= 6:
        third = max(2, len(gaps) // 3)
        early = float(np.median(gaps[:third]))
        late = float(np.median(gaps[-third:]))
        if late > 0.4 * early:
            evidence = True
            detail += ", gaps non-shrinking: recurrent evidence"
        else:
            detail += ", gaps shrinking (possible cycle approach)"
    return OmegaLimitResult("RecurrentOrUndetermined", evidence, detail,
                            returns=passes)


def _min_dist_series(points, polyline):
    from scipy.spatial import cKDTree

    tree = cKDTree(polyline)
    d, _ = tree.query(points)
    return d


def _ball_returns(traj, eps, candidates=40):
    """Best epsilon-ball return count over early reference points.

    Recurrence evidence asks for *a* ball the trajectory re-enters many
    times; scanning candidate centers along the early trajectory finds
    the region it actually revisits (a fixed 10%-index point can land
    somewhere rarely visited and under-count badly).
    """
    pts = traj.points_xyz
    n = len(pts)
    if n < 10:
        return 0, []
    s = traj.arclength
    early = np.linspace(max(1, n // 100), max(2, n // 5), candidates,
                        dtype=int)
    best = (0, [])
    for idx in np.unique(early):
        ref = pts[idx]
        d = np.linalg.norm(pts - ref, axis=1)
        inside = d < eps
        passes = []
        i = 0
        while i < n:
            if inside[i]:
                j = i
                while j + 1 < n and inside[j + 1]:
                    j += 1
                passes.append(0.5 * (s[i] + s[j]))
                i = j + 1
            else:
                i += 1
        if len(passes) > best[0]:
            gaps = list(np.diff(passes)) if len(passes) > 1 else []
            best = (len(passes), gaps)
    return best


# ---------------------------------------------------------------------------
# separatrix connection scan
# ---------------------------------------------------------------------------

@dataclass
class ConnectionScanResult:
    connections: list            # (i, j, foliation_id) with i <= j
    undetermined: list           # (i, foliation_id, angle, termination)
    launches: int = 0


def separatrix_connection_scan(surface, records, opts=None,
                               align_tol_deg=15.0, length_factor=4.0,
                               launch_skew=2.5e-4):
    """Integrate every umbilic separatrix outward and report connections.

    A connection is recorded when the trajectory enters another umbilic's
    exclusion ball approaching along one of that umbilic's separatrix rays
    (same foliation) within the angular tolerance; returning to the source
    counts as a self-connection.  Undetermined separatrices (budget or
    step failures) are listed separately.  Launch angles carry a tiny
    deterministic skew so that exactly-symmetric separatrix arcs do not
    run through chart poles.
    """
    diam = surface.diameter()
    opts = opts or TraceOptions()
    opts = replace(opts, known_umbilics=records,
                   max_length=length_factor * diam, detect_closure=False)
    excl = opts.exclusion_radius_factor * diam
    r_launch = 2.5 * excl
    connections = {}
    undetermined = []
    launches = 0
    targets = np.array([np.asarray(r.xyz, dtype=float) for r in records])

    for i, rec in enumerate(records):
        frame = rec.monge.frame
        for fol in (MINIMAL, MAXIMAL):
            for ang in rec.separatrices.get(fol, ()):  # world-frame angles
                launches += 1
                ang = ang + launch_skew
                ray = math.cos(ang) * frame.e1 + math.sin(ang) * frame.e2
                target = rec.xyz + r_launch * ray
                uv = chart_point_near(surface, target, rec.uv)
                if uv is None:
                    undetermined.append((i, fol, ang, "no-chart-point"))
                    continue
                b = chart_bundle(surface, uv[0], uv[1])
                d = b["d1_xyz"] if fol == MINIMAL else b["d2_xyz"]
                sign = 1 if float(np.dot(d, ray)) >= 0.0 else -1
                traj = trace(surface, uv, fol,
                             replace(opts, initial_sign=sign))
                if traj.termination != TERM_HIT_UMBILIC:
                    undetermined.append((i, fol, ang, traj.termination))
                    continue
                j = traj.hit_umbilic_index
                approach = traj.points_xyz[-1] - targets[j]
                nrm = np.linalg.norm(approach)
                if nrm < 1e-14:
                    approach = -traj.tangents[-1]
                    nrm = 1.0
                approach = approach / nrm
                if _ray_match(records[j], fol, approach, align_tol_deg):
                    key = (min(i, j), max(i, j), fol)
                    connections[key] = True
                else:
                    undetermined.append((i, fol, ang, "unaligned-arrival"))
    return ConnectionScanResult(sorted(connections), undetermined, launches)


def _ray_match(rec, fol, direction, tol_deg):
    frame = rec.monge.frame
    cos_tol = math.cos(math.radians(tol_deg))
    for ang in rec.separatrices.get(fol, ()):
        ray = math.cos(ang) * frame.e1 + math.sin(ang) * frame.e2
        if float(np.dot(ray, direction)) > cos_tol:
            return True
    return False


def chart_point_near(surface, world_target, uv_seed, tol=1e-12,
                     max_iter=40):
    """Gauss-Newton chart inversion near a seed parameter point.

    Returns the chart point closest to ``world_target`` (which may sit
    slightly off the surface, e.g. a tangent-plane offset); convergence is
    judged on the tangential residual, the only part that can vanish.
    """
    uv = np.array(uv_seed, dtype=float)
    target = np.asarray(world_target, dtype=float)
    diam = surface.diameter()
    best = None
    for _ in range(max_iter):
        J = surface.jet(uv[0], uv[1])
        r = J[0, 0] - target
        if np.linalg.norm(r) > 10.0 * diam or not np.all(np.isfinite(r)):
            return None
        A = np.stack([J[1, 0], J[0, 1]], axis=1)      # 3x2
        try:
            step, *_ = np.linalg.lstsq(A, -r, rcond=None)
        except np.linalg.LinAlgError:
            return None
        uv = uv + step
        if np.linalg.norm(step) < tol:
            best = uv
            break
        best = uv
    J = surface.jet(uv[0], uv[1])
    r = J[0, 0] - target
    A = np.stack([J[1, 0], J[0, 1]], axis=1)
    tang, *_ = np.linalg.lstsq(A, r, rcond=None)
    if np.linalg.norm(A @ tang) < 1e-9 * diam:
        return best
    return None
