"""Principal cycles: detection, Poincare return maps, hyperbolicity.

The return-map derivative is computed two independent ways and cross
checked: a Richardson-extrapolated central difference of the actual return
map, and the exponential of the closed line integral of dH/sqrt(H^2 - K)
(equivalently dk2/(k2 - k1)) along the cycle.  The sign of the integral
formula depends on orientation conventions, so the branch is resolved
empirically against the finite-difference value and recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConvergenceError, ReturnFailure, UmbilicProximityError
from .foliation import (TERM_CLOSED, TraceOptions, WorldPlaneSection,
                        chart_point_near, trace)
from .geometry import MAXIMAL, MINIMAL, chart_bundle, curvature_gradients


@dataclass(frozen=True)
class CycleSearchOptions:
    trace_tol: float = 1e-11          # derivative-quality traces
    search_tol: float = 1e-8          # cycle hunting traces
    section_capture_factor: float = 0.12
    newton_tol_factor: float = 1e-9
    max_newton: int = 18
    max_secant_step_factor: float = 0.35
    cycle_merge_factor: float = 1e-3
    fd_offset_factor: float = 1e-3
    max_period_factor: float = 8.0
    hyperbolicity_tol: float = 1e-4
    quadrature_points: int = 1024
    known_umbilics: tuple = ()


@dataclass
class PrincipalCycle:
    foliation_id: str
    curve: object                      # Closed Trajectory
    period_length: float
    anchor_uv: tuple
    anchor_xyz: np.ndarray
    tangent: np.ndarray                # t0 at the anchor
    conormal: np.ndarray               # w0 = n x t0, section coordinate axis
    double_return: bool = False
    tprime_fd: float | None = None
    tprime_fd_error: float | None = None
    tprime_integral: float | None = None
    log_integral_dH: float | None = None
    log_integral_dk2: float | None = None
    sign_branch: int | None = None
    hyperbolic: bool | None = None
    hyperbolic_tol: float | None = None
    meta: dict = field(default_factory=dict)

    def log_tprime(self):
        if self.tprime_fd is not None and self.tprime_fd > 0:
            return math.log(self.tprime_fd)
        return math.nan

    def to_dict(self):
        return {
            "foliation_id": self.foliation_id,
            "period_length": self.period_length,
            "anchor_uv": [float(x) for x in self.anchor_uv],
            "anchor_xyz": [float(x) for x in self.anchor_xyz],
            "double_return": self.double_return,
            "tprime_fd": self.tprime_fd,
            "tprime_fd_error": self.tprime_fd_error,
            "tprime_integral": self.tprime_integral,
            "log_integral_dH": self.log_integral_dH,
            "log_integral_dk2": self.log_integral_dk2,
            "sign_branch": self.sign_branch,
            "hyperbolic": self.hyperbolic,
            "hyperbolic_tol": self.hyperbolic_tol,
        }


# ---------------------------------------------------------------------------
# anchored return map
# ---------------------------------------------------------------------------

class _Anchor:
    """Poincare section through a point, normal to the cycle tangent."""

    def __init__(self, surface, uv):
        b = chart_bundle(surface, uv[0], uv[1])
        self.surface = surface
        self.uv = (float(uv[0]), float(uv[1]))
        self.p0 = b["r"]
        self.n0 = b["normal"]

    def orient(self, foliation_id, sign=1):
        b = chart_bundle(self.surface, self.uv[0], self.uv[1])
        d = b["d1_xyz"] if foliation_id == MINIMAL else b["d2_xyz"]
        self.t0 = sign * d
        self.w0 = np.cross(self.n0, self.t0)
        return self

    def start_at_offset(self, h):
        """Chart point for the section coordinate h (0 is the anchor)."""
        if h == 0.0:
            return np.array(self.uv)
        target = self.p0 + h * self.w0
        uv = chart_point_near(self.surface, target, self.uv)
        if uv is None:
            raise ReturnFailure(f"no chart point at section offset {h:.3e}")
        return uv

    def start_info(self, h):
        """(chart point, actual section coordinate) for nominal offset h.

        Projecting the tangent-line target onto the surface shifts the
        section coordinate by the curvature sag, so the actual coordinate
        of the start point is what return displacements must be measured
        against.
        """
        uv = self.start_at_offset(h)
        p = self.surface.point(uv[0], uv[1])
        return uv, float(np.dot(p - self.p0, self.w0))

    def section(self):
        return WorldPlaneSection("return", normal=self.t0,
                                 offset=float(np.dot(self.t0, self.p0)))


def _return_offsets(surface, anchor, foliation_id, h, opts, n_returns=2,
                    tol=None):
    """(start coordinate, section coordinates of the first ``n_returns``
    returns near the anchor)."""
    diam = surface.diameter()
    uv, w_start = anchor.start_info(h)
    b = chart_bundle(surface, uv[0], uv[1])
    d = b["d1_xyz"] if foliation_id == MINIMAL else b["d2_xyz"]
    sign = 1 if float(np.dot(d, anchor.t0)) >= 0.0 else -1
    topts = TraceOptions(
        rel_tol=tol if tol is not None else opts.trace_tol,
        detect_closure=False,
        max_length=opts.max_period_factor * diam * n_returns,
        initial_sign=sign, known_umbilics=opts.known_umbilics,
        sections=(anchor.section(),), precise_crossings=True,
        max_crossings=6 * n_returns)
    traj = trace(surface, uv, foliation_id, topts)
    capture = opts.section_capture_factor * diam
    hits = []
    for c in traj.crossings:
        # skip the on-section start; the crossing direction label is not
        # filtered because it flips with the (tiny, curvature-sign) side
        # of the section the start lands on
        if c.arclength < 1e-3 * diam:
            continue
        if c.xyz is None:
            continue
        if np.linalg.norm(c.xyz - anchor.p0) > capture:
            continue
        hits.append(float(np.dot(c.xyz - anchor.p0, anchor.w0)))
        if len(hits) >= n_returns:
            break
    if len(hits) < n_returns:
        raise ReturnFailure(
            f"trajectory produced {len(hits)} return(s) within budget "
            f"(termination {traj.termination})")
    return w_start, hits


def _probe_double_return(surface, anchor, foliation_id, h, opts):
    w_start, hits = _return_offsets(surface, anchor, foliation_id, h,
                                    opts, 2)
    return (hits[0] * w_start) < 0.0


def _return_value(surface, anchor, foliation_id, h, opts, double,
                  tol=None):
    """(actual start coordinate, return coordinate) for nominal offset."""
    w_start, hits = _return_offsets(surface, anchor, foliation_id, h, opts,
                                    2 if double else 1, tol=tol)
    return w_start, hits[1] if double else hits[0]


# ---------------------------------------------------------------------------
# cycle detection
# ---------------------------------------------------------------------------

def find_cycles(surface, seeds, foliation_id, opts=None, threads=1):
    """Trace seeds, converge each onto a nearby cycle, deduplicate.

    Every seed is refined by a secant iteration on the section return
    displacement T(h) - h (Newton on the return map), so isolated cycles
    are found from seeds merely near them; non-converging seeds are
    dropped.  Cycles closer than the merge tolerance (Hausdorff distance)
    are reported once.  ``threads`` fans the per-seed searches out; the
    merge stays in seed order, so results are deterministic.
    """
    from .catalog import parallel_map

    opts = opts or CycleSearchOptions()
    diam = surface.diameter()
    candidates = parallel_map(
        lambda seed: _cycle_from_seed(surface, seed, foliation_id, opts),
        list(seeds), threads)
    cycles = []
    for cyc in candidates:
        if cyc is None:
            continue
        if not _is_duplicate(cyc, cycles, opts.cycle_merge_factor * diam):
            cycles.append(attach_estimates(surface, cyc, opts))
    return cycles


def _cycle_from_seed(surface, seed, foliation_id, opts):
    diam = surface.diameter()
    try:
        anchor = _Anchor(surface, seed).orient(foliation_id)
    except Exception:
        return None
    tol = opts.newton_tol_factor * diam
    step_cap = opts.max_secant_step_factor * diam

    def G(h, tight=False):
        w_start, ret = _return_value(
            surface, anchor, foliation_id, h, opts, double=False,
            tol=opts.trace_tol if tight else opts.search_tol)
        return ret - w_start

    try:
        g = G(0.0)
    except ReturnFailure:
        return None
    h = _secant_root(G, 0.0, g, tol, step_cap, diam, opts.max_newton)
    if h is None:
        h = _bracket_root(G, 0.0, g, tol, diam, opts)
    if h is None:
        return None

    try:
        uv_star = anchor.start_at_offset(h)
    except ReturnFailure:
        return None
    closed = trace(surface, uv_star, foliation_id, TraceOptions(
        rel_tol=opts.trace_tol, detect_closure=True,
        max_length=opts.max_period_factor * diam,
        known_umbilics=opts.known_umbilics))
    if closed.termination != TERM_CLOSED:
        return None
    return cycle_from_closed_trajectory(surface, closed)


def _secant_root(G, h0, g0, tol, step_cap, diam, max_iter):
    """Secant iteration with certified (tight-trace) convergence."""
    h, g = h0, g0
    h_prev, g_prev = None, None
    for _ in range(max_iter):
        if abs(g) < 100.0 * tol:
            # search-quality residuals bottom out at the loose trace
            # tolerance; certify with a derivative-quality evaluation
            try:
                g_tight = G(h, tight=True)
            except ReturnFailure:
                return None
            if abs(g_tight) < tol:
                return h
            g = g_tight
        if h_prev is None:
            h_new = h - 0.5 * g
        else:
            denom = g - g_prev
            if denom == 0.0:
                return None
            delta = -g * (h - h_prev) / denom
            if not np.isfinite(delta):
                return None
            h_new = h + float(np.clip(delta, -step_cap, step_cap))
        if abs(h_new) > 2.0 * diam:
            return None
        h_prev, g_prev = h, g
        h = h_new
        try:
            g = G(h)
        except ReturnFailure:
            return None
    return None


def _bracket_root(G, h0, g0, tol, diam, opts, span_factor=0.35, probes=6):
    """Scan the section for a sign change of G, bisect, secant-polish."""
    offsets = [h0]
    values = [g0]
    step = span_factor * diam / probes
    for k in range(1, probes + 1):
        for sign in (1.0, -1.0):
            h = h0 + sign * k * step
            try:
                values.append(G(h))
                offsets.append(h)
            except ReturnFailure:
                continue
    order = np.argsort(offsets)
    hs = np.asarray(offsets)[order]
    gs = np.asarray(values)[order]
    bracket = None
    for i in range(len(hs) - 1):
        if gs[i] * gs[i + 1] < 0.0:
            bracket = (hs[i], gs[i], hs[i + 1], gs[i + 1])
            break
    if bracket is None:
        return None
    lo, g_lo, hi, g_hi = bracket
    for _ in range(14):
        mid = 0.5 * (lo + hi)
        try:
            g_mid = G(mid)
        except ReturnFailure:
            return None
        if g_mid == 0.0:
            lo, g_lo = mid, g_mid
            break
        if math.copysign(1.0, g_mid) == math.copysign(1.0, g_lo):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    return _secant_root(G, lo, g_lo, tol, abs(hi - lo) + 1e-12, diam, 10)


def cycle_from_closed_trajectory(surface, traj):
    if traj.termination != TERM_CLOSED:
        raise ValueError("trajectory is not Closed")
    anchor = _Anchor(surface, traj.points_uv[0]).orient(
        traj.foliation_id,
        sign=1 if float(np.dot(
            chart_bundle(surface, traj.points_uv[0][0],
                         traj.points_uv[0][1])
            ["d1_xyz" if traj.foliation_id == MINIMAL else "d2_xyz"],
            traj.tangents[0])) >= 0 else -1)
    return PrincipalCycle(
        foliation_id=traj.foliation_id,
        curve=traj,
        period_length=float(traj.closed_length),
        anchor_uv=anchor.uv,
        anchor_xyz=anchor.p0,
        tangent=anchor.t0,
        conormal=anchor.w0)


def _densify(polyline, spacing):
    seg = np.diff(polyline, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    parts = [polyline[:1]]
    for i, L in enumerate(lengths):
        n = max(1, int(L / spacing))
        ts = np.linspace(0.0, 1.0, n + 1)[1:, None]
        parts.append(polyline[i] + ts * seg[i])
    return np.concatenate(parts)


def _is_duplicate(cyc, cycles, merge_tol):
    from scipy.spatial import cKDTree

    for other in cycles:
        if other.foliation_id != cyc.foliation_id:
            continue
        a = _densify(other.curve.points_xyz, 0.5 * merge_tol)
        b = _densify(cyc.curve.points_xyz, 0.5 * merge_tol)
        d1, _ = cKDTree(a).query(cyc.curve.points_xyz)
        d2, _ = cKDTree(b).query(other.curve.points_xyz)
        if max(float(d1.max()), float(d2.max())) < merge_tol:
            return True
    return False


# ---------------------------------------------------------------------------
# estimator 1: finite differences on the return map
# ---------------------------------------------------------------------------

def return_map_derivative_fd(surface, cycle, h=None, opts=None):
    """Central difference of the return map, Richardson extrapolated over
    h and h/2.  Differences run over the actual section coordinates of the
    start points (the nominal offsets shift by the projection sag).
    Returns (value, error_estimate, double_return_used)."""
    opts = opts or CycleSearchOptions()
    diam = surface.diameter()
    if h is None:
        h = opts.fd_offset_factor * diam
    anchor = _Anchor(surface, cycle.anchor_uv).orient(cycle.foliation_id)
    if float(np.dot(anchor.t0, cycle.tangent)) < 0:
        anchor.orient(cycle.foliation_id, sign=-1)
    double = _probe_double_return(surface, anchor, cycle.foliation_id,
                                  h, opts)

    def T(x):
        return _return_value(surface, anchor, cycle.foliation_id, x, opts,
                             double)

    def central(x):
        w_p, r_p = T(x)
        w_m, r_m = T(-x)
        return (r_p - r_m) / (w_p - w_m)

    d_h = central(h)
    d_h2 = central(0.5 * h)
    value = (4.0 * d_h2 - d_h) / 3.0
    err = abs(d_h2 - d_h) / 3.0
    return value, err, double


# ---------------------------------------------------------------------------
# estimator 2: closed line integrals
# ---------------------------------------------------------------------------

def _periodic_spline(values, s, total):
    wind = (values[-1] - values[0]) / total
    residual = values - wind * s
    residual[-1] = residual[0]
    spline = CubicSpline(s, residual, bc_type="periodic")
    return spline, wind


def return_map_derivative_integral(surface, cycle, opts=None,
                                   curvature_floor_rel=1e-6):
    """Both line-integral variants of log T' along the refined cycle.

    Resamples the closed curve uniformly in arclength with periodic
    splines, evaluates the analytic curvature gradients and applies the
    periodic trapezoid rule (spectrally accurate on smooth cycles).
    Raises UmbilicProximityError if sqrt(H^2 - K) dips below the floor and
    ConvergenceError if the two variants disagree beyond 1e-4.
    """
    opts = opts or CycleSearchOptions()
    traj = cycle.curve
    s = traj.arclength
    total = float(s[-1])
    if total <= 0:
        raise ConvergenceError("cycle has zero length")
    su, wu = _periodic_spline(traj.points_uv[:, 0].copy(), s, total)
    sv, wv = _periodic_spline(traj.points_uv[:, 1].copy(), s, total)

    N = opts.quadrature_points
    sq = np.linspace(0.0, total, N, endpoint=False)
    uq = su(sq) + wu * sq
    vq = sv(sq) + wv * sq
    up = su(sq, 1) + wu
    vp = sv(sq, 1) + wv

    grads = curvature_gradients(surface, uq, vq)
    disc = grads["sqrt_disc"]
    kappa = np.max(np.abs(grads["H"]) + disc)
    floor = curvature_floor_rel * max(float(kappa), 1e-12)
    if np.min(disc) < floor:
        raise UmbilicProximityError(
            f"sqrt(H^2-K) reaches {float(np.min(disc)):.3e} along cycle")

    dH_ds = grads["H_u"] * up + grads["H_v"] * vp
    dk2_ds = grads["k2_u"] * up + grads["k2_v"] * vp
    integrand_dH = dH_ds / disc
    integrand_dk2 = dk2_ds / (2.0 * disc)

    log_dH = 0.5 * float(np.mean(integrand_dH) * total)
    log_dk2 = float(np.mean(integrand_dk2) * total)
    if abs(log_dH - log_dk2) > 1e-4 * max(1.0, abs(log_dH)):
        raise ConvergenceError(
            f"integral variants disagree: {log_dH:.6e} vs {log_dk2:.6e}")
    return log_dH, log_dk2


# ---------------------------------------------------------------------------
# assembly and verdicts
# ---------------------------------------------------------------------------

def attach_estimates(surface, cycle, opts=None):
    """Populate both T' estimators, the sign branch and the verdict."""
    opts = opts or CycleSearchOptions()
    meta = dict(cycle.meta)
    try:
        fd, fd_err, double = return_map_derivative_fd(surface, cycle,
                                                      opts=opts)
    except ReturnFailure as exc:
        meta["fd_failure"] = str(exc)
        fd, fd_err, double = None, None, False
    try:
        log_dH, log_dk2 = return_map_derivative_integral(surface, cycle,
                                                         opts=opts)
    except (UmbilicProximityError, ConvergenceError) as exc:
        meta["integral_failure"] = str(exc)
        log_dH = log_dk2 = None

    sign_branch = None
    tprime_integral = None
    if log_dH is not None:
        magnitude = 0.5 * (log_dH + log_dk2)
        if fd is not None and fd > 0:
            log_fd = math.log(fd)
            sign_branch = 1 if abs(log_fd - magnitude) <= \
                abs(log_fd + magnitude) else -1
        else:
            sign_branch = 1
        tprime_integral = math.exp(sign_branch * magnitude)

    cyc = replace(cycle, tprime_fd=fd, tprime_fd_error=fd_err,
                  double_return=double, tprime_integral=tprime_integral,
                  log_integral_dH=log_dH, log_integral_dk2=log_dk2,
                  sign_branch=sign_branch, meta=meta)
    verdict = hyperbolicity(cyc, opts.hyperbolicity_tol)
    return replace(cyc, hyperbolic=(verdict == "hyperbolic"),
                   hyperbolic_tol=opts.hyperbolicity_tol)


def hyperbolicity(cycle, tol=1e-4):
    """"hyperbolic" iff |log T'| > tol for the better estimator, else
    "NearUnity"; "unknown" when no estimator converged."""
    candidates = []
    if cycle.tprime_fd is not None and cycle.tprime_fd > 0:
        err = cycle.tprime_fd_error or 0.0
        candidates.append((err / max(cycle.tprime_fd, 1e-300),
                           abs(math.log(cycle.tprime_fd))))
    if cycle.tprime_integral is not None:
        candidates.append((1e-8, abs(math.log(cycle.tprime_integral))))
    if not candidates:
        return "unknown"
    candidates.sort()
    _, best = candidates[0]
    return "hyperbolic" if best > tol else "NearUnity"
