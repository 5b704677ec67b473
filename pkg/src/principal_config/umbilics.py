"""Umbilic points: location, Monge normal form, Darbouxian type, index,
separatrix directions.

The Monge extraction is exact series algebra: the chart jet is rewritten as
a height series over the tangent plane (order-3 inversion of the tangent
coordinates), then the tangent frame is rotated to kill the x^2 y cubic
coefficient.  Types follow the open inequalities on (a/b, c/2b) with an
explicit slack band; degenerate cases are return values, not failures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, FrameError, InconclusiveError
from .geometry import MAXIMAL, MINIMAL, chart_bundle

D1, D2, D3 = "D1", "D2", "D3"
NON_TRANSVERSAL = "NonTransversal"
NEAR_BOUNDARY = "NearBoundary"
UNCLASSIFIED = "unclassified"

_SEPARATRIX_COUNT = {D1: 1, D2: 2, D3: 3}


@dataclass(frozen=True)
class AllUmbilicSurface:
    """Marker result: H^2 - K vanishes identically (sphere or plane)."""

    detail: str = "every sampled point is umbilic"


@dataclass(frozen=True)
class MongeFrame:
    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class MongeCoefficients:
    """Rotated Monge cubic z = (k/2)(x^2+y^2) + (a/6)x^3 + (b/2)xy^2
    + (c/6)y^3 in the stored orthonormal frame."""

    k: float
    a: float
    b: float
    c: float
    rotation: float
    frame: MongeFrame
    residual_x2y: float
    quadratic_defect: float     # max(|q11|, |q20 - q02|) before rotation


@dataclass(frozen=True)
class UmbilicRecord:
    uv: tuple
    xyz: np.ndarray
    hk_residual: float                        # H^2 - K after refinement
    monge: MongeCoefficients | None = None
    type: str = UNCLASSIFIED
    index: float | None = None
    margin: float = math.nan
    separatrices: dict = field(default_factory=dict)
    separatrix_confidence: dict = field(default_factory=dict)

    def summary(self):
        x, y, z = self.xyz
        return (f"{self.type} umbilic at ({x:+.6f}, {y:+.6f}, {z:+.6f}), "
                f"margin {self.margin:.3g}")

    def to_dict(self):
        m = self.monge
        return {
            "uv": [float(self.uv[0]), float(self.uv[1])],
            "xyz": [float(v) for v in self.xyz],
            "hk_residual": float(self.hk_residual),
            "type": self.type,
            "index": self.index,
            "margin": None if math.isnan(self.margin) else float(self.margin),
            "monge": None if m is None else {
                "k": m.k, "a": m.a, "b": m.b, "c": m.c,
                "rotation": m.rotation,
                "residual_x2y": m.residual_x2y,
            },
            "separatrices": {k: [float(a) for a in v]
                             for k, v in self.separatrices.items()},
            "separatrix_confidence": dict(self.separatrix_confidence),
        }


# ---------------------------------------------------------------------------
# location
# ---------------------------------------------------------------------------

def locate_umbilics(surface, grid=32, refine=1e-24, merge_radius_factor=1e-4,
                    all_umbilic_rel=1e-5):
    """Grid scan of H^2 - K seeding a damped Newton solve of the umbilic
    equations; returns deterministic, pairwise-separated records.

    ``refine`` bounds H^2 - K relative to the squared curvature scale at
    accepted points.  A surface umbilic everywhere (sphere) returns the
    AllUmbilicSurface marker instead of a point list; an empty list is a
    valid result (torus).
    """
    if grid < 16:
        raise ValueError("grid resolution must be at least 16 per axis")
    (u0, u1), (v0, v1) = surface.domain
    du, dv = (u1 - u0) / grid, (v1 - v0) / grid
    uc = u0 + (np.arange(grid) + 0.5) * du
    vc = v0 + (np.arange(grid) + 0.5) * dv
    uu, vv = np.meshgrid(uc, vc, indexing="ij")
    b = chart_bundle(surface, uu, vv, strict=False)
    S = np.square(0.5 * b["umbilic_deviation"])
    kappa = np.nanmax(np.maximum(np.abs(b["k1"]), np.abs(b["k2"])))
    kappa = max(float(kappa), 1e-12)

    if np.nanmax(S) < (all_umbilic_rel * kappa) ** 2:
        return AllUmbilicSurface()

    minima = _local_minima(S, surface.periodic_u, surface.periodic_v)
    threshold = min(0.25 * kappa ** 2,
                    max(1e4 * np.nanmin(S), (1e-3 * kappa) ** 2))
    seeds = [(uu[i, j], vv[i, j]) for i, j in minima
             if np.isfinite(S[i, j]) and S[i, j] <= threshold]

    found = []
    for seed in seeds:
        res = _refine_umbilic(surface, seed, kappa)
        if res is None:
            continue
        (u, v), s_final = res
        if s_final > refine * kappa ** 2:
            continue
        if not surface.in_domain(u, v):
            continue
        found.append(((u, v), s_final))

    merge_r = merge_radius_factor * surface.diameter()
    records = []
    for (u, v), s_final in sorted(found, key=lambda t: (round(t[0][0], 9),
                                                        round(t[0][1], 9))):
        u_w = _wrap_into(u, u0, u1) if surface.periodic_u else u
        v_w = _wrap_into(v, v0, v1) if surface.periodic_v else v
        xyz = surface.point(u_w, v_w)
        if any(np.linalg.norm(xyz - r.xyz) < merge_r for r in records):
            continue
        records.append(UmbilicRecord(uv=(float(u_w), float(v_w)),
                                     xyz=np.asarray(xyz),
                                     hk_residual=float(s_final)))
    return records


def _wrap_into(x, lo, hi):
    return lo + (x - lo) % (hi - lo)


def _local_minima(S, periodic_u, periodic_v):
    n, m = S.shape
    out = []
    filled = np.where(np.isfinite(S), S, np.inf)
    for i in range(n):
        for j in range(m):
            val = filled[i, j]
            if not np.isfinite(val):
                continue
            best = True
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    ii, jj = i + di, j + dj
                    if periodic_u:
                        ii %= n
                    if periodic_v:
                        jj %= m
                    if 0 <= ii < n and 0 <= jj < m:
                        if filled[ii, jj] < val:
                            best = False
                            break
                if not best:
                    break
            if best:
                out.append((i, j))
    return out


def _umbilic_residual(surface, u, v):
    """(w11 - w22, 2 w12) in the orthonormal frame; zero iff umbilic."""
    b = chart_bundle(surface, u, v)
    dev = b["k2"] - b["k1"]
    phi2 = None
    # recompute the symmetric components directly for a smooth residual
    E, F, G = b["E"], b["F"], b["G"]
    e, f, g = b["e"], b["f"], b["g"]
    m = G - F * F / E
    w11 = e / E
    w12 = (f - (F / E) * e) / np.sqrt(E * m)
    w22 = (g - 2 * (F / E) * f + (F / E) ** 2 * e) / m
    return np.array([w11 - w22, 2.0 * w12]), dev, phi2


def _refine_umbilic(surface, seed, kappa, max_iter=60):
    u, v = float(seed[0]), float(seed[1])
    u_seed, v_seed = u, v
    (u0, u1), (v0, v1) = surface.domain
    span = max(u1 - u0, v1 - v0)
    h = 1e-6 * span
    step_cap = 0.08 * span        # a couple of grid cells per iteration
    leash = 0.3 * span            # abandon runaway iterations
    try:
        F, _, _ = _umbilic_residual(surface, u, v)
    except Exception:
        return None
    best = float(F @ F)
    for _ in range(max_iter):
        if best <= (1e-13 * kappa) ** 2:
            break
        if abs(u - u_seed) > leash or abs(v - v_seed) > leash:
            return None
        try:
            Fu, _, _ = _umbilic_residual(surface, u + h, v)
            Fu2, _, _ = _umbilic_residual(surface, u - h, v)
            Fv, _, _ = _umbilic_residual(surface, u, v + h)
            Fv2, _, _ = _umbilic_residual(surface, u, v - h)
        except Exception:
            return None
        J = np.column_stack([(Fu - Fu2) / (2 * h), (Fv - Fv2) / (2 * h)])
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        if not np.all(np.isfinite(step)):
            return None
        size = float(np.max(np.abs(step)))
        if size > step_cap:
            step = step * (step_cap / size)
        lam = 1.0
        for _ in range(12):
            uu, vv = u + lam * step[0], v + lam * step[1]
            try:
                Fn, _, _ = _umbilic_residual(surface, uu, vv)
            except Exception:
                lam *= 0.5
                continue
            val = float(Fn @ Fn)
            if val < best:
                u, v, F, best = uu, vv, Fn, val
                break
            lam *= 0.5
        else:
            break
    if abs(u - u_seed) > leash or abs(v - v_seed) > leash:
        return None
    return (u, v), best / 4.0     # H^2 - K = |F|^2 / 4


# ---------------------------------------------------------------------------
# Monge normal form
# ---------------------------------------------------------------------------

def _poly_mul(p, q):
    out = np.zeros((4, 4))
    for i in range(4):
        for j in range(4 - i):
            if p[i, j] == 0.0:
                continue
            for k in range(4 - i - j):
                for l in range(4 - i - j - k):
                    if i + k < 4 and j + l < 4 and (i + j + k + l) <= 3:
                        out[i + k, j + l] += p[i, j] * q[k, l]
    return out


def _poly_compose(series, sub_x, sub_y):
    """series(s, t) with s = sub_x(X, Y), t = sub_y(X, Y), truncated."""
    one = np.zeros((4, 4))
    one[0, 0] = 1.0
    powers_x = [one]
    powers_y = [one]
    for _ in range(3):
        powers_x.append(_poly_mul(powers_x[-1], sub_x))
        powers_y.append(_poly_mul(powers_y[-1], sub_y))
    out = np.zeros((4, 4))
    for i in range(4):
        for j in range(4 - i):
            if series[i, j] == 0.0:
                continue
            out += series[i, j] * _poly_mul(powers_x[i], powers_y[j])
    return out


_FACT = np.array([1.0, 1.0, 2.0, 6.0])


def monge_form(surface, location):
    """Monge cubic coefficients at an umbilic chart location.

    Builds the tangent frame, inverts the tangent-plane coordinates as a
    degree-3 series to express the surface as a local graph, and rotates
    the frame by the smallest angle in [0, pi) that kills the x^2 y term.
    """
    if hasattr(location, "uv"):
        u0, v0 = location.uv
    else:
        u0, v0 = location
    J = surface.jet(u0, v0)
    b = chart_bundle(surface, u0, v0)
    n = b["normal"]
    ru = J[1, 0]
    e1 = ru / np.linalg.norm(ru)
    e2 = np.cross(n, e1)
    origin = J[0, 0]

    X = np.zeros((4, 4))
    Y = np.zeros((4, 4))
    Z = np.zeros((4, 4))
    for i in range(4):
        for j in range(4 - i):
            if i == 0 and j == 0:
                continue
            coef = J[i, j] / (_FACT[i] * _FACT[j])
            X[i, j] = float(coef @ e1)
            Y[i, j] = float(coef @ e2)
            Z[i, j] = float(coef @ n)

    M = np.array([[X[1, 0], X[0, 1]], [Y[1, 0], Y[0, 1]]])
    det = float(np.linalg.det(M))
    scale = max(abs(M).max(), 1e-300)
    if abs(det) < 1e-12 * scale * scale:
        raise FrameError("tangent coordinates degenerate at the umbilic")
    Minv = np.linalg.inv(M)

    # linear inverse
    s_lin = np.zeros((4, 4))
    t_lin = np.zeros((4, 4))
    s_lin[1, 0], s_lin[0, 1] = Minv[0, 0], Minv[0, 1]
    t_lin[1, 0], t_lin[0, 1] = Minv[1, 0], Minv[1, 1]
    # quadratic correction: subtract the quadratic image of the inverse
    Xq = np.zeros((4, 4))
    Yq = np.zeros((4, 4))
    for (i, j) in ((2, 0), (1, 1), (0, 2)):
        Xq[i, j] = X[i, j]
        Yq[i, j] = Y[i, j]
    qx = _poly_compose(Xq, s_lin, t_lin)
    qy = _poly_compose(Yq, s_lin, t_lin)
    s_ser = s_lin - (Minv[0, 0] * qx + Minv[0, 1] * qy)
    t_ser = t_lin - (Minv[1, 0] * qx + Minv[1, 1] * qy)

    h = _poly_compose(Z, s_ser, t_ser)
    q20, q11, q02 = h[2, 0], h[1, 1], h[0, 2]
    k = q20 + q02
    quad_defect = max(abs(q11), abs(q20 - q02))

    c30, c21, c12, c03 = h[3, 0], h[2, 1], h[1, 2], h[0, 3]
    A1 = (c30 - c12) / 4.0
    A2 = (c03 - c21) / 4.0
    B1 = (3.0 * c30 + c12) / 4.0
    B2 = -(c21 + 3.0 * c03) / 4.0

    phi = _smallest_kill_rotation(A1, A2, B1, B2)
    # frame rotated by phi: w = w' e^{i phi}, so A -> A e^{3 i phi},
    # B -> B e^{i phi}
    ca3, sa3 = math.cos(3 * phi), math.sin(3 * phi)
    ca1, sa1 = math.cos(phi), math.sin(phi)
    A1r = A1 * ca3 - A2 * sa3
    A2r = A2 * ca3 + A1 * sa3
    B1r = B1 * ca1 - B2 * sa1
    B2r = B2 * ca1 + B1 * sa1
    c30r = A1r + B1r
    c21r = -3.0 * A2r - B2r
    c12r = -3.0 * A1r + B1r
    c03r = A2r - B2r

    a_c, b_c, c_c = 6.0 * c30r, 2.0 * c12r, 6.0 * c03r
    e1r = math.cos(phi) * e1 + math.sin(phi) * e2
    e2r = -math.sin(phi) * e1 + math.cos(phi) * e2
    frame = MongeFrame(origin=origin, e1=e1r, e2=e2r, normal=n)
    return MongeCoefficients(
        k=float(k), a=float(a_c), b=float(b_c), c=float(c_c),
        rotation=float(phi), frame=frame,
        residual_x2y=float(abs(c21r)),
        quadratic_defect=float(quad_defect))


def kill_rotation_angles(A1, A2, B1, B2, samples=720):
    """All angles in [0, pi) where the rotated x^2 y coefficient vanishes."""

    def fval(phi):
        return (-3.0 * (A2 * math.cos(3 * phi) + A1 * math.sin(3 * phi))
                - (B2 * math.cos(phi) + B1 * math.sin(phi)))

    xs = np.linspace(0.0, math.pi, samples, endpoint=False)
    vals = np.array([fval(x) for x in xs])
    roots = []
    for i in range(samples):
        x0, x1 = xs[i], xs[(i + 1) % samples] if i + 1 < samples else math.pi
        f0, f1 = vals[i], fval(x1)
        if f0 == 0.0:
            roots.append(x0)
            continue
        if f0 * f1 < 0.0:
            lo, hi, flo = x0, x1, f0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = fval(mid)
                if fm == 0.0:
                    lo = hi = mid
                    break
                if math.copysign(1.0, fm) == math.copysign(1.0, flo):
                    lo, flo = mid, fm
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    dedup = []
    for r in sorted(roots):
        if not dedup or abs(r - dedup[-1]) > 1e-9:
            dedup.append(r)
    return dedup


def _smallest_kill_rotation(A1, A2, B1, B2):
    roots = kill_rotation_angles(A1, A2, B1, B2)
    if not roots:
        raise FrameError("no rotation kills the x^2 y coefficient")
    return roots[0]


def rotate_monge_cubic(a, b, c, phi):
    """Cubic coefficients after rotating the tangent frame by phi.

    2D oracle used by the tests; independent of the 3D extraction path.
    """
    c30, c21, c12, c03 = a / 6.0, 0.0, b / 2.0, c / 6.0
    A1 = (c30 - c12) / 4.0
    A2 = (c03 - c21) / 4.0
    B1 = (3 * c30 + c12) / 4.0
    B2 = -(c21 + 3 * c03) / 4.0
    ca3, sa3 = math.cos(3 * phi), math.sin(3 * phi)
    ca1, sa1 = math.cos(phi), math.sin(phi)
    A1r = A1 * ca3 - A2 * sa3
    A2r = A2 * ca3 + A1 * sa3
    B1r = B1 * ca1 - B2 * sa1
    B2r = B2 * ca1 + B1 * sa1
    return (6 * (A1r + B1r), -3 * A2r - B2r,
            2 * (-3 * A1r + B1r), 6 * (A2r - B2r))


# ---------------------------------------------------------------------------
# Darbouxian classification
# ---------------------------------------------------------------------------

def classify(m, tol=1e-6, margin_tol=None):
    """Type and boundary margin from the rotated cubic coefficients.

    Returns one of D1/D2/D3/NonTransversal/NearBoundary together with the
    distance of (a/b, c/2b) to the nearest classification boundary
    (vertical distance for the parabola; the a = 2b line counts inside D2).
    """
    if margin_tol is None:
        margin_tol = 0.05 * tol ** 0  # same band as tol unless overridden
        margin_tol = tol
    a, b, c = m.a, m.b, m.c
    scale = max(abs(a), abs(b), abs(c), 1e-300)
    t_value = b * (b - a)
    if abs(t_value) <= tol * scale * scale:
        return NON_TRANSVERSAL, abs(t_value) / (scale * scale)
    ra = a / b
    rc = c / (2.0 * b)
    d_parab = ra - (rc * rc + 2.0)
    d_one = ra - 1.0
    if d_parab > 0.0:
        typ, margin = D1, abs(d_parab)
    elif d_one < 0.0:
        typ, margin = D3, abs(d_one)
    else:
        typ = D2
        margin = min(abs(d_parab), abs(d_one), abs(ra - 2.0))
    if margin <= margin_tol:
        return NEAR_BOUNDARY, margin
    return typ, margin


def classify_direct(a, b, c):
    """Literal inequality evaluation (test oracle; no slack bands)."""
    if b * (b - a) == 0.0:
        return NON_TRANSVERSAL
    ra, rc = a / b, c / (2.0 * b)
    if ra > rc * rc + 2.0:
        return D1
    if 1.0 < ra < rc * rc + 2.0 and a != 2.0 * b:
        return D2
    if ra < 1.0:
        return D3
    return NEAR_BOUNDARY


def index_for_type(typ):
    if typ in (D1, D2):
        return 0.5
    if typ == D3:
        return -0.5
    return None


# ---------------------------------------------------------------------------
# winding-number index estimator
# ---------------------------------------------------------------------------

def winding_index(surface, rec, radius_factor=5e-3, samples=256):
    """Index of the principal line field from angle accumulation on a small
    loop around the umbilic (independent of the type-based assignment)."""
    u0, v0 = rec.uv
    b0 = chart_bundle(surface, u0, v0)
    ru, rv = b0["ru"], b0["rv"]
    r = radius_factor * surface.diameter()
    alphas = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    us = u0 + (r / np.linalg.norm(ru)) * np.cos(alphas)
    vs = v0 + (r / np.linalg.norm(rv)) * np.sin(alphas)
    b = chart_bundle(surface, us, vs)
    n = b0["normal"]
    e1 = ru / np.linalg.norm(ru)
    e2 = np.cross(n, e1)
    d = b["d1_xyz"]
    beta = np.arctan2(d @ e2, d @ e1)
    two_beta = np.unwrap(2.0 * beta)
    total = two_beta[-1] + (two_beta[1] - two_beta[0]) * 0 \
        - two_beta[0]
    # close the loop: add the last-to-first increment
    closing = np.angle(np.exp(2j * beta[0]) / np.exp(2j * beta[-1]))
    total += closing
    return float(total / (2.0 * 2.0 * math.pi))


# ---------------------------------------------------------------------------
# separatrix directions by fate scan
# ---------------------------------------------------------------------------

def separatrix_directions(surface, rec, radius_factor=1e-3,
                          scan_resolution=720):
    """Separatrix ray angles (in the Monge frame) for both foliations.

    Two-stage fate search.  Stage 1 scans a small circle around the
    umbilic for angles where the foliation is radially aligned (leaves can
    only reach the umbilic along such directions) and sharpens each zero
    by bisection.  Stage 2 integrates bracketing launches inward and
    classifies their terminal fate: a ray bounding a hyperbolic sector has
    a sweeping side (launches exit the horizon), while interior directions
    of a parabolic fan see deep entries on both sides and are dropped.  If
    no ray has a sweeping side the structure is a pure fan (lemon) and the
    approach directions themselves are the separatrices.  Confidence
    records whether the count matches the Darbouxian subscript.
    """
    if rec.type not in (D1, D2, D3):
        return {}, {MINIMAL: "unsupported-type", MAXIMAL: "unsupported-type"}
    diam = surface.diameter()
    r0 = radius_factor * diam
    expected = _SEPARATRIX_COUNT[rec.type]
    out, conf = {}, {}
    for fol in (MINIMAL, MAXIMAL):
        cands = _radial_alignment_zeros(surface, rec, fol, r0,
                                        scan_resolution)
        rays = []
        for ang in cands:
            sweep_sides = 0
            for side in (-1.0, 1.0):
                offs = ang + side * np.radians([5.0, 9.0, 13.0])
                fate, _ = _terminal_fate(surface, rec, fol, offs, r0)
                if int(np.sum(fate == _FATE_EXIT)) >= 2:
                    sweep_sides += 1
            if sweep_sides >= 1:
                rays.append(ang)
        if not rays:
            # fan-only structure (lemon): the approach directions are the
            # separatrix rays themselves
            rays = list(cands)
        rays = sorted(a % (2 * math.pi) for a in rays)
        out[fol] = rays
        conf[fol] = ("ok" if len(rays) == expected
                     else f"expected {expected}, found {len(rays)}")
    return out, conf


def _alignment_values(surface, rec, fol, angles, radius):
    """sin/cos of twice the angle between the field and the radial ray."""
    fr = rec.monge.frame
    e1, e2, x0 = fr.e1, fr.e2, fr.origin
    targets = (x0[None, :] + radius * (np.cos(angles)[:, None] * e1
                                       + np.sin(angles)[:, None] * e2))
    uv = _invert_batch(surface, targets, rec.uv)
    b = chart_bundle(surface, uv[:, 0], uv[:, 1])
    d = b["d1_xyz"] if fol == MINIMAL else b["d2_xyz"]
    w = b["r"] - x0
    dist = np.linalg.norm(w, axis=1)
    radial = w / dist[:, None]
    tang = np.cross(b["normal"], radial)
    c = np.sum(d * radial, axis=1)
    s = np.sum(d * tang, axis=1)
    norm = c * c + s * s
    return 2 * c * s / norm, (c * c - s * s) / norm


def _radial_alignment_zeros(surface, rec, fol, r0, resolution):
    angles = np.linspace(0.0, 2 * math.pi, resolution, endpoint=False)
    zeros = []
    z, w = _alignment_values(surface, rec, fol, angles, 0.5 * r0)
    for i in range(resolution):
        j = (i + 1) % resolution
        if w[i] <= 0.0 or w[j] <= 0.0:
            continue
        if z[i] == 0.0:
            zeros.append(angles[i])
            continue
        if z[i] * z[j] < 0.0:
            lo = angles[i]
            hi = angles[i] + 2 * math.pi / resolution
            z_lo = z[i]
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                zm, wm = _alignment_values(surface, rec, fol,
                                           np.array([mid]), 0.5 * r0)
                if wm[0] <= 0.0:
                    break
                if zm[0] == 0.0:
                    lo = hi = mid
                    break
                if math.copysign(1.0, zm[0]) == math.copysign(1.0, z_lo):
                    lo, z_lo = mid, zm[0]
                else:
                    hi = mid
            zeros.append(0.5 * (lo + hi))
    merged = []
    for ang in sorted(a % (2 * math.pi) for a in zeros):
        if not merged or ang - merged[-1] > 0.02:
            merged.append(ang)
    if len(merged) > 1 and (merged[0] + 2 * math.pi - merged[-1]) < 0.02:
        merged.pop()
    return merged


_FATE_EXIT = 0
_FATE_ENTER = 1
_FATE_STUCK = 2


def _terminal_fate(surface, rec, foliation_id, alphas, r0, depth=2e-3,
                   max_steps=2500):
    """Terminal fate of inward launches: deep entry versus horizon exit.

    Integrates the foliation inward with steps scaled to the current
    distance (the field varies on that scale).  A launch "enters" when it
    descends below ``depth * r0`` and "exits" past the 5 r0 horizon; leaves
    hugging a hyperbolic sector eventually exit, fan leaves terminate at
    the umbilic, which is what separates the two sector types.
    """
    fr = rec.monge.frame
    e1, e2, x0 = fr.e1, fr.e2, fr.origin

    targets = (x0[None, :] + r0 * (np.cos(alphas)[:, None] * e1
                                   + np.sin(alphas)[:, None] * e2))
    uv = _invert_batch(surface, targets, rec.uv)

    key_uv = "d1_uv" if foliation_id == MINIMAL else "d2_uv"
    key_xyz = "d1_xyz" if foliation_id == MINIMAL else "d2_xyz"

    b = chart_bundle(surface, uv[:, 0], uv[:, 1])
    radial = b["r"] - x0
    d = b[key_xyz]
    sign = -np.sign(np.sum(d * radial, axis=1))
    sign[sign == 0.0] = 1.0
    ref = d * sign[:, None]

    r_deep = depth * r0
    r_far = 5.0 * r0
    m = len(alphas)
    active = np.ones(m, dtype=bool)
    fate = np.full(m, _FATE_STUCK, dtype=int)
    entry_angle = np.full(m, np.nan)

    def field(uv_pts, ref_dirs):
        bb = chart_bundle(surface, uv_pts[:, 0], uv_pts[:, 1])
        dd_uv, dd_xyz = bb[key_uv], bb[key_xyz]
        s = np.sign(np.sum(dd_xyz * ref_dirs, axis=1))
        s[s == 0.0] = 1.0
        return dd_uv * s[:, None], dd_xyz * s[:, None], bb["r"]

    pos = b["r"]
    for _ in range(max_steps):
        if not active.any():
            break
        idx = np.where(active)[0]
        y = uv[idx]
        rf = ref[idx]
        dist_now = np.linalg.norm(pos[idx] - x0, axis=1)
        ds = np.maximum(dist_now / 7.0, r_deep / 4.0)[:, None]
        k1u, _, _ = field(y, rf)
        k2u, _, _ = field(y + 0.5 * ds * k1u, rf)
        k3u, _, _ = field(y + 0.5 * ds * k2u, rf)
        k4u, _, _ = field(y + ds * k3u, rf)
        uv_new = y + (ds / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        _, d_new, p_new = field(uv_new, rf)
        uv[idx] = uv_new
        ref[idx] = d_new
        pos[idx] = p_new
        w_new = p_new - x0
        dist = np.linalg.norm(w_new, axis=1)
        enter_now = dist < r_deep
        out_now = (dist > r_far) & ~enter_now
        fate[idx[enter_now]] = _FATE_ENTER
        entry_angle[idx[enter_now]] = np.arctan2(
            w_new[enter_now] @ e2, w_new[enter_now] @ e1) % (2 * math.pi)
        fate[idx[out_now]] = _FATE_EXIT
        active[idx[enter_now | out_now]] = False
    return fate, entry_angle


def _invert_batch(surface, targets, uv_seed, iters=14):
    m = len(targets)
    uv = np.tile(np.asarray(uv_seed, dtype=float), (m, 1))
    for _ in range(iters):
        J = surface.jet(uv[:, 0], uv[:, 1])
        r = J[0, 0] - targets
        A = np.stack([J[1, 0], J[0, 1]], axis=-1)          # (m, 3, 2)
        AtA = np.einsum("mik,mil->mkl", A, A)
        Atr = np.einsum("mik,mi->mk", A, r)
        try:
            step = np.linalg.solve(AtA, -Atr[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        uv = uv + step
        if np.max(np.abs(step)) < 1e-14:
            break
    return uv


# ---------------------------------------------------------------------------
# full classification pipeline / index sum
# ---------------------------------------------------------------------------

def refine_umbilic_record(surface, seed, refine=1e-24):
    """Newton-refine a single umbilic from a seed chart point."""
    b = chart_bundle(surface, seed[0], seed[1])
    kappa = max(abs(b["k1"]), abs(b["k2"]), 1e-12)
    res = _refine_umbilic(surface, seed, kappa)
    if res is None:
        raise ConvergenceError(f"umbilic refinement failed from {seed}")
    (u, v), s_final = res
    if s_final > refine * kappa ** 2:
        raise ConvergenceError(
            f"H^2-K stalled at {s_final:.3e} from seed {seed}")
    return UmbilicRecord(uv=(float(u), float(v)),
                         xyz=np.asarray(surface.point(u, v)),
                         hk_residual=float(s_final))


def classify_umbilic(surface, rec, tol=1e-6, margin_tol=None,
                     with_separatrices=True):
    """Monge extraction, type, index, and (optionally) separatrices."""
    m = monge_form(surface, rec)
    typ, margin = classify(m, tol=tol, margin_tol=margin_tol)
    rec = replace(rec, monge=m, type=typ, index=index_for_type(typ),
                  margin=margin)
    if with_separatrices and typ in (D1, D2, D3):
        seps, conf = separatrix_directions(surface, rec)
        rec = replace(rec, separatrices=seps, separatrix_confidence=conf)
    return rec


def analyze_umbilics(surface, grid=32, with_separatrices=True, tol=1e-6):
    found = locate_umbilics(surface, grid=grid)
    if isinstance(found, AllUmbilicSurface):
        return found
    return [classify_umbilic(surface, rec, tol=tol,
                             with_separatrices=with_separatrices)
            for rec in found]


@dataclass(frozen=True)
class IndexSumResult:
    index_sum: float
    euler_characteristic: int
    consistent: bool


def index_sum_check(surface, records):
    """Compare the sum of umbilic indices against the declared Euler
    characteristic of the catalog surface."""
    for rec in records:
        if rec.type not in (D1, D2, D3):
            raise InconclusiveError(
                f"umbilic at {rec.uv} is {rec.type}; index sum inconclusive")
    chi = surface.euler_characteristic
    if chi is None:
        raise InconclusiveError(
            "surface has no declared Euler characteristic")
    total = float(sum(rec.index for rec in records))
    return IndexSumResult(total, int(chi), bool(abs(total - chi) < 1e-9))
