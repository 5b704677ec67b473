"""Surface representations and pointwise curvature quantities.

Two surface flavors are supported:

* ``SurfaceChart``: an immersion ``(u, v) -> R^3`` assembled from separable
  terms ``w * U(u) * V(v)`` so that every partial derivative through order 3
  is analytic (see :mod:`principal_config.jets`).  A finite-difference
  fallback chart exists for user-supplied point functions.
* ``ImplicitSurface``: a level set ``f = level`` with analytic gradient,
  Hessian and (optionally) third-derivative tensor.

All evaluation routines broadcast over trailing point axes; the dataclass
wrappers are scalar conveniences on top of the array core.  Everything here
is immutable after construction and free of shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (CriticalPointError, RegularityError,
                     UmbilicReferenceError)
from .jets import ORDER

MINIMAL = "minimal"
MAXIMAL = "maximal"

DIRECTION_TOL_FACTOR = 1e-7
REGULARITY_FLOOR_FACTOR = 1e-10


# ---------------------------------------------------------------------------
# surface types
# ---------------------------------------------------------------------------

class SurfaceChart:
    """Immersed chart with analytic partial derivatives through order 3.

    Parameters
    ----------
    terms : sequence of (UFn, UFn, weight)
        Separable decomposition of the immersion: ``sum_i w_i U_i(u) V_i(v)``.
    domain : ((u0, u1), (v0, v1))
        Parameter rectangle.
    periodic_u, periodic_v : bool
        Periodicity flags; periodic axes never trigger domain exits and the
        tracer keeps coordinates unwrapped.
    orientation : +1 or -1
        Unit normal convention: ``n = orientation * (a_u x a_v)/|.|``.
    """

    def __init__(self, terms, domain, periodic_u=False, periodic_v=False,
                 orientation=1, name="chart", params=None,
                 euler_characteristic=None, diameter_hint=None):
        self.terms = tuple((_unwrap(tu), _unwrap(tv),
                            np.asarray(w, dtype=float))
                           for tu, tv, w in terms)
        self.domain = (tuple(map(float, domain[0])),
                       tuple(map(float, domain[1])))
        self.periodic_u = bool(periodic_u)
        self.periodic_v = bool(periodic_v)
        self.orientation = int(orientation)
        if self.orientation not in (-1, 1):
            raise ValueError("orientation must be +1 or -1")
        self.name = name
        self.params = dict(params or {})
        self.euler_characteristic = euler_characteristic
        self._diameter = diameter_hint
        self._build_fast_path()

    def _build_fast_path(self):
        """Concatenate all-harmonic terms into single evaluation tables."""
        from .jets import Harmonics

        fast, generic = [], []
        for idx, (tu, tv, w) in enumerate(self.terms):
            if isinstance(tu, Harmonics) and isinstance(tv, Harmonics):
                fast.append(idx)
            else:
                generic.append(idx)
        self._generic_terms = [self.terms[i] for i in generic]
        self._fast_tables = None
        self._py_terms = None
        if not fast:
            return
        ks = np.arange(ORDER)

        def side_tables(funcs):
            freqs, phases, blocks = [], [], []
            for t, fn in enumerate(funcs):
                a = len(fn.freq)
                freqs.append(fn.freq)
                phases.append(fn.phase)
                coef = fn.amp[:, None] * fn.freq[:, None] ** ks[None, :]
                blocks.append((t, coef))
            freq = np.concatenate(freqs)
            phase = np.concatenate(phases)
            C = np.zeros((len(funcs), ORDER, len(freq)))
            pos = 0
            for t, coef in blocks:
                C[t, :, pos:pos + coef.shape[0]] = coef.T
                pos += coef.shape[0]
            return freq, phase, C

        fu, pu, CU = side_tables([self.terms[i][0] for i in fast])
        fv, pv, CV = side_tables([self.terms[i][1] for i in fast])
        WF = np.stack([self.terms[i][2] for i in fast])
        self._fast_tables = (fu, pu, CU, fv, pv, CV, WF)

        # plain-float tables for the scalar jet path
        if not generic and len(fu) + len(fv) <= 96:
            def py_side(funcs):
                return [[(float(f), float(p), float(a), float(a * f),
                          float(a * f * f), float(a * f ** 3))
                         for f, p, a in zip(fn.freq, fn.phase, fn.amp)]
                        for fn in funcs]

            self._py_terms = (
                py_side([t[0] for t in self.terms]),
                py_side([t[1] for t in self.terms]),
                [tuple(float(x) for x in t[2]) for t in self.terms])
        else:
            self._py_terms = None

    # -- evaluation --------------------------------------------------------

    def jet(self, u, v):
        """Full derivative tensor, shape ``(4, 4) + pts + (3,)``.

        ``jet[i, j]`` is the mixed partial d^(i+j) P / du^i dv^j for
        ``i + j <= 3``; higher slots are computed but unused.  Factors
        shared between terms are evaluated once per call.
        """
        if self._py_terms is not None and not (np.ndim(u) or np.ndim(v)):
            return self._scalar_jet(float(u), float(v))
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        pts = np.broadcast_shapes(u.shape, v.shape)
        out = np.zeros((ORDER, ORDER) + pts + (3,))

        if self._fast_tables is not None:
            fu, pu, CU, fv, pv, CV, WF = self._fast_tables
            U = _harmonic_side(fu, pu, CU, u, pts)
            V = _harmonic_side(fv, pv, CV, v, pts)
            out += np.einsum("ti...,tj...,tc->ij...c", U, V, WF,
                             optimize=False)

        if self._generic_terms:
            ucache, vcache = {}, {}
            U = np.stack([np.broadcast_to(tu.jet(u, ucache),
                                          (ORDER,) + pts)
                          for tu, _, _ in self._generic_terms])
            V = np.stack([np.broadcast_to(tv.jet(v, vcache),
                                          (ORDER,) + pts)
                          for _, tv, _ in self._generic_terms])
            W = np.stack([w for _, _, w in self._generic_terms])
            out += np.einsum("ti...,tj...,tc->ij...c", U, V, W,
                             optimize=False)
        return out

    def _scalar_jet(self, u, v):
        """Plain-float jet for all-harmonic charts at a single point."""
        from math import cos, sin

        us, vs, ws = self._py_terms
        out = np.zeros((ORDER, ORDER, 3))
        for atoms_u, atoms_v, w in zip(us, vs, ws):
            u0 = u1 = u2 = u3 = 0.0
            for f, p, a, af, af2, af3 in atoms_u:
                th = f * u + p
                c, s = cos(th), sin(th)
                u0 += a * c
                u1 -= af * s
                u2 -= af2 * c
                u3 += af3 * s
            v0 = v1 = v2 = v3 = 0.0
            for f, p, a, af, af2, af3 in atoms_v:
                th = f * v + p
                c, s = cos(th), sin(th)
                v0 += a * c
                v1 -= af * s
                v2 -= af2 * c
                v3 += af3 * s
            uj = (u0, u1, u2, u3)
            vj = (v0, v1, v2, v3)
            wx, wy, wz = w
            for i in range(ORDER):
                ui = uj[i]
                if ui == 0.0:
                    continue
                for j in range(ORDER):
                    prod = ui * vj[j]
                    if prod == 0.0:
                        continue
                    out[i, j, 0] += prod * wx
                    out[i, j, 1] += prod * wy
                    out[i, j, 2] += prod * wz
        return out

    def point(self, u, v):
        return self.jet(u, v)[0, 0]

    def with_orientation(self, orientation):
        return SurfaceChart(self.terms, self.domain, self.periodic_u,
                            self.periodic_v, orientation, self.name,
                            self.params, self.euler_characteristic,
                            self._diameter)

    # -- geometry helpers ---------------------------------------------------

    def diameter(self):
        """World-space diameter estimate (bounding-box diagonal)."""
        if self._diameter is None:
            (u0, u1), (v0, v1) = self.domain
            uu, vv = np.meshgrid(np.linspace(u0, u1, 17),
                                 np.linspace(v0, v1, 17), indexing="ij")
            p = self.point(uu, vv).reshape(-1, 3)
            self._diameter = float(np.linalg.norm(p.max(0) - p.min(0)))
        return self._diameter

    def regularity_floor(self):
        d = max(self.diameter(), 1e-12)
        return REGULARITY_FLOOR_FACTOR * d * d

    def clamp_domain(self, u, v):
        (u0, u1), (v0, v1) = self.domain
        if not self.periodic_u:
            u = min(max(u, u0), u1)
        if not self.periodic_v:
            v = min(max(v, v0), v1)
        return u, v

    def in_domain(self, u, v):
        (u0, u1), (v0, v1) = self.domain
        ok = True
        if not self.periodic_u:
            ok = ok and (u0 <= u <= u1)
        if not self.periodic_v:
            ok = ok and (v0 <= v <= v1)
        return ok

    def __repr__(self):
        return f"SurfaceChart({self.name}, params={self.params})"


def _unwrap(fn):
    """Collapse single-factor wrappers so harmonic factors stay visible."""
    from .jets import Product, SumFn

    while True:
        if isinstance(fn, Product) and len(fn.factors) == 1:
            fn = fn.factors[0]
        elif isinstance(fn, SumFn) and len(fn.terms) == 1:
            fn = fn.terms[0]
        else:
            return fn


def _harmonic_side(freq, phase, C, x, pts):
    """(T, 4, pts) jets of concatenated harmonic factors."""
    x = np.asarray(x, dtype=float)
    theta = np.multiply.outer(freq, x) + \
        phase.reshape((-1,) + (1,) * x.ndim)
    c = np.cos(theta)
    s = np.sin(theta)
    base = np.stack([c, -s, -c, s])        # (4, A, pts)
    out = np.einsum("tka,ka...->tk...", C, base, optimize=False)
    return np.broadcast_to(out, out.shape[:2] + pts) if out.shape[2:] \
        != pts else out


# stencil weights, 4th order accurate central differences
_D1_5 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2_5 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D3_7 = np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0]) / 8.0


class FiniteDifferenceChart(SurfaceChart):
    """Chart backed by a plain point function; partials by central stencils.

    Third-order coefficients are too noise sensitive for one global step, so
    each derivative order uses its own step: 1e-5 * scale for order 1 (as a
    baseline), with larger steps for orders 2 and 3 where the round-off
    floor of the stencil would otherwise dominate.
    """

    def __init__(self, fn, domain, periodic_u=False, periodic_v=False,
                 orientation=1, name="fd-chart", params=None,
                 euler_characteristic=None, diameter_hint=None, scale=1.0):
        self.fn = fn
        self.scale = float(scale)
        self.h1 = 1e-5 * self.scale
        self.h2 = 2e-4 * self.scale
        self.h3 = 3e-3 * self.scale
        super().__init__([], domain, periodic_u, periodic_v, orientation,
                         name, params, euler_characteristic, diameter_hint)

    def _grid(self, u, v, h, half):
        offs = np.arange(-half, half + 1) * h
        vals = [[np.asarray(self.fn(u + du, v + dv), dtype=float)
                 for dv in offs] for du in offs]
        return np.asarray(vals)

    def jet(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        pts = np.broadcast_shapes(u.shape, v.shape)
        out = np.zeros((ORDER, ORDER) + pts + (3,))
        out[0, 0] = self.fn(u, v)

        g1 = self._grid(u, v, self.h1, 2)
        d0 = np.zeros(5)
        d0[2] = 1.0
        out[1, 0] = np.einsum("i,j,ij...->...", _D1_5 / self.h1, d0, g1)
        out[0, 1] = np.einsum("i,j,ij...->...", d0, _D1_5 / self.h1, g1)

        g2 = self._grid(u, v, self.h2, 2)
        out[2, 0] = np.einsum("i,j,ij...->...", _D2_5 / self.h2 ** 2, d0, g2)
        out[0, 2] = np.einsum("i,j,ij...->...", d0, _D2_5 / self.h2 ** 2, g2)
        out[1, 1] = np.einsum("i,j,ij...->...", _D1_5 / self.h2,
                              _D1_5 / self.h2, g2)

        g3 = self._grid(u, v, self.h3, 3)
        d0_7 = np.zeros(7)
        d0_7[3] = 1.0
        d1_7 = np.zeros(7)
        d1_7[1:6] = _D1_5
        d2_7 = np.zeros(7)
        d2_7[1:6] = _D2_5
        h3 = self.h3
        out[3, 0] = np.einsum("i,j,ij...->...", _D3_7 / h3 ** 3, d0_7, g3)
        out[0, 3] = np.einsum("i,j,ij...->...", d0_7, _D3_7 / h3 ** 3, g3)
        out[2, 1] = np.einsum("i,j,ij...->...", d2_7 / h3 ** 2, d1_7 / h3, g3)
        out[1, 2] = np.einsum("i,j,ij...->...", d1_7 / h3, d2_7 / h3 ** 2, g3)
        return out


@dataclass(frozen=True)
class ImplicitSurface:
    """Level set ``f = level`` with analytic derivatives.

    ``orientation=+1`` picks the unit normal along ``grad f`` (outward for
    the standard closed quadrics), ``-1`` the opposite.
    """

    f: Callable
    grad: Callable
    hess: Callable
    third: Callable | None = None
    level: float = 0.0
    bounding_box: tuple = ((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))
    orientation: int = 1
    name: str = "implicit"
    params: dict = field(default_factory=dict)
    on_surface_tol: float = 1e-8

    def value(self, p):
        return np.asarray(self.f(np.asarray(p, dtype=float))) - self.level

    def diameter(self):
        lo, hi = (np.asarray(b, dtype=float) for b in self.bounding_box)
        return float(np.linalg.norm(hi - lo))

    def regularity_floor(self):
        return REGULARITY_FLOOR_FACTOR * max(self.diameter(), 1e-12)

    def project(self, p, tol=1e-12, max_iter=12):
        """Newton projection along the gradient onto the level set."""
        p = np.array(p, dtype=float)
        scale = max(self.diameter(), 1.0)
        for _ in range(max_iter):
            val = self.value(p)
            if np.all(np.abs(val) < tol * scale):
                return p
            g = np.asarray(self.grad(p))
            gg = np.sum(g * g, axis=-1, keepdims=True)
            p = p - np.asarray(val)[..., None] * g / np.maximum(gg, 1e-300)
        return p

    def in_box(self, p):
        lo, hi = (np.asarray(b) for b in self.bounding_box)
        return bool(np.all(p >= lo) and np.all(p <= hi))


# ---------------------------------------------------------------------------
# pointwise data records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FundamentalForms:
    """First and second fundamental form coefficients at one chart point."""

    E: float
    F: float
    G: float
    e: float
    f: float
    g: float
    at_point: tuple
    r: np.ndarray = None
    ru: np.ndarray = None
    rv: np.ndarray = None
    normal: np.ndarray = None

    def metric_det(self):
        return self.E * self.G - self.F * self.F


@dataclass(frozen=True)
class PrincipalData:
    """Principal curvatures/directions with k1 <= k2.

    Directions are unit vectors defined up to sign; they carry both chart
    coefficients (``*_uv``, in the a_u, a_v basis) and world components
    (``*_xyz``).  Off-chart (implicit) data leaves the uv slots as None.
    When ``directions_defined`` is False the point was flagged umbilic and
    the direction fields must not be used.
    """

    k1: float
    k2: float
    H: float
    K: float
    umbilic_deviation: float
    directions_defined: bool
    d1_uv: np.ndarray = None
    d2_uv: np.ndarray = None
    d1_xyz: np.ndarray = None
    d2_xyz: np.ndarray = None
    normal: np.ndarray = None
    point: np.ndarray = None
    at_point: tuple = None


# ---------------------------------------------------------------------------
# vectorized chart core
# ---------------------------------------------------------------------------

def chart_bundle(surface, u, v, strict=True):
    """All pointwise curvature data, broadcast over point axes.

    Returns a dict of arrays: r, ru, rv, normal, E..g, k1, k2, H, K,
    d1_uv, d2_uv, d1_xyz, d2_xyz, umbilic_deviation, direction_tol.
    With ``strict`` a regularity violation raises; otherwise offending
    points yield NaNs (used by coarse grid scans).
    """
    J = surface.jet(u, v)
    r = J[0, 0]
    ru, rv = J[1, 0], J[0, 1]
    ruu, ruv, rvv = J[2, 0], J[1, 1], J[0, 2]

    W = np.cross(ru, rv)
    wn = np.linalg.norm(W, axis=-1)
    floor = surface.regularity_floor()
    bad = wn <= floor
    if strict and np.any(bad):
        raise RegularityError(
            f"|a_u x a_v| <= {floor:.3e} at a requested point of "
            f"{surface.name}")
    wn_safe = np.where(bad, 1.0, wn)
    n = surface.orientation * W / wn_safe[..., None]

    E = np.sum(ru * ru, axis=-1)
    F = np.sum(ru * rv, axis=-1)
    G = np.sum(rv * rv, axis=-1)
    e = np.sum(n * ruu, axis=-1)
    f = np.sum(n * ruv, axis=-1)
    g = np.sum(n * rvv, axis=-1)

    # shape operator in the Gram-Schmidt orthonormal tangent frame
    m = G - F * F / E
    m = np.where(bad, 1.0, m)
    E_safe = np.where(bad, 1.0, E)
    w11 = e / E_safe
    w12 = (f - (F / E_safe) * e) / np.sqrt(E_safe * m)
    w22 = (g - 2.0 * (F / E_safe) * f + (F / E_safe) ** 2 * e) / m

    mu = 0.5 * (w11 + w22)
    half_gap = np.hypot(0.5 * (w11 - w22), w12)
    k1 = mu - half_gap
    k2 = mu + half_gap
    H = mu
    K = w11 * w22 - w12 * w12

    # minimal direction angle in the orthonormal frame; ties fall on e1
    phi = 0.5 * np.arctan2(-2.0 * w12, w22 - w11)
    c, s = np.cos(phi), np.sin(phi)
    inv_sqrt_E = 1.0 / np.sqrt(E_safe)
    inv_sqrt_m = 1.0 / np.sqrt(m)
    e1_uv = np.stack([inv_sqrt_E, np.zeros_like(inv_sqrt_E)], axis=-1)
    e2_uv = np.stack([-(F / E_safe) * inv_sqrt_m, inv_sqrt_m], axis=-1)
    d1_uv = c[..., None] * e1_uv + s[..., None] * e2_uv
    d2_uv = -s[..., None] * e1_uv + c[..., None] * e2_uv
    d1_xyz = d1_uv[..., :1] * ru + d1_uv[..., 1:] * rv
    d2_xyz = d2_uv[..., :1] * ru + d2_uv[..., 1:] * rv

    dev = k2 - k1
    tol = DIRECTION_TOL_FACTOR * np.maximum(
        np.maximum(np.abs(k1), np.abs(k2)), 1.0)

    if np.any(bad):
        fill = np.where(bad, np.nan, 1.0)
        for arr in (E, F, G, e, f, g, k1, k2, H, K, dev):
            arr *= fill
        for arr in (n, d1_xyz, d2_xyz):
            arr *= fill[..., None]
        for arr in (d1_uv, d2_uv):
            arr *= fill[..., None]

    return {
        "r": r, "ru": ru, "rv": rv, "normal": n,
        "E": E, "F": F, "G": G, "e": e, "f": f, "g": g,
        "k1": k1, "k2": k2, "H": H, "K": K,
        "d1_uv": d1_uv, "d2_uv": d2_uv,
        "d1_xyz": d1_xyz, "d2_xyz": d2_xyz,
        "umbilic_deviation": dev, "direction_tol": tol,
    }


def principal_direction_fast(surface, u, v, minimal):
    """Lean scalar path for the tracer: one foliation direction plus the
    point and normal, computed in plain float arithmetic.

    Mirrors the orthonormal-frame eigen-solve of :func:`chart_bundle`
    exactly (the batch path is the reference; equality is covered by
    tests).  Raises RegularityError at immersion failures.
    """
    from math import atan2, cos, sin, sqrt

    J = surface.jet(u, v)
    rx, ry, rz = float(J[0, 0, 0]), float(J[0, 0, 1]), float(J[0, 0, 2])
    aux = J[1, 0]
    avx, avy, avz = float(J[0, 1, 0]), float(J[0, 1, 1]), float(J[0, 1, 2])
    aux_x, aux_y, aux_z = float(aux[0]), float(aux[1]), float(aux[2])
    ruu = J[2, 0]
    ruv = J[1, 1]
    rvv = J[0, 2]

    wx = aux_y * avz - aux_z * avy
    wy = aux_z * avx - aux_x * avz
    wz = aux_x * avy - aux_y * avx
    wn = sqrt(wx * wx + wy * wy + wz * wz)
    if wn <= surface.regularity_floor():
        raise RegularityError(
            f"|a_u x a_v| at floor on {surface.name} at ({u}, {v})")
    sig = surface.orientation / wn
    nx, ny, nz = sig * wx, sig * wy, sig * wz

    E = aux_x * aux_x + aux_y * aux_y + aux_z * aux_z
    F = aux_x * avx + aux_y * avy + aux_z * avz
    G = avx * avx + avy * avy + avz * avz
    e = nx * float(ruu[0]) + ny * float(ruu[1]) + nz * float(ruu[2])
    f = nx * float(ruv[0]) + ny * float(ruv[1]) + nz * float(ruv[2])
    g = nx * float(rvv[0]) + ny * float(rvv[1]) + nz * float(rvv[2])

    m = G - F * F / E
    w11 = e / E
    w12 = (f - (F / E) * e) / sqrt(E * m)
    w22 = (g - 2.0 * (F / E) * f + (F / E) ** 2 * e) / m

    phi = 0.5 * atan2(-2.0 * w12, w22 - w11)
    c, s = cos(phi), sin(phi)
    inv_se = 1.0 / sqrt(E)
    inv_sm = 1.0 / sqrt(m)
    e2u = -(F / E) * inv_sm
    if minimal:
        du = c * inv_se + s * e2u
        dv = s * inv_sm
    else:
        du = -s * inv_se + c * e2u
        dv = c * inv_sm
    dx = du * aux_x + dv * avx
    dy = du * aux_y + dv * avy
    dz = du * aux_z + dv * avz
    return (np.array([du, dv]), np.array([rx, ry, rz]),
            np.array([dx, dy, dz]), np.array([nx, ny, nz]))


def fundamental_forms(surface, p):
    """First and second form coefficients of a chart at ``p = (u, v)``."""
    u, v = float(p[0]), float(p[1])
    b = chart_bundle(surface, u, v)
    return FundamentalForms(
        E=float(b["E"]), F=float(b["F"]), G=float(b["G"]),
        e=float(b["e"]), f=float(b["f"]), g=float(b["g"]),
        at_point=(u, v), r=b["r"], ru=b["ru"], rv=b["rv"],
        normal=b["normal"])


def principal_data(forms):
    """Diagonalize the second form relative to the first.

    Accepts the output of :func:`fundamental_forms`.  The eigen-solve uses
    the closed form for the symmetric 2x2 operator in an orthonormal frame,
    which keeps k1 <= k2 by construction and breaks exact ties toward the
    first chart direction.
    """
    E, F, G = forms.E, forms.F, forms.G
    e, f, g = forms.e, forms.f, forms.g
    if not (E > 0.0 and G > 0.0 and E * G - F * F > 0.0):
        raise RegularityError("fundamental forms are not positive definite")

    m = G - F * F / E
    w11 = e / E
    w12 = (f - (F / E) * e) / np.sqrt(E * m)
    w22 = (g - 2.0 * (F / E) * f + (F / E) ** 2 * e) / m
    mu = 0.5 * (w11 + w22)
    half_gap = float(np.hypot(0.5 * (w11 - w22), w12))
    k1, k2 = mu - half_gap, mu + half_gap
    H = mu
    K = w11 * w22 - w12 * w12
    dev = k2 - k1
    tol = DIRECTION_TOL_FACTOR * max(abs(k1), abs(k2), 1.0)
    defined = dev > tol

    d1_uv = d2_uv = d1_xyz = d2_xyz = None
    phi = 0.5 * np.arctan2(-2.0 * w12, w22 - w11)
    c, s = np.cos(phi), np.sin(phi)
    e1_uv = np.array([1.0 / np.sqrt(E), 0.0])
    e2_uv = np.array([-(F / E) / np.sqrt(m), 1.0 / np.sqrt(m)])
    d1_uv = c * e1_uv + s * e2_uv
    d2_uv = -s * e1_uv + c * e2_uv
    if forms.ru is not None:
        d1_xyz = d1_uv[0] * forms.ru + d1_uv[1] * forms.rv
        d2_xyz = d2_uv[0] * forms.ru + d2_uv[1] * forms.rv

    return PrincipalData(
        k1=float(k1), k2=float(k2), H=float(H), K=float(K),
        umbilic_deviation=float(dev), directions_defined=bool(defined),
        d1_uv=d1_uv, d2_uv=d2_uv, d1_xyz=d1_xyz, d2_xyz=d2_xyz,
        normal=forms.normal, point=forms.r, at_point=forms.at_point)


def principal_at(surface, u, v):
    return principal_data(fundamental_forms(surface, (u, v)))


def normal_curvature(pd, theta):
    """Normal curvature at angle ``theta`` from the minimal direction."""
    if not pd.directions_defined:
        raise UmbilicReferenceError(
            "principal directions undefined at an umbilic point")
    c, s = np.cos(theta), np.sin(theta)
    return pd.k1 * c * c + pd.k2 * s * s


# ---------------------------------------------------------------------------
# implicit surfaces
# ---------------------------------------------------------------------------

def _implicit_tangent_basis(n):
    """Deterministic orthonormal tangent pair for unit normals ``n``."""
    n = np.asarray(n, dtype=float)
    axis = np.argmin(np.abs(n), axis=-1)
    seed = np.zeros_like(n)
    idx = np.indices(axis.shape)
    seed[(*idx, axis)] = 1.0
    t1 = seed - np.sum(seed * n, axis=-1, keepdims=True) * n
    t1 = t1 / np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


def implicit_bundle(surface, p, check_on_surface=True):
    """Curvature data of a level set at points ``p`` with shape (..., 3)."""
    p = np.asarray(p, dtype=float)
    g = np.asarray(surface.grad(p), dtype=float)
    gn = np.linalg.norm(g, axis=-1)
    floor = surface.regularity_floor()
    if np.any(gn <= floor):
        raise CriticalPointError(
            f"|grad f| <= {floor:.3e}: point rejected as critical on "
            f"{surface.name}")
    if check_on_surface:
        val = np.abs(surface.value(p))
        tol = surface.on_surface_tol * max(surface.diameter(), 1.0)
        if np.any(val > tol):
            raise CriticalPointError(
                f"point off the level set by {float(np.max(val)):.3e}")

    n = surface.orientation * g / gn[..., None]
    Hf = np.asarray(surface.hess(p), dtype=float)
    t1, t2 = _implicit_tangent_basis(n)

    def quad(a, b):
        return np.einsum("...i,...ij,...j->...", a, Hf, b)

    scale = -surface.orientation / gn
    w11 = scale * quad(t1, t1)
    w12 = scale * quad(t1, t2)
    w22 = scale * quad(t2, t2)

    mu = 0.5 * (w11 + w22)
    half_gap = np.hypot(0.5 * (w11 - w22), w12)
    k1, k2 = mu - half_gap, mu + half_gap
    phi = 0.5 * np.arctan2(-2.0 * w12, w22 - w11)
    c, s = np.cos(phi)[..., None], np.sin(phi)[..., None]
    d1 = c * t1 + s * t2
    d2 = -s * t1 + c * t2
    dev = k2 - k1
    tol = DIRECTION_TOL_FACTOR * np.maximum(
        np.maximum(np.abs(k1), np.abs(k2)), 1.0)
    return {
        "r": p, "normal": n, "k1": k1, "k2": k2, "H": mu,
        "K": w11 * w22 - w12 * w12, "d1_xyz": d1, "d2_xyz": d2,
        "umbilic_deviation": dev, "direction_tol": tol,
    }


def implicit_principal_data(surface, p):
    """PrincipalData of the level set at a single on-surface point."""
    b = implicit_bundle(surface, np.asarray(p, dtype=float))
    dev = float(b["umbilic_deviation"])
    tol = float(b["direction_tol"])
    return PrincipalData(
        k1=float(b["k1"]), k2=float(b["k2"]), H=float(b["H"]),
        K=float(b["K"]), umbilic_deviation=dev,
        directions_defined=dev > tol,
        d1_xyz=b["d1_xyz"], d2_xyz=b["d2_xyz"],
        normal=b["normal"], point=b["r"])


# ---------------------------------------------------------------------------
# curvature gradients (needs third-order partials)
# ---------------------------------------------------------------------------

def curvature_gradients(surface, u, v):
    """H, K and their (u, v) gradients, plus k2 gradient, broadcastable.

    The gradients come from differentiating the form-coefficient quotients,
    which pulls in the third-order chart partials.  Used by the return-map
    line integrals and by umbilic refinement.
    """
    J = surface.jet(u, v)
    ru, rv = J[1, 0], J[0, 1]
    ruu, ruv, rvv = J[2, 0], J[1, 1], J[0, 2]
    ruuu, ruuv, ruvv, rvvv = J[3, 0], J[2, 1], J[1, 2], J[0, 3]

    def dot(a, b):
        return np.sum(a * b, axis=-1)

    E, F, G = dot(ru, ru), dot(ru, rv), dot(rv, rv)
    Eu, Ev = 2 * dot(ru, ruu), 2 * dot(ru, ruv)
    Fu, Fv = dot(ruu, rv) + dot(ru, ruv), dot(ruv, rv) + dot(ru, rvv)
    Gu, Gv = 2 * dot(rv, ruv), 2 * dot(rv, rvv)

    W = np.cross(ru, rv)
    Wu = np.cross(ruu, rv) + np.cross(ru, ruv)
    Wv = np.cross(ruv, rv) + np.cross(ru, rvv)
    wn = np.linalg.norm(W, axis=-1)[..., None]
    sig = surface.orientation
    n = sig * W / wn
    nu = sig * (Wu / wn - W * np.sum(W * Wu, axis=-1)[..., None] / wn ** 3)
    nv = sig * (Wv / wn - W * np.sum(W * Wv, axis=-1)[..., None] / wn ** 3)

    e, f, g = dot(n, ruu), dot(n, ruv), dot(n, rvv)
    eu = dot(nu, ruu) + dot(n, ruuu)
    ev = dot(nv, ruu) + dot(n, ruuv)
    fu = dot(nu, ruv) + dot(n, ruuv)
    fv = dot(nv, ruv) + dot(n, ruvv)
    gu = dot(nu, rvv) + dot(n, ruvv)
    gv = dot(nv, rvv) + dot(n, rvvv)

    D = E * G - F * F
    Du = Eu * G + E * Gu - 2 * F * Fu
    Dv = Ev * G + E * Gv - 2 * F * Fv

    numH = E * g - 2 * F * f + G * e
    numHu = Eu * g + E * gu - 2 * (Fu * f + F * fu) + Gu * e + G * eu
    numHv = Ev * g + E * gv - 2 * (Fv * f + F * fv) + Gv * e + G * ev
    H = numH / (2 * D)
    Hu = (numHu * D - numH * Du) / (2 * D * D)
    Hv = (numHv * D - numH * Dv) / (2 * D * D)

    numK = e * g - f * f
    numKu = eu * g + e * gu - 2 * f * fu
    numKv = ev * g + e * gv - 2 * f * fv
    K = numK / D
    Ku = (numKu * D - numK * Du) / (D * D)
    Kv = (numKv * D - numK * Dv) / (D * D)

    disc = np.sqrt(np.maximum(H * H - K, 0.0))
    safe = np.maximum(disc, 1e-300)
    k2u = Hu + (H * Hu - 0.5 * Ku) / safe
    k2v = Hv + (H * Hv - 0.5 * Kv) / safe
    return {
        "H": H, "K": K, "H_u": Hu, "H_v": Hv, "K_u": Ku, "K_v": Kv,
        "sqrt_disc": disc, "k2_u": k2u, "k2_v": k2v,
    }
