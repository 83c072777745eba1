"""Numerical check of the volume, surface and line transport theorems in 3D.

Every case is a closed-form moving geometry with a closed-form field. The
left side d/dt of the integral is taken by a central difference of composite
midpoint quadratures; the right side is assembled by the same quadrature from
pointwise kinematic quantities (normal speed, curvature, surface divergence,
boundary speeds). Derivatives of the parametrizations are generated with sympy,
so nothing on the right side reuses the left side.

Integration domains are mapped to fixed parameter boxes that follow the moving
interface or the moving cut by the control volume, which keeps the integrands
smooth and the midpoint rule second order. At refinement level k a parameter
direction carries ``n_base * 2**k`` cells, ``h = 1 / (n_base * 2**k)`` and
``dt = h``.

Conventions: the surface normal is ``X_u x X_w`` normalised; the jump of a bulk
field is outside minus inside; ``kappa = div(-n)`` so an outward-normal sphere
has ``kappa = -2/R``. For an open line segment the endpoint speed is the
component of the endpoint velocity along the outer tangent.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from .errors import IllPosedCase

T, U, W = sp.symbols("t u w", real=True)
S = sp.Symbol("s", real=True)
XS = sp.symbols("x y z", real=True)

FORMS = ("basic", "lagrangian", "normal_boundary")
STATIC_TOL = 1e-10
TANGENCY_TOL = 1e-10


@dataclass(frozen=True)
class AnalyticCase:
    """One catalog entry.

    ``geometry`` holds sympy expressions; its keys depend on ``kind``:

    volume:  center (3 exprs in t), radius (t), phi_in, phi_out (t, x, y, z), control_radius
    surface: X (3 exprs in t, u, w), domain ((u0, u1), (w0, w1)), cells (nu, nw) multipliers,
             phi (t, x, y, z), tangential (alpha, beta) so v = X_t + alpha X_u + beta X_w,
             boundary: list of (side, outer normal of V) with side in u0/u1/w0/w1
    line:    H (3 exprs in t, s), span (s0(t), s1(t)) or None for a closed loop,
             phi (t, x, y, z), beta (t, s) so v = H_t + beta H_s
    """

    name: str
    kind: str
    description: str
    geometry: dict
    t0: float = 0.0
    n_base: int = 8
    reference: Optional[float] = None
    exact: bool = False  # residual expected at round-off for every resolution


# --------------------------------------------------------------------------- helpers


def _lam(expr, args):
    f = sp.lambdify(args, expr, modules="numpy")

    def call(*vals):
        out = f(*vals)
        shape = np.broadcast(*vals).shape
        return np.broadcast_to(np.asarray(out, dtype=float), shape)

    return call


def _vec(exprs, args):
    fs = [_lam(e, args) for e in exprs]
    return lambda *vals: np.stack([f(*vals) for f in fs], axis=-1)


def _midpoints(a: float, b: float, n: int) -> Tuple[np.ndarray, float]:
    d = (b - a) / n
    return a + d * (np.arange(n) + 0.5), d


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _unit(a):
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


class _Field:
    """phi(t, x) with its time derivative and spatial gradient."""

    def __init__(self, phi):
        args = (T, *XS)
        self.f = _lam(phi, args)
        self.ft = _lam(sp.diff(phi, T), args)
        self.grad = _vec([sp.diff(phi, c) for c in XS], args)

    def at(self, t, X):
        return self.f(t, X[..., 0], X[..., 1], X[..., 2])

    def dt_at(self, t, X):
        return self.ft(t, X[..., 0], X[..., 1], X[..., 2])

    def grad_at(self, t, X):
        return self.grad(t, X[..., 0], X[..., 1], X[..., 2])


# --------------------------------------------------------------------------- volume


class _VolumeKernel:
    def __init__(self, g):
        c = sp.Matrix(g["center"])
        R = g["radius"]
        self.c = _vec(list(c), (T,))
        self.cdot = _vec(list(sp.diff(c, T)), (T,))
        self.R = _lam(R, (T,))
        self.Rdot = _lam(sp.diff(R, T), (T,))
        self.phi_in = _Field(g["phi_in"])
        self.phi_out = _Field(g["phi_out"])
        self.Rv = float(g["control_radius"])

    def _nodes(self, n):
        s, ds = _midpoints(0.0, 1.0, n)
        th, dth = _midpoints(0.0, math.pi, n)
        ph, dph = _midpoints(0.0, 2 * math.pi, 2 * n)
        S3, TH, PH = np.meshgrid(s, th, ph, indexing="ij")
        omega = np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)], axis=-1)
        wgt = S3 ** 2 * np.sin(TH) * ds * dth * dph
        TH2, PH2 = np.meshgrid(th, ph, indexing="ij")
        omega2 = np.stack([np.sin(TH2) * np.cos(PH2), np.sin(TH2) * np.sin(PH2), np.cos(TH2)], axis=-1)
        return S3, omega, wgt, omega2, np.sin(TH2) * dth * dph

    def check(self, t):
        c = self.c(np.float64(t))
        R = float(self.R(np.float64(t)))
        gap = self.Rv - (np.linalg.norm(c) + R)
        if not R > 0 or gap <= TANGENCY_TOL:
            raise IllPosedCase(f"interface touches the control boundary at t={t:.6g}")

    def integral(self, t, n):
        self.check(t)
        S3, om, wgt, _, _ = self._nodes(n)
        c = self.c(np.float64(t))
        R = float(self.R(np.float64(t)))
        Xv = self.Rv * S3[..., None] * om
        Xb = c + R * S3[..., None] * om
        outer = np.sum(self.phi_out.at(t, Xv) * wgt) * self.Rv ** 3
        inner = np.sum((self.phi_in.at(t, Xb) - self.phi_out.at(t, Xb)) * wgt) * R ** 3
        return outer + inner

    def rhs(self, t, n):
        self.check(t)
        S3, om, wgt, om2, dA = self._nodes(n)
        c = self.c(np.float64(t))
        R = float(self.R(np.float64(t)))
        Xv = self.Rv * S3[..., None] * om
        Xb = c + R * S3[..., None] * om
        bulk = np.sum(self.phi_out.dt_at(t, Xv) * wgt) * self.Rv ** 3
        bulk += np.sum((self.phi_in.dt_at(t, Xb) - self.phi_out.dt_at(t, Xb)) * wgt) * R ** 3
        Xs = c + R * om2
        Vn = _dot(self.cdot(np.float64(t)), om2) + float(self.Rdot(np.float64(t)))
        jump = self.phi_out.at(t, Xs) - self.phi_in.at(t, Xs)
        return bulk - np.sum(jump * Vn * dA) * R ** 2


# --------------------------------------------------------------------------- surface

_SIDES = {"u0": (0, 0, -1), "u1": (0, 1, +1), "w0": (1, 0, -1), "w1": (1, 1, +1)}


class _SurfaceKernel:
    def __init__(self, g):
        X = sp.Matrix(g["X"])
        args = (T, U, W)
        Xu, Xw, Xt = X.diff(U), X.diff(W), X.diff(T)
        alpha, beta = g.get("tangential", (0, 0))
        v = Xt + alpha * Xu + beta * Xw
        self.X = _vec(list(X), args)
        self.Xu = _vec(list(Xu), args)
        self.Xw = _vec(list(Xw), args)
        self.Xt = _vec(list(Xt), args)
        self.Xuu = _vec(list(Xu.diff(U)), args)
        self.Xuw = _vec(list(Xu.diff(W)), args)
        self.Xww = _vec(list(Xw.diff(W)), args)
        self.v = _vec(list(v), args)
        self.vu = _vec(list(v.diff(U)), args)
        self.vw = _vec(list(v.diff(W)), args)
        self.phi = _Field(g["phi"])
        self.domain = g["domain"]
        self.cells = g.get("cells", (1, 1))
        self.boundary = [(side, np.asarray(nv, dtype=float)) for side, nv in g.get("boundary", [])]

    def _grid(self, n):
        (u0, u1), (w0, w1) = self.domain
        u, du = _midpoints(u0, u1, n * self.cells[0])
        w, dw = _midpoints(w0, w1, n * self.cells[1])
        UU, WW = np.meshgrid(u, w, indexing="ij")
        return UU, WW, du * dw

    def _frame(self, t, UU, WW):
        tt = np.full_like(UU, t)
        Xu, Xw = self.Xu(tt, UU, WW), self.Xw(tt, UU, WW)
        cr = np.cross(Xu, Xw)
        J = np.linalg.norm(cr, axis=-1)
        if np.min(J) <= 0:
            raise IllPosedCase("parametrization is singular at a quadrature node")
        nrm = cr / J[..., None]
        guu, guw, gww = _dot(Xu, Xu), _dot(Xu, Xw), _dot(Xw, Xw)
        det = guu * gww - guw ** 2
        ginv = (gww / det, -guw / det, guu / det)
        return tt, Xu, Xw, nrm, J, ginv

    def integral(self, t, n):
        UU, WW, dA = self._grid(n)
        tt, _, _, _, J, _ = self._frame(t, UU, WW)
        return float(np.sum(self.phi.at(t, self.X(tt, UU, WW)) * J) * dA)

    def _interior(self, t, n):
        UU, WW, dA = self._grid(n)
        tt, Xu, Xw, nrm, J, (iuu, iuw, iww) = self._frame(t, UU, WW)
        X = self.X(tt, UU, WW)
        Vn = _dot(self.Xt(tt, UU, WW), nrm)
        b_uu = _dot(self.Xuu(tt, UU, WW), nrm)
        b_uw = _dot(self.Xuw(tt, UU, WW), nrm)
        b_ww = _dot(self.Xww(tt, UU, WW), nrm)
        kappa = iuu * b_uu + 2 * iuw * b_uw + iww * b_ww
        phi = self.phi.at(t, X)
        phit = self.phi.dt_at(t, X)
        grad = self.phi.grad_at(t, X)
        normal_time = phit + Vn * _dot(nrm, grad)
        basic = np.sum((normal_time - phi * kappa * Vn) * J) * dA

        v = self.v(tt, UU, WW)
        vu, vw = self.vu(tt, UU, WW), self.vw(tt, UU, WW)
        div_v = iuu * _dot(Xu, vu) + iuw * (_dot(Xu, vw) + _dot(Xw, vu)) + iww * _dot(Xw, vw)
        material = phit + _dot(v, grad)
        lagr = np.sum((material + phi * div_v) * J) * dA
        return float(basic), float(lagr)

    def _edges(self, t, n):
        """Yield per boundary edge: phi, X_t.N, v.N, v.n_V, n.n_V, dl."""
        (u0, u1), (w0, w1) = self.domain
        for side, nv in self.boundary:
            axis, end, sgn = _SIDES[side]
            if axis == 0:
                s, ds = _midpoints(w0, w1, n * self.cells[1])
                UU, WW = np.full_like(s, (u0, u1)[end]), s
            else:
                s, ds = _midpoints(u0, u1, n * self.cells[0])
                UU, WW = s, np.full_like(s, (w0, w1)[end])
            tt, Xu, Xw, nrm, _, _ = self._frame(t, UU, WW)
            along = Xw if axis == 0 else Xu
            out = sgn * (Xu if axis == 0 else Xw)
            dl = np.linalg.norm(along, axis=-1) * ds
            N = _unit(np.cross(along, nrm))
            N = np.where((_dot(N, out) < 0)[..., None], -N, N)
            X = self.X(tt, UU, WW)
            v = self.v(tt, UU, WW)
            yield (self.phi.at(t, X), _dot(self.Xt(tt, UU, WW), N), _dot(v, N), _dot(v, nv),
                   _dot(nrm, nv), _dot(self.Xt(tt, UU, WW), nrm), dl)

    def rhs_forms(self, t, n) -> Dict[str, float]:
        basic, lagr = self._interior(t, n)
        nb = lagr
        for phi, xtN, vN, vnV, cos_, Vn, dl in self._edges(t, n):
            sin_ = 1 - cos_ ** 2
            if np.min(sin_) <= TANGENCY_TOL:
                raise IllPosedCase("interface meets the control boundary tangentially")
            basic += float(np.sum(phi * xtN * dl))
            lagr += float(np.sum(phi * (xtN - vN) * dl))
            nb -= float(np.sum(phi * vnV / np.sqrt(sin_) * dl))
        return {"basic": basic, "lagrangian": lagr, "normal_boundary": nb}

    def boundary_speed_defect(self, t, n) -> float:
        """max |V_boundary + V n.n_V / sqrt(1 - (n.n_V)^2)| over boundary nodes."""
        worst = 0.0
        for _, xtN, _, _, cos_, Vn, _ in self._edges(t, n):
            pred = -Vn * cos_ / np.sqrt(1 - cos_ ** 2)
            worst = max(worst, float(np.max(np.abs(xtN - pred))))
        return worst


# --------------------------------------------------------------------------- line


class _LineKernel:
    def __init__(self, g):
        H = sp.Matrix(g["H"])
        Hs = H.diff(S)
        span = g.get("span")
        self.closed = span is None
        s0, s1 = (0, 2 * sp.pi) if span is None else span
        sig = sp.Symbol("sigma", real=True)
        s_of = s0 + sig * (s1 - s0)
        # X(t, sigma): moving cut in adapted coordinates
        X = H.subs(S, s_of)
        args = (T, sig)
        self.X = _vec(list(X), args)
        self.Xsig = _vec(list(X.diff(sig)), args)
        self.Xt = _vec(list(X.diff(T)), args)
        beta = g.get("beta", 0)
        v = H.diff(T) + beta * Hs
        self.v = _vec(list(v.subs(S, s_of)), args)
        self.vs = _vec(list(v.diff(S).subs(S, s_of)), args)
        self.Hs = _vec(list(Hs.subs(S, s_of)), args)
        self.phi = _Field(g["phi"])

    def integral(self, t, n):
        sg, ds = _midpoints(0.0, 1.0, n)
        tt = np.full_like(sg, t)
        X = self.X(tt, sg)
        dl = np.linalg.norm(self.Xsig(tt, sg), axis=-1) * ds
        return float(np.sum(self.phi.at(t, X) * dl))

    def rhs(self, t, n):
        sg, ds = _midpoints(0.0, 1.0, n)
        tt = np.full_like(sg, t)
        X = self.X(tt, sg)
        dl = np.linalg.norm(self.Xsig(tt, sg), axis=-1) * ds
        Hs = self.Hs(tt, sg)
        tau = _unit(Hs)
        v = self.v(tt, sg)
        div_v = _dot(tau, self.vs(tt, sg)) / np.linalg.norm(Hs, axis=-1)
        material = self.phi.dt_at(t, X) + _dot(v, self.phi.grad_at(t, X))
        total = float(np.sum((material + self.phi.at(t, X) * div_v) * dl))
        if not self.closed:
            ends = np.array([0.0, 1.0])
            te = np.full(2, t)
            He = self.Hs(te, ends)
            nu = _unit(He) * np.array([-1.0, 1.0])[:, None]
            Xe = self.X(te, ends)
            speed = _dot(self.Xt(te, ends), nu)
            total += float(np.sum(self.phi.at(t, Xe) * (speed - _dot(self.v(te, ends), nu))))
        return total


# --------------------------------------------------------------------------- catalog


def _catalog() -> Dict[str, AnalyticCase]:
    x, y, z = XS
    th, ph = U, W
    cases = [
        AnalyticCase(
            "vol_static", "volume", "fixed off-centre ball, time-independent fields",
            dict(center=(sp.Rational(1, 5), 0, sp.Rational(-1, 10)), radius=sp.Integer(1),
                 phi_in=1 + x ** 2, phi_out=sp.Rational(1, 2) + y * z, control_radius=3),
            reference=0.0, exact=True),
        AnalyticCase(
            "vol_expanding_ball", "volume", "ball R = 1 + t, indicator field, V the ball of radius 3",
            dict(center=(0, 0, 0), radius=1 + T, phi_in=sp.Integer(1), phi_out=sp.Integer(0), control_radius=3),
            reference=4 * math.pi),
        AnalyticCase(
            "vol_moving_ball_fields", "volume", "translating pulsating ball with time-dependent fields on both sides",
            dict(center=(sp.Rational(3, 10) * T, sp.Rational(1, 10) * sp.sin(T), sp.Rational(1, 5) * T ** 2),
                 radius=1 + sp.Rational(1, 5) * sp.sin(2 * T),
                 phi_in=sp.exp(-(x ** 2 + y ** 2 + z ** 2) / 2) * (1 + T * x),
                 phi_out=sp.cos(x + T) + y * z, control_radius=3),
            t0=0.3),
        AnalyticCase(
            "surf_static", "surface", "fixed unit sphere, time-independent field",
            dict(X=(sp.sin(th) * sp.cos(ph), sp.sin(th) * sp.sin(ph), sp.cos(th)),
                 domain=((0, math.pi), (0, 2 * math.pi)), cells=(1, 2), phi=1 + x * z),
            reference=0.0, exact=True),
        AnalyticCase(
            "surf_expanding_sphere", "surface", "sphere R = 1 + t, unit field, material rotation about z",
            dict(X=tuple((1 + T) * e for e in (sp.sin(th) * sp.cos(ph), sp.sin(th) * sp.sin(ph), sp.cos(th))),
                 domain=((0, math.pi), (0, 2 * math.pi)), cells=(1, 2), phi=sp.Integer(1),
                 tangential=(0, sp.Rational(1, 2))),
            reference=8 * math.pi, exact=True),
        AnalyticCase(
            "surf_pulsating_sphere", "surface", "drifting pulsating sphere, time-dependent field, material rotation",
            dict(X=tuple(c + (1 + sp.Rational(3, 10) * sp.sin(2 * T)) * e for c, e in zip(
                    (sp.Rational(1, 5) * T, 0, sp.Rational(1, 10) * T ** 2),
                    (sp.sin(th) * sp.cos(ph), sp.sin(th) * sp.sin(ph), sp.cos(th)))),
                 domain=((0, math.pi), (0, 2 * math.pi)), cells=(1, 2), phi=1 + x * z + T * y ** 2,
                 tangential=(0, sp.Rational(1, 2))),
            t0=0.3),
        AnalyticCase(
            "surf_tilted_plane_box", "surface", "translating tilted plane cut by the box [-1,1]^2 x [-3,3]",
            dict(X=(U, W, sp.Rational(3, 10) * U - sp.Rational(1, 5) * W + sp.Rational(1, 2) * sp.sin(T)
                    + sp.Rational(1, 10) * U * W * T),
                 domain=((-1, 1), (-1, 1)), phi=1 + x ** 2 + sp.sin(y) * z + T * x,
                 tangential=(sp.Rational(1, 5) * (1 + W), sp.Rational(-1, 10) * U * T),
                 boundary=[("u0", (-1, 0, 0)), ("u1", (1, 0, 0)), ("w0", (0, -1, 0)), ("w1", (0, 1, 0))]),
            t0=0.4),
        AnalyticCase(
            "surf_moving_cap", "surface", "rising growing sphere cut by the half-space z > 0",
            dict(X=_cap(), domain=((0, 1), (0, 2 * math.pi)), cells=(1, 2),
                 phi=1 + x * z + sp.Rational(1, 2) * T * y ** 2,
                 tangential=(0, sp.Rational(7, 10)),
                 boundary=[("u1", (0, 0, -1))]),
            t0=0.2),
        AnalyticCase(
            "line_expanding_circle", "line", "circle R = 1 + t, unit field, material rotation",
            dict(H=((1 + T) * sp.cos(S), (1 + T) * sp.sin(S), 0), phi=sp.Integer(1), beta=sp.Rational(1, 3)),
            reference=2 * math.pi, exact=True),
        AnalyticCase(
            "line_translating_ellipse", "line", "rigidly translating space ellipse, field frozen in the body frame",
            dict(H=(2 * sp.cos(S) + T, sp.sin(S) + sp.Rational(1, 2) * T ** 2, sp.Rational(3, 10) * sp.sin(2 * S) - T),
                 phi=(x - T) ** 2 + sp.sin(y - T ** 2 / 2) * (z + T) + 1),
            t0=0.3, reference=0.0, exact=True),
        AnalyticCase(
            "line_helix_slab", "line", "expanding rising helix cut by the slab |z| < 1, moving endpoints",
            dict(H=((1 + sp.Rational(1, 5) * T) * sp.cos(S), (1 + sp.Rational(1, 5) * T) * sp.sin(S),
                    sp.Rational(1, 3) * S + sp.Rational(1, 2) * T),
                 span=(3 * (-1 - sp.Rational(1, 2) * T), 3 * (1 - sp.Rational(1, 2) * T)),
                 phi=1 + x * y + T * z ** 2, beta=sp.Rational(1, 4) * sp.cos(S)),
            t0=0.25),
    ]
    return {c.name: c for c in cases}


def _cap():
    # sphere of radius R(t) centred at (0, 0, c(t)) above the plane z = 0; u in [0, 1] spans
    # the polar angle from the top down to the cut circle
    R = 1 + sp.Rational(1, 4) * T
    cz = sp.Rational(1, 5) + sp.Rational(1, 2) * T
    theta = U * sp.acos(-cz / R)
    return (R * sp.sin(theta) * sp.cos(W), R * sp.sin(theta) * sp.sin(W), cz + R * sp.cos(theta))


CATALOG: Dict[str, AnalyticCase] = _catalog()


@lru_cache(maxsize=None)
def _kernel(name: str):
    case = CATALOG[name]
    return {"volume": _VolumeKernel, "surface": _SurfaceKernel, "line": _LineKernel}[case.kind](case.geometry)


def _kernel_for(case: AnalyticCase):
    if CATALOG.get(case.name) is case:
        return _kernel(case.name)
    return {"volume": _VolumeKernel, "surface": _SurfaceKernel, "line": _LineKernel}[case.kind](case.geometry)


def _cells(h: float) -> int:
    n = int(round(1.0 / h))
    if n < 1 or abs(n * h - 1.0) > 1e-9:
        raise ValueError("h must be the reciprocal of a positive integer")
    return n


def _fd(kern, t, dt, n):
    return (kern.integral(t + dt, n) - kern.integral(t - dt, n)) / (2 * dt)


def volume_transport_residual(case: AnalyticCase, t: float, dt: float, h: float) -> float:
    if case.kind != "volume":
        raise ValueError(f"{case.name} is not a volume case")
    kern = _kernel_for(case)
    n = _cells(h)
    return abs(_fd(kern, t, dt, n) - kern.rhs(t, n))


def surface_transport_residual(case: AnalyticCase, form: str, t: float, dt: float, h: float) -> float:
    if case.kind != "surface":
        raise ValueError(f"{case.name} is not a surface case")
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}; expected one of {FORMS}")
    kern = _kernel_for(case)
    n = _cells(h)
    return abs(_fd(kern, t, dt, n) - kern.rhs_forms(t, n)[form])


def surface_forms(case: AnalyticCase, t: float, dt: float, h: float) -> Tuple[float, Dict[str, float]]:
    """FD left side and all three right sides at one resolution."""
    kern = _kernel_for(case)
    n = _cells(h)
    return _fd(kern, t, dt, n), kern.rhs_forms(t, n)


def boundary_speed_defect(case: AnalyticCase, t: float, h: float) -> float:
    return _kernel_for(case).boundary_speed_defect(t, _cells(h))


def line_transport_residual(case: AnalyticCase, t: float, dt: float, h: float) -> float:
    if case.kind != "line":
        raise ValueError(f"{case.name} is not a line case")
    kern = _kernel_for(case)
    n = _cells(h)
    return abs(_fd(kern, t, dt, n) - kern.rhs(t, n))


def lhs_rate(case: AnalyticCase, t: float, dt: float, h: float) -> float:
    return _fd(_kernel_for(case), t, dt, _cells(h))


# --------------------------------------------------------------------------- refinement study


@dataclass
class StudyRow:
    case: str
    level: int
    h: float
    residual: float
    order: Optional[float]


@dataclass
class CaseStudy:
    name: str
    rows: List[StudyRow] = field(default_factory=list)
    exact: bool = False
    form_gap: List[float] = field(default_factory=list)  # max pairwise disagreement per level (surface)
    form_bound: List[float] = field(default_factory=list)  # 2 x largest individual residual per level

    @property
    def fitted_order(self) -> float:
        hs = np.array([r.h for r in self.rows])
        rs = np.array([r.residual for r in self.rows])
        if len(hs) < 2 or np.any(rs <= 0):
            return math.nan
        return float(np.polyfit(np.log(hs), np.log(rs), 1)[0])

    @property
    def passed(self) -> bool:
        if self.exact:
            ok = all(r.residual <= STATIC_TOL for r in self.rows)
        else:
            ok = all(r.order is None or r.order >= 1.9 for r in self.rows) and self.fitted_order >= 1.9
        return ok and all(g <= b for g, b in zip(self.form_gap, self.form_bound))


def _order(prev: float, cur: float) -> Optional[float]:
    if prev <= 0 or cur <= 0:
        return None
    return math.log2(prev / cur)


def study(name: str, refinements: int = 3) -> List[CaseStudy]:
    """Residuals at levels 0..refinements; surface cases give one study per form."""
    case = CATALOG[name]
    hs = [1.0 / (case.n_base * 2 ** k) for k in range(refinements + 1)]
    if case.kind == "surface":
        per_form = {f: CaseStudy(f"{name}/{f}", exact=case.exact) for f in FORMS}
        gaps, bounds = [], []
        for k, h in enumerate(hs):
            lhs, rhs = surface_forms(case, case.t0, h, h)
            res = {f: abs(lhs - rhs[f]) for f in FORMS}
            for f in FORMS:
                rows = per_form[f].rows
                order = _order(rows[-1].residual, res[f]) if rows else None
                rows.append(StudyRow(per_form[f].name, k, h, res[f], order))
            gaps.append(max(abs(rhs[a] - rhs[b]) for a in FORMS for b in FORMS))
            bounds.append(2 * max(max(res.values()), 1e-14))
        for cs in per_form.values():
            cs.form_gap, cs.form_bound = gaps, bounds
        return list(per_form.values())
    kernel_fn = volume_transport_residual if case.kind == "volume" else line_transport_residual
    cs = CaseStudy(name, exact=case.exact)
    for k, h in enumerate(hs):
        r = kernel_fn(case, case.t0, h, h)
        cs.rows.append(StudyRow(name, k, h, r, _order(cs.rows[-1].residual, r) if cs.rows else None))
    return [cs]


def run_catalog(names: Optional[Sequence[str]] = None, refinements: int = 3) -> List[CaseStudy]:
    out = []
    for name in names or list(CATALOG):
        if name not in CATALOG:
            raise KeyError(f"unknown case {name!r}; known: {', '.join(CATALOG)}")
        out.extend(study(name, refinements))
    return out


def studies_csv(studies: Sequence[CaseStudy]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "level", "residual", "order"])
    for cs in studies:
        for r in cs.rows:
            w.writerow([r.case, r.level, "%.6e" % r.residual, "" if r.order is None else "%.4f" % r.order])
    return buf.getvalue()
