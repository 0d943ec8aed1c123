"""Quantified comparison-geometry predicates with witness records.

Each checker evaluates one distance inequality on a concrete configuration and
returns a record carrying the margin (LHS minus RHS, oriented so nonnegative
means the inequality holds) plus per-instance implied constants.  Sweeps drive
checkers over seeded random admissible configurations and collect failures as
replayable witnesses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import INF, g_angle, g_norm, g_signed_angle
from .manifold import GeodesicPolyline, Manifold, TangentVector, _pt


class PreconditionError(ValueError):
    """A checker's geometric precondition failed on the given configuration."""


@dataclass
class HingeRecord:
    kind: str
    lemma: str
    points: dict
    sides: dict
    angles: dict
    margin: float
    tol: float
    implied: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.margin >= -self.tol


@dataclass
class LemmaReport:
    lemma: str
    kind: str
    trials: int
    min_margin: float
    failures: list
    fitted: dict
    tol: float

    @property
    def ok(self) -> bool:
        return not self.failures


# -- constant-curvature model planes -------------------------------------------


def hyperbolic_hinge_side(b: float, c: float, alpha: float, K: float = 1.0) -> float:
    """Side opposite alpha for a hinge with sides b, c in the curvature -K plane."""
    t = math.sqrt(K)
    ch = math.cosh(t * b) * math.cosh(t * c) - math.sinh(t * b) * math.sinh(t * c) * math.cos(alpha)
    return math.acosh(max(ch, 1.0)) / t

def spherical_hinge_side(b: float, c: float, alpha: float, radius: float = 1.0) -> float:
    cs = math.cos(b / radius) * math.cos(c / radius) + math.sin(b / radius) * math.sin(
        c / radius
    ) * math.cos(alpha)
    return radius * math.acos(max(-1.0, min(1.0, cs)))


def chord_lipschitz_constant(K: float, R: float) -> float:
    """Circumference/(2*pi) of the radius-R circle in the curvature -K plane."""
    t = math.sqrt(K)
    return math.sinh(t * R) / t


def metric_ball_area(M: Manifold, rho: float) -> float:
    if M.kind == "euclidean-plane":
        return math.pi * rho * rho
    if M.kind == "round-sphere":
        r = M.radius
        return 2.0 * math.pi * r * r * (1.0 - math.cos(rho / r))
    if M.kind == "hyperbolic-plane":
        return 2.0 * math.pi * (math.cosh(rho) - 1.0)
    raise NotImplementedError("ball area available for analytic models only")


# -- batched logarithm (analytic models) ----------------------------------------


def exp_batch(M: Manifold, x, comps) -> np.ndarray:
    """Exponential map of many tangent components at once."""
    x = _pt(x)
    comps = np.asarray(comps, dtype=float)
    if M.kind == "euclidean-plane":
        return x + comps
    if M.kind == "hyperbolic-plane":
        zx = complex(x[0], x[1])
        vz = comps[..., 0] + 1j * comps[..., 1]
        v0 = vz / (1.0 - abs(zx) ** 2)
        L = 2.0 * np.abs(v0)
        out = np.full(vz.shape, zx, dtype=complex)
        nz = L > 1e-300
        mhat = np.tanh(L[nz] / 2.0) * v0[nz] / np.abs(v0[nz])
        out[nz] = (mhat + zx) / (1.0 + zx.conjugate() * mhat)
        return np.stack([out.real, out.imag], axis=-1)
    if M.kind == "round-sphere":
        r = M.radius
        e_lon, e_lat = M._frame_embed(x)
        lat = x[1]
        w = (
            comps[..., 0, None] * (r * math.cos(lat)) * e_lon
            + comps[..., 1, None] * r * e_lat
        )
        L = np.linalg.norm(w, axis=-1)
        nx = M._unit_embed(x)
        out = np.broadcast_to(nx * r, w.shape).copy()
        nz = L > 1e-300
        u = w[nz] / L[nz, None]
        t = L[nz] / r
        emb = np.cos(t)[:, None] * nx + np.sin(t)[:, None] * u
        lon = np.arctan2(emb[:, 1], emb[:, 0])
        latv = np.arcsin(np.clip(emb[:, 2], -1.0, 1.0))
        res = np.broadcast_to(x, comps.shape).copy()
        res[nz] = np.stack([lon, latv], axis=-1)
        return res
    raise NotImplementedError("exp_batch requires an analytic model")


def log_batch(M: Manifold, x, pts) -> np.ndarray:
    """Chart components of log_x(p) for many points p at once."""
    x = _pt(x)
    pts = np.asarray(pts, dtype=float)
    if M.kind == "euclidean-plane":
        return pts - x
    if M.kind == "hyperbolic-plane":
        zx = complex(x[0], x[1])
        zy = pts[..., 0] + 1j * pts[..., 1]
        mm = (zy - zx) / (1.0 - np.conj(zx) * zy)
        am = np.abs(mm)
        d = 2.0 * np.arctanh(np.clip(am, 0.0, 1.0 - 1e-17))
        scale = np.zeros_like(am)
        nz = am > 1e-17
        scale[nz] = (d[nz] / 2.0) / am[nz]
        v = (1.0 - abs(zx) ** 2) * scale * mm
        return np.stack([v.real, v.imag], axis=-1)
    if M.kind == "round-sphere":
        nx = M._unit_embed(x)
        ny = M._unit_embed(pts)
        dot = ny @ nx
        cr = np.cross(np.broadcast_to(nx, ny.shape), ny)
        psi = np.arctan2(np.linalg.norm(cr, axis=-1), dot)
        t = ny - dot[..., None] * nx
        tn = np.linalg.norm(t, axis=-1)
        u = np.zeros_like(t)
        nz = tn > 1e-15
        u[nz] = t[nz] / tn[nz, None]
        w = (M.radius * psi)[..., None] * u
        e_lon, e_lat = M._frame_embed(x)
        lat = x[1]
        a = (w @ e_lon) / (M.radius * math.cos(lat))
        b = (w @ e_lat) / M.radius
        return np.stack([a, b], axis=-1)
    raise NotImplementedError("log_batch requires an analytic model")


# -- checkers -------------------------------------------------------------------


def _require_lower_bound(M: Manifold, x, radius: float, K: float):
    lo, _ = M.sec_range(x, radius)
    if lo < -K - 1e-12:
        raise PreconditionError(
            f"curvature lower bound -{K} not satisfied on the ball of radius {radius:.3g}"
        )


def hinge_comparison_check(M: Manifold, x, y, z, K: float, tol: float = 1e-9) -> HingeRecord:
    """Hinge comparison against the curvature -K model plane: |yz| <= model side."""
    if K <= 0:
        raise ValueError("comparison curvature bound K must be positive")
    b = float(M.distance(x, y))
    c = float(M.distance(x, z))
    _require_lower_bound(M, x, 2.0 * max(b, c), K)
    alpha = M.angle(x, y, z)
    model = hyperbolic_hinge_side(b, c, alpha, K)
    margin = model - float(M.distance(y, z))
    return HingeRecord(
        M.kind,
        "hinge-comparison",
        {"x": _pt(x), "y": _pt(y), "z": _pt(z)},
        {"xy": b, "xz": c, "yz": float(M.distance(y, z)), "model": model},
        {"yxz": alpha},
        margin,
        tol,
    )


def first_variation_upper_check(
    M: Manifold, p, x, y, C: float = 4.0, tol: float = 1e-8
) -> HingeRecord:
    """|py| <= |px| - |xy| cos(pxy) + C |xy|^2 / min(|px|, lcr(x))."""
    dpx = float(M.distance(p, x))
    dxy = float(M.distance(x, y))
    dpy = float(M.distance(p, y))
    if dxy == 0.0:
        raise ValueError("degenerate configuration: x == y")
    alpha = M.angle(x, p, y)
    m = min(dpx, M.lcr(x))
    margin = dpx - dxy * math.cos(alpha) + C * dxy * dxy / m - dpy
    implied = (dpy - dpx + dxy * math.cos(alpha)) * m / (dxy * dxy)
    return HingeRecord(
        M.kind,
        "first-variation-upper",
        {"p": _pt(p), "x": _pt(x), "y": _pt(y)},
        {"px": dpx, "xy": dxy, "py": dpy},
        {"pxy": alpha},
        margin,
        tol,
        implied={"C": implied},
    )


def short_median_check(
    M: Manifold, p, q, x, y, C: float = 4.0, tol: float = 1e-8
) -> HingeRecord:
    """Two-sided first variation and the median shortcut bound at x on [pq].

    The quadratic term uses |xy|^2 (the summed one-sided bounds give exactly
    that; see the decisions ledger for the source's display).
    """
    dpx = float(M.distance(p, x))
    dqx = float(M.distance(q, x))
    dpq = float(M.distance(p, q))
    if abs(dpx + dqx - dpq) > 1e-9 * (1.0 + dpq):
        raise PreconditionError("x is not on a minimizing geodesic [pq]")
    r = min(dpx, dqx, M.lcr(x))
    if r <= 0:
        raise PreconditionError("min(|px|, |qx|, lcr(x)) must be positive")
    dxy = float(M.distance(x, y))
    dpy = float(M.distance(p, y))
    dqy = float(M.distance(q, y))
    if dxy == 0.0:
        margin1 = margin2 = 0.0
        alpha = 0.0
    else:
        alpha = M.angle(x, p, y)
        quad = C * dxy * dxy / r
        margin1 = quad - abs(dpx - dpy - dxy * math.cos(alpha))
        margin2 = dpq + 2.0 * quad - (dpy + dqy)
    return HingeRecord(
        M.kind,
        "short-median",
        {"p": _pt(p), "q": _pt(q), "x": _pt(x), "y": _pt(y)},
        {"px": dpx, "qx": dqx, "pq": dpq, "xy": dxy, "py": dpy, "qy": dqy},
        {"pxy": alpha},
        min(margin1, margin2),
        tol,
        implied={"first_variation_margin": margin1, "median_margin": margin2},
    )


def shortcut_check(M: Manifold, x, y, z, tol: float = 1e-9) -> HingeRecord:
    """Excess |xy|+|xz|-|yz| is positive once the hinge angle leaves pi.

    Reports the implied constant c of the quadratic lower bound
    excess >= c * alpha^2 * min(|xy|, |xz|, lcr(x)); positivity is the hard
    assertion, the constant is fitted by sweeps.
    """
    dxy = float(M.distance(x, y))
    dxz = float(M.distance(x, z))
    dyz = float(M.distance(y, z))
    if dxy == 0.0 or dxz == 0.0:
        raise ValueError("degenerate configuration: coincident hinge points")
    alpha = math.pi - M.angle(x, y, z)
    excess = dxy + dxz - dyz
    m = min(dxy, dxz, M.lcr(x))
    implied = excess / (alpha * alpha * m) if alpha > 1e-8 else INF
    return HingeRecord(
        M.kind,
        "shortcut",
        {"x": _pt(x), "y": _pt(y), "z": _pt(z)},
        {"xy": dxy, "xz": dxz, "yz": dyz, "excess": excess},
        {"alpha": alpha},
        excess,
        tol,
        implied={"c": implied},
    )


def exp_lipschitz_check(
    M: Manifold, x, y, z, K: float, R: float, tol: float = 1e-9
) -> HingeRecord:
    """|yz| <= C_{K,R} * angle(yxz) + | |xy| - |xz| | for |xy| <= R."""
    dxy = float(M.distance(x, y))
    dxz = float(M.distance(x, z))
    dyz = float(M.distance(y, z))
    if dxy > R + 1e-12:
        raise PreconditionError("|xy| exceeds the radius bound R")
    _require_lower_bound(M, x, 2.0 * R, K)
    if dxy == 0.0 or dxz == 0.0:
        ang = 0.0
    else:
        ang = M.angle(x, y, z)
    c_kr = chord_lipschitz_constant(K, R)
    margin = c_kr * ang + abs(dxy - dxz) - dyz
    implied = {}
    lcr_x = M.lcr(x)
    if dxy <= lcr_x:
        implied["lcr_variant_margin"] = 2.0 * dxy * ang + abs(dxy - dxz) - dyz
    return HingeRecord(
        M.kind,
        "exp-lipschitz",
        {"x": _pt(x), "y": _pt(y), "z": _pt(z)},
        {"xy": dxy, "xz": dxz, "yz": dyz, "C_KR": c_kr},
        {"yxz": ang},
        margin,
        tol,
        implied=implied,
    )


@dataclass
class DirectionMeasureRecord:
    kind: str
    measured_angle: float
    bound: float
    margin: float
    area: float
    diameter: float
    n_samples: int
    tol: float

    @property
    def ok(self) -> bool:
        return self.margin >= -self.tol


def direction_measure_check(
    M: Manifold,
    x,
    ball_center,
    rho: float,
    K: float,
    R: float,
    n_samples: int = 2048,
    tol: float = 1e-9,
) -> DirectionMeasureRecord:
    """Total direction angle of a ball is at least lambda_{K,R} * area / diam."""
    x = _pt(x)
    ell = float(M.distance(x, ball_center))
    if ell + rho > R + 1e-12:
        raise PreconditionError("ball not contained in B_R(x)")
    _require_lower_bound(M, x, 2.0 * R, K)
    from .linalg import orthonormal_frame

    frame = orthonormal_frame(M.metric_at(ball_center))
    from .ddr import _disk_points

    disk = _disk_points(n_samples, 0.0) * rho
    ring_t = np.linspace(0.0, 2.0 * math.pi, max(256, n_samples // 4), endpoint=False)
    ring = rho * np.stack([np.cos(ring_t), np.sin(ring_t)], axis=-1)
    tangent = np.vstack([disk, ring]) @ frame.T
    pts = exp_batch(M, ball_center, tangent)
    logs = log_batch(M, x, pts)
    ref = M.log(x, ball_center)
    G = M.metric_at(x)
    sdet = math.sqrt(max(float(np.linalg.det(G)), 0.0))
    dots = logs @ G @ ref
    crosses = (ref[0] * logs[..., 1] - ref[1] * logs[..., 0]) * sdet
    thetas = np.arctan2(crosses, dots)
    measured = float(thetas.max() - thetas.min())
    area = metric_ball_area(M, rho)
    lam = 1.0 / chord_lipschitz_constant(K, R)
    bound = lam * area / (2.0 * rho)
    return DirectionMeasureRecord(
        M.kind, measured, bound, measured - bound, area, 2.0 * rho, len(pts), tol
    )


@dataclass
class ExtensionResult:
    xy: float
    lam0: float
    capped: bool
    step: float
    denominator: float


def extension_search(
    M: Manifold,
    p,
    q,
    x,
    r0: float,
    K: float,
    step: float | None = None,
    cap: float | None = None,
    min_tol: float = 1e-9,
) -> ExtensionResult:
    """Largest found minimizing extension of [px] beyond x, given p on [qx].

    Marches the geodesic from p through x in small steps and tests minimality
    (traced length equals distance) at each step; stops at the first failure.
    """
    dqp = float(M.distance(q, p))
    dpx = float(M.distance(p, x))
    dqx = float(M.distance(q, x))
    if abs(dqp + dpx - dqx) > 1e-9 * (1.0 + dqx):
        raise PreconditionError("p is not between q and x on a minimizing geodesic")
    denom = min(dqp, r0, 1.0 / math.sqrt(K))
    cap = cap if cap is not None else 3.0 * denom
    step = step if step is not None else cap / 300.0
    u = M.unit(x, -np.asarray(M.log(x, p)))
    s_ok = 0.0
    s = step
    while s <= cap + 1e-15:
        y = M.exp(x, s * u)
        traced = dpx + s
        if abs(traced - float(M.distance(p, y))) > min_tol:
            break
        s_ok = s
        s += step
    capped = s > cap
    return ExtensionResult(s_ok, s_ok / denom, capped, step, denom)


def extended_first_variation_check(
    M: Manifold, q, p, x, z, K: float, tol: float = 1e-8
) -> HingeRecord:
    """Two-sided first variation with the extension hypothesis: implied Lambda."""
    dqp = float(M.distance(q, p))
    dpx = float(M.distance(p, x))
    dqx = float(M.distance(q, x))
    if abs(dqp + dpx - dqx) > 1e-9 * (1.0 + dqx):
        raise PreconditionError("p is not between q and x on a minimizing geodesic")
    dxz = float(M.distance(x, z))
    if dxz == 0.0:
        raise ValueError("degenerate configuration: x == z")
    dpz = float(M.distance(p, z))
    alpha = M.angle(x, p, z)
    lhs = abs(dpx - dpz - dxz * math.cos(alpha))
    denom = min(dpx, dqp, 1.0)
    implied = lhs * denom / (dxz * dxz)
    return HingeRecord(
        M.kind,
        "extended-first-variation",
        {"q": _pt(q), "p": _pt(p), "x": _pt(x), "z": _pt(z)},
        {"qp": dqp, "px": dpx, "xz": dxz, "pz": dpz},
        {"pxz": alpha},
        0.0,
        tol,
        implied={"Lambda": implied},
    )


@dataclass
class HolonomyRecord:
    kind: str
    difference: float
    length0: float
    length1: float
    ratio: float

    @property
    def total_length(self) -> float:
        return self.length0 + self.length1


def _polyline_length(M: Manifold, vertices) -> float:
    verts = np.asarray(vertices, dtype=float)
    if M.is_analytic:
        return float(np.sum(M.distance(verts[:-1], verts[1:])))
    total = 0.0
    for a, b in zip(verts[:-1], verts[1:]):
        d = b - a
        total += math.sqrt(max(float(d @ M.metric_at(0.5 * (a + b)) @ d), 0.0))
    return total


def holonomy_area_check(M: Manifold, path0, path1, v: TangentVector) -> HolonomyRecord:
    """Transport difference between two paths with shared endpoints vs (L0+L1)^2."""
    v0 = path0.vertices if isinstance(path0, GeodesicPolyline) else np.asarray(path0, float)
    v1 = path1.vertices if isinstance(path1, GeodesicPolyline) else np.asarray(path1, float)
    if np.linalg.norm(v0[0] - v1[0]) > 1e-9 or np.linalg.norm(v0[-1] - v1[-1]) > 1e-9:
        raise PreconditionError("paths do not share endpoints")
    w0 = M.transport(v0, v)
    w1 = M.transport(v1, v)
    diff = g_norm(M.metric_at(w0.base), w1.components - w0.components)
    L0 = _polyline_length(M, v0)
    L1 = _polyline_length(M, v1)
    total = L0 + L1
    ratio = diff / (total * total) if total > 0 else 0.0
    return HolonomyRecord(M.kind, diff, L0, L1, ratio)


@dataclass
class AngleRatioRecord:
    kind: str
    alpha: float
    beta: float
    ratio: float
    length0: float
    length1: float


def angle_ratio_check(
    M: Manifold,
    p,
    y,
    gamma0: GeodesicPolyline,
    gamma1: GeodesicPolyline,
    end_tol: float = 1e-6,
) -> AngleRatioRecord:
    """Angle between two geodesics p->y at the far endpoint vs at the start."""
    for g in (gamma0, gamma1):
        if np.linalg.norm(g.start - _pt(p)) > end_tol or np.linalg.norm(g.end - _pt(y)) > end_tol:
            raise PreconditionError("geodesics do not run from p to y within tolerance")
    Gp = M.metric_at(p)
    Gy = M.metric_at(gamma0.end)
    alpha = g_angle(Gp, gamma0.initial_tangent.components, gamma1.initial_tangent.components)
    beta = g_angle(Gy, gamma0.final_tangent.components, gamma1.final_tangent.components)
    ratio = 0.0 if alpha < 1e-14 and beta < 1e-14 else (beta / alpha if alpha > 0 else INF)
    return AngleRatioRecord(M.kind, alpha, beta, ratio, gamma0.length, gamma1.length)
