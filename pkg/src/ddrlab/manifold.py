"""2D Riemannian manifolds: three analytic model geometries and grid metrics.

Analytic models carry closed-form distance, exponential and logarithm maps;
grid manifolds carry a sampled tensor field with finite-difference Christoffel
symbols and Brioschi curvature.  Points are length-2 float arrays in the chart
of each manifold (sphere chart is longitude/latitude in radians).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gridmetric import GridMetric
from .linalg import INF, g_angle, g_norm, g_rotate, g_signed_angle, g_unit, orthonormal_frame

_POLE_EPS = 1e-12


class CutLocusError(ValueError):
    """Logarithm requested at or beyond the cut locus (direction not unique)."""


class ChartSingularityError(ValueError):
    """Tangent components requested where the chart frame degenerates (sphere poles)."""


class DomainError(ValueError):
    """Point outside the manifold's chart domain."""


@dataclass
class TangentVector:
    base: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.components = np.asarray(self.components, dtype=float)


@dataclass
class GeodesicPolyline:
    vertices: np.ndarray          # (n, 2)
    arc: np.ndarray               # (n,) cumulative length, arc[0] == 0
    initial_tangent: TangentVector
    final_tangent: TangentVector | None
    truncated: bool = False

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]


def _pt(p) -> np.ndarray:
    return np.asarray(p, dtype=float)


class Manifold:
    """Shared interface; all operations are pure and handles are immutable."""

    kind: str = "abstract"
    sec_min: float = 0.0
    sec_max: float = 0.0
    inj: float = INF
    diam: float = INF

    # chart / metric ------------------------------------------------------

    def contains(self, p) -> bool:
        raise NotImplementedError

    def metric_at(self, p) -> np.ndarray:
        raise NotImplementedError

    def norm(self, v: TangentVector) -> float:
        return g_norm(self.metric_at(v.base), v.components)

    # closed-form geometry (analytic kinds only) ---------------------------

    @property
    def is_analytic(self) -> bool:
        return True

    def distance(self, x, y):
        """Geodesic distance; broadcasts over trailing (..., 2) point arrays."""
        raise NotImplementedError

    def log(self, x, y) -> np.ndarray:
        """Chart components of the initial velocity of [xy], with g-norm d(x,y)."""
        raise NotImplementedError

    def exp(self, x, v) -> np.ndarray:
        raise NotImplementedError

    def sec_range(self, center=None, radius=None) -> tuple[float, float]:
        return (self.sec_min, self.sec_max)

    def lcr(self, p) -> float:
        """Lower curvature radius: sup r with Sec >= -1/r^2 on the ball B_{2r}(p)."""
        raise NotImplementedError

    # composite operations --------------------------------------------------

    def angle(self, x, y, z) -> float:
        x = _pt(x)
        u = self.log(x, y)
        v = self.log(x, z)
        return g_angle(self.metric_at(x), u, v)

    def geodesic(self, x, v, total_length: float, step: float) -> GeodesicPolyline:
        raise NotImplementedError

    def transport(self, vertices: np.ndarray, v: TangentVector) -> TangentVector:
        """Parallel transport of v along the piecewise-geodesic path through vertices."""
        raise NotImplementedError

    # helpers ---------------------------------------------------------------

    def unit(self, p, v) -> np.ndarray:
        return g_unit(self.metric_at(p), v)

    def frame(self, p) -> np.ndarray:
        """Columns form a g-orthonormal basis of the tangent chart at p."""
        return orthonormal_frame(self.metric_at(p))

    def _analytic_polyline(self, x, v, total_length, step) -> GeodesicPolyline:
        x = _pt(x)
        u = self.unit(x, v)
        n_steps = max(1, int(math.ceil(total_length / step)))
        ts = np.linspace(0.0, total_length, n_steps + 1)
        verts = np.array([self.exp(x, t * u) for t in ts])
        final = None
        try:
            if total_length > 0:
                back = self.log(verts[-1], verts[-2])
                final = TangentVector(verts[-1], -self.unit(verts[-1], back))
        except (CutLocusError, ChartSingularityError):
            final = None
        return GeodesicPolyline(verts, ts.copy(), TangentVector(x, u), final)

    def _segment_transport(self, vertices, v: TangentVector) -> TangentVector:
        """Exact transport along each geodesic chord between consecutive vertices.

        Correct whenever log between consecutive vertices is exact (analytic kinds):
        in 2D, transport along a geodesic preserves the g-norm and the signed angle
        to the geodesic direction.
        """
        verts = np.asarray(vertices, dtype=float)
        comp = np.asarray(v.components, dtype=float)
        n = g_norm(self.metric_at(verts[0]), comp)
        for a, b in zip(verts[:-1], verts[1:]):
            out_dir = self.log(a, b)
            if g_norm(self.metric_at(a), out_dir) < 1e-15:
                continue
            theta = g_signed_angle(self.metric_at(a), out_dir, comp)
            in_dir = -self.log(b, a)
            comp = n * g_rotate(self.metric_at(b), self.unit(b, in_dir), theta)
        return TangentVector(verts[-1], comp)


class EuclideanPlane(Manifold):
    kind = "euclidean-plane"
    sec_min = sec_max = 0.0
    inj = INF
    diam = INF

    def contains(self, p) -> bool:
        return True

    def metric_at(self, p) -> np.ndarray:
        return np.eye(2)

    def distance(self, x, y):
        d = np.linalg.norm(_pt(y) - _pt(x), axis=-1)
        return float(d) if np.ndim(d) == 0 else d

    def log(self, x, y) -> np.ndarray:
        return _pt(y) - _pt(x)

    def exp(self, x, v) -> np.ndarray:
        return _pt(x) + _pt(v)

    def lcr(self, p) -> float:
        return INF

    def geodesic(self, x, v, total_length, step) -> GeodesicPolyline:
        return self._analytic_polyline(x, v, total_length, step)

    def transport(self, vertices, v: TangentVector) -> TangentVector:
        verts = np.asarray(vertices, dtype=float)
        return TangentVector(verts[-1], v.components.copy())


class Sphere(Manifold):
    """Round sphere of given radius; chart is (longitude, latitude) radians."""

    kind = "round-sphere"

    def __init__(self, radius: float):
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.radius = float(radius)
        self.sec_min = self.sec_max = 1.0 / radius**2
        self.inj = math.pi * radius
        self.diam = math.pi * radius

    def contains(self, p) -> bool:
        return bool(abs(_pt(p)[1]) <= math.pi / 2 + 1e-12)

    def _unit_embed(self, p):
        p = _pt(p)
        lon, lat = p[..., 0], p[..., 1]
        cl = np.cos(lat)
        return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)

    def _unembed(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        n = n / np.linalg.norm(n)
        return np.array([math.atan2(n[1], n[0]), math.asin(max(-1.0, min(1.0, n[2])))])

    def _frame_embed(self, p):
        lon, lat = _pt(p)
        if abs(math.cos(lat)) < _POLE_EPS:
            raise ChartSingularityError("chart frame degenerates at the poles")
        e_lon = np.array([-math.sin(lon), math.cos(lon), 0.0])
        e_lat = np.array(
            [-math.sin(lat) * math.cos(lon), -math.sin(lat) * math.sin(lon), math.cos(lat)]
        )
        return e_lon, e_lat

    def _comp_to_embed(self, p, comp):
        e_lon, e_lat = self._frame_embed(p)
        lat = _pt(p)[1]
        r = self.radius
        return comp[0] * r * math.cos(lat) * e_lon + comp[1] * r * e_lat

    def _embed_to_comp(self, p, w):
        e_lon, e_lat = self._frame_embed(p)
        lat = _pt(p)[1]
        r = self.radius
        return np.array([float(w @ e_lon) / (r * math.cos(lat)), float(w @ e_lat) / r])

    def metric_at(self, p) -> np.ndarray:
        lat = _pt(p)[1]
        r = self.radius
        return np.diag([r**2 * math.cos(lat) ** 2, r**2])

    def distance(self, x, y):
        nx = self._unit_embed(x)
        ny = self._unit_embed(y)
        dot = np.sum(nx * ny, axis=-1)
        cross = np.linalg.norm(np.cross(nx, ny), axis=-1)
        d = self.radius * np.arctan2(cross, dot)
        return float(d) if np.ndim(d) == 0 else d

    def log(self, x, y) -> np.ndarray:
        nx = self._unit_embed(x)
        ny = self._unit_embed(y)
        psi = math.atan2(float(np.linalg.norm(np.cross(nx, ny))), float(nx @ ny))
        if psi >= math.pi - 1e-9:
            raise CutLocusError("antipodal point: direction not unique")
        if psi < 1e-15:
            return np.zeros(2)
        t = ny - math.cos(psi) * nx
        u = t / np.linalg.norm(t)
        return self._embed_to_comp(x, self.radius * psi * u)

    def exp(self, x, v) -> np.ndarray:
        v = _pt(v)
        if np.allclose(v, 0.0):
            return _pt(x).copy()
        w = self._comp_to_embed(x, v)
        L = float(np.linalg.norm(w))
        nx = self._unit_embed(x)
        u = w / L
        t = L / self.radius
        return self._unembed(math.cos(t) * nx + math.sin(t) * u)

    def lcr(self, p) -> float:
        return INF

    def geodesic(self, x, v, total_length, step) -> GeodesicPolyline:
        x = _pt(x)
        u = self.unit(x, v)
        w = self._comp_to_embed(x, u)       # unit embedding velocity
        nx = self._unit_embed(x)
        n_steps = max(1, int(math.ceil(total_length / step)))
        ts = np.linspace(0.0, total_length, n_steps + 1)
        verts = np.array(
            [
                self._unembed(
                    math.cos(t / self.radius) * nx + math.sin(t / self.radius) * w
                )
                for t in ts
            ]
        )
        final = None
        try:
            t_end = total_length / self.radius
            w_end = -math.sin(t_end) * nx + math.cos(t_end) * w
            final = TangentVector(verts[-1], self._embed_to_comp(verts[-1], w_end))
        except ChartSingularityError:
            final = None
        return GeodesicPolyline(verts, ts.copy(), TangentVector(x, u), final)

    def transport(self, vertices, v: TangentVector) -> TangentVector:
        verts = np.asarray(vertices, dtype=float)
        w = self._comp_to_embed(verts[0], v.components)
        ns = self._unit_embed(verts)
        for a, b in zip(ns[:-1], ns[1:]):
            axis = np.cross(a, b)
            s = float(np.linalg.norm(axis))
            c = float(a @ b)
            if s < 1e-15:
                if c < 0:
                    raise CutLocusError("consecutive path vertices are antipodal")
                continue
            k = axis / s
            psi = math.atan2(s, c)
            # Rodrigues rotation about k by psi
            w = (
                w * math.cos(psi)
                + np.cross(k, w) * math.sin(psi)
                + k * float(k @ w) * (1.0 - math.cos(psi))
            )
        return TangentVector(verts[-1], self._embed_to_comp(verts[-1], w))


class HyperbolicPlane(Manifold):
    """Hyperbolic plane of curvature -1 in the Poincare disk chart |z| < 1."""

    kind = "hyperbolic-plane"
    sec_min = sec_max = -1.0
    inj = INF
    diam = INF

    def contains(self, p) -> bool:
        return bool(np.linalg.norm(_pt(p)) < 1.0)

    @staticmethod
    def _z(p):
        p = _pt(p)
        return p[..., 0] + 1j * p[..., 1]

    def metric_at(self, p) -> np.ndarray:
        r2 = float(np.dot(_pt(p), _pt(p)))
        if r2 >= 1.0:
            raise DomainError("point outside the unit disk")
        c = 2.0 / (1.0 - r2)
        return np.diag([c * c, c * c])

    def distance(self, x, y):
        zx, zy = self._z(x), self._z(y)
        m = np.abs((zy - zx) / (1.0 - np.conj(zx) * zy))
        d = 2.0 * np.arctanh(np.clip(m, 0.0, 1.0 - 1e-17))
        return float(d) if np.ndim(d) == 0 else d

    def log(self, x, y) -> np.ndarray:
        zx, zy = complex(self._z(x)), complex(self._z(y))
        m = (zy - zx) / (1.0 - zx.conjugate() * zy)
        am = abs(m)
        if am < 1e-17:
            return np.zeros(2)
        d = 2.0 * math.atanh(min(am, 1.0 - 1e-17))
        v0 = (d / 2.0) * m / am
        vx = (1.0 - abs(zx) ** 2) * v0
        return np.array([vx.real, vx.imag])

    def exp(self, x, v) -> np.ndarray:
        zx = complex(self._z(x))
        vz = complex(v[0], v[1])
        if abs(vz) < 1e-300:
            return _pt(x).copy()
        v0 = vz / (1.0 - abs(zx) ** 2)
        L = 2.0 * abs(v0)
        m = math.tanh(L / 2.0) * v0 / abs(v0)
        zy = (m + zx) / (1.0 + zx.conjugate() * m)
        return np.array([zy.real, zy.imag])

    def lcr(self, p) -> float:
        return 1.0

    def geodesic(self, x, v, total_length, step) -> GeodesicPolyline:
        return self._analytic_polyline(x, v, total_length, step)

    def transport(self, vertices, v: TangentVector) -> TangentVector:
        return self._segment_transport(vertices, v)


class GridManifold(Manifold):
    """Grid-discretized metric field on a rectangle; distances via the eikonal module."""

    kind = "grid"

    def __init__(self, metric: GridMetric):
        self.metric = metric
        K = metric.curvature_nodes()
        self.sec_min = float(K.min())
        self.sec_max = float(K.max())
        self.inj = INF  # not estimated; comparison checks use lcr and sec_range
        self.diam = math.hypot(metric.width, metric.height) * math.sqrt(metric.lam_max)

    @property
    def is_analytic(self) -> bool:
        return False

    @property
    def lam_min(self) -> float:
        return self.metric.lam_min

    @property
    def lam_max(self) -> float:
        return self.metric.lam_max

    def contains(self, p) -> bool:
        return self.metric.contains(p)

    def metric_at(self, p) -> np.ndarray:
        return self.metric.smooth_tensor_at(p)

    def distance(self, x, y):
        raise NotImplementedError(
            "grid manifolds have no closed-form distance; solve a field with ddrlab.eikonal"
        )

    def log(self, x, y) -> np.ndarray:
        raise NotImplementedError("grid manifolds have no closed-form logarithm map")

    def exp(self, x, v) -> np.ndarray:
        raise NotImplementedError("grid manifolds have no closed-form exponential map")

    def sec_range(self, center=None, radius=None) -> tuple[float, float]:
        K = self.metric.curvature_nodes()
        if center is None or radius is None:
            return float(K.min()), float(K.max())
        pts = self.metric.node_points()
        d = np.linalg.norm(pts - _pt(center), axis=-1)
        mask = d <= radius / math.sqrt(self.metric.lam_min) + 1e-12
        if not mask.any():
            return float(K.min()), float(K.max())
        sel = K[mask]
        return float(sel.min()), float(sel.max())

    def lcr(self, p) -> float:
        """Exact sup over r of the node-sampled curvature constraint.

        Geodesic balls are over-approximated by chart disks of radius
        2r/sqrt(lam_min), which keeps the estimate 1-Lipschitz in the
        g-distance and conservative (never above the true value on nodes).
        """
        K = self.metric.curvature_nodes()
        if K.min() >= 0.0:
            return INF
        pts = self.metric.node_points().reshape(-1, 2)
        dch = np.linalg.norm(pts - _pt(p), axis=-1)
        order = np.argsort(dch)
        ds = dch[order]
        cmin = np.minimum.accumulate(K.reshape(-1)[order])
        half_sl = 0.5 * math.sqrt(self.metric.lam_min)
        best = ds[0] * half_sl  # no nodes inside the chart disk yet: unconstrained
        r_lo = ds[0] * half_sl
        for i in range(len(ds)):
            r_hi = ds[i + 1] * half_sl if i + 1 < len(ds) else INF
            k = cmin[i]
            bound = INF if k >= 0.0 else 1.0 / math.sqrt(-k)
            top = min(r_hi, bound)
            if top >= r_lo:
                best = max(best, top)
            if bound < r_hi:
                break
            r_lo = r_hi
        return best

    # -- geodesic integration ----------------------------------------------

    def _geodesic_rhs(self, pos, vel):
        gam = self.metric.christoffel_at(pos)
        acc = -np.einsum("kij,i,j->k", gam, vel, vel)
        return vel, acc

    def geodesic(self, x, v, total_length, step) -> GeodesicPolyline:
        pos = _pt(x).copy()
        if not self.contains(pos):
            raise DomainError("trace start outside grid domain")
        vel = self.unit(pos, v)
        verts = [pos.copy()]
        seg_lengths = [0.0]
        truncated = False
        t = 0.0
        while t < total_length - 1e-12:
            dt = min(step, total_length - t)
            p2, v2 = self._rk4_step(pos, vel, dt)
            if not self.contains(p2):
                truncated = True
                break
            seg_lengths.append(self._segment_length(pos, p2))
            pos, vel = p2, self.unit(p2, v2)
            verts.append(pos.copy())
            t += dt
        verts = np.array(verts)
        arc = np.cumsum(seg_lengths)
        return GeodesicPolyline(
            verts,
            arc,
            TangentVector(_pt(x), self.unit(_pt(x), v)),
            TangentVector(pos, vel),
            truncated=truncated,
        )

    def _rk4_step(self, pos, vel, dt):
        k1p, k1v = self._geodesic_rhs(pos, vel)
        k2p, k2v = self._geodesic_rhs(pos + 0.5 * dt * k1p, vel + 0.5 * dt * k1v)
        k3p, k3v = self._geodesic_rhs(pos + 0.5 * dt * k2p, vel + 0.5 * dt * k2v)
        k4p, k4v = self._geodesic_rhs(pos + dt * k3p, vel + dt * k3v)
        p2 = pos + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        v2 = vel + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        return p2, v2

    def _segment_length(self, a, b) -> float:
        d = b - a
        mids = [a, 0.5 * (a + b), b]
        ws = [1.0, 4.0, 1.0]
        s = sum(
            w * math.sqrt(max(float(d @ self.metric.smooth_tensor_at(m) @ d), 0.0))
            for w, m in zip(ws, mids)
        )
        return s / 6.0

    def transport(self, vertices, v: TangentVector) -> TangentVector:
        verts = np.asarray(vertices, dtype=float)
        comp = np.asarray(v.components, dtype=float).copy()
        href = self.metric.h
        for a, b in zip(verts[:-1], verts[1:]):
            if not (self.contains(a) and self.contains(b)):
                raise DomainError("transport path leaves the grid domain")
            seg = b - a
            nsub = max(1, int(math.ceil(np.linalg.norm(seg) / (0.5 * href))))
            ds = 1.0 / nsub
            for j in range(nsub):
                s0 = j * ds
                comp = self._transport_rk4(a, seg, s0, ds, comp)
        return TangentVector(verts[-1], comp)

    def _transport_rk4(self, a, seg, s0, ds, comp):
        def rhs(s, w):
            gam = self.metric.christoffel_at(a + s * seg)
            return -np.einsum("kij,i,j->k", gam, seg, w)

        k1 = rhs(s0, comp)
        k2 = rhs(s0 + 0.5 * ds, comp + 0.5 * ds * k1)
        k3 = rhs(s0 + 0.5 * ds, comp + 0.5 * ds * k2)
        k4 = rhs(s0 + ds, comp + ds * k3)
        return comp + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


# -- factories and operation-level API --------------------------------------


def make_model_manifold(kind: str, **params) -> Manifold:
    if kind == "euclidean-plane":
        return EuclideanPlane()
    if kind == "round-sphere":
        return Sphere(radius=params.get("radius", 1.0))
    if kind == "hyperbolic-plane":
        return HyperbolicPlane()
    raise ValueError(f"unknown manifold kind: {kind!r}")


def make_grid_manifold(origin, width, height, metric_fn, h) -> GridManifold:
    return GridManifold(GridMetric.from_function(origin, width, height, metric_fn, h))


def exact_distance(M: Manifold, x, y) -> float:
    if not M.is_analytic:
        raise NotImplementedError(
            "exact_distance requires an analytic manifold; use the eikonal module for grids"
        )
    return float(M.distance(x, y))


def log_map(M: Manifold, x, y) -> TangentVector:
    return TangentVector(_pt(x), M.log(x, y))


def exp_map(M: Manifold, x, v) -> np.ndarray:
    comp = v.components if isinstance(v, TangentVector) else v
    return M.exp(x, comp)


def angle(M: Manifold, x, y, z) -> float:
    return M.angle(x, y, z)


def geodesic_trace(M: Manifold, x, v, total_length: float, step: float) -> GeodesicPolyline:
    comp = v.components if isinstance(v, TangentVector) else v
    return M.geodesic(x, comp, total_length, step)


def parallel_transport(M: Manifold, path, v: TangentVector) -> TangentVector:
    vertices = path.vertices if isinstance(path, GeodesicPolyline) else np.asarray(path, dtype=float)
    return M.transport(vertices, v)


def lower_curvature_radius(M: Manifold, x) -> float:
    return M.lcr(x)
