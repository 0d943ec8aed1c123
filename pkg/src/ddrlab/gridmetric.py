"""Grid-sampled 2x2 metric tensor fields on axis-aligned rectangles.

Nodes live at ``origin + (ix*h, iy*h)`` for ``ix in [0, nx)``, ``iy in [0, ny)``.
Tensor components are stored as separate ``(nx, ny)`` arrays ``E = g11``,
``F = g12`` and ``G = g22``.  Per-node Gauss curvature comes from the Brioschi
formula with centered finite differences.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


class NonSpdTensorError(ValueError):
    def __init__(self, node: tuple[int, int], tensor: np.ndarray):
        self.node = node
        self.tensor = np.asarray(tensor)
        super().__init__(f"metric tensor at node {node} is not symmetric positive definite")


@dataclass
class GridMetric:
    origin: np.ndarray
    h: float
    nx: int
    ny: int
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    lam_min: float = field(init=False)
    lam_max: float = field(init=False)
    conformal: bool = field(init=False)

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2x2 nodes")
        self.origin = np.asarray(self.origin, dtype=float)
        self._validate_spd()
        tr = self.E + self.G
        disc = np.sqrt(np.maximum((self.E - self.G) ** 2 + 4.0 * self.F**2, 0.0))
        lo = 0.5 * (tr - disc)
        hi = 0.5 * (tr + disc)
        self.lam_min = float(lo.min())
        self.lam_max = float(hi.max())
        scale = max(self.lam_max, 1.0)
        self.conformal = bool(
            np.all(np.abs(self.F) <= 1e-12 * scale)
            and np.all(np.abs(self.E - self.G) <= 1e-12 * scale)
        )
        self._d1 = None
        self._curvature = None

    # -- construction ---------------------------------------------------

    @classmethod
    def from_function(cls, origin, width: float, height: float, metric_fn, h: float) -> "GridMetric":
        origin = np.asarray(origin, dtype=float)
        if h <= 0:
            raise ValueError("grid spacing must be positive")
        nx = int(round(width / h)) + 1
        ny = int(round(height / h)) + 1
        if nx < 2 or ny < 2:
            raise ValueError("domain too small: needs at least 2x2 nodes")
        E = np.empty((nx, ny))
        F = np.empty((nx, ny))
        G = np.empty((nx, ny))
        for ix in range(nx):
            for iy in range(ny):
                p = origin + np.array([ix * h, iy * h])
                t = np.asarray(metric_fn(p), dtype=float)
                E[ix, iy], F[ix, iy], G[ix, iy] = t[0, 0], 0.5 * (t[0, 1] + t[1, 0]), t[1, 1]
        return cls(origin, h, nx, ny, E, F, G)

    def _validate_spd(self):
        det = self.E * self.G - self.F**2
        bad = (self.E <= 0) | (det <= 0)
        if bad.any():
            ix, iy = map(int, np.argwhere(bad)[0])
            t = np.array([[self.E[ix, iy], self.F[ix, iy]], [self.F[ix, iy], self.G[ix, iy]]])
            raise NonSpdTensorError((ix, iy), t)

    # -- geometry of the chart -------------------------------------------

    @property
    def width(self) -> float:
        return (self.nx - 1) * self.h

    @property
    def height(self) -> float:
        return (self.ny - 1) * self.h

    def node_point(self, ix: int, iy: int) -> np.ndarray:
        return self.origin + np.array([ix * self.h, iy * self.h])

    def node_points(self) -> np.ndarray:
        xs = self.origin[0] + self.h * np.arange(self.nx)
        ys = self.origin[1] + self.h * np.arange(self.ny)
        return np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        rel = p - self.origin
        return bool(
            -tol <= rel[0] <= self.width + tol and -tol <= rel[1] <= self.height + tol
        )

    def nearest_node(self, p) -> tuple[int, int]:
        rel = (np.asarray(p, dtype=float) - self.origin) / self.h
        ix = int(np.clip(round(rel[0]), 0, self.nx - 1))
        iy = int(np.clip(round(rel[1]), 0, self.ny - 1))
        return ix, iy

    def _cell(self, p):
        rel = (np.asarray(p, dtype=float) - self.origin) / self.h
        ix = int(np.clip(np.floor(rel[0]), 0, self.nx - 2))
        iy = int(np.clip(np.floor(rel[1]), 0, self.ny - 2))
        tx = float(np.clip(rel[0] - ix, 0.0, 1.0))
        ty = float(np.clip(rel[1] - iy, 0.0, 1.0))
        return ix, iy, tx, ty

    def interp(self, arr: np.ndarray, p) -> float:
        """Bilinear interpolation of a per-node array at chart point p."""
        ix, iy, tx, ty = self._cell(p)
        return float(
            arr[ix, iy] * (1 - tx) * (1 - ty)
            + arr[ix + 1, iy] * tx * (1 - ty)
            + arr[ix, iy + 1] * (1 - tx) * ty
            + arr[ix + 1, iy + 1] * tx * ty
        )

    def tensor_at(self, p) -> np.ndarray:
        """Bilinear tensor interpolation (used by the eikonal solvers)."""
        e = self.interp(self.E, p)
        f = self.interp(self.F, p)
        g = self.interp(self.G, p)
        return np.array([[e, f], [f, g]])

    def smooth_tensor_at(self, p) -> np.ndarray:
        """Spline tensor interpolation (the smooth metric used for geodesics)."""
        sp = self._splines()
        x, y = float(p[0]), float(p[1])
        e = float(sp["E"].ev(x, y))
        f = float(sp["F"].ev(x, y))
        g = float(sp["G"].ev(x, y))
        return np.array([[e, f], [f, g]])

    # -- derivatives and Christoffel symbols ------------------------------

    def _splines(self):
        if self._d1 is None:
            from scipy.interpolate import RectBivariateSpline

            xs = self.origin[0] + self.h * np.arange(self.nx)
            ys = self.origin[1] + self.h * np.arange(self.ny)
            kx = min(3, self.nx - 1)
            ky = min(3, self.ny - 1)
            self._d1 = {
                name: RectBivariateSpline(xs, ys, arr, kx=kx, ky=ky)
                for name, arr in (("E", self.E), ("F", self.F), ("G", self.G))
            }
        return self._d1

    def christoffel_at(self, p) -> np.ndarray:
        """Gamma[k, i, j] at chart point p, from spline-smoothed tensor derivatives."""
        sp = self._splines()
        x, y = float(p[0]), float(p[1])
        e = sp["E"].ev(x, y)
        f = sp["F"].ev(x, y)
        g = sp["G"].ev(x, y)
        dEx, dEy = sp["E"].ev(x, y, dx=1), sp["E"].ev(x, y, dy=1)
        dFx, dFy = sp["F"].ev(x, y, dx=1), sp["F"].ev(x, y, dy=1)
        dGx, dGy = sp["G"].ev(x, y, dx=1), sp["G"].ev(x, y, dy=1)
        dg = np.empty((2, 2, 2))  # dg[l, i, j] = d_l g_ij
        dg[0] = [[dEx, dFx], [dFx, dGx]]
        dg[1] = [[dEy, dFy], [dFy, dGy]]
        ginv = np.array([[g, -f], [-f, e]]) / (e * g - f * f)
        gam = np.empty((2, 2, 2))
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    s = 0.0
                    for l in range(2):
                        s += ginv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
                    gam[k, i, j] = 0.5 * s
        return gam

    # -- curvature ---------------------------------------------------------

    def curvature_nodes(self) -> np.ndarray:
        """Per-node Gauss curvature via the Brioschi formula (finite differences)."""
        if self._curvature is None:
            h = self.h
            E, F, G = self.E, self.F, self.G
            Ex, Ey = np.gradient(E, h, axis=0), np.gradient(E, h, axis=1)
            Fx, Fy = np.gradient(F, h, axis=0), np.gradient(F, h, axis=1)
            Gx, Gy = np.gradient(G, h, axis=0), np.gradient(G, h, axis=1)
            Eyy = np.gradient(Ey, h, axis=1)
            Gxx = np.gradient(Gx, h, axis=0)
            Fxy = np.gradient(Fx, h, axis=1)
            # 3x3 Brioschi determinants expanded along their first rows
            a00 = -0.5 * Eyy + Fxy - 0.5 * Gxx
            det1 = (
                a00 * (E * G - F * F)
                - 0.5 * Ex * ((Fy - 0.5 * Gx) * G - F * 0.5 * Gy)
                + (Fx - 0.5 * Ey) * ((Fy - 0.5 * Gx) * F - E * 0.5 * Gy)
            )
            det2 = (
                -0.5 * Ey * (0.5 * Ey * G - F * 0.5 * Gx)
                + 0.5 * Gx * (0.5 * Ey * F - E * 0.5 * Gx)
            )
            self._curvature = (det1 - det2) / (E * G - F * F) ** 2
        return self._curvature

    # -- identity ----------------------------------------------------------

    def content_hash(self) -> str:
        m = hashlib.sha256()
        m.update(np.asarray([self.origin[0], self.origin[1], self.h], dtype=float).tobytes())
        m.update(np.asarray([self.nx, self.ny], dtype=np.int64).tobytes())
        for arr in (self.E, self.F, self.G):
            m.update(np.ascontiguousarray(arr).tobytes())
        return m.hexdigest()[:16]
