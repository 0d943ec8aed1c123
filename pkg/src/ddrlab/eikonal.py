"""Geodesic distance fields on grid manifolds.

Conformal metrics use first-order fast marching (Godunov upwind updates,
binary heap); general SPD tensors use a 16-neighbor stencil-graph Dijkstra
(scipy's C implementation) whose anisotropy overshoot is recorded and folded
into the per-field tolerance ``eps_h``.  Every field carries its ``eps_h`` so
downstream inequality checks can state explicit slack.
"""
from __future__ import annotations

import heapq
import json
import math
import os
import threading
from dataclasses import dataclass, field

import numpy as np

from .manifold import DomainError, GridManifold, Manifold, TangentVector, _pt

_OFFSETS_16 = [
    (1, 0), (0, 1), (-1, 0), (0, -1),
    (1, 1), (1, -1), (-1, 1), (-1, -1),
    (2, 1), (1, 2), (-1, 2), (-2, 1),
    (-2, -1), (-1, -2), (1, -2), (2, -1),
]
# max angular half-gap of the 16-neighbor stencil in the Euclidean chart
_STENCIL_HALF_GAP = 0.5 * math.radians(26.565051177077994)

_INIT_RADIUS_FACTOR = 3.0  # exact-initialization disk radius, in units of h


@dataclass
class DistanceField:
    manifold: GridManifold
    source: np.ndarray
    values: np.ndarray            # (nx, ny)
    eps_h: float
    backend: str
    boundary_affected: np.ndarray  # (nx, ny) bool
    rho: float = field(default=float("nan"))

    def __post_init__(self):
        self.source = np.asarray(self.source, dtype=float)

    # -- queries -----------------------------------------------------------

    def eval(self, p) -> float:
        grid = self.manifold.metric
        if not grid.contains(p):
            raise DomainError("evaluation point outside grid domain")
        return grid.interp(self.values, p)

    def eval_many(self, pts) -> np.ndarray:
        return np.array([self.eval(p) for p in np.asarray(pts, dtype=float)])

    def grad(self, p) -> TangentVector:
        """g-gradient tangent vector of the interpolated field at p."""
        grid = self.manifold.metric
        p = _pt(p)
        h = grid.h
        if np.linalg.norm(p - self.source) <= _INIT_RADIUS_FACTOR * h:
            raise DomainError("gradient unreliable within the source initialization disk")
        rel = (p - grid.origin) / h
        if (
            rel[0] < 1.0 or rel[0] > grid.nx - 2.0
            or rel[1] < 1.0 or rel[1] > grid.ny - 2.0
        ):
            raise DomainError("gradient unreliable next to the grid boundary")
        dx = (self.eval(p + [h, 0]) - self.eval(p - [h, 0])) / (2 * h)
        dy = (self.eval(p + [0, h]) - self.eval(p - [0, h])) / (2 * h)
        G = grid.tensor_at(p)
        grad_vec = np.linalg.solve(G, np.array([dx, dy]))
        return TangentVector(p, grad_vec)

    def residual_max(self) -> float:
        """Max over interior nodes away from the source of | |grad d|_g - 1 |."""
        grid = self.manifold.metric
        U = self.values
        h = grid.h
        dx = (U[2:, 1:-1] - U[:-2, 1:-1]) / (2 * h)
        dy = (U[1:-1, 2:] - U[1:-1, :-2]) / (2 * h)
        E = grid.E[1:-1, 1:-1]
        F = grid.F[1:-1, 1:-1]
        G = grid.G[1:-1, 1:-1]
        det = E * G - F * F
        # covector norm w.r.t. the inverse tensor
        norm2 = (G * dx * dx - 2 * F * dx * dy + E * dy * dy) / det
        res = np.abs(np.sqrt(np.maximum(norm2, 0.0)) - 1.0)
        pts = grid.node_points()[1:-1, 1:-1]
        far = np.linalg.norm(pts - self.source, axis=-1) > (_INIT_RADIUS_FACTOR + 1.0) * h
        if not far.any():
            return float("nan")
        return float(res[far].max())


def _conformal_speed_nodes(grid) -> np.ndarray:
    return np.sqrt(grid.E)


def _segment_metric_length(grid, a, b) -> float:
    d = b - a
    qa = float(d @ grid.tensor_at(a) @ d)
    qm = float(d @ grid.tensor_at(0.5 * (a + b)) @ d)
    qb = float(d @ grid.tensor_at(b) @ d)
    return (math.sqrt(max(qa, 0)) + 4 * math.sqrt(max(qm, 0)) + math.sqrt(max(qb, 0))) / 6.0


def _init_disk(grid, source):
    """Nodes within the exact-initialization disk and their straight g-lengths."""
    src = np.asarray(source, dtype=float)
    r = _INIT_RADIUS_FACTOR * grid.h
    pts = grid.node_points()
    dch = np.linalg.norm(pts - src, axis=-1)
    idx = np.argwhere(dch <= r)
    if len(idx) == 0:
        idx = np.array([grid.nearest_node(src)])
    vals = []
    for ix, iy in idx:
        node = grid.node_point(int(ix), int(iy))
        vals.append(_segment_metric_length(grid, src, node))
    return [(int(i), int(j)) for i, j in idx], vals


def _solve_fmm(grid, source):
    nx, ny = grid.nx, grid.ny
    c = _conformal_speed_nodes(grid)
    U = np.full((nx, ny), np.inf)
    state = np.zeros((nx, ny), dtype=np.int8)  # 0 far, 1 trial, 2 accepted
    flagged = np.zeros((nx, ny), dtype=bool)
    heap: list[tuple[float, int, int]] = []

    init_nodes, init_vals = _init_disk(grid, source)
    for (ix, iy), v in zip(init_nodes, init_vals):
        U[ix, iy] = v
        state[ix, iy] = 1
        heapq.heappush(heap, (v, ix, iy))

    h = grid.h
    Uv = U  # local aliases
    on_edge = lambda i, j: i == 0 or j == 0 or i == nx - 1 or j == ny - 1

    while heap:
        val, ix, iy = heapq.heappop(heap)
        if state[ix, iy] == 2:
            continue
        state[ix, iy] = 2
        if on_edge(ix, iy):
            flagged[ix, iy] = True
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jx, jy = ix + dx, iy + dy
            if jx < 0 or jy < 0 or jx >= nx or jy >= ny or state[jx, jy] == 2:
                continue
            a1 = Uv[jx - 1, jy] if jx > 0 else np.inf
            a2 = Uv[jx + 1, jy] if jx < nx - 1 else np.inf
            b1 = Uv[jx, jy - 1] if jy > 0 else np.inf
            b2 = Uv[jx, jy + 1] if jy < ny - 1 else np.inf
            a = a1 if a1 < a2 else a2
            b = b1 if b1 < b2 else b2
            f = c[jx, jy] * h
            if a > b:
                a, b = b, a
            if math.isinf(a):
                continue
            if b - a >= f:
                u = a + f
            else:
                u = 0.5 * (a + b + math.sqrt(2.0 * f * f - (b - a) * (b - a)))
            if u < Uv[jx, jy]:
                Uv[jx, jy] = u
                state[jx, jy] = 1
                # propagate the boundary flag from the upwind parents
                fl = False
                if not math.isinf(a):
                    if a == a1 and jx > 0:
                        fl = fl or flagged[jx - 1, jy]
                    if a == a2 and jx < nx - 1:
                        fl = fl or flagged[jx + 1, jy]
                if b - a < f and not math.isinf(b):
                    if b == b1 and jy > 0:
                        fl = fl or flagged[jx, jy - 1]
                    if b == b2 and jy < ny - 1:
                        fl = fl or flagged[jx, jy + 1]
                flagged[jx, jy] = fl
                heapq.heappush(heap, (u, jx, jy))
    return U, flagged


def _solve_dijkstra(grid, source):
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import dijkstra as cs_dijkstra

    nx, ny = grid.nx, grid.ny
    n = nx * ny
    h = grid.h
    E, F, G = grid.E, grid.F, grid.G

    rows, cols, data = [], [], []
    for dx, dy in _OFFSETS_16:
        sx = slice(max(0, -dx), nx - max(0, dx))
        sy = slice(max(0, -dy), ny - max(0, dy))
        tx = slice(max(0, dx), nx - max(0, -dx))
        ty = slice(max(0, dy), ny - max(0, -dy))
        d = np.array([dx * h, dy * h])
        qa = E[sx, sy] * d[0] ** 2 + 2 * F[sx, sy] * d[0] * d[1] + G[sx, sy] * d[1] ** 2
        qb = E[tx, ty] * d[0] ** 2 + 2 * F[tx, ty] * d[0] * d[1] + G[tx, ty] * d[1] ** 2
        Em = 0.5 * (E[sx, sy] + E[tx, ty])
        Fm = 0.5 * (F[sx, sy] + F[tx, ty])
        Gm = 0.5 * (G[sx, sy] + G[tx, ty])
        qm = Em * d[0] ** 2 + 2 * Fm * d[0] * d[1] + Gm * d[1] ** 2
        w = (np.sqrt(np.maximum(qa, 0)) + 4 * np.sqrt(np.maximum(qm, 0)) + np.sqrt(np.maximum(qb, 0))) / 6.0
        ii, jj = np.meshgrid(np.arange(nx)[sx], np.arange(ny)[sy], indexing="ij")
        src_idx = (ii * ny + jj).ravel()
        dst_idx = ((ii + dx) * ny + (jj + dy)).ravel()
        rows.append(src_idx)
        cols.append(dst_idx)
        data.append(w.ravel())

    init_nodes, init_vals = _init_disk(grid, source)
    virt = n
    rows.append(np.array([virt] * len(init_nodes)))
    cols.append(np.array([ix * ny + iy for ix, iy in init_nodes]))
    data.append(np.array(init_vals))

    mat = coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n + 1, n + 1),
    ).tocsr()
    dist, pred = cs_dijkstra(
        mat, directed=False, indices=virt, return_predecessors=True
    )
    U = dist[:n].reshape(nx, ny)

    # boundary flags along predecessor chains, in order of increasing distance
    on_edge = np.zeros(n + 1, dtype=bool)
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    edge = (ii == 0) | (jj == 0) | (ii == nx - 1) | (jj == ny - 1)
    on_edge[:n] = edge.ravel()
    order = np.argsort(dist)
    flagged = np.zeros(n + 1, dtype=bool)
    for k in order:
        p = pred[k]
        flagged[k] = on_edge[k] or (p >= 0 and flagged[p])
    return U, flagged[:n].reshape(nx, ny)


# -- calibration --------------------------------------------------------------

_calibration_memo: dict[tuple, float] = {}
_calibration_lock = threading.Lock()


def identity_calibration(nx: int, ny: int, h: float) -> float:
    """Max node error of the FMM on an identity-metric grid of this shape."""
    key = (nx, ny, round(h, 12))
    with _calibration_lock:
        if key in _calibration_memo:
            return _calibration_memo[key]
    from .gridmetric import GridMetric

    grid = GridMetric(np.zeros(2), h, nx, ny, np.ones((nx, ny)), np.zeros((nx, ny)), np.ones((nx, ny)))
    src = grid.node_point(nx // 2, ny // 2)
    U, _ = _solve_fmm(grid, src)
    exact = np.linalg.norm(grid.node_points() - src, axis=-1)
    err = float(np.abs(U - exact).max())
    with _calibration_lock:
        _calibration_memo[key] = err
    return err


def stencil_anisotropy_fraction(grid) -> float:
    """Relative overshoot bound of the 16-neighbor stencil under the metric."""
    kappa = math.sqrt(grid.lam_max / grid.lam_min)
    theta = min(math.atan(kappa * math.tan(_STENCIL_HALF_GAP)), 0.45 * math.pi)
    return 1.0 / math.cos(theta) - 1.0


def solve_distance_field(M: GridManifold, source, backend: str = "auto") -> DistanceField:
    """Solve the geodesic distance field from one source point."""
    grid = M.metric
    if not grid.contains(source):
        raise DomainError("source outside grid domain")
    if backend == "auto":
        backend = "fmm" if grid.conformal else "dijkstra"
    if backend == "fmm":
        if not grid.conformal:
            raise ValueError("fast marching backend requires a conformal metric")
        U, flags = _solve_fmm(grid, source)
        eps = identity_calibration(grid.nx, grid.ny, grid.h) * math.sqrt(grid.lam_max)
    elif backend == "dijkstra":
        U, flags = _solve_dijkstra(grid, source)
        eps = identity_calibration(grid.nx, grid.ny, grid.h) * math.sqrt(grid.lam_max)
        eps += stencil_anisotropy_fraction(grid) * float(np.nanmax(U[np.isfinite(U)]))
    else:
        raise ValueError(f"unknown backend: {backend!r}")
    fieldobj = DistanceField(M, _pt(source), U, float(eps), backend, flags)
    fieldobj.rho = fieldobj.residual_max()
    return fieldobj


# -- field cache ---------------------------------------------------------------

_MAGIC = b"DDRF1\n"


class FieldCache:
    """Keyed by (grid content hash, exact source point, backend).

    Disk persistence is optional; files are written atomically so concurrent
    insert/lookup from several processes is safe.
    """

    def __init__(self, root: str | os.PathLike | None = None):
        if root is None:
            root = os.environ.get("DDRLAB_CACHE") or None
        self.root = None if root is None else os.fspath(root)
        self._memory: dict[tuple, DistanceField] = {}
        self._lock = threading.Lock()

    def _key(self, M: GridManifold, source, backend: str):
        src = np.asarray(source, dtype=float)
        return (M.metric.content_hash(), src.tobytes(), backend)

    def _path(self, key) -> str:
        grid_hash, src_bytes, backend = key
        name = f"{grid_hash}_{src_bytes.hex()}_{backend}.ddrf"
        return os.path.join(self.root, name)

    def field(self, M: GridManifold, source, backend: str = "auto") -> DistanceField:
        if backend == "auto":
            backend = "fmm" if M.metric.conformal else "dijkstra"
        key = self._key(M, source, backend)
        with self._lock:
            if key in self._memory:
                return self._memory[key]
        if self.root is not None:
            f = self._load(M, key)
            if f is not None:
                with self._lock:
                    self._memory[key] = f
                return f
        f = solve_distance_field(M, source, backend=backend)
        with self._lock:
            self._memory[key] = f
        if self.root is not None:
            self._store(key, f)
        return f

    def _load(self, M: GridManifold, key) -> DistanceField | None:
        path = self._path(key)
        if not os.path.exists(path):
            return None
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                return None
            header = json.loads(fh.readline().decode("utf-8"))
            raw = fh.read()
        grid = M.metric
        if header["grid_hash"] != grid.content_hash():
            return None
        values = np.frombuffer(raw, dtype=np.float64).reshape(grid.nx, grid.ny).copy()
        flags = np.zeros((grid.nx, grid.ny), dtype=bool)
        fobj = DistanceField(
            M,
            np.array(header["source"], dtype=float),
            values,
            float(header["eps_h"]),
            header["backend"],
            flags,
            rho=float(header["rho"]),
        )
        return fobj

    def _store(self, key, f: DistanceField):
        os.makedirs(self.root, exist_ok=True)
        path = self._path(key)
        header = {
            "grid_hash": key[0],
            "source": [float(f.source[0]), float(f.source[1])],
            "h": f.manifold.metric.h,
            "eps_h": f.eps_h,
            "backend": f.backend,
            "rho": f.rho,
            "nx": f.manifold.metric.nx,
            "ny": f.manifold.metric.ny,
        }
        tmp = path + f".tmp{os.getpid()}"
        with open(tmp, "wb") as fh:
            fh.write(_MAGIC)
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
            fh.write(np.ascontiguousarray(f.values, dtype=np.float64).tobytes())
        os.replace(tmp, path)

    def entries(self) -> list[str]:
        if self.root is None or not os.path.isdir(self.root):
            return []
        return sorted(n for n in os.listdir(self.root) if n.endswith(".ddrf"))

    def clear(self) -> int:
        n = 0
        if self.root and os.path.isdir(self.root):
            for name in self.entries():
                os.remove(os.path.join(self.root, name))
                n += 1
        with self._lock:
            self._memory.clear()
        return n


# -- high-level distance -------------------------------------------------------


def distance(M: Manifold, x, y, cache: FieldCache | None = None) -> float:
    """Geodesic distance on any manifold kind (one cached solve per grid source)."""
    if M.is_analytic:
        return float(M.distance(x, y))
    cache = cache or FieldCache(root=None)
    return cache.field(M, x).eval(y)


def eval_distance(fieldobj: DistanceField, p) -> float:
    return fieldobj.eval(p)


def grad_distance(fieldobj: DistanceField, p) -> TangentVector:
    return fieldobj.grad(p)


def residual_check(fieldobj: DistanceField) -> float:
    return fieldobj.residual_max()
