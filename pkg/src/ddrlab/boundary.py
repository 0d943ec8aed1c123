"""Collar extension of grid manifolds and boundary distance difference data.

A manifold-with-boundary (the core grid rectangle) embeds into a larger grid by
adding rows beyond every boundary edge.  Two extension rules are shipped: copy
the nearest boundary tensor outward, or blend it linearly to the identity over
the collar depth.  Distances restricted to the core come straight from the
core-grid solver; extended distances come from the collared grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ddr import DdrMatrix, ObservationSample, ddr_of_point, fit_bilip_lower
from .eikonal import FieldCache
from .gridmetric import GridMetric
from .manifold import DomainError, GridManifold

EXTENSION_RULES = ("constant-normal", "linear-blend-to-identity")


@dataclass
class CollaredManifold:
    core: GridManifold
    extended: GridManifold
    depth: float
    rule: str
    pad: int                      # collar width in grid rows
    seam_jump: float              # max tensor jump across the seam
    interior_jump: float          # max tensor jump inside the core

    def core_block(self, arr: np.ndarray) -> np.ndarray:
        p = self.pad
        return arr[p:-p, p:-p]


def _tensor_jump(E, F, G) -> float:
    jx = max(
        np.abs(np.diff(E, axis=0)).max(),
        np.abs(np.diff(F, axis=0)).max(),
        np.abs(np.diff(G, axis=0)).max(),
    )
    jy = max(
        np.abs(np.diff(E, axis=1)).max(),
        np.abs(np.diff(F, axis=1)).max(),
        np.abs(np.diff(G, axis=1)).max(),
    )
    return max(jx, jy)


def attach_collar(core: GridManifold, depth: float, rule: str = "constant-normal") -> CollaredManifold:
    """Extend the core grid by a collar of the given depth on every side."""
    if rule not in EXTENSION_RULES:
        raise ValueError(f"unknown extension rule: {rule!r}")
    grid = core.metric
    h = grid.h
    if depth < 4.0 * h:
        raise ValueError("collar depth must be at least 4 grid spacings")
    pad = int(math.ceil(depth / h))
    nx2, ny2 = grid.nx + 2 * pad, grid.ny + 2 * pad
    origin2 = grid.origin - pad * h

    def extend(arr, identity_value):
        out = np.pad(arr, pad, mode="edge")
        if rule == "linear-blend-to-identity":
            xs = np.arange(nx2) * h + origin2[0]
            ys = np.arange(ny2) * h + origin2[1]
            px = np.maximum.outer(
                np.maximum(grid.origin[0] - xs, xs - (grid.origin[0] + grid.width)), 0.0
            )
            py = np.maximum(grid.origin[1] - ys, ys - (grid.origin[1] + grid.height))
            py = np.maximum(py, 0.0)
            dist = np.hypot(px, py[None, :] * np.ones((nx2, 1)))
            w = np.clip(dist / depth, 0.0, 1.0)
            out = (1.0 - w) * out + w * identity_value
        return out

    E2 = extend(grid.E, 1.0)
    F2 = extend(grid.F, 0.0)
    G2 = extend(grid.G, 1.0)
    # core block is untouched by construction; keep it bitwise identical
    E2[pad:-pad, pad:-pad] = grid.E
    F2[pad:-pad, pad:-pad] = grid.F
    G2[pad:-pad, pad:-pad] = grid.G
    metric2 = GridMetric(origin2, h, nx2, ny2, E2, F2, G2)
    extended = GridManifold(metric2)

    interior = _tensor_jump(grid.E, grid.F, grid.G)
    # jump across the seam: compare boundary ring of the core with its collar neighbors
    p = pad
    seam = 0.0
    for arr2, arr in ((E2, grid.E), (F2, grid.F), (G2, grid.G)):
        seam = max(seam, np.abs(arr2[p - 1, p:-p] - arr[0, :]).max())
        seam = max(seam, np.abs(arr2[-p, p:-p] - arr[-1, :]).max())
        seam = max(seam, np.abs(arr2[p:-p, p - 1] - arr[:, 0]).max())
        seam = max(seam, np.abs(arr2[p:-p, -p] - arr[:, -1]).max())
    return CollaredManifold(core, extended, depth, rule, pad, seam, interior)


def sample_boundary(core: GridManifold, count: int, seed: int = 0) -> ObservationSample:
    """Quasi-uniform stations along the core rectangle's boundary."""
    grid = core.metric
    x0, y0 = grid.origin
    w, hgt = grid.width, grid.height
    per = 2.0 * (w + hgt)
    rng = np.random.default_rng(seed)
    offset = rng.uniform(0.0, per / count) if count > 0 else 0.0
    pts = []
    for k in range(count):
        s = (offset + per * k / count) % per
        if s < w:
            pts.append([x0 + s, y0])
        elif s < w + hgt:
            pts.append([x0 + w, y0 + (s - w)])
        elif s < 2 * w + hgt:
            pts.append([x0 + w - (s - w - hgt), y0 + hgt])
        else:
            pts.append([x0, y0 + hgt - (s - 2 * w - hgt)])
    pts = np.array(pts)
    fill = per / count
    return ObservationSample(pts, pts[0].copy(), 0.0, fill, seed=seed, on_boundary=True)


def boundary_ddr(
    core: GridManifold, stations: ObservationSample, x, cache: FieldCache | None = None
) -> DdrMatrix:
    """Difference matrix over boundary stations, distances confined to the core."""
    if not core.contains(x):
        raise DomainError("source outside the core grid")
    return ddr_of_point(core, stations, x, cache=cache)


@dataclass
class CollarComparisonRecord:
    core_norm: float
    extended_norm: float
    margin: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.margin >= -self.slack


def collar_monotonicity_check(
    collared: CollaredManifold,
    boundary_stations: ObservationSample,
    collar_stations: ObservationSample,
    x,
    y,
    cache: FieldCache | None = None,
) -> CollarComparisonRecord:
    """Extended-station differences never exceed the boundary-station differences.

    Both sup-norms compare the same pair of core points; the extended one uses
    distances in the collared manifold, the boundary one distances confined to
    the core.
    """
    cache = cache or FieldCache(root=None)
    core, ext = collared.core, collared.extended
    for p in collar_stations.points:
        if not ext.contains(p):
            raise DomainError("collar station outside the extended grid")
    fx_core = cache.field(core, x)
    fy_core = cache.field(core, y)
    fx_ext = cache.field(ext, x)
    fy_ext = cache.field(ext, y)
    e_core = fx_core.eval_many(boundary_stations.points) - fy_core.eval_many(
        boundary_stations.points
    )
    e_ext = fx_ext.eval_many(collar_stations.points) - fy_ext.eval_many(collar_stations.points)
    core_norm = float(e_core.max() - e_core.min())
    ext_norm = float(e_ext.max() - e_ext.min())
    eps = max(fx_core.eps_h, fy_core.eps_h, fx_ext.eps_h, fy_ext.eps_h)
    return CollarComparisonRecord(core_norm, ext_norm, core_norm - ext_norm, 5.0 * eps)


@dataclass
class BoundaryInvertibilityReport:
    n_sources: int
    min_sup: float
    duplicates: list
    lower_fit: object | None

    @property
    def ok(self) -> bool:
        return self.min_sup > 0.0 or bool(self.duplicates)


def boundary_invertibility_check(core_ds) -> BoundaryInvertibilityReport:
    """All distinct interior sources stay separated in boundary difference data."""
    if len(core_ds) < 2:
        raise ValueError("need at least two sources")
    S = core_ds.sup_matrix()
    iu = np.triu_indices(len(core_ds), k=1)
    sups = S[iu]
    src = core_ds.sources
    dup = [
        (int(i), int(j))
        for i, j in zip(*iu)
        if S[i, j] == 0.0 and np.allclose(src[i], src[j])
    ]
    nondup = sups[sups > 0.0] if dup else sups
    min_sup = float(nondup.min()) if len(nondup) else 0.0
    try:
        fit = fit_bilip_lower(core_ds)
    except ValueError:
        fit = None
    return BoundaryInvertibilityReport(len(core_ds), min_sup, dup, fit)
