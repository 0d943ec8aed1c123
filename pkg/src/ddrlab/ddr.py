"""Distance difference matrices over a finite observation sample.

A source point x is represented by the matrix ``D[i][j] = d(x, y_i) - d(x, y_j)``
over a fixed sample ``{y_i}`` of the observation domain.  Matrices are stored
as their distance column only; entries are derived, so antisymmetry and the
cocycle identity hold exactly.  Columns are quantized to ``QUANTUM`` so those
identities are exact even bitwise (the quantization error of ~2.3e-10 is far
below every tolerance used by the checks).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .eikonal import FieldCache
from .manifold import DomainError, Manifold, _pt
from .linalg import orthonormal_frame

QUANTUM = 2.0**-32
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class SampleMismatchError(ValueError):
    """Two matrices built over incompatible observation samples."""


def quantize(values) -> np.ndarray:
    return np.round(np.asarray(values, dtype=float) / QUANTUM) * QUANTUM


# -- observation samples -------------------------------------------------------


@dataclass
class ObservationSample:
    points: np.ndarray           # (m, 2); points[0] is the ball center q0
    center: np.ndarray
    radius: float
    fill: float                  # estimated fill distance of the sample in its ball
    seed: int | None = None
    on_boundary: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.center = np.asarray(self.center, dtype=float)

    def __len__(self) -> int:
        return len(self.points)

    def compatible_with(self, other: "ObservationSample", tol: float = 1e-12) -> bool:
        if self is other:
            return True
        return len(self) == len(other) and bool(
            np.allclose(self.points, other.points, atol=tol)
        )


def _exp_any(M: Manifold, x, comps):
    if M.is_analytic:
        return M.exp(x, comps)
    from .linalg import g_norm

    length = g_norm(M.metric_at(x), comps)
    g = M.geodesic(x, comps, length or 1e-12, M.metric.h / 2)
    return g.end


def _disk_points(count: int, rot: float) -> np.ndarray:
    """Golden-spiral low-discrepancy points in the unit disk (first is the center)."""
    pts = [np.zeros(2)]
    for k in range(1, count):
        r = math.sqrt((k - 0.5) / max(count - 1, 1))
        a = _GOLDEN_ANGLE * k + rot
        pts.append(np.array([r * math.cos(a), r * math.sin(a)]))
    return np.array(pts)


def sample_observation_domain(M: Manifold, center, radius: float, count: int, seed: int) -> ObservationSample:
    """Quasi-uniform sample of the metric ball B(center, radius), including the center."""
    center = _pt(center)
    if count < 1:
        raise ValueError("sample needs at least one point")
    rng = np.random.default_rng(seed)
    rot = float(rng.uniform(0.0, 2.0 * math.pi))
    frame = orthonormal_frame(M.metric_at(center))
    disk = _disk_points(count, rot) * radius
    tangent = disk @ frame.T
    pts = [center.copy()]
    for v in tangent[1:]:
        p = _exp_any(M, center, v)
        if not M.contains(p):
            raise DomainError("observation ball exits the manifold domain")
        pts.append(np.asarray(p, dtype=float))
    pts = np.array(pts)
    fill = _fill_distance(disk, radius, count)
    return ObservationSample(pts, center, float(radius), fill, seed=seed)


def _fill_distance(disk_pts: np.ndarray, radius: float, count: int) -> float:
    """Fill distance of the tangent-disk sample, by dense deterministic probing."""
    from scipy.spatial import cKDTree

    probes = _disk_points(max(2048, 8 * count), 0.37) * radius
    ring = np.array(
        [
            [radius * math.cos(t), radius * math.sin(t)]
            for t in np.linspace(0, 2 * math.pi, 256, endpoint=False)
        ]
    )
    tree = cKDTree(disk_pts)
    d, _ = tree.query(np.vstack([probes, ring]))
    return float(d.max())


# -- matrices -------------------------------------------------------------------


@dataclass
class DdrMatrix:
    sample: ObservationSample
    column: np.ndarray               # quantized d(x, y_i)
    source: np.ndarray | None = None  # withheld in blinded mode
    eps_h: float = 0.0

    def __post_init__(self):
        self.column = np.asarray(self.column, dtype=float)
        if self.source is not None:
            self.source = np.asarray(self.source, dtype=float)

    @property
    def m(self) -> int:
        return len(self.column)

    def entry(self, i: int, j: int) -> float:
        return float(self.column[i] - self.column[j])

    def matrix(self) -> np.ndarray:
        return self.column[:, None] - self.column[None, :]

    def blinded(self) -> "DdrMatrix":
        return replace(self, source=None)


def ddr_of_point(M: Manifold, sample: ObservationSample, x, cache: FieldCache | None = None) -> DdrMatrix:
    """Distance difference matrix of x over the sample (one solve per grid source)."""
    x = _pt(x)
    if not M.contains(x):
        raise DomainError("source point outside the manifold domain")
    if M.is_analytic:
        col = M.distance(x, sample.points)
        eps = 0.0
    else:
        cache = cache or FieldCache(root=None)
        f = cache.field(M, x)
        col = f.eval_many(sample.points)
        eps = f.eps_h
    return DdrMatrix(sample, quantize(col), source=x, eps_h=eps)


def sup_distance(A: DdrMatrix, B) -> float:
    """Sup over sample pairs of |A[i][j] - B[i][j]|; B may be a raw matrix."""
    if isinstance(B, DdrMatrix):
        if not A.sample.compatible_with(B.sample):
            raise SampleMismatchError("matrices built over different observation samples")
        e = A.column - B.column
        return float(e.max() - e.min())
    B = np.asarray(B, dtype=float)
    if B.shape != (A.m, A.m):
        raise SampleMismatchError("target matrix shape does not match the sample")
    return float(np.abs(A.matrix() - B).max())


# -- datasets -------------------------------------------------------------------


@dataclass
class DdrDataset:
    manifold: Manifold
    sample: ObservationSample
    sources: np.ndarray            # (n, 2)
    columns: np.ndarray            # (n, m) quantized
    eps_h: float = 0.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sources = np.asarray(self.sources, dtype=float)
        self.columns = np.asarray(self.columns, dtype=float)

    def __len__(self) -> int:
        return len(self.sources)

    def matrix(self, i: int, blinded: bool = False) -> DdrMatrix:
        src = None if blinded else self.sources[i]
        return DdrMatrix(self.sample, self.columns[i], source=src, eps_h=self.eps_h)

    def matrices(self, blinded: bool = False) -> list[DdrMatrix]:
        return [self.matrix(i, blinded=blinded) for i in range(len(self))]

    def sup_matrix(self) -> np.ndarray:
        """Pairwise sup-norm distances between all dataset matrices."""
        diffs = self.columns[:, None, :] - self.columns[None, :, :]
        return diffs.max(axis=2) - diffs.min(axis=2)

    def sup_to(self, target: DdrMatrix) -> np.ndarray:
        if not self.sample.compatible_with(target.sample):
            raise SampleMismatchError("target built over a different observation sample")
        e = self.columns - target.column[None, :]
        return e.max(axis=1) - e.min(axis=1)

    def true_pairwise(self, cache: FieldCache | None = None) -> np.ndarray:
        """Oracle pairwise source distances (simulation setting)."""
        X = self.sources
        if self.manifold.is_analytic:
            return np.asarray(self.manifold.distance(X[:, None, :], X[None, :, :]))
        cache = cache or FieldCache(root=None)
        n = len(X)
        D = np.zeros((n, n))
        for i in range(n):
            f = cache.field(self.manifold, X[i])
            D[i] = f.eval_many(X)
        return 0.5 * (D + D.T)


def ddr_dataset(
    M: Manifold,
    sample: ObservationSample,
    sources,
    cache: FieldCache | None = None,
    jobs: int | None = None,
) -> DdrDataset:
    sources = np.asarray(sources, dtype=float)
    if len(sources) == 0:
        raise ValueError("source list must be nonempty")
    if M.is_analytic:
        cols = quantize(M.distance(sources[:, None, :], sample.points[None, :, :]))
        eps = 0.0
    else:
        cache = cache or FieldCache(root=None)
        if jobs and jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as ex:
                fields = list(ex.map(lambda x: cache.field(M, x), sources))
        else:
            fields = [cache.field(M, x) for x in sources]
        cols = quantize([f.eval_many(sample.points) for f in fields])
        eps = max(f.eps_h for f in fields)
    prov = {"manifold": M.kind, "eps_h": eps, "m": len(sample), "n": len(sources)}
    return DdrDataset(M, sample, sources, cols, eps_h=eps, provenance=prov)


# -- inversion and constant fits --------------------------------------------------


@dataclass
class InversionResult:
    point: np.ndarray
    gap: float
    index: int


def invert(ds: DdrDataset, target: DdrMatrix) -> InversionResult:
    """Nearest-matrix inversion; ties break to the lowest source index."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    sups = ds.sup_to(target)
    i = int(np.argmin(sups))
    return InversionResult(ds.sources[i].copy(), float(sups[i]), i)


@dataclass
class ConstantFit:
    name: str
    value: float
    cutoff: float
    witness: dict
    n_pairs: int
    fill: float
    extra: dict = field(default_factory=dict)


def fit_holder_constant(ds: DdrDataset, true_dist: np.ndarray | None = None) -> ConstantFit:
    """Estimate C0 with |xy| <= C0 * sup_distance^(1/2) over close pairs.

    The cutoff delta0 is the 25th percentile of observed sup-distances; the
    denominator carries an eps floor of 4*eps_h to keep solver noise from
    blowing up the ratio.
    """
    if len(ds) < 2:
        raise ValueError("need at least two sources to fit constants")
    S = ds.sup_matrix()
    D = ds.true_pairwise() if true_dist is None else np.asarray(true_dist)
    iu = np.triu_indices(len(ds), k=1)
    s, d = S[iu], D[iu]
    delta0 = float(np.percentile(s, 25.0))
    eps_floor = max(4.0 * ds.eps_h, QUANTUM)
    mask = s < delta0
    if not mask.any():
        mask = s <= s.min()
    ratios = d[mask] / np.sqrt(s[mask] + eps_floor)
    k = int(np.argmax(ratios))
    ii, jj = iu[0][mask][k], iu[1][mask][k]
    return ConstantFit(
        "C0",
        float(ratios[k]),
        delta0,
        {"i": int(ii), "j": int(jj), "distance": float(D[ii, jj]), "sup": float(S[ii, jj])},
        int(mask.sum()),
        ds.sample.fill,
        extra={"eps_floor": eps_floor},
    )


def fit_bilip_lower(ds: DdrDataset, true_dist: np.ndarray | None = None) -> ConstantFit:
    """Estimate c0 with sup_distance >= c0 * |xy| over pairs closer than r0."""
    if len(ds) < 2:
        raise ValueError("need at least two sources to fit constants")
    S = ds.sup_matrix()
    D = ds.true_pairwise() if true_dist is None else np.asarray(true_dist)
    iu = np.triu_indices(len(ds), k=1)
    s, d = S[iu], D[iu]
    r0 = 0.10 * float(d.max())
    mask = (d > 0) & (d < r0)
    if not mask.any():
        raise ValueError(f"no source pair closer than r0 = {r0:.3g}")
    ratios = s[mask] / d[mask]
    k = int(np.argmin(ratios))
    ii, jj = iu[0][mask][k], iu[1][mask][k]
    return ConstantFit(
        "c0",
        float(ratios[k]),
        r0,
        {"i": int(ii), "j": int(jj), "distance": float(D[ii, jj]), "sup": float(S[ii, jj])},
        int(mask.sum()),
        ds.sample.fill,
    )
