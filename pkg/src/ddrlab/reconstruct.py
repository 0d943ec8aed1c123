"""Metric determination experiments driven by distance difference data.

Implements tensor recovery on the observation sample from blinded matrices
(unit-covector constraints), angle recovery through the (1 - cos) difference
quotient, the data-to-data correspondence test with distance distortion as the
Gromov-Hausdorff proxy, and the noise stability sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ddr import DdrDataset, ObservationSample, ddr_dataset, quantize
from .eikonal import FieldCache
from .manifold import Manifold, _pt


class UnderdeterminedError(ValueError):
    """Too few well-spread covector directions to pin the tensor."""


class InconsistentDataError(ValueError):
    """Data violates the structure expected of distance columns."""


# -- metric recovery on the observation sample ----------------------------------


@dataclass
class MetricEstimate:
    point: np.ndarray
    tensor: np.ndarray
    n_covectors: int
    residual: float
    direction_spread: float
    floored: bool = False


def _local_gradient(points, values, y_index, k, bandwidth, order=3):
    """Weighted least-squares polynomial fit around one sample point; returns the gradient."""
    y = points[y_index]
    d = np.linalg.norm(points - y, axis=1)
    k = min(k, len(points) - 1)
    idx = np.argsort(d)[: k + 1]
    rel = points[idx] - y
    w = np.exp(-((d[idx] / bandwidth) ** 2))
    cols = [np.ones(len(idx)), rel[:, 0], rel[:, 1],
            rel[:, 0] ** 2, rel[:, 0] * rel[:, 1], rel[:, 1] ** 2]
    if order >= 3 and len(idx) >= 12:
        cols += [rel[:, 0] ** 3, rel[:, 0] ** 2 * rel[:, 1],
                 rel[:, 0] * rel[:, 1] ** 2, rel[:, 1] ** 3]
    A = np.stack(cols, axis=1)
    Aw = A * w[:, None]
    bw_v = values[idx] * w
    coef, *_ = np.linalg.lstsq(Aw, bw_v, rcond=None)
    return np.array([coef[1], coef[2]])


def reconstruct_metric(
    ds: DdrDataset,
    y_index: int,
    q0_index: int = 0,
    k_neighbors: int = 16,
    bandwidth: float | None = None,
    eig_floor: float | None = None,
    min_spread: float = 0.05,
) -> MetricEstimate:
    """Recover the metric tensor at one interior sample point from blinded data.

    Each source contributes the derivative of its difference function, a
    covector of unit dual norm; the inverse tensor is the least-squares
    solution of those quadratic constraints, then inverted and floored to SPD.
    """
    pts = ds.sample.points
    if len(ds) < 3:
        raise UnderdeterminedError("need at least 3 sources for 3 tensor unknowns")
    bandwidth = bandwidth if bandwidth is not None else 2.0 * ds.sample.fill
    covs = []
    for i in range(len(ds)):
        vals = ds.columns[i] - ds.columns[i][q0_index]
        covs.append(_local_gradient(pts, vals, y_index, k_neighbors, bandwidth))
    W = np.array(covs)
    A = np.stack([W[:, 0] ** 2, 2.0 * W[:, 0] * W[:, 1], W[:, 1] ** 2], axis=1)
    norms = np.linalg.norm(A, axis=1)
    ok = norms > 0
    An = A[ok] / norms[ok, None]
    sv = np.linalg.svd(An, compute_uv=False)
    spread = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
    if ok.sum() < 3 or spread < min_spread:
        raise UnderdeterminedError(
            f"covector directions too degenerate (spread statistic {spread:.3g})"
        )
    hvec, *_ = np.linalg.lstsq(A[ok], np.ones(int(ok.sum())), rcond=None)
    H = np.array([[hvec[0], hvec[1]], [hvec[1], hvec[2]]])
    evals, evecs = np.linalg.eigh(H)
    floored = False
    floor = 1e-9 if eig_floor is None else 1.0 / (2.0 * eig_floor)
    # floor on H's eigenvalues corresponds to a cap/floor on the tensor's
    if np.any(evals <= floor):
        evals = np.maximum(evals, max(floor, 1e-12))
        floored = True
    Hp = evecs @ np.diag(evals) @ evecs.T
    tensor = np.linalg.inv(Hp)
    quad = np.einsum("ni,ij,nj->n", W[ok], Hp, W[ok])
    residual = float(np.abs(quad - 1.0).max())
    return MetricEstimate(pts[y_index].copy(), tensor, int(ok.sum()), residual, spread, floored)


# -- angle recovery ---------------------------------------------------------------


def recover_angle(
    M: Manifold,
    x,
    p1,
    p2,
    direction,
    t0: float = 0.08,
    cache: FieldCache | None = None,
    slack: float = 0.05,
) -> float:
    """Angle at x between [x p1] and the geodesic shot along ``direction``.

    Uses the difference-quotient limit of the difference data along the shot
    geodesic with two-level Richardson extrapolation.
    """
    x = _pt(x)
    u = M.unit(x, direction)

    def col2(p):
        from .eikonal import distance

        return distance(M, p, p1, cache) - distance(M, p, p2, cache)

    base = col2(x)
    qs = []
    for t in (t0, t0 / 2.0, t0 / 4.0):
        if M.is_analytic:
            y = M.exp(x, t * u)
        else:
            y = M.geodesic(x, u, t, min(t / 8.0, M.metric.h / 2.0)).end
        qs.append((col2(y) - base) / t)
    r1 = 2.0 * qs[1] - qs[0]
    r2 = 2.0 * qs[2] - qs[1]
    limit = (4.0 * r2 - r1) / 3.0
    if not (-slack <= limit <= 2.0 + slack):
        raise InconsistentDataError(
            f"difference quotient {limit:.4g} outside [0, 2]: not minimizing-geodesic data"
        )
    return math.acos(max(-1.0, min(1.0, 1.0 - limit)))


def estimate_angle_scale(one_minus_cos_1, one_minus_cos_2) -> tuple[float, float]:
    """Least-squares factor lam with (1-cos angle_2) = lam * (1-cos angle_1)."""
    a = np.asarray(one_minus_cos_1, dtype=float)
    b = np.asarray(one_minus_cos_2, dtype=float)
    if a.size == 0 or float(a @ a) == 0.0:
        raise UnderdeterminedError("no usable direction pairs for the scale fit")
    lam = float(a @ b) / float(a @ a)
    resid = float(np.abs(b - lam * a).max())
    return lam, resid


# -- correspondence (gauge isometry) test ------------------------------------------


@dataclass
class CorrespondenceReport:
    matches: np.ndarray
    injective: bool
    hausdorff_12: float
    hausdorff_21: float
    distortion: float
    sup_gaps: np.ndarray
    f_fix_defect: float | None = None
    chain_defect: float | None = None
    chain_count: int = 0
    lambda_est: float | None = None
    extra: dict = field(default_factory=dict)


def _f_gate(ds1: DdrDataset, ds2: DdrDataset, cache, tol):
    """Check the shared observation sample induces the same distances both sides."""
    s1, s2 = ds1.sample, ds2.sample
    if len(s1) != len(s2):
        raise InconsistentDataError("observation samples have different sizes")
    m = len(s1)
    probe_n = m if (ds1.manifold.is_analytic and ds2.manifold.is_analytic) else min(m, 6)
    idx = np.linspace(0, m - 1, probe_n).astype(int)
    from .eikonal import distance

    worst = 0.0
    for a_i in range(len(idx)):
        for b_i in range(a_i + 1, len(idx)):
            i, j = int(idx[a_i]), int(idx[b_i])
            d1 = distance(ds1.manifold, s1.points[i], s1.points[j], cache)
            d2 = distance(ds2.manifold, s2.points[i], s2.points[j], cache)
            worst = max(worst, abs(d1 - d2))
    if worst > tol:
        raise InconsistentDataError(
            f"observation-domain distances disagree by {worst:.4g} (> {tol:.4g}):"
            " datasets do not share an isometric observation domain"
        )
    return worst


def gauge_isometry_test(
    ds1: DdrDataset,
    ds2: DdrDataset,
    cache: FieldCache | None = None,
    expected_map=None,
    f_ball_only: bool = True,
    chain_samples: int = 200,
    seed: int = 0,
) -> CorrespondenceReport:
    """Match every ds1 matrix to its sup-nearest ds2 matrix and measure distortion.

    The distortion over matched source pairs is the working proxy for the
    Gromov-Hausdorff distance between the two manifolds.
    """
    cache = cache or FieldCache(root=None)
    eps = ds1.eps_h + ds2.eps_h
    gate_tol = 6.0 * eps + 1e-6
    gate_worst = _f_gate(ds1, ds2, cache, gate_tol)

    e = ds1.columns[:, None, :] - ds2.columns[None, :, :]
    S = e.max(axis=2) - e.min(axis=2)
    matches = np.argmin(S, axis=1)
    sup_gaps = S[np.arange(len(ds1)), matches]
    injective = len(np.unique(matches)) == len(matches)
    hausdorff_12 = float(S.min(axis=1).max())
    hausdorff_21 = float(S.min(axis=0).max())

    D1 = ds1.true_pairwise(cache)
    D2 = ds2.true_pairwise(cache)
    D2m = D2[np.ix_(matches, matches)]
    distortion = float(np.abs(D1 - D2m).max()) if len(ds1) > 1 else 0.0

    # sources inside the observation ball should be fixed by the correspondence
    f_fix = None
    target = None
    if expected_map is not None:
        target = np.array([expected_map(x) for x in ds1.sources])
    elif np.allclose(ds1.sample.points, ds2.sample.points):
        target = ds1.sources
    if target is not None:
        s = ds1.sample
        din = np.asarray(
            [float(_dist_any(ds1.manifold, x, s.center, cache)) for x in ds1.sources]
        )
        mask = din <= s.radius if f_ball_only else np.ones(len(ds1), dtype=bool)
        if mask.any():
            disp = np.linalg.norm(ds2.sources[matches[mask]] - target[mask], axis=1)
            f_fix = float(disp.max())

    # geodesic chains: distance-additive triples must stay additive after matching
    rng = np.random.default_rng(seed)
    n = len(ds1)
    chain_defect = None
    chain_count = 0
    if n >= 3:
        defects = []
        tol_chain = 6.0 * eps + 1e-6
        for _ in range(chain_samples):
            i, j, k = rng.choice(n, size=3, replace=False)
            if abs(D1[i, k] - D1[i, j] - D1[j, k]) <= tol_chain:
                mi, mj, mk = matches[i], matches[j], matches[k]
                defects.append(abs(D2[mi, mk] - D2[mi, mj] - D2[mj, mk]))
        chain_count = len(defects)
        if defects:
            chain_defect = float(max(defects))

    return CorrespondenceReport(
        matches,
        injective,
        hausdorff_12,
        hausdorff_21,
        distortion,
        sup_gaps,
        f_fix_defect=f_fix,
        chain_defect=chain_defect,
        chain_count=chain_count,
        extra={"f_gate_worst": gate_worst},
    )


def _dist_any(M, x, y, cache):
    from .eikonal import distance

    return distance(M, x, y, cache)


# -- stability sweep ------------------------------------------------------------------


@dataclass
class StabilityCurve:
    levels: np.ndarray
    distortions: np.ndarray
    floor: float
    slope: float

    def as_rows(self):
        return list(zip(self.levels.tolist(), self.distortions.tolist()))


def perturb_dataset(ds: DdrDataset, delta: float, seed: int) -> DdrDataset:
    """Independent uniform noise on the distance columns (structure preserved)."""
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-delta / 2.0, delta / 2.0, size=ds.columns.shape)
    noisy = quantize(ds.columns + noise)
    return DdrDataset(
        ds.manifold,
        ds.sample,
        ds.sources.copy(),
        noisy,
        eps_h=ds.eps_h,
        provenance=dict(ds.provenance, noise=delta, noise_seed=seed),
    )


def stability_sweep(
    M: Manifold,
    sample: ObservationSample,
    sources,
    levels,
    seed: int,
    cache: FieldCache | None = None,
) -> StabilityCurve:
    """Distortion of noisy-vs-clean matching as a function of the noise level."""
    levels = np.asarray(sorted(levels), dtype=float)
    if np.any(levels <= 0) or np.any(np.diff(levels) <= 0):
        raise ValueError("noise levels must be positive and strictly increasing")
    cache = cache or FieldCache(root=None)
    clean = ddr_dataset(M, sample, sources, cache)
    D = clean.true_pairwise(cache)

    def match_distortion(noisy):
        e = noisy.columns[:, None, :] - clean.columns[None, :, :]
        S = e.max(axis=2) - e.min(axis=2)
        matches = np.argmin(S, axis=1)
        Dm = D[np.ix_(matches, matches)]
        return float(np.abs(D - Dm).max())

    floor = match_distortion(clean)
    dist = []
    for k, delta in enumerate(levels):
        noisy = perturb_dataset(clean, float(delta), seed + 1000 * k)
        dist.append(match_distortion(noisy))
    dist = np.array(dist)
    pos = dist > max(floor, 0.0) + 1e-15
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(levels[pos]), np.log(dist[pos]), 1)[0])
    else:
        slope = float("nan")
    return StabilityCurve(levels, dist, floor, slope)
