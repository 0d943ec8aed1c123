"""Small 2x2 metric-tensor algebra shared by every geometry module.

A metric tensor is an SPD 2x2 ``numpy`` array ``G``; tangent components are
length-2 arrays measured against ``G`` at their base point.
"""
from __future__ import annotations

import math

import numpy as np

INF = math.inf


def g_dot(G: np.ndarray, u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(u @ G @ v)


def g_norm(G: np.ndarray, v) -> float:
    return math.sqrt(max(g_dot(G, v, v), 0.0))


def g_unit(G: np.ndarray, v) -> np.ndarray:
    n = g_norm(G, v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero tangent vector")
    return np.asarray(v, dtype=float) / n


def g_angle(G: np.ndarray, u, v) -> float:
    """Unsigned angle in [0, pi] between tangent components u, v at one point."""
    nu, nv = g_norm(G, u), g_norm(G, v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("angle undefined for zero vectors")
    c = g_dot(G, u, v) / (nu * nv)
    s = abs(_cross(u, v)) * math.sqrt(max(float(np.linalg.det(G)), 0.0)) / (nu * nv)
    return math.atan2(s, c)


def g_signed_angle(G: np.ndarray, u, v) -> float:
    """Signed angle from u to v, positive counterclockwise in chart orientation."""
    s = _cross(u, v) * math.sqrt(max(float(np.linalg.det(G)), 0.0))
    return math.atan2(s, g_dot(G, u, v))


def g_rotate(G: np.ndarray, v, theta: float) -> np.ndarray:
    """Rotate tangent components v by theta in the g-sense (norm preserving)."""
    return math.cos(theta) * np.asarray(v, dtype=float) + math.sin(theta) * g_perp(G, v)


def g_perp(G: np.ndarray, v) -> np.ndarray:
    """g-rotation of v by +90 degrees: the 2D almost-complex structure J."""
    det = float(np.linalg.det(G))
    if det <= 0.0:
        raise ValueError("metric tensor is not positive definite")
    r = 1.0 / math.sqrt(det)
    v = np.asarray(v, dtype=float)
    return np.array(
        [
            r * (-G[0, 1] * v[0] - G[1, 1] * v[1]),
            r * (G[0, 0] * v[0] + G[0, 1] * v[1]),
        ]
    )


def _cross(u, v) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def eig_range(G: np.ndarray) -> tuple[float, float]:
    w = np.linalg.eigvalsh(np.asarray(G, dtype=float))
    return float(w[0]), float(w[-1])


def is_spd(G: np.ndarray, tol: float = 0.0) -> bool:
    G = np.asarray(G, dtype=float)
    if G.shape != (2, 2) or abs(G[0, 1] - G[1, 0]) > 1e-12 * (1.0 + abs(G[0, 1])):
        return False
    lo, _ = eig_range(0.5 * (G + G.T))
    return lo > tol


def orthonormal_frame(G: np.ndarray) -> np.ndarray:
    """Columns e1, e2 with e_i^T G e_j = delta_ij (g-orthonormal chart frame)."""
    L = np.linalg.cholesky(np.asarray(G, dtype=float))
    return np.linalg.inv(L).T
