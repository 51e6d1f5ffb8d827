"""Clustering in the 2D embedding: linkage, line detection, convex splitting."""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components as _graph_components
from scipy.sparse.linalg import eigsh
from scipy.spatial import ConvexHull, Delaunay, QhullError, cKDTree

from ..cloud import radius_components


def euclidean_cluster_2d(embedding, threshold=1.0):
    """Single-linkage cluster id per embedded point (gaps <= ``threshold``)."""
    return radius_components(np.asarray(embedding, dtype=np.float64), threshold)


def linearity(points):
    """``l1 / (l1 + l2)`` of the 2D covariance; 0 for coincident points."""
    points = np.asarray(points, dtype=np.float64)
    cov = np.cov(points.T, bias=True)
    evals = np.linalg.eigvalsh(cov)[::-1]
    total = evals.sum()
    if total <= 1e-300:
        return 0.0
    return float(evals[0] / total)


def local_linearity(points, n_neighbors=30):
    """Linearity of each point's k-nearest-neighbour patch."""
    points = np.asarray(points, dtype=np.float64)
    k = min(n_neighbors, len(points))
    _, idx = cKDTree(points).query(points, k=k)
    patches = points[idx.reshape(len(points), k)]
    centered = patches - patches.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals = np.linalg.eigvalsh(cov)
    total = evals.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 1e-300, evals[:, -1] / total, 0.0)
    return out


def detect_linear(points, threshold=0.95, n_neighbors=None, local_threshold=0.9,
                  local_fraction=0.8):
    """Whether a 2D cluster is line-like.

    The whole-cluster linearity must reach ``threshold``. With
    ``n_neighbors`` set, at least ``local_fraction`` of the points must also
    have a k-NN patch linearity of ``local_threshold`` or more, which rejects
    a line that runs into a blob.
    """
    if len(points) < 3:
        raise ValueError("line detection needs at least 3 points")
    if linearity(points) < threshold:
        return False
    if n_neighbors is None:
        return True
    return bool(np.mean(local_linearity(points, n_neighbors) >= local_threshold) >= local_fraction)


def median_nn_distance(points):
    if len(points) < 2:
        return 0.0
    d, _ = cKDTree(points).query(points, k=2)
    return float(np.median(d[:, 1]))


def _triangle_geometry(points, simplices):
    a, b, c = (points[simplices[:, i]] for i in range(3))
    ab = np.linalg.norm(b - a, axis=1)
    bc = np.linalg.norm(c - b, axis=1)
    ca = np.linalg.norm(a - c, axis=1)
    area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                        - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        circumradius = ab * bc * ca / (4.0 * area)
    return area, circumradius


def alpha_shape_area(points, alpha):
    """Area covered by Delaunay triangles whose circumradius is <= ``alpha``."""
    try:
        tri = Delaunay(points)
    except (QhullError, ValueError):
        return 0.0
    area, rad = _triangle_geometry(tri.points, tri.simplices)
    keep = np.isfinite(rad) & (rad <= alpha)
    return float(area[keep].sum())


def solidity(points, alpha=None, alpha_factor=4.0):
    """Alpha-shape area over convex-hull area.

    ``alpha`` defaults to ``alpha_factor`` times the median nearest-neighbour
    distance. Degenerate (zero-area hull) point sets count as solid.
    """
    points = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(points) < 3:
        return 1.0
    try:
        hull_area = ConvexHull(points).volume
    except (QhullError, ValueError):
        return 1.0
    if hull_area <= 0:
        return 1.0
    if alpha is None:
        alpha = alpha_factor * median_nn_distance(points)
    return min(alpha_shape_area(points, alpha) / hull_area, 1.0)


def spectral_bisect(points, n_neighbors=10):
    """Boolean side per point from the normalized-Laplacian Fiedler vector.

    The affinity graph is the symmetrised k-NN graph with Gaussian weights,
    bandwidth the median edge length. A disconnected graph splits off every
    component other than the one holding point 0. Point 0 is always on the
    ``False`` side.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if n < 2:
        return np.zeros(n, dtype=bool)
    k = min(n_neighbors, n - 1)
    dist, idx = cKDTree(points).query(points, k=k + 1)
    rows = np.repeat(np.arange(n), k)
    cols = idx[:, 1:].ravel()
    d = dist[:, 1:].ravel()
    sigma = np.median(d)
    if sigma <= 0:
        sigma = d.max() if d.max() > 0 else 1.0
    w = np.exp(-(d / sigma) ** 2 / 2.0)
    W = sparse.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    W = W.maximum(W.T)
    n_comp, comp = _graph_components(W, directed=False)
    if n_comp > 1:
        return comp != comp[0]
    deg = np.asarray(W.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    M = sparse.diags(inv_sqrt) @ W @ sparse.diags(inv_sqrt)
    # the Fiedler vector of I - M is the second-largest eigenvector of M
    if n <= 1500:
        vals, vecs = eigh(M.toarray(), subset_by_index=[n - 2, n - 1])
    else:
        vals, vecs = eigsh(M, k=2, which="LA", v0=np.sqrt(deg), tol=1e-8)
    fiedler = vecs[:, np.argsort(vals)[0]] * inv_sqrt
    side = fiedler > 0
    if side[0]:
        side = ~side
    return side


def convexify(points, solidity_threshold=0.8, max_depth=6, n_neighbors=10,
              alpha_factor=4.0, return_info=False):
    """Recursively bisect a 2D cluster until every part is solid enough.

    Returns a list of index arrays into ``points``. With ``return_info``, each
    entry is ``(indices, solidity, depth)`` instead.
    """
    points = np.asarray(points, dtype=np.float64)
    out = []

    def visit(idx, depth):
        if len(idx) < 4:
            out.append((idx, None, depth))
            return
        s = solidity(points[idx], alpha_factor=alpha_factor)
        if s >= solidity_threshold or depth >= max_depth:
            out.append((idx, s, depth))
            return
        side = spectral_bisect(points[idx], n_neighbors)
        if side.all() or not side.any():
            out.append((idx, s, depth))
            return
        visit(idx[~side], depth + 1)
        visit(idx[side], depth + 1)

    visit(np.arange(len(points)), 0)
    if return_info:
        return out
    return [idx for idx, _, _ in out]
