"""Metric scale from landmarks, robust ground plane, pose normalization, plant isolation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .cloud import PointCloud, connected_components
from .validation import check_points, check_positive

_ORTHO_TOL = 1e-9


class DegenerateInputError(ValueError):
    """Input has no well-defined plane (too few or collinear points)."""


@dataclass(frozen=True)
class LandmarkSet:
    """Hand-picked points in cloud coordinates and measured distances between some pairs.

    ``pairs`` holds ``(r, s, distance_cm)`` tuples indexing into ``points``.
    ``base`` is the plant base point in the same (unscaled) coordinates.
    """

    points: np.ndarray
    pairs: tuple
    base: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(pts) < 2:
            raise ValueError("need at least two landmark points")
        pairs = tuple((int(r), int(s), float(d)) for r, s, d in self.pairs)
        for r, s, d in pairs:
            if r == s:
                raise ValueError(f"pair ({r}, {s}) joins a landmark to itself")
            if not (0 <= r < len(pts) and 0 <= s < len(pts)):
                raise ValueError(f"pair ({r}, {s}) indexes past {len(pts)} landmarks")
            if not d > 0:
                raise ValueError(f"pair ({r}, {s}) has non-positive distance {d}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "pairs", pairs)
        if self.base is not None:
            object.__setattr__(self, "base", np.asarray(self.base, dtype=np.float64).reshape(3))


def parse_landmarks(text) -> LandmarkSet:
    """Parse ``base x y z`` / ``lm x y z`` / ``pair r s d`` lines; ``#`` starts a comment."""
    base, points, pairs = None, [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *vals = line.split()
        try:
            if tag == "base" and len(vals) == 3:
                if base is not None:
                    raise ValueError("duplicate base line")
                base = [float(v) for v in vals]
            elif tag == "lm" and len(vals) == 3:
                points.append([float(v) for v in vals])
            elif tag == "pair" and len(vals) == 3:
                pairs.append((int(vals[0]), int(vals[1]), float(vals[2])))
            else:
                raise ValueError(f"unrecognized line {raw.strip()!r}")
        except ValueError as exc:
            raise ValueError(f"landmark file line {lineno}: {exc}") from None
    if not pairs:
        raise ValueError("landmark file lists no pairs")
    return LandmarkSet(np.array(points).reshape(-1, 3), pairs, base)


def load_landmarks(path) -> LandmarkSet:
    with open(path) as fh:
        return parse_landmarks(fh.read())


def format_landmarks(landmarks: LandmarkSet) -> str:
    lines = []
    if landmarks.base is not None:
        lines.append("base " + " ".join(repr(float(v)) for v in landmarks.base))
    lines += ["lm " + " ".join(repr(float(v)) for v in p) for p in landmarks.points]
    lines += [f"pair {r} {s} {d!r}" for r, s, d in landmarks.pairs]
    return "\n".join(lines) + "\n"


# -- scale ----------------------------------------------------------------------

def scale_factor(landmarks: LandmarkSet) -> float:
    """Mean true pair distance over mean reconstructed pair distance (same pairs)."""
    if not landmarks.pairs:
        raise ValueError("no landmark pairs")
    r, s, d = (np.array(c) for c in zip(*landmarks.pairs))
    recon = np.linalg.norm(landmarks.points[r.astype(int)] - landmarks.points[s.astype(int)], axis=1)
    if (recon <= 0).any():
        raise ValueError("coincident landmark pair")
    return float(d.mean() / recon.mean())


def apply_scale(cloud: PointCloud, s) -> PointCloud:
    check_positive("scale", s)
    return cloud.with_positions(cloud.positions * s)


# -- plane ----------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneModel:
    """Points p on the plane satisfy ``normal . p + offset = 0``."""

    normal: np.ndarray
    offset: float
    inlier_threshold: float = 0.5

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > _ORTHO_TOL:
            raise ValueError("plane normal must be a unit vector")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points):
        return np.asarray(points, dtype=np.float64) @ self.normal + self.offset

    def inliers(self, points):
        return np.abs(self.signed_distance(points)) <= self.inlier_threshold


def _is_collinear(points, tol=1e-9):
    if len(points) < 3:
        return True
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[1] <= tol * max(sv[0], 1e-300)


class MSACPlane(BaseEstimator):
    """Plane fit by M-estimator sample consensus.

    Hypotheses come from random point triples; each is scored by the
    truncated quadratic cost ``sum(min(d**2, t**2))`` and the cheapest one
    wins (ties go to the earliest hypothesis). The normal is flipped so that
    most points outside the inlier band lie on its positive side.
    """

    def __init__(self, inlier_threshold=0.5, iterations=1000, random_state=0, chunk=64):
        self.inlier_threshold = inlier_threshold
        self.iterations = iterations
        self.random_state = random_state
        self.chunk = chunk

    def fit(self, X, y=None):
        X = check_points(X)
        check_positive("inlier_threshold", self.inlier_threshold)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if _is_collinear(X):
            raise DegenerateInputError("plane fit needs three or more non-collinear points")
        rng = np.random.default_rng(self.random_state)
        n = len(X)
        if n == 3:
            triples = np.array([[0, 1, 2]])
        else:
            # distinct indices per triple
            a = rng.integers(0, n, self.iterations)
            b = (a + rng.integers(1, n, self.iterations)) % n
            c = rng.integers(0, n - 2, self.iterations)
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            c = c + (c >= lo)
            c = c + (c >= hi)
            triples = np.column_stack([a, b, c])
        p0, p1, p2 = X[triples[:, 0]], X[triples[:, 1]], X[triples[:, 2]]
        normals = np.cross(p1 - p0, p2 - p0)
        norms = np.linalg.norm(normals, axis=1)
        scale = np.linalg.norm(p1 - p0, axis=1) * np.linalg.norm(p2 - p0, axis=1)
        ok = norms > 1e-12 * np.maximum(scale, 1e-300)
        if not ok.any():
            raise DegenerateInputError("every sampled triple was collinear")
        normals = normals[ok] / norms[ok, None]
        offsets = -np.einsum("ij,ij->i", normals, p0[ok])
        t2 = self.inlier_threshold ** 2
        costs = np.empty(len(normals))
        for start in range(0, len(normals), self.chunk):
            sl = slice(start, start + self.chunk)
            d = X @ normals[sl].T + offsets[sl]
            costs[sl] = np.minimum(d * d, t2).sum(axis=0)
        best = int(np.argmin(costs))
        normal, offset = normals[best], offsets[best]
        dist = X @ normal + offset
        outside = np.abs(dist) > self.inlier_threshold
        votes = dist[outside] if outside.any() else dist
        if (votes > 0).sum() < (votes < 0).sum():
            normal, offset = -normal, -offset
        self.plane_ = PlaneModel(normal / np.linalg.norm(normal), offset, self.inlier_threshold)
        self.cost_ = float(costs[best])
        self.inlier_mask_ = np.abs(dist) <= self.inlier_threshold
        return self


def fit_plane_msac(cloud, inlier_threshold=0.5, iterations=1000, seed=0) -> PlaneModel:
    points = cloud.positions if isinstance(cloud, PointCloud) else cloud
    return MSACPlane(inlier_threshold, iterations, seed).fit(points).plane_


# -- pose -----------------------------------------------------------------------

@dataclass(frozen=True)
class RigidTransform:
    """``p_hat = rotation @ (p - origin)``."""

    rotation: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL or abs(np.linalg.det(R) - 1) > _ORTHO_TOL:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))

    def apply(self, points):
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.rotation.T

    def inverse_apply(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation + self.origin


def rotation_to_z(normal):
    """Minimal rotation taking the unit ``normal`` to +z.

    The antiparallel case is a half turn about the x axis.
    """
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    z = np.array([0.0, 0.0, 1.0])
    c = float(n @ z)
    v = np.cross(n, z)
    s = np.linalg.norm(v)
    if s < 1e-12:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    k = v / s
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    # Rodrigues with sin/cos taken from the vectors directly
    R = np.eye(3) + s * K + (1 - c) * (K @ K)
    # one polar step to remove rounding drift
    u, _, vt = np.linalg.svd(R)
    return u @ vt


def normalize_pose(cloud: PointCloud, plane: PlaneModel, base):
    """Rotate the plane normal to +z about ``base``, which becomes the origin."""
    R = rotation_to_z(plane.normal)
    transform = RigidTransform(R, base)
    return cloud.with_positions(transform.apply(cloud.positions)), transform


def extract_plant(cloud: PointCloud, link_radius=0.5, return_index=False):
    """Largest linked component among the points with z >= 0.

    With ``return_index`` also returns the kept indices into ``cloud``.
    """
    check_positive("link_radius", link_radius)
    above = np.flatnonzero(cloud.positions[:, 2] >= 0)
    if len(above) == 0:
        raise ValueError("no points at or above the ground plane")
    labels = connected_components(cloud.subset(above), link_radius)
    # ties go to the component seen first
    keep = above[labels == int(np.argmax(np.bincount(labels)))]
    out = cloud.subset(keep)
    return (out, keep) if return_index else out


@dataclass
class NormalizationResult:
    cloud: PointCloud
    scale: float
    plane: PlaneModel
    transform: RigidTransform
    info: dict = field(default_factory=dict)


def normalize_scene(cloud: PointCloud, landmarks: LandmarkSet, inlier_threshold=0.5,
                    iterations=1000, seed=0, link_radius=0.5) -> NormalizationResult:
    """Scale, fit the ground, pose-normalize and isolate the plant.

    The landmark base point is given in the input coordinates and is scaled
    along with the cloud.
    """
    if landmarks.base is None:
        raise ValueError("landmarks carry no base point")
    s = scale_factor(landmarks)
    scaled = apply_scale(cloud, s)
    plane = fit_plane_msac(scaled, inlier_threshold, iterations, seed)
    posed, transform = normalize_pose(scaled, plane, landmarks.base * s)
    plant, kept = extract_plant(posed, link_radius, return_index=True)
    info = {"n_input": len(cloud), "n_plant": len(plant), "kept": kept}
    return NormalizationResult(plant, s, plane, transform, info)
