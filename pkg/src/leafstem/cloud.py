"""Point cloud container and the spatial primitives every stage builds on."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import cKDTree

STEM = 0
LEAF = 1
UNLABELED = 255
LABEL_NAMES = {STEM: "Stem", LEAF: "Leaf", UNLABELED: "Unlabeled"}

_PER_POINT = ("colors", "confidence", "semantic", "instance")


@dataclass(frozen=True)
class PointCloud:
    """Parallel per-point arrays; positions are in centimetres.

    Optional attributes are ``None`` when absent. ``extra`` carries any
    additional integer/float scalar fields (e.g. ``superpoint``).
    """

    positions: np.ndarray
    colors: np.ndarray | None = None
    confidence: np.ndarray | None = None
    semantic: np.ndarray | None = None
    instance: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            if pos.size == 0:
                pos = pos.reshape(0, 3)
            else:
                raise ValueError(f"positions must have shape (N, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions contain NaN or Inf")
        object.__setattr__(self, "positions", pos)
        n = len(pos)
        casts = {
            "colors": np.uint8,
            "confidence": np.int32,
            "semantic": np.uint8,
            "instance": np.int32,
        }
        for name, dtype in casts.items():
            value = getattr(self, name)
            if value is None:
                continue
            raw = np.asarray(value)
            if name == "confidence" and raw.size and raw.min() < 0:
                raise ValueError("confidence values must be non-negative")
            if name == "instance" and raw.size and raw.min() < 0:
                raise ValueError("instance ids must be non-negative")
            arr = raw.astype(dtype, copy=False)
            if len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} entries, positions has {n}")
            if name == "colors" and (arr.ndim != 2 or arr.shape[1] != 3):
                raise ValueError("colors must have shape (N, 3)")
            if name == "semantic":
                bad = ~np.isin(arr, (STEM, LEAF, UNLABELED))
                if bad.any():
                    raise ValueError(f"unknown semantic code {int(arr[bad][0])}")
            object.__setattr__(self, name, arr)
        extra = {k: np.asarray(v) for k, v in self.extra.items()}
        for k, v in extra.items():
            if len(v) != n:
                raise ValueError(f"extra field {k!r} has {len(v)} entries, expected {n}")
        object.__setattr__(self, "extra", extra)

    def __len__(self):
        return len(self.positions)

    def subset(self, index) -> PointCloud:
        """Select points by integer index or boolean mask, keeping all attributes."""
        index = np.asarray(index)
        kw = {name: None if getattr(self, name) is None else getattr(self, name)[index]
              for name in _PER_POINT}
        return PointCloud(self.positions[index], extra={k: v[index] for k, v in self.extra.items()}, **kw)

    def with_positions(self, positions) -> PointCloud:
        return replace(self, positions=positions)

    def with_semantic(self, semantic) -> PointCloud:
        return replace(self, semantic=semantic)

    def with_extra(self, **fields) -> PointCloud:
        return replace(self, extra={**self.extra, **fields})


class SpatialIndex:
    """k-NN and fixed-radius queries over a static set of points."""

    def __init__(self, points):
        self.points = np.asarray(points, dtype=np.float64)
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self):
        return len(self.points)

    def query(self, queries, k=1):
        """Return ``(distances, indices)`` of the ``k`` nearest points.

        Equidistant candidates resolve to the lowest index.
        """
        if self._tree is None:
            raise ValueError("cannot query an empty index")
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        k = min(k, len(self.points))
        dist, idx = self._tree.query(queries, k=k)
        if k == 1:
            dist, idx = dist[:, None], idx[:, None]
        return dist, idx

    def nearest(self, queries):
        """Index of the nearest point per query, ties to the lowest index."""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        k = min(4, len(self.points))
        dist, idx = self.query(queries, k=k)
        # kd-tree order among exact ties is unspecified; pick lowest index
        tie = dist == dist[:, :1]
        masked = np.where(tie, idx, np.iinfo(np.int64).max)
        return masked.min(axis=1)

    def query_radius(self, queries, radius):
        """List of index arrays of points within ``radius`` (inclusive) per query."""
        if self._tree is None:
            return [np.empty(0, dtype=np.int64) for _ in np.atleast_2d(queries)]
        out = self._tree.query_ball_point(np.atleast_2d(queries), r=radius)
        return [np.sort(np.asarray(o, dtype=np.int64)) for o in out]

    def radius_pairs(self, radius):
        """All index pairs ``(i, j)``, ``i < j``, with distance <= radius."""
        if self._tree is None:
            return np.empty((0, 2), dtype=np.int64)
        return self._tree.query_pairs(r=radius, output_type="ndarray")


def voxel_keys(positions, edge):
    return np.floor(np.asarray(positions) / edge).astype(np.int64)


def voxel_filter(cloud: PointCloud, edge: float):
    """Voxel-grid average filter.

    Returns the filtered cloud and, for every input point, the index of the
    output point representing its voxel. Output points are the member means;
    colors are averaged, confidence is the member maximum, and labels come
    from the original point nearest to the mean (lowest index on ties).
    """
    if not edge > 0:
        raise ValueError("voxel edge must be > 0")
    n = len(cloud)
    if n == 0:
        return cloud.subset(np.empty(0, dtype=np.int64)), np.empty(0, dtype=np.int64)
    keys = voxel_keys(cloud.positions, edge)
    _, first, mapping = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    mapping = mapping.ravel()
    # order voxels by their first member so output is stable w.r.t. input order
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    mapping = rank[mapping]
    m = len(order)
    counts = np.bincount(mapping, minlength=m).astype(np.float64)

    def mean(values):
        values = np.asarray(values, dtype=np.float64)
        out = np.zeros((m, values.shape[1]))
        np.add.at(out, mapping, values)
        return out / counts[:, None]

    centers = mean(cloud.positions)
    kw = {}
    if cloud.colors is not None:
        kw["colors"] = np.clip(np.rint(mean(cloud.colors)), 0, 255).astype(np.uint8)
    if cloud.confidence is not None:
        conf = np.zeros(m, dtype=np.int64)
        np.maximum.at(conf, mapping, cloud.confidence)
        kw["confidence"] = conf
    label_fields = [f for f in ("semantic", "instance") if getattr(cloud, f) is not None]
    if label_fields or cloud.extra:
        # nearest member: the nearest original point to a voxel mean always lies
        # in that voxel's neighbourhood, so search the full cloud
        nearest = SpatialIndex(cloud.positions).nearest(centers)
        for f in label_fields:
            kw[f] = getattr(cloud, f)[nearest]
        kw["extra"] = {k: v[nearest] for k, v in cloud.extra.items()}
    return PointCloud(centers, **kw), mapping


def _components_from_pairs(n, pairs):
    if n == 0:
        return np.empty(0, dtype=np.int64)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = _cc(graph, directed=False)
    return _relabel_by_first_occurrence(labels)


def _relabel_by_first_occurrence(labels):
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return rank[inverse.ravel()].astype(np.int64)


def radius_components(points, link_radius):
    """Single-linkage components of points in any dimension.

    Ids are numbered by first occurrence, so point 0 is always in component 0.
    """
    if not link_radius > 0:
        raise ValueError("link_radius must be > 0")
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        return np.empty(0, dtype=np.int64)
    pairs = cKDTree(points).query_pairs(r=link_radius, output_type="ndarray")
    return _components_from_pairs(len(points), pairs.reshape(-1, 2))


def connected_components(cloud: PointCloud, link_radius: float = 0.5):
    """Component id per point; points chained by gaps <= ``link_radius`` share an id."""
    return radius_components(cloud.positions, link_radius)


def nn_propagate(source: PointCloud, target: PointCloud, field: str = "semantic"):
    """Copy ``field`` from each target point's nearest source point onto ``target``."""
    if len(source) == 0:
        raise ValueError("source cloud is empty")
    values = source.extra[field] if field in source.extra else getattr(source, field)
    if values is None:
        raise ValueError(f"source has no {field!r} attribute")
    if len(target) == 0:
        nearest = np.empty(0, dtype=np.int64)
    else:
        nearest = SpatialIndex(source.positions).nearest(target.positions)
    if field in _PER_POINT:
        return replace(target, **{field: values[nearest]})
    return target.with_extra(**{field: values[nearest]})
