"""Superpoint oversegmentation: voxel filter, t-SNE, 2D clustering, propagation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils import check_random_state

from ..cloud import PointCloud, SpatialIndex, voxel_filter
from ..validation import check_points
from .clustering import convexify, detect_linear, euclidean_cluster_2d
from .tsne import TSNE

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuperpointPartition:
    """Superpoint id per point and the member indices of each superpoint."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or len(np.unique(labels)) != labels.max() + 1):
            raise ValueError("superpoint ids must be 0..K-1 with no gaps")
        object.__setattr__(self, "labels", labels)

    @property
    def n_superpoints(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def members(self):
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.n_superpoints + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.n_superpoints)]

    def __len__(self):
        return len(self.labels)


def _compact(labels):
    """Renumber ids to 0..K-1 by first occurrence."""
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inv.ravel()]


def _absorb_small(embedding, labels, min_size):
    """Reassign members of clusters smaller than ``min_size`` to the nearest
    point of a large enough cluster in the embedding."""
    counts = np.bincount(labels)
    small = counts[labels] < min_size
    if not small.any() or small.all():
        return labels
    index = SpatialIndex(embedding[~small])
    labels = labels.copy()
    labels[small] = labels[~small][index.nearest(embedding[small])]
    return labels


class SuperpointExtractor(BaseEstimator, ClusterMixin):
    """Oversegment a 3D point set into superpoints.

    The cloud is voxel-average filtered, embedded in 2D with t-SNE, and
    clustered by single linkage in the embedding. Line-like clusters are kept
    whole; other clusters are bisected spectrally until each part is solid.
    Labels are carried back to every input point by nearest neighbour.

    ``max_points`` caps the embedded set; larger filtered clouds are
    uniformly subsampled (seeded) before embedding. ``min_cluster_size``
    folds clusters smaller than this into their nearest neighbour cluster.

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
        Superpoint id per input point.
    embedding_ : ndarray of shape (n_embedded, 2)
    embedded_positions_ : ndarray of shape (n_embedded, 3)
    embedded_labels_ : ndarray of shape (n_embedded,)
    tsne_ : fitted :class:`TSNE`
    """

    def __init__(self, voxel_size=0.12, perplexity=30.0, tsne_iter=1000, learning_rate=200.0,
                 early_exaggeration=12.0, exaggeration_iter=250, cluster_threshold=1.0,
                 linear_threshold=0.95, linear_neighbors=30, solidity_threshold=0.8, alpha_factor=4.0,
                 max_depth=6, spectral_neighbors=10, min_cluster_size=1, max_points=5000,
                 kl_every=50, random_state=0):
        self.voxel_size = voxel_size
        self.perplexity = perplexity
        self.tsne_iter = tsne_iter
        self.learning_rate = learning_rate
        self.early_exaggeration = early_exaggeration
        self.exaggeration_iter = exaggeration_iter
        self.cluster_threshold = cluster_threshold
        self.linear_threshold = linear_threshold
        self.linear_neighbors = linear_neighbors
        self.solidity_threshold = solidity_threshold
        self.alpha_factor = alpha_factor
        self.max_depth = max_depth
        self.spectral_neighbors = spectral_neighbors
        self.min_cluster_size = min_cluster_size
        self.max_points = max_points
        self.kl_every = kl_every
        self.random_state = random_state

    def _cluster_embedding(self, embedding):
        initial = euclidean_cluster_2d(embedding, self.cluster_threshold)
        labels = np.empty(len(embedding), dtype=np.int64)
        self.linear_clusters_ = []
        next_id = 0
        for cid in range(initial.max() + 1):
            idx = np.flatnonzero(initial == cid)
            if len(idx) >= 3 and detect_linear(embedding[idx], self.linear_threshold,
                                                   self.linear_neighbors):
                self.linear_clusters_.append(cid)
                parts = [np.arange(len(idx))]
            else:
                parts = convexify(embedding[idx], self.solidity_threshold, self.max_depth,
                                  self.spectral_neighbors, self.alpha_factor)
            for part in parts:
                labels[idx[part]] = next_id
                next_id += 1
        self.initial_labels_ = initial
        if self.min_cluster_size > 1:
            labels = _absorb_small(embedding, labels, self.min_cluster_size)
        return _compact(labels)

    def fit(self, X, y=None):
        X = check_points(X, allow_empty=True)
        if len(X) == 0:
            self.labels_ = np.empty(0, dtype=np.int64)
            self.embedding_ = np.empty((0, 2))
            return self
        rng = check_random_state(self.random_state)
        down, _ = voxel_filter(PointCloud(X), self.voxel_size)
        pts = down.positions
        if len(pts) > self.max_points:
            keep = np.sort(rng.choice(len(pts), self.max_points, replace=False))
            pts = pts[keep]
        self.embedded_positions_ = pts
        if len(pts) <= 3 * self.perplexity:
            # too few points for the configured perplexity: one superpoint
            log.warning("only %d points after filtering; returning one superpoint", len(pts))
            self.embedding_ = np.zeros((len(pts), 2))
            self.embedded_labels_ = np.zeros(len(pts), dtype=np.int64)
        else:
            self.tsne_ = TSNE(perplexity=self.perplexity, n_iter=self.tsne_iter,
                              learning_rate=self.learning_rate,
                              early_exaggeration=self.early_exaggeration,
                              exaggeration_iter=self.exaggeration_iter,
                              kl_every=self.kl_every, random_state=rng)
            self.embedding_ = self.tsne_.fit_transform(pts)
            self.embedded_labels_ = self._cluster_embedding(self.embedding_)
        nearest = SpatialIndex(pts).nearest(X)
        self.labels_ = _compact(self.embedded_labels_[nearest])
        return self

    def partition(self):
        return SuperpointPartition(self.labels_)


def extract_superpoints(cloud: PointCloud, **params) -> SuperpointPartition:
    """Superpoint partition of ``cloud`` at full resolution."""
    return SuperpointExtractor(**params).fit(cloud.positions).partition()
