"""Two-stage segmentation: superpoints, then one class per superpoint."""

from __future__ import annotations

import numpy as np

from ..cloud import LEAF, STEM, UNLABELED, PointCloud
from ..superpoint import SuperpointExtractor, SuperpointPartition


def superpoint_targets(semantic, partition: SuperpointPartition, min_purity=0.7):
    """Majority label and purity per superpoint (Unlabeled points ignored).

    Returns ``(labels, purity, keep)``; ``keep`` marks superpoints whose
    purity reaches ``min_purity`` and that contain labeled points.
    """
    semantic = np.asarray(semantic)
    k = partition.n_superpoints
    stem = np.bincount(partition.labels, weights=semantic == STEM, minlength=k)
    leaf = np.bincount(partition.labels, weights=semantic == LEAF, minlength=k)
    total = stem + leaf
    labels = np.where(leaf > stem, LEAF, STEM)
    with np.errstate(invalid="ignore", divide="ignore"):
        purity = np.where(total > 0, np.maximum(stem, leaf) / total, 0.0)
    keep = (total > 0) & (purity >= min_purity)
    return labels, purity, keep


def training_samples(clouds, partitions, min_purity=0.7):
    """Superpoint point sets and majority labels for training."""
    X, y = [], []
    for cloud, part in zip(clouds, partitions):
        labels, _, keep = superpoint_targets(cloud.semantic, part, min_purity)
        for i, members in enumerate(part.members):
            if keep[i]:
                X.append(cloud.positions[members])
                y.append(labels[i])
    return X, np.asarray(y, dtype=np.uint8)


def label_superpoints(cloud: PointCloud, partition: SuperpointPartition, model):
    """Assign each superpoint's predicted class to all of its points."""
    members = partition.members
    if not members:
        return cloud.with_semantic(np.full(len(cloud), UNLABELED, np.uint8))
    pred = model.predict([cloud.positions[m] for m in members])
    return cloud.with_semantic(np.asarray(pred, dtype=np.uint8)[partition.labels])


def segment_plant(cloud: PointCloud, model, extractor: SuperpointExtractor | None = None,
                  partition: SuperpointPartition | None = None) -> PointCloud:
    """Label every point Leaf or Stem; adds a ``superpoint`` extra field."""
    if partition is None:
        extractor = extractor if extractor is not None else SuperpointExtractor()
        partition = extractor.fit(cloud.positions).partition()
    out = label_superpoints(cloud, partition, model)
    return out.with_extra(superpoint=partition.labels.astype(np.int32))
