"""Leaf/stem semantic segmentation of 3D plant point clouds.

Stages: metric and pose normalization of a reconstructed scene, superpoint
oversegmentation through a 2D t-SNE embedding, and per-superpoint
classification by a set-abstraction network with adaptive local regions.
"""

__version__ = "0.1.0"

from .cloud import LEAF, STEM, UNLABELED, PointCloud, SpatialIndex, connected_components, \
    nn_propagate, voxel_filter
from .metrics import ConfusionMatrix, SegmentationReport, aggregate, evaluate
from .ply import load_ply, save_ply

__all__ = [
    "LEAF", "STEM", "UNLABELED", "ConfusionMatrix", "PointCloud", "SegmentationReport",
    "SpatialIndex", "aggregate", "connected_components", "evaluate", "load_ply",
    "nn_propagate", "save_ply", "voxel_filter",
]
