from .clustering import (convexify, detect_linear, euclidean_cluster_2d, linearity, solidity,
                         spectral_bisect)
from .extractor import SuperpointExtractor, SuperpointPartition, extract_superpoints
from .tsne import TSNE, kl_divergence, tsne_embed

__all__ = [
    "TSNE", "SuperpointExtractor", "SuperpointPartition", "convexify", "detect_linear",
    "euclidean_cluster_2d", "extract_superpoints", "kl_divergence", "linearity", "solidity",
    "spectral_bisect", "tsne_embed",
]
