"""Inputs for block-based per-point networks: confidence filter, voxel grid, XY blocks."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cloud import LEAF, STEM, PointCloud, SpatialIndex, voxel_filter

ARCHIVE_FORMAT = "leafstem-blocks"
ARCHIVE_VERSION = 1


def confidence_filter(cloud: PointCloud, min_conf=6) -> PointCloud:
    """Keep the points whose confidence is at least ``min_conf``."""
    if cloud.confidence is None:
        raise ValueError("cloud has no confidence attribute")
    return cloud.subset(np.flatnonzero(cloud.confidence >= min_conf))


@dataclass(frozen=True)
class BlockSpec:
    edge: float = 10.0
    offsets: tuple = (0.0, 5.0)
    points_per_block: int = 8192
    voxel: float = 0.1
    min_train_points: int = 100

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))
        if not self.edge > 0:
            raise ValueError("block edge must be > 0")
        if self.points_per_block < 1:
            raise ValueError("points_per_block must be >= 1")
        if not self.offsets or any(not 0 <= o < self.edge for o in self.offsets):
            raise ValueError("offsets must lie in [0, edge)")
        if not self.voxel > 0:
            raise ValueError("voxel edge must be > 0")


@dataclass(frozen=True)
class Block:
    """One square cell of one offset pass.

    ``members`` index the partitioned cloud; ``sample`` indexes ``members``
    and has exactly ``points_per_block`` entries.
    """

    cell: tuple
    offset_id: int
    members: np.ndarray
    sample: np.ndarray

    @property
    def sample_indices(self):
        return self.members[self.sample]


def cell_of(xy, edge, offset):
    return np.floor((np.asarray(xy, dtype=np.float64) - offset) / edge).astype(np.int64)


def partition_blocks(cloud: PointCloud, spec: BlockSpec | None = None, seed=0,
                     training=False) -> list[Block]:
    """Split the cloud into XY squares, once per offset, and resample each to a fixed size.

    A cell with no more than ``points_per_block`` points keeps all of them,
    padded with random repeats; a larger cell is subsampled without
    replacement.

    Cells with fewer than ``spec.min_train_points`` points are dropped only
    when ``training`` is set, so inference covers every point.
    """
    spec = spec or BlockSpec()
    if len(cloud) == 0:
        raise ValueError("cannot partition an empty cloud")
    rng = np.random.default_rng(seed)
    blocks = []
    for oid, offset in enumerate(spec.offsets):
        cells = cell_of(cloud.positions[:, :2], spec.edge, offset)
        uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
        order = np.argsort(inverse.ravel(), kind="stable")
        bounds = np.cumsum(np.bincount(inverse.ravel(), minlength=len(uniq)))[:-1]
        for cell, members in zip(uniq, np.split(order, bounds)):
            m = len(members)
            if training and m < spec.min_train_points:
                continue
            n = spec.points_per_block
            if m <= n:
                # every member once, then random repeats to fill
                sample = np.concatenate([rng.permutation(m), rng.integers(0, m, n - m)])
            else:
                sample = rng.choice(m, n, replace=False)
            blocks.append(Block((int(cell[0]), int(cell[1])), oid, members, sample))
    return blocks


def block_features(cloud: PointCloud, block: Block, spec: BlockSpec) -> np.ndarray:
    """Network input channels for a block's resampled points.

    Columns: x, y relative to the block center; z unchanged; then x, y, z
    divided by the per-axis extent of the whole cloud (global position).
    """
    pts = cloud.positions[block.sample_indices]
    offset = spec.offsets[block.offset_id]
    center = (np.asarray(block.cell, dtype=np.float64) + 0.5) * spec.edge + offset
    local = pts.copy()
    local[:, :2] -= center
    lo = cloud.positions.min(axis=0)
    extent = np.maximum(cloud.positions.max(axis=0) - lo, 1e-12)
    return np.hstack([local, (pts - lo) / extent])


def prepare_blocks(cloud: PointCloud, spec: BlockSpec | None = None, min_conf=6, seed=0,
                   training=False):
    """Confidence filter, voxel grid, then blocks. Returns ``(filtered_cloud, blocks)``."""
    spec = spec or BlockSpec()
    filtered = confidence_filter(cloud, min_conf)
    if len(filtered) == 0:
        raise ValueError("no points survive the confidence filter")
    gridded, _ = voxel_filter(filtered, spec.voxel)
    return gridded, partition_blocks(gridded, spec, seed, training)


def member_predictions(cloud: PointCloud, block: Block, pred) -> np.ndarray:
    """Spread per-sample predictions to every member of the block.

    A sampled member takes the prediction at its first occurrence; any
    other member takes the prediction of its nearest sampled point.
    """
    pred = np.asarray(pred)
    n = len(block.sample)
    first = np.full(len(block.members), n, dtype=np.int64)
    np.minimum.at(first, block.sample, np.arange(n))
    out = np.empty(len(block.members), dtype=pred.dtype)
    hit = first < n
    out[hit] = pred[first[hit]]
    if not hit.all():
        sampled = np.flatnonzero(hit)
        index = SpatialIndex(cloud.positions[block.members[sampled]])
        near = index.nearest(cloud.positions[block.members[~hit]])
        out[~hit] = out[sampled[near]]
    return out


def reassemble(cloud: PointCloud, blocks, predictions) -> PointCloud:
    """Per-point majority vote over every block that covers the point.

    ``predictions[k]`` holds labels for ``blocks[k].sample``; each block casts
    one vote per member (see :func:`member_predictions`). Ties go to Stem.
    Points covered by no block raise.
    """
    votes = np.zeros((len(cloud), 2), dtype=np.int64)
    for block, pred in zip(blocks, predictions, strict=True):
        pred = np.asarray(pred)
        if len(pred) != len(block.sample):
            raise ValueError("prediction length does not match block sample")
        if not np.isin(pred, (STEM, LEAF)).all():
            raise ValueError("predictions must be Stem (0) or Leaf (1)")
        np.add.at(votes, (block.members, member_predictions(cloud, block, pred).astype(np.int64)), 1)
    uncovered = votes.sum(axis=1) == 0
    if uncovered.any():
        raise ValueError(f"{int(uncovered.sum())} points are covered by no block")
    labels = np.where(votes[:, LEAF] > votes[:, STEM], LEAF, STEM).astype(np.uint8)
    return cloud.with_semantic(labels)


# -- archive ------------------------------------------------------------------------

def save_blocks(path, cloud: PointCloud, blocks, spec: BlockSpec, config=None):
    """Write a versioned ``.npz`` block archive.

    Layout: ``meta`` (JSON bytes: format, version, spec, config, and per-block
    cell/offset_id), ``positions`` (float64, N x 3, the partitioned cloud),
    ``members/<k>`` and ``sample/<k>`` (int64 index arrays) and
    ``features/<k>`` (float64, points_per_block x 6, see :func:`block_features`).
    ``semantic`` is stored when the cloud is labeled.
    """
    meta = {
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "spec": {"edge": spec.edge, "offsets": list(spec.offsets),
                 "points_per_block": spec.points_per_block, "voxel": spec.voxel,
                 "min_train_points": spec.min_train_points},
        "blocks": [{"cell": list(b.cell), "offset_id": b.offset_id} for b in blocks],
        "config": config or {},
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
              "positions": cloud.positions}
    if cloud.semantic is not None:
        arrays["semantic"] = cloud.semantic
    for k, b in enumerate(blocks):
        arrays[f"members/{k}"] = b.members
        arrays[f"sample/{k}"] = b.sample
        arrays[f"features/{k}"] = block_features(cloud, b, spec)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_blocks(path):
    """Inverse of :func:`save_blocks`: ``(cloud, blocks, spec, meta)``."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != ARCHIVE_FORMAT:
            raise ValueError(f"{path} is not a block archive")
        if meta["version"] > ARCHIVE_VERSION:
            raise ValueError(f"block archive version {meta['version']} is newer than supported")
        semantic = data["semantic"] if "semantic" in data.files else None
        cloud = PointCloud(data["positions"], semantic=semantic)
        blocks = [Block(tuple(b["cell"]), b["offset_id"], data[f"members/{k}"], data[f"sample/{k}"])
                  for k, b in enumerate(meta["blocks"])]
    spec = BlockSpec(**{**meta["spec"], "offsets": tuple(meta["spec"]["offsets"])})
    return cloud, blocks, spec, meta


__all__ = [
    "Block", "BlockSpec", "block_features", "cell_of", "confidence_filter", "load_blocks",
    "member_predictions", "partition_blocks", "prepare_blocks", "reassemble", "save_blocks",
]
