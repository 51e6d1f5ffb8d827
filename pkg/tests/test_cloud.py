import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from leafstem.cloud import (LEAF, STEM, UNLABELED, PointCloud, SpatialIndex, connected_components,
                            nn_propagate, radius_components, voxel_filter)


def test_rejects_bad_shapes_and_values():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        PointCloud([[0, 0, np.nan]])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), semantic=[0, 1])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), semantic=[0, 7])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), confidence=[-1, 3])


def test_empty_cloud_is_allowed():
    c = PointCloud(np.empty((0, 3)))
    assert len(c) == 0
    assert c.positions.shape == (0, 3)


def test_subset_keeps_every_attribute():
    rng = np.random.default_rng(0)
    c = PointCloud(rng.normal(size=(10, 3)), colors=rng.integers(0, 255, (10, 3)),
                   confidence=np.arange(10), semantic=np.tile([STEM, LEAF], 5),
                   instance=np.arange(10), extra={"w": np.arange(10.0)})
    s = c.subset([1, 3])
    assert np.array_equal(s.confidence, [1, 3])
    assert np.array_equal(s.semantic, [LEAF, LEAF])
    assert np.array_equal(s.extra["w"], [1.0, 3.0])
    assert np.array_equal(s.colors, c.colors[[1, 3]])


def test_spatial_index_ties_go_to_lowest_index():
    idx = SpatialIndex([[1, 0, 0], [-1, 0, 0], [0, 1, 0]])
    assert idx.nearest([[0, 0, 0]])[0] == 0


def test_voxel_filter_small_example():
    pts = [[0.01, 0.01, 0.01], [0.05, 0.05, 0.05], [0.25, 0.0, 0.0]]
    out, mapping = voxel_filter(PointCloud(pts, confidence=[3, 9, 4], semantic=[0, 1, 1]), 0.1)
    assert len(out) == 2
    assert np.allclose(out.positions[0], [0.03, 0.03, 0.03])
    assert list(mapping) == [0, 0, 1]
    assert list(out.confidence) == [9, 4]


def test_voxel_filter_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(1, 600))
        pts = rng.uniform(-2, 2, (n, 3))
        edge = float(rng.uniform(0.1, 1.0))
        out, mapping = voxel_filter(PointCloud(pts), edge)
        groups = list(oracles.voxel_groups(pts, edge).values())
        assert len(out) == len(groups)
        for k, members in enumerate(groups):
            assert np.abs(out.positions[k] - pts[members].mean(axis=0)).max() <= 1e-9
            assert set(np.flatnonzero(mapping == k)) == set(members)


def test_voxel_filter_labels_from_point_nearest_the_mean():
    pts = [[0.0, 0, 0], [0.09, 0, 0], [0.08, 0, 0]]
    out, _ = voxel_filter(PointCloud(pts, semantic=[STEM, LEAF, LEAF]), 0.1)
    # mean x is 0.0567, nearest member is the one at 0.08
    assert out.semantic[0] == LEAF


def test_connected_components_examples():
    pts = np.array([[0, 0, 0], [0.4, 0, 0], [0.8, 0, 0], [5, 0, 0]])
    assert list(connected_components(PointCloud(pts), 0.5)) == [0, 0, 0, 1]
    assert list(connected_components(PointCloud(pts), 0.3)) == [0, 1, 2, 3]


def test_components_match_union_find():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(1, 400))
        pts = rng.uniform(0, 5, (n, 3))
        r = float(rng.uniform(0.1, 0.8))
        assert list(radius_components(pts, r)) == oracles.components(pts, r)


def test_nn_propagate_matches_scan():
    rng = np.random.default_rng(3)
    src = PointCloud(rng.normal(size=(50, 3)), semantic=rng.integers(0, 2, 50))
    tgt = PointCloud(rng.normal(size=(80, 3)))
    out = nn_propagate(src, tgt)
    assert np.array_equal(out.semantic, src.semantic[oracles.nearest(src.positions, tgt.positions)])
    assert np.array_equal(out.positions, tgt.positions)


def test_nn_propagate_extra_field_and_errors():
    src = PointCloud([[0, 0, 0], [1, 0, 0]], extra={"superpoint": np.array([4, 5])})
    out = nn_propagate(src, PointCloud([[0.9, 0, 0]]), field="superpoint")
    assert out.extra["superpoint"][0] == 5
    with pytest.raises(ValueError):
        nn_propagate(PointCloud(np.empty((0, 3))), src)
    with pytest.raises(ValueError):
        nn_propagate(src, src, field="semantic")


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 60), st.just(3)),
              elements=st.floats(-50, 50, allow_nan=False)),
       st.floats(0.05, 5.0))
def test_voxel_mapping_is_a_partition(pts, edge):
    out, mapping = voxel_filter(PointCloud(pts), edge)
    assert mapping.min() == 0 and mapping.max() == len(out) - 1
    assert len(np.unique(mapping)) == len(out)
    # each output point lies inside the voxel of its members
    keys = np.floor(pts / edge)
    for k in range(len(out)):
        assert len(np.unique(keys[mapping == k], axis=0)) == 1


def test_unlabeled_code_round_trips():
    c = PointCloud(np.zeros((1, 3)), semantic=[UNLABELED])
    assert c.semantic[0] == 255
