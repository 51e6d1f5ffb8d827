import numpy as np
import pytest

from leafstem.cloud import PointCloud
from leafstem.ply import PlyFormatError, load_ply, read_comments, save_ply


def _cloud(n=25, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.normal(size=(n, 3)) * 10, colors=rng.integers(0, 256, (n, 3)),
                      confidence=rng.integers(0, 40, n), semantic=rng.choice([0, 1, 255], n),
                      instance=rng.integers(0, 9, n), extra={"superpoint": rng.integers(0, 5, n)})


@pytest.mark.parametrize("binary", [True, False])
def test_round_trip_is_exact(tmp_path, binary):
    c = _cloud()
    path = tmp_path / "c.ply"
    save_ply(c, path, binary=binary, comments={"seed": 3})
    back = load_ply(path)
    assert np.array_equal(back.positions, c.positions)
    for name in ("colors", "confidence", "semantic", "instance"):
        assert np.array_equal(getattr(back, name), getattr(c, name))
    assert np.array_equal(back.extra["superpoint"], c.extra["superpoint"])
    assert read_comments(path) == {"seed": "3"}


def test_float_coordinates_stay_single_precision(tmp_path):
    pts = np.arange(9, dtype=np.float32).reshape(3, 3).astype(np.float64)
    save_ply(PointCloud(pts), tmp_path / "a.ply")
    assert b"property float x" in (tmp_path / "a.ply").read_bytes()[:200]


def test_positions_only(tmp_path):
    save_ply(PointCloud([[1.0, 2.0, 3.0]]), tmp_path / "p.ply")
    back = load_ply(tmp_path / "p.ply")
    assert back.semantic is None and back.colors is None
    assert np.array_equal(back.positions, [[1.0, 2.0, 3.0]])


def test_missing_coordinate_is_an_error(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                    "property float z\nend_header\n1 2\n")
    with pytest.raises(PlyFormatError):
        load_ply(path)


def test_bad_semantic_code_is_an_error(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                    "property float y\nproperty float z\nproperty uchar semantic\n"
                    "end_header\n1 2 3 7\n")
    with pytest.raises(PlyFormatError):
        load_ply(path)


def test_garbage_file(tmp_path):
    path = tmp_path / "junk.ply"
    path.write_bytes(b"not a ply file")
    with pytest.raises(PlyFormatError):
        load_ply(path)
