"""Annotated PLY reading and writing.

Vertex properties: float x, y, z; uchar red, green, blue; int confidence;
uchar semantic (0 = Stem, 1 = Leaf, 255 = Unlabeled); int instance. Any other
scalar vertex property is carried in ``PointCloud.extra``. Header comments of
the form ``comment key=value`` are exposed through :func:`read_comments`.
"""

from __future__ import annotations

import numpy as np
from plyfile import PlyData, PlyElement, PlyHeaderParseError, PlyParseError

from .cloud import PointCloud

_CORE = {"x", "y", "z", "red", "green", "blue", "confidence", "semantic", "instance"}


class PlyFormatError(ValueError):
    pass


def load_ply(path) -> PointCloud:
    try:
        data = PlyData.read(str(path))
    except (PlyHeaderParseError, PlyParseError) as exc:
        raise PlyFormatError(f"{path}: {exc}") from exc
    if "vertex" not in data:
        raise PlyFormatError(f"{path}: no vertex element")
    vertex = data["vertex"].data
    names = set(vertex.dtype.names)
    missing = {"x", "y", "z"} - names
    if missing:
        raise PlyFormatError(f"{path}: missing vertex properties {sorted(missing)}")
    positions = np.column_stack([vertex[c] for c in "xyz"]).astype(np.float64)
    colors = None
    rgb = {"red", "green", "blue"}
    if rgb & names:
        if not rgb <= names:
            raise PlyFormatError(f"{path}: incomplete color properties")
        colors = np.column_stack([vertex[c] for c in ("red", "green", "blue")])

    def opt(name):
        return np.asarray(vertex[name]) if name in names else None

    extra = {n: np.asarray(vertex[n]) for n in vertex.dtype.names if n not in _CORE}
    try:
        return PointCloud(positions, colors=colors, confidence=opt("confidence"),
                          semantic=opt("semantic"), instance=opt("instance"), extra=extra)
    except ValueError as exc:
        raise PlyFormatError(f"{path}: {exc}") from exc


def read_comments(path) -> dict:
    """Header ``comment key=value`` lines as a dict."""
    data = PlyData.read(str(path))
    out = {}
    for line in data.comments:
        key, sep, value = line.partition("=")
        if sep:
            out[key.strip()] = value.strip()
    return out


def _extra_dtype(arr):
    if np.issubdtype(arr.dtype, np.floating):
        return "f8" if arr.dtype == np.float64 else "f4"
    if np.issubdtype(arr.dtype, np.unsignedinteger) and arr.dtype.itemsize == 1:
        return "u1"
    return "i4"


def save_ply(cloud: PointCloud, path, *, binary=True, comments=None, double=None):
    """Write ``cloud`` as little-endian binary (or ASCII) PLY.

    Coordinates are stored as ``float`` unless that would lose precision, in
    which case ``double`` is used; pass ``double`` explicitly to force either.
    ``comments`` is a mapping written as ``comment key=value`` header lines.
    """
    if double is None:
        pos = cloud.positions
        double = not np.array_equal(pos.astype(np.float32).astype(np.float64), pos)
    ftype = "f8" if double else "f4"
    fields = [("x", ftype), ("y", ftype), ("z", ftype)]
    columns = [cloud.positions[:, 0], cloud.positions[:, 1], cloud.positions[:, 2]]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        columns += [cloud.colors[:, 0], cloud.colors[:, 1], cloud.colors[:, 2]]
    if cloud.confidence is not None:
        fields.append(("confidence", "i4"))
        columns.append(cloud.confidence)
    if cloud.semantic is not None:
        fields.append(("semantic", "u1"))
        columns.append(cloud.semantic)
    if cloud.instance is not None:
        fields.append(("instance", "i4"))
        columns.append(cloud.instance)
    for name, arr in cloud.extra.items():
        fields.append((name, _extra_dtype(arr)))
        columns.append(arr)
    table = np.empty(len(cloud), dtype=fields)
    for (name, _), col in zip(fields, columns):
        table[name] = col
    el = PlyElement.describe(table, "vertex")
    text = [f"{k}={v}" for k, v in (comments or {}).items()]
    PlyData([el], text=not binary, byte_order="<", comments=text).write(str(path))
