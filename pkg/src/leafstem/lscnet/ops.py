"""Sampling and grouping primitives, in NumPy and batched torch forms."""

from __future__ import annotations

import numpy as np
import torch


def fps(points, m, start_index=0):
    """Farthest point sampling: ``m`` indices, greedy max-min from ``start_index``.

    Ties go to the lowest index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if m > n:
        raise ValueError(f"cannot sample {m} centers from {n} points")
    if m <= 0:
        return np.empty(0, dtype=np.int64)
    out = np.empty(m, dtype=np.int64)
    out[0] = start_index
    mind = np.sum((points - points[start_index]) ** 2, axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(mind))
        out[i] = nxt
        np.minimum(mind, np.sum((points - points[nxt]) ** 2, axis=1), out=mind)
    return out


def coordinate_keys(points):
    """Pseudo-random key in [0, 1) per point that depends only on its coordinates."""
    p = np.asarray(points, dtype=np.float64)
    v = np.sin(p @ np.array([12.9898, 78.233, 37.719])) * 43758.5453
    return v - np.floor(v)


def ball_group(points, features, center, radius, k, seed=None, keys=None):
    """Group ``k`` rows around ``center``.

    In-ball points (distance <= radius) are drawn without replacement. With
    fewer than ``k`` in the ball, the in-ball point nearest the center fills
    the remaining slots; with an empty ball the globally nearest point is
    used ``k`` times. Selection uses ``keys`` (smallest first) when given,
    otherwise a permutation seeded by ``seed``.

    Returns ``(offsets, grouped_features, indices)`` where offsets are the
    grouped coordinates minus ``center``.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise ValueError("cannot group from an empty cloud")
    if not radius > 0:
        raise ValueError("radius must be > 0")
    center = np.asarray(center, dtype=np.float64)
    d2 = np.sum((points - center) ** 2, axis=1)
    if keys is None:
        keys = np.random.default_rng(seed).random(len(points))
    inside = np.flatnonzero(d2 <= radius * radius)
    chosen = inside[np.argsort(keys[inside], kind="stable")[:k]]
    nearest = int(np.argmin(d2))
    idx = np.concatenate([chosen, np.full(k - len(chosen), nearest, dtype=np.int64)])
    grouped = None if features is None else np.asarray(features)[idx]
    return points[idx] - center, grouped, idx


# -- batched torch versions used inside the network ---------------------------

def gather(values, idx):
    """``values[b, idx[b, ...]]`` for ``values`` of shape (B, N, C)."""
    b = values.shape[0]
    flat = idx.reshape(b, -1)
    out = torch.gather(values, 1, flat[..., None].expand(-1, -1, values.shape[-1]))
    return out.reshape(*idx.shape, values.shape[-1])


def farthest_point_sample(xyz, m):
    """Batched FPS starting from the point farthest from each centroid."""
    b, n, _ = xyz.shape
    if m > n:
        raise ValueError(f"cannot sample {m} centers from {n} points")
    centroid = xyz.mean(dim=1, keepdim=True)
    far = torch.argmax(((xyz - centroid) ** 2).sum(-1), dim=1)
    idx = torch.empty(b, m, dtype=torch.long, device=xyz.device)
    mind = torch.full((b, n), float("inf"), dtype=xyz.dtype, device=xyz.device)
    rows = torch.arange(b, device=xyz.device)
    for i in range(m):
        idx[:, i] = far
        d = ((xyz - xyz[rows, far][:, None]) ** 2).sum(-1)
        mind = torch.minimum(mind, d)
        far = torch.argmax(mind, dim=1)
    return idx


def ball_query(xyz, centers, radius, k, keys):
    """Batched :func:`ball_group` index selection.

    ``radius`` has shape (B, M); ``keys`` has shape (B, N). Returns (B, M, k).
    """
    d2 = ((centers[:, :, None, :] - xyz[:, None, :, :]) ** 2).sum(-1)
    inside = d2 <= (radius ** 2)[..., None]
    masked = torch.where(inside, keys[:, None, :].expand_as(d2), torch.full_like(d2, 2.0))
    k_eff = min(k, xyz.shape[1])
    vals, idx = torch.topk(masked, k_eff, dim=-1, largest=False, sorted=True)
    nearest = torch.argmin(d2, dim=-1, keepdim=True)
    idx = torch.where(vals <= 1.0, idx, nearest.expand_as(idx))
    if k_eff < k:
        idx = torch.cat([idx, nearest.expand(-1, -1, k - k_eff)], dim=-1)
    return idx
