"""Synthetic labeled plants and raw reconstruction-like scenes.

Plants are built in the normalized frame (centimetres, base at the origin,
+z towards the shoot). Stems and petioles are noisy cylinders labeled Stem;
leaf blades are curved elliptical patches labeled Leaf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .cloud import LEAF, STEM, PointCloud


@dataclass
class PlantParams:
    density: float = 40.0          # surface points per cm^2
    noise: float = 0.02            # Gaussian position noise, cm
    height: tuple = (14.0, 20.0)
    stem_radius: tuple = (0.25, 0.35)
    n_branches: tuple = (1, 2)
    n_leaves: tuple = (5, 8)
    petiole_length: tuple = (1.5, 2.5)
    petiole_radius: tuple = (0.08, 0.11)
    blade_length: tuple = (2.5, 3.8)   # semi-axis along the midrib
    blade_width: tuple = (1.3, 2.0)    # semi-axis across the midrib
    low_confidence_fraction: float = 0.08


def _unit(v):
    return v / np.linalg.norm(v)


def _frame(axis):
    """Two unit vectors orthogonal to ``axis`` and to each other."""
    axis = _unit(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = _unit(np.cross(axis, helper))
    return u, np.cross(axis, u)


def _tube(rng, path, radius, density):
    """Points on the surface of a tube swept along a polyline ``path``."""
    seg = np.diff(path, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    area = 2 * np.pi * radius * lengths.sum()
    n = max(int(rng.poisson(area * density)), 4)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    s = rng.uniform(0, cum[-1], n)
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    t = (s - cum[k]) / lengths[k]
    centers = path[k] + t[:, None] * seg[k]
    theta = rng.uniform(0, 2 * np.pi, n)
    out = np.empty((n, 3))
    for i in np.unique(k):
        m = k == i
        u, v = _frame(seg[i])
        out[m] = centers[m] + radius * (np.cos(theta[m])[:, None] * u + np.sin(theta[m])[:, None] * v)
    return out


def _blade(rng, base, midrib, normal_hint, length, width, density):
    """Curved elliptical leaf blade starting at ``base`` along ``midrib``."""
    midrib = _unit(midrib)
    side = np.cross(midrib, normal_hint)
    if np.linalg.norm(side) < 1e-6:
        side = _frame(midrib)[0]
    side = _unit(side)
    normal = np.cross(side, midrib)
    if normal[2] < 0:
        normal = -normal
    area = np.pi * length * width
    n = max(int(rng.poisson(area * density)), 8)
    # uniform samples in the unit disk
    r = np.sqrt(rng.uniform(0, 1, n))
    phi = rng.uniform(0, 2 * np.pi, n)
    a = r * np.cos(phi)          # along midrib, in [-1, 1]
    b = r * np.sin(phi)          # across midrib
    along = (a + 1.0) * length
    across = b * width
    droop = -0.08 * along ** 2 / length + 0.25 * (across / width) ** 2 * width
    return base + along[:, None] * midrib + across[:, None] * side + droop[:, None] * normal


def synth_plant(seed, params: PlantParams | None = None) -> PointCloud:
    """One labeled synthetic plant with colors, confidence and instance ids."""
    p = params or PlantParams()
    rng = np.random.default_rng(seed)
    u = lambda lim: rng.uniform(*lim)  # noqa: E731
    height = u(p.height)
    stem_r = u(p.stem_radius)
    # gently curved main stem
    ts = np.linspace(0, 1, 12)
    bend = rng.uniform(0.5, 1.5) * np.array([np.cos(rng.uniform(0, 2 * np.pi)),
                                            np.sin(rng.uniform(0, 2 * np.pi)), 0.0])
    stem_path = np.outer(ts * height, [0, 0, 1]) + np.outer(np.sin(ts * np.pi / 2) ** 2, bend)
    parts = [(_tube(rng, stem_path, stem_r, p.density), STEM, 0)]

    axes = [(stem_path, stem_r)]
    golden = np.deg2rad(137.5)
    az0 = rng.uniform(0, 2 * np.pi)
    for b in range(rng.integers(p.n_branches[0], p.n_branches[1] + 1)):
        h = rng.uniform(0.35, 0.6)
        start = stem_path[np.argmin(np.abs(ts - h))]
        az = az0 + b * np.pi + rng.uniform(-0.4, 0.4)
        elev = np.deg2rad(rng.uniform(40, 55))
        d = np.array([np.cos(az) * np.cos(elev), np.sin(az) * np.cos(elev), np.sin(elev)])
        length = rng.uniform(5.0, 7.5)
        path = start + np.outer(np.linspace(0, length, 8), d)
        r = stem_r * rng.uniform(0.6, 0.8)
        parts.append((_tube(rng, path, r, p.density), STEM, 0))
        axes.append((path, r))

    n_leaves = rng.integers(p.n_leaves[0], p.n_leaves[1] + 1)
    for k in range(n_leaves):
        path, r_axis = axes[k % len(axes)]
        # nodes spread along the upper part of each axis
        frac = 0.45 + 0.55 * (k // len(axes) + 1) / (n_leaves // len(axes) + 1)
        idx = min(int(frac * (len(path) - 1)), len(path) - 1)
        node = path[idx]
        az = az0 + golden * k + rng.uniform(-0.2, 0.2)
        elev = np.deg2rad(rng.uniform(20, 40))
        d = np.array([np.cos(az) * np.cos(elev), np.sin(az) * np.cos(elev), np.sin(elev)])
        pet_len = u(p.petiole_length)
        start = node + d * r_axis
        pet_path = start + np.outer(np.linspace(0, pet_len, 4), d)
        parts.append((_tube(rng, pet_path, u(p.petiole_radius), p.density), STEM, 0))
        mid = _unit(d * np.array([1, 1, 0.3]))
        blade = _blade(rng, pet_path[-1], mid, np.array([0, 0, 1.0]),
                       u(p.blade_length), u(p.blade_width), p.density)
        parts.append((blade, LEAF, k + 1))

    positions = np.concatenate([x for x, _, _ in parts])
    positions += rng.normal(0, p.noise, positions.shape)
    semantic = np.concatenate([np.full(len(x), lab, np.uint8) for x, lab, _ in parts])
    instance = np.concatenate([np.full(len(x), ins, np.int32) for x, _, ins in parts])
    n = len(positions)
    base_rgb = np.where(semantic[:, None] == LEAF, [[60, 140, 50]], [[110, 120, 60]])
    colors = np.clip(base_rgb + rng.normal(0, 12, (n, 3)), 0, 255).astype(np.uint8)
    confidence = rng.integers(6, 40, n)
    low = rng.random(n) < p.low_confidence_fraction
    confidence[low] = rng.integers(1, 6, low.sum())
    return PointCloud(positions, colors=colors, confidence=confidence,
                      semantic=semantic, instance=instance)


@dataclass
class Scene:
    """A raw scene plus the ground truth needed to check normalization."""

    cloud: PointCloud
    is_plant: np.ndarray          # per-point mask of plant points
    landmarks: np.ndarray         # raw-frame landmark coordinates
    pairs: list                   # (r, s, true distance in cm)
    base: np.ndarray              # raw-frame plant base point
    shrink: float                 # raw = shrink * (R @ metric) + t
    rotation: np.ndarray
    translation: np.ndarray


def synth_scene(seed, plant: PointCloud | None = None, shrink=None) -> Scene:
    """Plant on a ground plane with clutter and rulers, then scaled and posed.

    The ground surface lies slightly below the plant base, clutter objects
    sit well apart from the plant, and ruler markers provide landmarks with
    known metric spacing.
    """
    rng = np.random.default_rng(seed)
    plant = plant if plant is not None else synth_plant(seed)
    density = 6.0
    # ground disk below the base, with a hole around the stem foot
    n_ground = int(np.pi * 30 ** 2 * density)
    rr = 30 * np.sqrt(rng.uniform(0, 1, n_ground))
    th = rng.uniform(0, 2 * np.pi, n_ground)
    ground = np.column_stack([rr * np.cos(th), rr * np.sin(th),
                              rng.normal(-0.4, 0.05, n_ground)])
    ground = ground[rr > 1.0]
    # clutter: small boxes resting on the ground far from the plant
    clutter = []
    for _ in range(2):
        c = rng.uniform(14, 22) * np.array([np.cos(a := rng.uniform(0, 2 * np.pi)), np.sin(a), 0])
        size = rng.uniform(2.0, 4.0, 3)
        m = int(size.prod() * 10)
        box = c + (rng.uniform(-0.5, 0.5, (m, 3)) * size)
        box[:, 2] = np.abs(box[:, 2]) - 0.3
        clutter.append(box)
    # sparse floating noise
    noise = rng.uniform([-30, -30, -8], [30, 30, 25], (40, 3))
    noise = noise[np.linalg.norm(noise[:, :2], axis=1) > 12]
    # two rulers lying on the ground; markers every 5 cm
    markers = []
    for k in range(2):
        a = rng.uniform(0, 2 * np.pi)
        start = np.array([np.cos(a), np.sin(a), 0]) * 24 + np.array([0, 0, -0.4])
        d = np.array([-np.sin(a), np.cos(a), 0])
        markers += [start + d * 5.0 * i for i in range(3)]
    markers = np.array(markers)
    pairs = []
    for r in range(len(markers)):
        for s in range(r + 1, len(markers)):
            if r // 3 == s // 3:
                pairs.append((r, s, float(np.linalg.norm(markers[r] - markers[s]))))
    others = np.concatenate([ground, *clutter, noise, markers])
    metric = np.concatenate([plant.positions, others])
    is_plant = np.zeros(len(metric), bool)
    is_plant[: len(plant)] = True

    shrink = rng.uniform(0.2, 0.8) if shrink is None else shrink
    R = Rotation.random(random_state=rng.integers(2 ** 31)).as_matrix()
    t = rng.uniform(-10, 10, 3)
    raw = shrink * metric @ R.T + t
    n_other = len(others)
    colors = np.concatenate([plant.colors, np.full((n_other, 3), 120, np.uint8)])
    conf = np.concatenate([plant.confidence, rng.integers(1, 30, n_other)])
    semantic = np.concatenate([plant.semantic, np.full(n_other, 255, np.uint8)])
    instance = np.concatenate([plant.instance, np.zeros(n_other, np.int32)])
    cloud = PointCloud(raw, colors=colors, confidence=conf, semantic=semantic, instance=instance)
    landmarks_raw = shrink * markers @ R.T + t
    base_raw = t.copy()
    return Scene(cloud, is_plant, landmarks_raw, pairs, base_raw, shrink, R, t)


def synth_corpus(seed, count, params: PlantParams | None = None):
    """``count`` plants with per-plant seeds derived from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(count)
    return [synth_plant(int(s), params) for s in seeds]
