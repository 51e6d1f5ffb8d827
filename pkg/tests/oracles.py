"""Brute-force reference implementations used to check the fast code paths.

They use full distance matrices and plain loops, no spatial indexes, and
share no helpers with the package.
"""

import math

import numpy as np


def sqdist(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)


def fps(points, m, start):
    """Greedy max-min sampling recomputed from scratch each step; ties to the lowest index."""
    d = sqdist(points, points)
    chosen = [start]
    for _ in range(1, m):
        to_set = d[:, chosen].min(axis=1)
        best = max(range(len(points)), key=lambda i: (to_set[i], -i))
        chosen.append(best)
    return chosen


def ball_members(points, center, radius, k, keys):
    """Indices chosen for a ball group: in-ball by ascending key, padded with the nearest."""
    d = sqdist(points, [center])[:, 0]
    inside = [i for i in range(len(points)) if d[i] <= radius * radius]
    inside.sort(key=lambda i: (keys[i], i))
    chosen = inside[:k]
    near = min(range(len(points)), key=lambda i: (d[i], i))
    return chosen + [near] * (k - len(chosen))


def voxel_groups(points, edge):
    """Voxel key -> member indices, in order of each voxel's first member."""
    groups = {}
    for i, p in enumerate(points):
        key = tuple(math.floor(c / edge) for c in p)
        groups.setdefault(key, []).append(i)
    return groups


def components(points, radius):
    """Breadth-first search over the full adjacency matrix; ids by first occurrence."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    adj = sqdist(points, points) <= radius * radius
    out = [-1] * n
    next_id = 0
    for s in range(n):
        if out[s] >= 0:
            continue
        out[s] = next_id
        queue = [s]
        while queue:
            i = queue.pop()
            for j in np.flatnonzero(adj[i]):
                if out[j] < 0:
                    out[j] = next_id
                    queue.append(j)
        next_id += 1
    return out


def nearest(source, queries):
    """Index of the nearest source point per query; ties to the lowest index."""
    d = sqdist(queries, source)
    return [int(np.flatnonzero(row == row.min())[0]) for row in d]


def confusion(pred, truth):
    """(tp, fp, fn) per class, counted one point at a time."""
    out = {}
    for c in (0, 1):
        tp = fp = fn = 0
        for p, t in zip(pred, truth):
            if p == c and t == c:
                tp += 1
            elif p == c:
                fp += 1
            elif t == c:
                fn += 1
        out[c] = (tp, fp, fn)
    return out


def measures(pred, truth):
    """Row-name keyed measures computed from :func:`confusion`."""
    cm = confusion(pred, truth)
    names = {0: "Stem", 1: "Leaf"}
    res = {}
    ious = []
    for c in (0, 1):
        tp, fp, fn = cm[c]
        res[f"Precision - {names[c]}"] = tp / (tp + fp) if tp + fp else None
        res[f"Recall - {names[c]}"] = tp / (tp + fn) if tp + fn else None
        res[f"IoU - {names[c]}"] = tp / (tp + fp + fn) if tp + fp + fn else None
        ious.append(res[f"IoU - {names[c]}"])
    correct = sum(1 for p, t in zip(pred, truth) if p == t)
    res["Acc"] = correct / len(pred) if len(pred) else None
    res["MIoU"] = None if None in ious else (ious[0] + ious[1]) / 2
    return res


def same_partition(a, b):
    """True when two label arrays induce the same grouping of points."""
    a, b = np.asarray(a), np.asarray(b)
    if len(a) != len(b):
        return False
    fwd, back = {}, {}
    for x, y in zip(a.tolist(), b.tolist()):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def instance_sizes(rng, count, low=1, high=2000):
    """Log-uniform sizes in [low, high], always including both ends."""
    sizes = np.exp(rng.uniform(np.log(low), np.log(high), count)).astype(int)
    sizes[0], sizes[-1] = low, high
    return np.clip(sizes, low, high)


# -- set abstraction, one region at a time ---------------------------------------

def coordinate_hash(points):
    v = np.sin(np.asarray(points, dtype=np.float64) @ [12.9898, 78.233, 37.719]) * 43758.5453
    return v - np.floor(v)


def relu(x):
    return np.maximum(x, 0.0)


def affine(x, p, name):
    out = x @ p[name + ".weight"].T
    if name + ".bias" in p:
        out = out + p[name + ".bias"]
    return out


def shared_mlp(x, p, prefix, depth, eps=1e-5):
    """Affine, eval-mode batch norm and ReLU per width."""
    for i in range(depth):
        x = affine(x, p, f"{prefix}.linears.{i}")
        n = f"{prefix}.norms.{i}"
        x = (x - p[n + ".running_mean"]) / np.sqrt(p[n + ".running_var"] + eps)
        x = relu(x * p[n + ".weight"] + p[n + ".bias"])
    return x


def softmax(v):
    e = np.exp(v - v.max())
    return e / e.sum()


def sa_layer(points, feats, spec, p, rho=0.9):
    """Reference forward pass of one layer for a single (unbatched) point set.

    ``p`` maps parameter names (as in the torch state dict) to arrays.
    Returns ``(centers, pooled)``.
    """
    points = np.asarray(points, dtype=np.float64)
    keys = coordinate_hash(points)
    centroid = points.mean(axis=0)
    start = max(range(len(points)), key=lambda i: (((points[i] - centroid) ** 2).sum(), -i))
    centers = points[fps(points, spec.n_centers, start)]
    depth = len(spec.widths)

    def group(center, radius):
        idx = ball_members(points, center, radius, spec.group_size, keys)
        offsets = points[idx] - center
        x = offsets / radius
        if feats is not None:
            x = np.concatenate([x, feats[idx]], axis=1)
        return offsets, x

    regions = [group(c, spec.radius) for c in centers]
    shifted, radii = [], []
    if spec.csm:
        emb = [relu(affine(x, p, "csm.embed")) for _, x in regions]
        glob = np.max([e.max(axis=0) for e in emb], axis=0)
        ctx = glob @ p["csm.context.weight"].T
        for (offsets, _), e, c in zip(regions, emb, centers):
            h = np.tanh(affine(e - e.max(axis=0), p, "csm.relation") + ctx)
            a = softmax((h @ p["csm.score.weight"].T)[:, 0])
            shifted.append(c + (a[:, None] * offsets).sum(axis=0))
    else:
        shifted = list(centers)
    if spec.rum:
        pooled = [relu(affine(x, p, "rum.embed")).max(axis=0) for _, x in regions]
        glob = np.max(pooled, axis=0)
        for r in pooled:
            t = np.tanh(affine(np.concatenate([r, glob]), p, "rum.out")[0])
            radii.append(spec.radius + rho * spec.radius * t)
    else:
        radii = [spec.radius] * len(centers)
    out = []
    for c, r in zip(shifted, radii):
        _, x = group(c, r)
        out.append(shared_mlp(x, p, "mlp", depth).max(axis=0))
    return np.array(shifted), np.array(out)
