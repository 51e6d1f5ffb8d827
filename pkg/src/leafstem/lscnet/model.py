"""Set-abstraction classification network with center-shift and radius-update modules."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
from torch import nn

from .ops import ball_query, farthest_point_sample, gather


def sampling_keys(xyz, generator=None):
    """Per-point keys in [0, 1) that order in-ball candidates for grouping."""
    if generator is not None:
        return torch.rand(xyz.shape[:2], generator=generator, dtype=xyz.dtype)
    w = torch.tensor([12.9898, 78.233, 37.719], dtype=torch.float64)
    v = torch.sin(xyz.detach().to(torch.float64) @ w) * 43758.5453
    return (v - torch.floor(v)).to(xyz.dtype)


@dataclass
class SALayerSpec:
    n_centers: int
    radius: float
    group_size: int
    widths: tuple
    csm: bool = False
    rum: bool = False

    def __post_init__(self):
        if self.radius <= 0 or self.group_size < 1 or self.n_centers < 1:
            raise ValueError(f"invalid layer spec {self}")
        self.widths = tuple(self.widths)


@dataclass
class NetworkSpec:
    """Layer geometry and widths; defaults follow the PointNet++ classifier."""

    n_points: int = 1024
    layers: list = field(default_factory=lambda: [
        SALayerSpec(512, 0.2, 32, (64, 64, 128), csm=True, rum=True),
        SALayerSpec(128, 0.4, 64, (128, 128, 256), csm=True, rum=True),
    ])
    global_widths: tuple = (256, 512, 1024)
    head_widths: tuple = (512, 256)
    n_classes: int = 2
    dropout: float = 0.4
    attention_dim: int = 64
    rum_scale: float = 0.9

    def __post_init__(self):
        self.layers = [s if isinstance(s, SALayerSpec) else SALayerSpec(**s) for s in self.layers]
        size = self.n_points
        for s in self.layers:
            if s.n_centers > size:
                raise ValueError(f"layer asks for {s.n_centers} centers from {size} points")
            size = s.n_centers
        self.global_widths = tuple(self.global_widths)
        self.head_widths = tuple(self.head_widths)

    def to_dict(self):
        d = asdict(self)
        d["layers"] = [asdict(s) for s in self.layers]
        return d


class SharedMLP(nn.Module):
    """Point-wise affine -> batch norm -> ReLU stack over the last axis."""

    def __init__(self, in_channels, widths):
        super().__init__()
        self.linears = nn.ModuleList()
        self.norms = nn.ModuleList()
        for w in widths:
            self.linears.append(nn.Linear(in_channels, w))
            self.norms.append(nn.BatchNorm1d(w))
            in_channels = w

    def forward(self, x):
        shape = x.shape[:-1]
        x = x.reshape(-1, x.shape[-1])
        for lin, bn in zip(self.linears, self.norms):
            x = torch.relu(bn(lin(x)))
        return x.reshape(*shape, -1)


class CenterShift(nn.Module):
    """Attention over a region's grouped points that proposes a center shift.

    Each grouped point gets a score from the difference between its embedding
    and the region's pooled embedding plus the shape's global embedding; the
    shift is the softmax-weighted mean of the point offsets, so the shifted
    center stays inside the convex hull of the center and its points.
    """

    def __init__(self, in_channels, dim):
        super().__init__()
        self.embed = nn.Linear(in_channels, dim)
        self.relation = nn.Linear(dim, dim)
        self.context = nn.Linear(dim, dim, bias=False)
        self.score = nn.Linear(dim, 1, bias=False)

    def weights(self, x):
        e = torch.relu(self.embed(x))                      # (B, M, K, D)
        region = e.amax(dim=2)                             # (B, M, D)
        glob = region.amax(dim=1)                          # (B, D)
        h = torch.tanh(self.relation(e - region[:, :, None]) + self.context(glob)[:, None, None])
        return torch.softmax(self.score(h).squeeze(-1), dim=2)

    def forward(self, offsets, x):
        a = self.weights(x)
        return (a[..., None] * offsets).sum(dim=2)


class RadiusUpdate(nn.Module):
    """Bounded radius change from pooled region and global embeddings.

    The change is ``rho * r * tanh(.)`` so the updated radius stays within
    ``((1 - rho) r, (1 + rho) r)``.
    """

    def __init__(self, in_channels, dim, rho=0.9):
        super().__init__()
        self.rho = rho
        self.embed = nn.Linear(in_channels, dim)
        self.out = nn.Linear(2 * dim, 1)

    def forward(self, x, base_radius):
        e = torch.relu(self.embed(x))
        region = e.amax(dim=2)
        glob = region.amax(dim=1, keepdim=True).expand_as(region)
        t = torch.tanh(self.out(torch.cat([region, glob], dim=-1)).squeeze(-1))
        return self.rho * base_radius * t


class SetAbstraction(nn.Module):
    """Sample centers, group balls around them, encode, and max-pool."""

    def __init__(self, spec: SALayerSpec, in_channels, attention_dim=64, rum_scale=0.9):
        super().__init__()
        self.spec = spec
        grouped = in_channels + 3
        self.mlp = SharedMLP(grouped, spec.widths)
        self.csm = CenterShift(grouped, attention_dim) if spec.csm else None
        self.rum = RadiusUpdate(grouped, attention_dim, rum_scale) if spec.rum else None
        self.out_channels = spec.widths[-1]

    def _group(self, xyz, feats, centers, radius, keys):
        idx = ball_query(xyz.detach(), centers.detach(), radius.detach(), self.spec.group_size, keys)
        offsets = gather(xyz, idx) - centers[:, :, None]
        x = offsets / radius[..., None, None]
        if feats is not None:
            x = torch.cat([x, gather(feats, idx)], dim=-1)
        return idx, offsets, x

    def forward(self, xyz, feats, keys=None):
        """Returns ``(centers, pooled, center_keys)``.

        ``keys`` orders in-ball candidates; by default they are hashed from
        ``xyz``. Each center inherits the key of the point it was sampled at,
        so keys never depend on the (learned) center shifts.
        """
        s = self.spec
        if keys is None:
            keys = sampling_keys(xyz)
        sampled = farthest_point_sample(xyz.detach(), s.n_centers)
        centers = gather(xyz, sampled)
        center_keys = torch.gather(keys, 1, sampled)
        radius = torch.full(centers.shape[:2], s.radius, dtype=xyz.dtype, device=xyz.device)
        state = {"centers": centers, "radius": radius}
        if self.csm is not None or self.rum is not None:
            _, offsets, x = self._group(xyz, feats, centers, radius, keys)
            if self.csm is not None:
                state["center_shift"] = self.csm(offsets, x)
                centers = centers + state["center_shift"]
            if self.rum is not None:
                state["radius_update"] = self.rum(x, s.radius)
                radius = radius + state["radius_update"]
        state["shifted_centers"], state["updated_radius"] = centers, radius
        idx, _, x = self._group(xyz, feats, centers, radius, keys)
        pooled = self.mlp(x).amax(dim=2)
        self.last_state = state
        return centers, pooled, center_keys


class LSCNet(nn.Module):
    """Two adaptive set-abstraction layers, a global layer, and an FC head."""

    def __init__(self, spec: NetworkSpec | None = None):
        super().__init__()
        self.spec = spec or NetworkSpec()
        self.sa = nn.ModuleList()
        channels = 0
        for layer in self.spec.layers:
            sa = SetAbstraction(layer, channels, self.spec.attention_dim, self.spec.rum_scale)
            self.sa.append(sa)
            channels = sa.out_channels
        self.global_mlp = SharedMLP(channels + 3, self.spec.global_widths)
        head = []
        c = self.spec.global_widths[-1]
        for w in self.spec.head_widths:
            head += [nn.Linear(c, w), nn.BatchNorm1d(w), nn.ReLU(), nn.Dropout(self.spec.dropout)]
            c = w
        head.append(nn.Linear(c, self.spec.n_classes))
        self.head = nn.Sequential(*head)

    def features(self, xyz, generator=None):
        feats = None
        keys = sampling_keys(xyz, generator)
        for sa in self.sa:
            xyz, feats, keys = sa(xyz, feats, keys)
        x = torch.cat([xyz, feats], dim=-1) if feats is not None else xyz
        return self.global_mlp(x).amax(dim=1)

    def forward(self, xyz, generator=None):
        """Class scores of shape (B, n_classes) for point sets of shape (B, N, 3).

        Without a ``generator`` the in-ball sampling keys are hashed from the
        input coordinates, so the output does not depend on point order.
        """
        return self.head(self.features(xyz, generator))
